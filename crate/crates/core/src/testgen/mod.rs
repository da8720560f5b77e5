//! Seeded random MiniSol programs and walks for property tests.
//!
//! Generated sources always parse and lower; a failure to do so is a bug
//! in the generator or the front end, and tests treat it as such.

pub mod checks;

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cfg::{build_cfg_plus, reverse, CfgPlus, NodeId, NodeKind};
use crate::explorer::precompute_distances;
use crate::frontend::{parse_contract, target_for_line, TargetSpec};
use crate::ir::lower;
use crate::types::Type;

pub use rand_chacha::ChaCha8Rng as Rng8;

/// Widths used for scalar variables.
const WIDTHS: [u16; 3] = [8, 16, 256];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenConfig {
    pub functions: usize,
    /// Statements per block, before nesting.
    pub block_len: usize,
    pub max_depth: usize,
    pub branches: bool,
    pub loops: bool,
    pub division: bool,
    pub internal_call: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            functions: 3,
            block_len: 4,
            max_depth: 2,
            branches: true,
            loops: true,
            division: true,
            internal_call: true,
        }
    }
}

impl GenConfig {
    /// One function, no control flow, widths 8 and 16 plus one mapping.
    pub fn straight_line() -> Self {
        GenConfig {
            functions: 1,
            block_len: 8,
            max_depth: 0,
            branches: false,
            loops: false,
            division: false,
            internal_call: false,
        }
    }
}

#[derive(Debug, Clone)]
struct Var {
    name: String,
    ty: Type,
    assignable: bool,
}

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    cfg: GenConfig,
    out: String,
    line: u32,
    /// Innermost scope last.
    scopes: Vec<Vec<Var>>,
    fresh: usize,
    widths: &'static [u16],
}

/// A generated contract with the line of its last statement, which is a
/// convenient target.
#[derive(Debug, Clone)]
pub struct Generated {
    pub source: String,
    pub last_line: u32,
}

pub fn random_contract<R: Rng>(rng: &mut R, cfg: GenConfig) -> Generated {
    let widths: &'static [u16] = if cfg.division || cfg.branches { &WIDTHS } else { &WIDTHS[..2] };
    let g = Gen { rng, cfg, out: String::new(), line: 1, scopes: vec![Vec::new()], fresh: 0, widths };
    g.contract()
}

impl<R: Rng> Gen<'_, R> {
    fn emit(&mut self, indent: usize, text: &str) {
        writeln!(self.out, "{}{}", "    ".repeat(indent), text).unwrap();
        self.line += 1;
    }

    fn fresh(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn vars(&self) -> impl Iterator<Item = &Var> {
        self.scopes.iter().flatten()
    }

    fn uint_type(&mut self) -> Type {
        Type::Uint(*self.widths.choose(self.rng).unwrap())
    }

    fn contract(mut self) -> Generated {
        self.emit(0, "contract Generated {");
        let mut state = Vec::new();
        for i in 0..self.rng.gen_range(2..5) {
            let ty = if self.cfg.branches && self.rng.gen_bool(0.2) { Type::Bool } else { self.uint_type() };
            state.push(Var { name: format!("s{i}"), ty, assignable: true });
        }
        for v in &state {
            let decl = format!("{} public {};", v.ty, v.name);
            self.emit(1, &decl);
        }
        self.emit(1, "mapping(uint => uint) public m;");
        self.scopes[0] = state;

        if self.cfg.internal_call {
            self.emit(0, "");
            self.emit(1, "function bump(uint16 x) internal returns (uint16) {");
            self.emit(2, "return x + 1;");
            self.emit(1, "}");
        }
        if self.rng.gen_bool(0.5) {
            self.emit(0, "");
            self.emit(1, "constructor() public {");
            self.scopes.push(Vec::new());
            let n = self.rng.gen_range(1..3);
            self.block(2, n, 0);
            self.scopes.pop();
            self.emit(1, "}");
        }
        let mut last_line = 0;
        for i in 0..self.cfg.functions {
            self.emit(0, "");
            let params: Vec<Var> = (0..self.rng.gen_range(0..3))
                .map(|p| Var {
                    name: format!("p{p}"),
                    ty: Type::Uint(*self.widths.choose(self.rng).unwrap()),
                    assignable: false,
                })
                .collect();
            let sig = params.iter().map(|p| format!("{} {}", p.ty, p.name)).collect::<Vec<_>>().join(", ");
            self.emit(1, &format!("function f{i}({sig}) public {{"));
            self.scopes.push(params);
            let n = self.rng.gen_range(1..=self.cfg.block_len);
            self.block(2, n, 0);
            last_line = self.line;
            self.emit(2, "m[0] = 1;");
            self.scopes.pop();
            self.emit(1, "}");
        }
        self.emit(0, "}");
        Generated { source: self.out, last_line }
    }

    fn block(&mut self, indent: usize, len: usize, depth: usize) {
        for _ in 0..len {
            self.statement(indent, depth);
        }
    }

    fn statement(&mut self, indent: usize, depth: usize) {
        let nested = depth < self.cfg.max_depth;
        let choice = self.rng.gen_range(0..10);
        match choice {
            0 | 1 => {
                let ty = self.uint_type();
                let init = self.expr(ty, 2);
                let name = self.fresh("l");
                self.emit(indent, &format!("{ty} {name} = {init};"));
                self.scopes.last_mut().unwrap().push(Var { name, ty, assignable: true });
            }
            2 => {
                let key = self.expr(Type::UINT256, 1);
                let value = self.expr(Type::UINT256, 2);
                let op = if self.rng.gen_bool(0.3) { "+=" } else { "=" };
                self.emit(indent, &format!("m[{key}] {op} {value};"));
            }
            3 if self.cfg.branches => {
                let c = self.cond(2);
                self.emit(indent, &format!("require({c});"));
            }
            4 if nested && self.cfg.branches => {
                let c = self.cond(2);
                self.emit(indent, &format!("if ({c}) {{"));
                self.scopes.push(Vec::new());
                let n = self.rng.gen_range(1..3);
                self.block(indent + 1, n, depth + 1);
                self.scopes.pop();
                if self.rng.gen_bool(0.5) {
                    self.emit(indent, "} else {");
                    self.scopes.push(Vec::new());
                    self.block(indent + 1, 1, depth + 1);
                    self.scopes.pop();
                }
                self.emit(indent, "}");
            }
            5 if nested && self.cfg.loops => {
                let i = self.fresh("i");
                let bound = self.rng.gen_range(1..4);
                self.emit(indent, &format!("uint8 {i} = 0;"));
                self.emit(indent, &format!("while ({i} < {bound}) {{"));
                self.emit(indent + 1, &format!("{i} += 1;"));
                self.scopes.push(Vec::new());
                self.block(indent + 1, 1, depth + 1);
                self.scopes.pop();
                self.emit(indent, "}");
                self.scopes.last_mut().unwrap().push(Var { name: i, ty: Type::UINT8, assignable: false });
            }
            6 if self.cfg.internal_call => {
                let wide: Vec<Var> =
                    self.vars().filter(|v| v.assignable && matches!(v.ty, Type::Uint(w) if w >= 16)).cloned().collect();
                if let Some(v) = wide.choose(self.rng) {
                    let arg = self.expr(Type::UINT16, 1);
                    self.emit(indent, &format!("{} = bump({arg});", v.name));
                } else {
                    self.assignment(indent);
                }
            }
            _ => self.assignment(indent),
        }
    }

    fn assignment(&mut self, indent: usize) {
        let targets: Vec<Var> = self.vars().filter(|v| v.assignable).cloned().collect();
        let Some(v) = targets.choose(self.rng).cloned() else {
            return self.emit(indent, "m[1] = 2;");
        };
        if v.ty == Type::Bool {
            let c = self.cond(2);
            return self.emit(indent, &format!("{} = {c};", v.name));
        }
        let value = self.expr(v.ty, 2);
        let op = match self.rng.gen_range(0..6) {
            0 => "+=",
            1 => "-=",
            _ => "=",
        };
        self.emit(indent, &format!("{} {op} {value};", v.name));
    }

    /// A literal of type `ty`, biased toward the ends of its range.
    fn literal(&mut self, ty: Type) -> String {
        let bits = ty.bits().unwrap_or(256);
        let max = crate::types::max_value(bits);
        match self.rng.gen_range(0..6) {
            0 => "0".into(),
            1 => "1".into(),
            2 => max.to_string(),
            3 => (max - crate::types::U256::from(1u8)).to_string(),
            _ => self.rng.gen_range(2u64..200).to_string(),
        }
    }

    /// An expression of exactly type `ty` (a uint).
    fn expr(&mut self, ty: Type, depth: usize) -> String {
        let Type::Uint(w) = ty else { unreachable!("uint expressions only") };
        if depth == 0 || self.rng.gen_bool(0.35) {
            return self.leaf(ty);
        }
        let mut ops = vec!["+", "-", "*"];
        if self.cfg.division {
            ops.extend(["/", "%"]);
        }
        let op = *ops.choose(self.rng).unwrap();
        let lhs = self.expr(ty, depth - 1);
        let rhs = self.expr(ty, depth - 1);
        // Literal-only operands would be typed uint256.
        let cast = w < 256;
        if cast {
            format!("uint{w}({lhs} {op} {rhs})")
        } else {
            format!("({lhs} {op} {rhs})")
        }
    }

    fn leaf(&mut self, ty: Type) -> String {
        let Type::Uint(w) = ty else { unreachable!() };
        let vars: Vec<Var> = self.vars().filter(|v| matches!(v.ty, Type::Uint(x) if x <= w)).cloned().collect();
        match self.rng.gen_range(0..5) {
            0 => self.literal(ty),
            1 if w == 256 => {
                let key = self.leaf(Type::UINT256);
                format!("m[{key}]")
            }
            2 if w < 256 && self.rng.gen_bool(0.5) => format!("uint{w}(m[{}])", self.literal(Type::UINT8)),
            _ => match vars.choose(self.rng) {
                Some(v) => v.name.clone(),
                None => self.literal(ty),
            },
        }
    }

    fn cond(&mut self, depth: usize) -> String {
        let bools: Vec<Var> = self.vars().filter(|v| v.ty == Type::Bool).cloned().collect();
        match self.rng.gen_range(0..8) {
            0 if !bools.is_empty() => bools.choose(self.rng).unwrap().name.clone(),
            1 if depth > 0 => format!("!({})", self.cond(depth - 1)),
            2 if depth > 0 => {
                let op = if self.rng.gen_bool(0.5) { "&&" } else { "||" };
                format!("({}) {op} ({})", self.cond(depth - 1), self.cond(depth - 1))
            }
            3 => "msg.sender == address(1)".into(),
            _ => {
                let ty = self.uint_type();
                let op = *["<", "<=", ">", ">=", "==", "!="].choose(self.rng).unwrap();
                format!("{} {op} {}", self.expr(ty, 1), self.expr(ty, 1))
            }
        }
    }
}

/// A backward walk from a random instruction node, following random
/// reversed edges until `start`, a dead end or `max_len` nodes.
pub fn random_walk<R: Rng>(g: &CfgPlus, rng: &mut R, max_len: usize) -> Vec<NodeId> {
    let instrs: Vec<NodeId> = g.node_ids().filter(|n| matches!(g.kind(*n), NodeKind::Instr { .. })).collect();
    let rev = reverse(g);
    let mut walk = vec![*instrs.choose(rng).expect("graph has instructions")];
    while walk.len() < max_len {
        let last = *walk.last().unwrap();
        if last == g.start {
            break;
        }
        match rev.neighbors(last).choose(rng) {
            Some((next, _)) => walk.push(*next),
            None => break,
        }
    }
    walk
}

/// A shortest backward walk from `from` to `start`, if one exists.
pub fn shortest_walk(g: &CfgPlus, from: NodeId) -> Option<Vec<NodeId>> {
    let rev = reverse(g);
    let dist = precompute_distances(&rev);
    dist.get(from, g.start)?;
    let mut walk = vec![from];
    let mut at = from;
    while at != g.start {
        let here = dist.get(at, g.start)?;
        at = rev
            .neighbors(at)
            .iter()
            .map(|(n, _)| *n)
            .filter(|n| dist.get(*n, g.start).is_some_and(|d| d + 1 == here))
            .min()?;
        walk.push(at);
    }
    Some(walk)
}

/// Instruction budget per function for [`straight_line_case`].
pub const STRAIGHT_LINE_MAX_INSTRS: usize = 20;

/// A straight-line contract whose functions lower to at most
/// [`STRAIGHT_LINE_MAX_INSTRS`] instructions, targeting its last statement.
pub fn straight_line_case<R: Rng>(rng: &mut R) -> (Generated, CfgPlus, TargetSpec) {
    loop {
        let generated = random_contract(rng, GenConfig::straight_line());
        let ast = parse_contract(&generated.source).expect("generated source parses");
        let program = lower(&ast).expect("generated source lowers");
        if program.transaction_functions().any(|(_, f)| f.nodes.len() > STRAIGHT_LINE_MAX_INSTRS) {
            continue;
        }
        let spec = target_for_line(&ast, generated.last_line, None).expect("last line holds a statement");
        return (generated, build_cfg_plus(program), spec);
    }
}
