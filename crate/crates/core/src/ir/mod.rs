//! Three-address IR. Each function is a flat list of nodes with explicit
//! successors; every node becomes one CFG node.

mod expr;
mod inline;
mod lower;

use std::collections::BTreeMap;
use std::fmt::{self, Write};

use thiserror::Error;

pub use crate::frontend::ast::{BinOp, EnvVar, UnOp};
use crate::types::{Type, Value};
pub use expr::{binary as resolve_binary, coerce, resolve, resolve_bool, Names, Signature, TExpr};
pub use inline::inline_internal_calls;
pub use lower::{lower, lower_without_inlining};

pub type InstrId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LocalId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarRef {
    State(StateId),
    Local(LocalId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operand {
    Var(VarRef),
    Const(Value, Type),
    Env(EnvVar),
}

/// Why a condition node exists. Everything but `Branch` and `Loop` sends
/// its false edge to the revert sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Guard {
    Branch,
    Loop,
    Require,
    Assert,
    DivByZero,
    Bounds,
}

impl Guard {
    pub fn reverts_on_false(self) -> bool {
        !matches!(self, Guard::Branch | Guard::Loop)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Entry,
    Exit,
    RevertSink,
    InlineEnter {
        callee: String,
        site: u32,
    },
    InlineExit {
        callee: String,
        site: u32,
    },
    Assign {
        dest: VarRef,
        src: Operand,
    },
    Convert {
        dest: VarRef,
        src: Operand,
        to: Type,
    },
    Binary {
        dest: VarRef,
        op: BinOp,
        lhs: Operand,
        rhs: Operand,
    },
    Unary {
        dest: VarRef,
        op: UnOp,
        src: Operand,
    },
    IndexRead {
        dest: VarRef,
        table: StateId,
        index: Operand,
    },
    IndexWrite {
        table: StateId,
        index: Operand,
        value: Operand,
    },
    Condition {
        cond: Operand,
        guard: Guard,
    },
    Return {
        value: Option<Operand>,
    },
    /// Only present before inlining.
    Call {
        dest: Option<VarRef>,
        callee: String,
        args: Vec<Operand>,
    },
}

impl Instr {
    /// Variable written by this instruction (storage tables excluded).
    pub fn dest(&self) -> Option<VarRef> {
        match self {
            Instr::Assign { dest, .. }
            | Instr::Convert { dest, .. }
            | Instr::Binary { dest, .. }
            | Instr::Unary { dest, .. }
            | Instr::IndexRead { dest, .. } => Some(*dest),
            Instr::Call { dest, .. } => *dest,
            _ => None,
        }
    }

    pub fn operands(&self) -> Vec<&Operand> {
        match self {
            Instr::Assign { src, .. } | Instr::Convert { src, .. } | Instr::Unary { src, .. } => vec![src],
            Instr::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            Instr::IndexRead { index, .. } => vec![index],
            Instr::IndexWrite { index, value, .. } => vec![index, value],
            Instr::Condition { cond, .. } => vec![cond],
            Instr::Return { value } => value.iter().collect(),
            Instr::Call { args, .. } => args.iter().collect(),
            _ => Vec::new(),
        }
    }

    fn operands_mut(&mut self) -> Vec<&mut Operand> {
        match self {
            Instr::Assign { src, .. } | Instr::Convert { src, .. } | Instr::Unary { src, .. } => vec![src],
            Instr::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            Instr::IndexRead { index, .. } => vec![index],
            Instr::IndexWrite { index, value, .. } => vec![index, value],
            Instr::Condition { cond, .. } => vec![cond],
            Instr::Return { value } => value.iter_mut().collect(),
            Instr::Call { args, .. } => args.iter_mut().collect(),
            _ => Vec::new(),
        }
    }

    fn dest_mut(&mut self) -> Option<&mut VarRef> {
        match self {
            Instr::Assign { dest, .. }
            | Instr::Convert { dest, .. }
            | Instr::Binary { dest, .. }
            | Instr::Unary { dest, .. }
            | Instr::IndexRead { dest, .. } => Some(dest),
            Instr::Call { dest, .. } => dest.as_mut(),
            _ => None,
        }
    }

    /// Marker nodes carry no computation.
    pub fn is_marker(&self) -> bool {
        matches!(
            self,
            Instr::Entry | Instr::Exit | Instr::RevertSink | Instr::InlineEnter { .. } | Instr::InlineExit { .. }
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Succ {
    None,
    Next(InstrId),
    Branch { then: InstrId, otherwise: InstrId },
}

impl Succ {
    pub fn targets(&self) -> Vec<InstrId> {
        match *self {
            Succ::None => Vec::new(),
            Succ::Next(n) => vec![n],
            Succ::Branch { then, otherwise } => vec![then, otherwise],
        }
    }

    fn map(self, f: impl Fn(InstrId) -> InstrId) -> Succ {
        match self {
            Succ::None => Succ::None,
            Succ::Next(n) => Succ::Next(f(n)),
            Succ::Branch { then, otherwise } => Succ::Branch { then: f(then), otherwise: f(otherwise) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub instr: Instr,
    /// Source line; 0 for synthetic markers.
    pub line: u32,
    pub succ: Succ,
    /// Which body instance the node belongs to: 0 for the function's own
    /// statements, a fresh id for every inlined callee body.
    pub copy: u32,
    /// Index into `IrFunction::scopes`: locals visible at this node.
    pub scope: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalKind {
    Param,
    Var,
    Temp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Local {
    pub name: String,
    pub ty: Type,
    pub kind: LocalKind,
}

/// Source-level names visible at a point, innermost binding last.
pub type Scope = Vec<(String, LocalId)>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrFunction {
    pub name: String,
    pub params: Vec<LocalId>,
    pub returns: Option<Type>,
    pub payable: bool,
    pub internal: bool,
    pub locals: Vec<Local>,
    pub nodes: Vec<Node>,
    pub exit: InstrId,
    pub revert: Option<InstrId>,
    pub scopes: Vec<Scope>,
    /// Number of distinct `Node::copy` ids in use.
    pub copies: u32,
}

impl IrFunction {
    pub const ENTRY: InstrId = 0;

    pub fn local(&self, id: LocalId) -> &Local {
        &self.locals[id.0 as usize]
    }

    /// Adds a local, suffixing the name until it is unique in this function.
    pub fn add_local(&mut self, name: &str, ty: Type, kind: LocalKind) -> LocalId {
        let mut candidate = name.to_string();
        let mut n = 2;
        while self.locals.iter().any(|l| l.name == candidate) {
            candidate = format!("{name}'{n}");
            n += 1;
        }
        self.locals.push(Local { name: candidate, ty, kind });
        LocalId(self.locals.len() as u32 - 1)
    }

    pub fn has_calls(&self) -> bool {
        self.nodes.iter().any(|n| matches!(n.instr, Instr::Call { .. }))
    }

    /// Predecessor lists indexed by node.
    pub fn predecessors(&self) -> Vec<Vec<InstrId>> {
        let mut preds = vec![Vec::new(); self.nodes.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            for t in n.succ.targets() {
                if !preds[t].contains(&i) {
                    preds[t].push(i);
                }
            }
        }
        preds
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateVar {
    pub name: String,
    pub ty: Type,
    pub public: bool,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IrProgram {
    pub name: String,
    pub state_vars: Vec<StateVar>,
    pub constructor: IrFunction,
    /// Public functions in declaration order.
    pub functions: Vec<IrFunction>,
    /// Internal functions; emptied by inlining.
    pub internal: Vec<IrFunction>,
}

/// Identifies a transaction-level function of a program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FuncRef {
    Constructor,
    Public(usize),
}

impl IrProgram {
    pub fn func(&self, f: FuncRef) -> &IrFunction {
        match f {
            FuncRef::Constructor => &self.constructor,
            FuncRef::Public(i) => &self.functions[i],
        }
    }

    /// Constructor first, then public functions.
    pub fn transaction_functions(&self) -> impl Iterator<Item = (FuncRef, &IrFunction)> {
        std::iter::once((FuncRef::Constructor, &self.constructor))
            .chain(self.functions.iter().enumerate().map(|(i, f)| (FuncRef::Public(i), f)))
    }

    pub fn public_function(&self, name: &str) -> Option<FuncRef> {
        self.functions.iter().position(|f| f.name == name).map(FuncRef::Public)
    }

    pub fn state(&self, id: StateId) -> &StateVar {
        &self.state_vars[id.0 as usize]
    }

    pub fn state_by_name(&self, name: &str) -> Option<StateId> {
        self.state_vars.iter().position(|v| v.name == name).map(|i| StateId(i as u32))
    }

    pub fn var_type(&self, f: &IrFunction, v: VarRef) -> Type {
        match v {
            VarRef::State(s) => self.state(s).ty,
            VarRef::Local(l) => f.local(l).ty,
        }
    }

    pub fn operand_type(&self, f: &IrFunction, op: &Operand) -> Type {
        match op {
            Operand::Var(v) => self.var_type(f, *v),
            Operand::Const(_, ty) => *ty,
            Operand::Env(e) => e.ty(),
        }
    }

    pub fn var_name<'a>(&'a self, f: &'a IrFunction, v: VarRef) -> &'a str {
        match v {
            VarRef::State(s) => &self.state(s).name,
            VarRef::Local(l) => &f.local(l).name,
        }
    }

    /// For each transaction function, the first node on `line` in every
    /// body copy. Several results arise when the line sits in an internal
    /// function inlined at more than one site.
    pub fn nodes_on_line(&self, line: u32) -> Vec<(FuncRef, InstrId)> {
        let mut out = Vec::new();
        for (fref, f) in self.transaction_functions() {
            let mut first: BTreeMap<u32, InstrId> = BTreeMap::new();
            for (i, n) in f.nodes.iter().enumerate() {
                if n.line == line && !matches!(n.instr, Instr::RevertSink) {
                    first.entry(n.copy).or_insert(i);
                }
            }
            out.extend(first.values().map(|&i| (fref, i)));
        }
        out
    }

    /// Debug listing: one instruction per line, `<line>: <dest> = <op> <operands>`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        writeln!(out, "contract {}", self.name).unwrap();
        for f in std::iter::once(&self.constructor).chain(&self.functions).chain(&self.internal) {
            let params: Vec<String> =
                f.params.iter().map(|p| format!("{}: {}", f.local(*p).name, f.local(*p).ty)).collect();
            writeln!(out, "function {}({})", f.name, params.join(", ")).unwrap();
            for n in &f.nodes {
                writeln!(out, "{}", self.render_node(f, n)).unwrap();
            }
        }
        out
    }

    pub fn render_node(&self, f: &IrFunction, n: &Node) -> String {
        format!("{}: {}", n.line, self.render_instr(f, &n.instr))
    }

    pub fn render_instr(&self, f: &IrFunction, instr: &Instr) -> String {
        let op = |o: &Operand| self.render_operand(f, o);
        let var = |v: &VarRef| self.var_name(f, *v).to_string();
        let (dest, text) = match instr {
            Instr::Entry => (None, "entry".to_string()),
            Instr::Exit => (None, "exit".to_string()),
            Instr::RevertSink => (None, "revert".to_string()),
            Instr::InlineEnter { callee, site } => (None, format!("inline_enter {callee} #{site}")),
            Instr::InlineExit { callee, site } => (None, format!("inline_exit {callee} #{site}")),
            Instr::Assign { dest, src } => (Some(var(dest)), format!("assign {}", op(src))),
            Instr::Convert { dest, src, to } => (Some(var(dest)), format!("convert({to}) {}", op(src))),
            Instr::Binary { dest, op: o, lhs, rhs } => {
                (Some(var(dest)), format!("{} {} {}", binop_name(*o), op(lhs), op(rhs)))
            }
            Instr::Unary { dest, src, .. } => (Some(var(dest)), format!("not {}", op(src))),
            Instr::IndexRead { dest, table, index } => {
                (Some(var(dest)), format!("index_read {}[{}]", self.state(*table).name, op(index)))
            }
            Instr::IndexWrite { table, index, value } => {
                (Some(format!("{}[{}]", self.state(*table).name, op(index))), format!("index_write {}", op(value)))
            }
            Instr::Condition { cond, guard } => {
                let kind = match guard {
                    Guard::Branch => "condition",
                    Guard::Loop => "loop_condition",
                    Guard::Require => "require",
                    Guard::Assert => "assert",
                    Guard::DivByZero => "div_guard",
                    Guard::Bounds => "bounds_guard",
                };
                (None, format!("{kind} {}", op(cond)))
            }
            Instr::Return { value } => {
                (None, format!("return{}", value.as_ref().map(|v| format!(" {}", op(v))).unwrap_or_default()))
            }
            Instr::Call { dest, callee, args } => (
                dest.as_ref().map(var),
                format!("call {callee}({})", args.iter().map(op).collect::<Vec<_>>().join(", ")),
            ),
        };
        format!("{} = {}", dest.unwrap_or_else(|| "_".into()), text)
    }

    pub fn render_operand(&self, f: &IrFunction, o: &Operand) -> String {
        match o {
            Operand::Var(v) => self.var_name(f, *v).to_string(),
            Operand::Const(v, ty) => format!("{v}:{ty}"),
            Operand::Env(e) => e.as_str().to_string(),
        }
    }
}

fn binop_name(op: BinOp) -> &'static str {
    match op {
        BinOp::Add => "add",
        BinOp::Sub => "sub",
        BinOp::Mul => "mul",
        BinOp::Div => "div",
        BinOp::Mod => "mod",
        BinOp::Eq => "eq",
        BinOp::Ne => "ne",
        BinOp::Lt => "lt",
        BinOp::Le => "le",
        BinOp::Gt => "gt",
        BinOp::Ge => "ge",
        BinOp::And => "and",
        BinOp::Or => "or",
    }
}

impl fmt::Display for FuncRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FuncRef::Constructor => f.write_str("constructor"),
            FuncRef::Public(i) => write!(f, "function#{i}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IrError {
    #[error("line {line}: type error: {msg}")]
    Type { line: u32, msg: String },
    #[error("line {line}: unknown identifier `{name}`")]
    UnknownIdent { line: u32, name: String },
    #[error("line {line}: call to undefined function `{name}`")]
    UndefinedFunction { line: u32, name: String },
    #[error("recursive internal calls cannot be inlined: {}", cycle.join(" -> "))]
    Recursion { cycle: Vec<String> },
    #[error("line {line}: unsupported: {msg}")]
    Unsupported { line: u32, msg: String },
}

/// Names visible at one node of a lowered function: the node's local
/// scope, then state variables. Function calls are not resolvable.
pub struct NodeNames<'a> {
    program: &'a IrProgram,
    func: &'a IrFunction,
    scope: &'a Scope,
}

impl<'a> NodeNames<'a> {
    pub fn new(program: &'a IrProgram, func: &'a IrFunction, instr: InstrId) -> Self {
        let scope = &func.scopes[func.nodes[instr].scope as usize];
        NodeNames { program, func, scope }
    }
}

impl Names for NodeNames<'_> {
    fn scalar(&self, name: &str) -> Option<(VarRef, Type)> {
        if let Some((_, id)) = self.scope.iter().rev().find(|(n, _)| n == name) {
            return Some((VarRef::Local(*id), self.func.local(*id).ty));
        }
        let id = self.program.state_by_name(name)?;
        let ty = self.program.state(id).ty;
        ty.is_scalar().then_some((VarRef::State(id), ty))
    }

    fn table(&self, name: &str) -> Option<(StateId, Type)> {
        let id = self.program.state_by_name(name)?;
        let ty = self.program.state(id).ty;
        ty.is_storage_table().then_some((id, ty))
    }

    fn function(&self, _name: &str) -> Option<Signature> {
        None
    }
}
