//! Walk → single-assignment constraint list. The walk is turned around
//! into execution order and every write gets the next version of its
//! variable.

use std::collections::{HashMap, HashSet};

use super::{Clause, EncodeError, MapRef, Sym, Term, TxIndex, TxSegment};
use crate::cfg::{CfgPlus, NodeId, NodeKind};
use crate::ir::{BinOp, EnvVar, FuncRef, Instr, IrFunction, LocalId, LocalKind, Operand, StateId, Succ, TExpr, VarRef};
use crate::types::{Account, KeyType, Type, Value, ACCOUNT_COUNT};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SsaScript {
    pub clauses: Vec<Clause>,
    /// Declared scalar symbols in first-use order.
    pub manifest: Vec<(Sym, Type)>,
    /// Declared map generations in first-use order.
    pub maps: Vec<(MapRef, KeyType)>,
    pub txs: Vec<TxSegment>,
    /// Walk reaches `start`.
    pub complete: bool,
    /// Target condition over the versions live at the target.
    pub safety: Option<Term>,
    /// Execution-order node list the script was built from.
    pub steps: Vec<NodeId>,
}

impl SsaScript {
    pub fn sort_of(&self, sym: Sym) -> Option<Type> {
        self.manifest.iter().find(|(s, _)| *s == sym).map(|(_, t)| *t)
    }
}

struct Tx {
    index: TxIndex,
    func: FuncRef,
    complete: bool,
    locals: HashMap<LocalId, u32>,
    next_local: HashMap<LocalId, u32>,
    /// State versions and map generations at transaction start.
    snapshot: Option<(Vec<u32>, Vec<u32>)>,
}

struct Numberer<'a> {
    g: &'a CfgPlus,
    clauses: Vec<Clause>,
    manifest: Vec<(Sym, Type)>,
    declared: HashSet<Sym>,
    maps: Vec<(MapRef, KeyType)>,
    state: Vec<u32>,
    next_state: Vec<u32>,
    gen: Vec<u32>,
    next_gen: Vec<u32>,
    tx: Option<Tx>,
    txs: Vec<TxSegment>,
    step: usize,
}

/// Numbers `walk` (target first, as the explorer stores it) and
/// translates `safety` at the target point.
pub fn ssa_number(g: &CfgPlus, walk: &[NodeId], safety: Option<&TExpr>) -> Result<SsaScript, EncodeError> {
    assert!(!walk.is_empty(), "walk must contain the target");
    let steps: Vec<NodeId> = walk.iter().rev().copied().collect();
    let complete = steps[0] == g.start;
    let p = &g.program;
    let n_state = p.state_vars.len();
    let mut nb = Numberer {
        g,
        clauses: Vec::new(),
        manifest: Vec::new(),
        declared: HashSet::new(),
        maps: Vec::new(),
        state: vec![0; n_state],
        next_state: vec![1; n_state],
        gen: vec![0; n_state],
        next_gen: vec![1; n_state],
        tx: None,
        txs: Vec::new(),
        step: 0,
    };
    if complete {
        for (i, v) in p.state_vars.iter().enumerate() {
            let id = StateId(i as u32);
            if v.ty.is_scalar() {
                let sym = nb.declare(Sym::State { var: id, ver: 0 }, v.ty);
                nb.clauses.push(Clause::Define { sym, term: Term::Const(v.ty.zero(), v.ty), step: None });
            } else {
                let m = nb.declare_map(MapRef { var: id, gen: 0 });
                nb.clauses.push(Clause::MapZero(m));
            }
        }
    }

    let (last, before) = steps.split_last().unwrap();
    for (i, &n) in before.iter().enumerate() {
        nb.step = i;
        nb.visit(n, steps.get(i + 1).copied())?;
    }
    nb.step = before.len();
    if let NodeKind::Instr { func, instr } = g.kind(*last) {
        if nb.tx.is_none() {
            nb.begin_tx(func, matches!(p.func(func).nodes[instr].instr, Instr::Entry));
        }
    }
    let safety = match safety {
        Some(e) => Some(nb.texpr(e)?),
        None => None,
    };
    Ok(SsaScript { clauses: nb.clauses, manifest: nb.manifest, maps: nb.maps, txs: nb.txs, complete, safety, steps })
}

impl Numberer<'_> {
    fn declare(&mut self, sym: Sym, ty: Type) -> Sym {
        if self.declared.insert(sym) {
            self.manifest.push((sym, ty));
        }
        sym
    }

    fn declare_map(&mut self, m: MapRef) -> MapRef {
        if !self.maps.iter().any(|(r, _)| *r == m) {
            let key = match self.g.program.state(m.var).ty {
                Type::Mapping(k) => k,
                _ => KeyType::Uint256,
            };
            self.maps.push((m, key));
        }
        m
    }

    fn func(&self) -> &IrFunction {
        self.g.program.func(self.tx.as_ref().expect("inside a transaction").func)
    }

    fn tx_index(&self) -> TxIndex {
        self.tx.as_ref().expect("inside a transaction").index
    }

    fn begin_tx(&mut self, func: FuncRef, complete: bool) {
        let index = self.txs.len() as TxIndex;
        let f = self.g.program.func(func);
        self.txs.push(TxSegment { func, complete, first_clause: self.clauses.len(), first_step: self.step });
        self.tx = Some(Tx {
            index,
            func,
            complete,
            locals: HashMap::new(),
            next_local: HashMap::new(),
            snapshot: complete.then(|| (self.state.clone(), self.gen.clone())),
        });

        let sender = self.declare(Sym::Env { tx: index, var: EnvVar::MsgSender }, Type::Address);
        let origin = self.declare(Sym::Env { tx: index, var: EnvVar::TxOrigin }, Type::Address);
        let value = self.declare(Sym::Env { tx: index, var: EnvVar::MsgValue }, Type::UINT256);
        self.declare(Sym::Gas { tx: index }, Type::UINT256);
        // Account addresses are contiguous, so membership is a range check.
        let addr = |a: Account| Box::new(Term::Const(Value::Word(a.address()), Type::Address));
        let cmp =
            |op, bound| Term::Binary { op, lhs: Box::new(Term::Sym(sender)), rhs: bound, operand_ty: Type::Address };
        let known = Term::Binary {
            op: BinOp::And,
            lhs: Box::new(cmp(BinOp::Ge, addr(Account(0)))),
            rhs: Box::new(cmp(BinOp::Le, addr(Account(ACCOUNT_COUNT - 1)))),
            operand_ty: Type::Bool,
        };
        self.clauses.push(Clause::Assume(known));
        self.clauses.push(Clause::Assume(Term::eq(Term::Sym(origin), Term::Sym(sender), Type::Address)));
        if !f.payable {
            let zero = Term::Const(Type::UINT256.zero(), Type::UINT256);
            self.clauses.push(Clause::Assume(Term::eq(Term::Sym(value), zero, Type::UINT256)));
        }
        if complete {
            let params: Vec<(LocalId, Type)> = f.params.iter().map(|p| (*p, f.local(*p).ty)).collect();
            for (p, ty) in params {
                self.declare(Sym::Local { tx: index, var: p, ver: 0 }, ty);
                let tx = self.tx.as_mut().unwrap();
                tx.locals.insert(p, 0);
                tx.next_local.insert(p, 1);
            }
        }
    }

    fn visit(&mut self, n: NodeId, next: Option<NodeId>) -> Result<(), EncodeError> {
        let (func, instr_id) = match self.g.kind(n) {
            NodeKind::Instr { func, instr } => (func, instr),
            NodeKind::Constructed | NodeKind::TxProcessed | NodeKind::Start | NodeKind::End => {
                self.tx = None;
                return Ok(());
            }
        };
        let node = &self.g.program.func(func).nodes[instr_id];
        if self.tx.is_none() {
            self.begin_tx(func, matches!(node.instr, Instr::Entry));
        }
        match &node.instr {
            Instr::Entry | Instr::InlineEnter { .. } | Instr::InlineExit { .. } | Instr::Return { .. } => {}
            Instr::Exit => self.tx = None,
            Instr::RevertSink => {
                self.rollback();
                self.tx = None;
            }
            Instr::Assign { dest, src } => {
                let t = self.operand(src, node.line)?;
                self.define(*dest, t);
            }
            Instr::Convert { dest, src, to } => {
                let from = self.operand_type(src);
                let t = self.operand(src, node.line)?;
                self.define(*dest, Term::Convert { term: Box::new(t), from, to: *to });
            }
            Instr::Binary { dest, op, lhs, rhs } => {
                let operand_ty = self.operand_type(lhs);
                let l = self.operand(lhs, node.line)?;
                let r = self.operand(rhs, node.line)?;
                self.define(*dest, Term::Binary { op: *op, lhs: Box::new(l), rhs: Box::new(r), operand_ty });
            }
            Instr::Unary { dest, src, .. } => {
                let t = self.operand(src, node.line)?;
                self.define(*dest, Term::Not(Box::new(t)));
            }
            Instr::IndexRead { dest, table, index } => {
                let key = self.operand(index, node.line)?;
                let map = self.declare_map(MapRef { var: *table, gen: self.gen[table.0 as usize] });
                self.define(*dest, Term::Select { map, key: Box::new(key) });
            }
            Instr::IndexWrite { table, index, value } => {
                let key = self.operand(index, node.line)?;
                let value = self.operand(value, node.line)?;
                let t = table.0 as usize;
                let old = self.declare_map(MapRef { var: *table, gen: self.gen[t] });
                let new = self.declare_map(MapRef { var: *table, gen: self.next_gen[t] });
                self.gen[t] = self.next_gen[t];
                self.next_gen[t] += 1;
                self.clauses.push(Clause::MapStore { new, old, key, value });
            }
            Instr::Condition { cond, .. } => {
                let c = self.operand(cond, node.line)?;
                if let (Some(next), Succ::Branch { then, otherwise }) = (next, node.succ) {
                    let target = self.g.kind(next);
                    let taken = |i| matches!(target, NodeKind::Instr { func: f, instr } if f == func && instr == i);
                    match (taken(then), taken(otherwise)) {
                        (true, false) => self.clauses.push(Clause::Assume(c)),
                        (false, true) => self.clauses.push(Clause::Assume(Term::Not(Box::new(c)))),
                        _ => {}
                    }
                }
            }
            Instr::Call { callee, .. } => {
                return Err(EncodeError::Unsupported(format!("call to `{callee}` was not inlined")));
            }
        }
        Ok(())
    }

    fn rollback(&mut self) {
        let snapshot = self.tx.as_ref().and_then(|t| t.snapshot.clone());
        match snapshot {
            Some((state, gen)) => {
                self.state = state;
                self.gen = gen;
            }
            None => {
                // Start of this transaction lies outside the walk: the
                // restored state is unknown, so use fresh symbols.
                for i in 0..self.state.len() {
                    self.state[i] = self.next_state[i];
                    self.next_state[i] += 1;
                    self.gen[i] = self.next_gen[i];
                    self.next_gen[i] += 1;
                }
            }
        }
    }

    fn operand_type(&self, o: &Operand) -> Type {
        self.g.program.operand_type(self.func(), o)
    }

    fn define(&mut self, dest: VarRef, term: Term) {
        let ty = self.g.program.var_type(self.func(), dest);
        let sym = match dest {
            VarRef::State(s) => {
                let i = s.0 as usize;
                let ver = self.next_state[i];
                self.next_state[i] += 1;
                self.state[i] = ver;
                Sym::State { var: s, ver }
            }
            VarRef::Local(l) => {
                let tx = self.tx.as_mut().unwrap();
                let next = tx.next_local.entry(l).or_insert(1);
                let ver = *next;
                *next += 1;
                tx.locals.insert(l, ver);
                Sym::Local { tx: tx.index, var: l, ver }
            }
        };
        self.declare(sym, ty);
        self.clauses.push(Clause::Define { sym, term, step: Some(self.step) });
    }

    fn read_var(&mut self, v: VarRef, line: u32) -> Result<Term, EncodeError> {
        let ty = self.g.program.var_type(self.func(), v);
        let sym = match v {
            VarRef::State(s) => Sym::State { var: s, ver: self.state[s.0 as usize] },
            VarRef::Local(l) => {
                let name = self.func().local(l).name.clone();
                let kind = self.func().local(l).kind;
                let tx = self.tx.as_mut().unwrap();
                match tx.locals.get(&l) {
                    Some(ver) => Sym::Local { tx: tx.index, var: l, ver: *ver },
                    None if tx.complete && kind != LocalKind::Param => {
                        return Err(EncodeError::UndefinedLocal { name, line });
                    }
                    None => {
                        tx.locals.insert(l, 0);
                        tx.next_local.entry(l).or_insert(1);
                        Sym::Local { tx: tx.index, var: l, ver: 0 }
                    }
                }
            }
        };
        Ok(Term::Sym(self.declare(sym, ty)))
    }

    fn operand(&mut self, o: &Operand, line: u32) -> Result<Term, EncodeError> {
        Ok(match o {
            Operand::Var(v) => self.read_var(*v, line)?,
            Operand::Const(v, ty) => Term::Const(*v, *ty),
            Operand::Env(e) => Term::Sym(self.declare(Sym::Env { tx: self.tx_index(), var: *e }, e.ty())),
        })
    }

    fn texpr(&mut self, e: &TExpr) -> Result<Term, EncodeError> {
        Ok(match e {
            TExpr::Const(v, ty) => Term::Const(*v, *ty),
            TExpr::Var(v, _) => self.read_var(*v, 0)?,
            TExpr::Env(v) => Term::Sym(self.declare(Sym::Env { tx: self.tx_index(), var: *v }, v.ty())),
            TExpr::Index { table, index, .. } => {
                let key = self.texpr(index)?;
                let map = self.declare_map(MapRef { var: *table, gen: self.gen[table.0 as usize] });
                Term::Select { map, key: Box::new(key) }
            }
            TExpr::Convert(inner, to) => {
                Term::Convert { term: Box::new(self.texpr(inner)?), from: inner.ty(), to: *to }
            }
            TExpr::Not(inner) => Term::Not(Box::new(self.texpr(inner)?)),
            TExpr::Binary { op, lhs, rhs, .. } => Term::Binary {
                op: *op,
                operand_ty: lhs.ty(),
                lhs: Box::new(self.texpr(lhs)?),
                rhs: Box::new(self.texpr(rhs)?),
            },
            TExpr::Call { callee, .. } => {
                return Err(EncodeError::Unsupported(format!("call to `{callee}` in a target condition")))
            }
        })
    }
}
