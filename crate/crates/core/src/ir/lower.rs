use std::collections::HashMap;

use super::expr::{coerce, resolve, resolve_bool, Names, Signature, TExpr};
use super::inline::inline_internal_calls;
use super::*;
use crate::frontend::ast::{AssignOp, ContractAst, Expr, ExprKind, FunctionDecl, LValue, Stmt, StmtKind, Visibility};
use crate::types::{Type, Value, U256};

/// Lowers a contract and inlines every internal call.
pub fn lower(ast: &ContractAst) -> Result<IrProgram, IrError> {
    inline_internal_calls(lower_without_inlining(ast)?)
}

/// Lowering with `Call` instructions left in place.
pub fn lower_without_inlining(ast: &ContractAst) -> Result<IrProgram, IrError> {
    let state_vars: Vec<StateVar> = ast
        .state_vars
        .iter()
        .map(|v| StateVar { name: v.name.clone(), ty: v.ty, public: v.public, line: v.line })
        .collect();
    let signatures: HashMap<String, Signature> = ast
        .functions
        .iter()
        .map(|f| (f.name.clone(), Signature { params: f.params.iter().map(|p| p.ty).collect(), returns: f.returns }))
        .collect();
    let ctx = Context { state_vars: &state_vars, signatures: &signatures };

    let mut ctor = FnBuilder::new(&ctx, &ast.constructor);
    // Initializers cannot see constructor parameters.
    let params = std::mem::replace(&mut ctor.blocks, vec![Vec::new()]);
    for (i, v) in ast.state_vars.iter().enumerate() {
        if let Some(init) = &v.init {
            ctor.line = v.line;
            ctor.snapshot_scope();
            let value = coerce(resolve(init, &ctor)?, v.ty, v.line)?;
            ctor.store(VarRef::State(StateId(i as u32)), &value)?;
        }
    }
    ctor.blocks = params;
    ctor.lower_body(&ast.constructor.body)?;
    let constructor = ctor.finish();

    let mut functions = Vec::new();
    let mut internal = Vec::new();
    for decl in &ast.functions {
        let mut b = FnBuilder::new(&ctx, decl);
        b.lower_body(&decl.body)?;
        let f = b.finish();
        if f.internal {
            internal.push(f);
        } else {
            functions.push(f);
        }
    }
    Ok(IrProgram { name: ast.name.clone(), state_vars, constructor, functions, internal })
}

struct Context<'a> {
    state_vars: &'a [StateVar],
    signatures: &'a HashMap<String, Signature>,
}

#[derive(Clone, Copy)]
enum Slot {
    Next,
    Then,
    Else,
}

type Hole = (InstrId, Slot);

const UNSET: InstrId = usize::MAX;

struct FnBuilder<'a> {
    ctx: &'a Context<'a>,
    f: IrFunction,
    /// Dangling edges that the next emitted node should receive.
    holes: Vec<Hole>,
    returns: Vec<Hole>,
    blocks: Vec<Vec<(String, LocalId)>>,
    line: u32,
    temps: u32,
}

impl<'a> FnBuilder<'a> {
    fn new(ctx: &'a Context<'a>, decl: &FunctionDecl) -> Self {
        let mut f = IrFunction {
            name: decl.name.clone(),
            params: Vec::new(),
            returns: decl.returns,
            payable: decl.payable,
            internal: decl.visibility == Visibility::Internal && !decl.is_constructor(),
            locals: Vec::new(),
            nodes: Vec::new(),
            exit: UNSET,
            revert: None,
            scopes: Vec::new(),
            copies: 1,
        };
        let mut params = Vec::new();
        for p in &decl.params {
            let id = f.add_local(&p.name, p.ty, LocalKind::Param);
            f.params.push(id);
            params.push((p.name.clone(), id));
        }
        let mut b = FnBuilder {
            ctx,
            f,
            holes: Vec::new(),
            returns: Vec::new(),
            blocks: vec![params],
            line: decl.line,
            temps: 0,
        };
        b.snapshot_scope();
        let entry = b.push(Instr::Entry, Succ::None);
        b.f.nodes[entry].line = 0;
        b.holes = vec![(entry, Slot::Next)];
        b
    }

    fn snapshot_scope(&mut self) {
        let scope: Scope = self.blocks.iter().flatten().cloned().collect();
        if self.f.scopes.last() != Some(&scope) {
            self.f.scopes.push(scope);
        }
    }

    fn push(&mut self, instr: Instr, succ: Succ) -> InstrId {
        let scope = self.f.scopes.len() as u32 - 1;
        self.f.nodes.push(Node { instr, line: self.line, succ, copy: 0, scope });
        self.f.nodes.len() - 1
    }

    fn patch(&mut self, (node, slot): Hole, target: InstrId) {
        let succ = &mut self.f.nodes[node].succ;
        match (slot, succ) {
            (Slot::Next, s) => *s = Succ::Next(target),
            (Slot::Then, Succ::Branch { then, .. }) => *then = target,
            (Slot::Else, Succ::Branch { otherwise, .. }) => *otherwise = target,
            _ => unreachable!("branch slot on a non-branch node"),
        }
    }

    /// Appends a node, wiring all pending edges into it.
    fn emit(&mut self, instr: Instr) -> InstrId {
        let is_cond = matches!(instr, Instr::Condition { .. });
        let succ = if is_cond { Succ::Branch { then: UNSET, otherwise: UNSET } } else { Succ::None };
        let id = self.push(instr, succ);
        for h in std::mem::take(&mut self.holes) {
            self.patch(h, id);
        }
        if !is_cond {
            self.holes = vec![(id, Slot::Next)];
        }
        id
    }

    fn revert_sink(&mut self) -> InstrId {
        if let Some(r) = self.f.revert {
            return r;
        }
        let line = std::mem::replace(&mut self.line, 0);
        let id = self.push(Instr::RevertSink, Succ::None);
        self.line = line;
        self.f.revert = Some(id);
        id
    }

    /// Condition whose false edge aborts the transaction.
    fn guard(&mut self, cond: Operand, guard: Guard) {
        let c = self.emit(Instr::Condition { cond, guard });
        let sink = self.revert_sink();
        self.patch((c, Slot::Else), sink);
        self.holes = vec![(c, Slot::Then)];
    }

    fn temp(&mut self, ty: Type) -> VarRef {
        self.temps += 1;
        let name = format!("tmp{}", self.temps);
        VarRef::Local(self.f.add_local(&name, ty, LocalKind::Temp))
    }

    fn finish(mut self) -> IrFunction {
        self.line = 0;
        let exit = self.push(Instr::Exit, Succ::None);
        for h in std::mem::take(&mut self.holes).into_iter().chain(std::mem::take(&mut self.returns)) {
            self.patch(h, exit);
        }
        self.f.exit = exit;
        debug_assert!(self.f.nodes.iter().all(|n| !n.succ.targets().contains(&UNSET)));
        self.f
    }

    fn lower_body(&mut self, stmts: &[Stmt]) -> Result<(), IrError> {
        stmts.iter().try_for_each(|s| self.stmt(s))
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<(), IrError> {
        self.blocks.push(Vec::new());
        let r = self.lower_body(stmts);
        self.blocks.pop();
        r
    }

    /// Flattens an expression into instructions and returns the operand
    /// holding its value.
    fn operand(&mut self, e: &TExpr) -> Result<Operand, IrError> {
        Ok(match e {
            TExpr::Const(v, ty) => Operand::Const(*v, *ty),
            TExpr::Var(v, _) => Operand::Var(*v),
            TExpr::Env(v) => Operand::Env(*v),
            TExpr::Index { table, table_ty, index } => {
                let index = self.operand(index)?;
                self.bounds_check(*table_ty, &index);
                let dest = self.temp(Type::UINT256);
                self.emit(Instr::IndexRead { dest, table: *table, index });
                Operand::Var(dest)
            }
            TExpr::Convert(inner, to) => {
                let src = self.operand(inner)?;
                let dest = self.temp(*to);
                self.emit(Instr::Convert { dest, src, to: *to });
                Operand::Var(dest)
            }
            TExpr::Not(inner) => {
                let src = self.operand(inner)?;
                let dest = self.temp(Type::Bool);
                self.emit(Instr::Unary { dest, op: UnOp::Not, src });
                Operand::Var(dest)
            }
            TExpr::Binary { op, lhs, rhs, ty } => {
                let lhs = self.operand(lhs)?;
                let rhs = self.operand(rhs)?;
                if matches!(op, BinOp::Div | BinOp::Mod) {
                    self.nonzero_check(&rhs, *ty);
                }
                let dest = self.temp(*ty);
                self.emit(Instr::Binary { dest, op: *op, lhs, rhs });
                Operand::Var(dest)
            }
            TExpr::Call { callee, args, ret } => {
                let args = args.iter().map(|a| self.operand(a)).collect::<Result<Vec<_>, _>>()?;
                let Some(ret) = ret else {
                    return Err(IrError::Type { line: self.line, msg: format!("`{callee}` returns no value") });
                };
                let dest = self.temp(*ret);
                self.emit(Instr::Call { dest: Some(dest), callee: callee.clone(), args });
                Operand::Var(dest)
            }
        })
    }

    fn nonzero_check(&mut self, divisor: &Operand, ty: Type) {
        if let Operand::Const(v, _) = divisor {
            if !v.word().is_zero() {
                return;
            }
        }
        let ok = self.temp(Type::Bool);
        let zero = Operand::Const(Value::Word(U256::ZERO), ty);
        self.emit(Instr::Binary { dest: ok, op: BinOp::Ne, lhs: divisor.clone(), rhs: zero });
        self.guard(Operand::Var(ok), Guard::DivByZero);
    }

    fn bounds_check(&mut self, table_ty: Type, index: &Operand) {
        let Type::Array(len) = table_ty else { return };
        if let Operand::Const(v, _) = index {
            if v.word() < U256::from(len) {
                return;
            }
        }
        let ok = self.temp(Type::Bool);
        let len = Operand::Const(Value::from_u64(len), Type::UINT256);
        self.emit(Instr::Binary { dest: ok, op: BinOp::Lt, lhs: index.clone(), rhs: len });
        self.guard(Operand::Var(ok), Guard::Bounds);
    }

    fn store(&mut self, dest: VarRef, value: &TExpr) -> Result<(), IrError> {
        let src = self.operand(value)?;
        self.emit(Instr::Assign { dest, src });
        Ok(())
    }

    fn lookup_scalar(&self, name: &str) -> Option<(VarRef, Type)> {
        for block in self.blocks.iter().rev() {
            if let Some((_, id)) = block.iter().rev().find(|(n, _)| n == name) {
                return Some((VarRef::Local(*id), self.f.local(*id).ty));
            }
        }
        self.ctx
            .state_vars
            .iter()
            .position(|v| v.name == name && v.ty.is_scalar())
            .map(|i| (VarRef::State(StateId(i as u32)), self.ctx.state_vars[i].ty))
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), IrError> {
        self.line = s.line;
        self.snapshot_scope();
        match &s.kind {
            StmtKind::VarDecl { name, ty, init } => {
                let value = match init {
                    Some(e) => coerce(resolve(e, self)?, *ty, s.line)?,
                    None => TExpr::Const(ty.zero(), *ty),
                };
                let id = self.f.add_local(name, *ty, LocalKind::Var);
                self.store(VarRef::Local(id), &value)?;
                self.blocks.last_mut().unwrap().push((name.clone(), id));
            }
            StmtKind::Assign { target: LValue::Var(name), op, value } => {
                let (dest, ty) = self.lookup_scalar(name).ok_or_else(|| {
                    if self.table(name).is_some() {
                        IrError::Type { line: s.line, msg: format!("cannot assign to storage table `{name}`") }
                    } else {
                        IrError::UnknownIdent { line: s.line, name: name.clone() }
                    }
                })?;
                let rhs = resolve(value, self)?;
                match compound(*op) {
                    None => self.store(dest, &coerce(rhs, ty, s.line)?)?,
                    Some(bop) => {
                        let sum = super::expr::binary(bop, TExpr::Var(dest, ty), rhs, s.line)?;
                        self.store(dest, &coerce(sum, ty, s.line)?)?;
                    }
                }
            }
            StmtKind::Assign { target: LValue::Index { base, index }, op, value } => {
                let (table, table_ty) = self.table(base).ok_or_else(|| IrError::Type {
                    line: s.line,
                    msg: format!("`{base}` is not a mapping or array"),
                })?;
                let key_ty = table_ty.index_type().unwrap();
                let key = coerce(resolve(index, self)?, key_ty, s.line)?;
                let index = self.operand(&key)?;
                self.bounds_check(table_ty, &index);
                let rhs = resolve(value, self)?;
                let stored = match compound(*op) {
                    None => coerce(rhs, Type::UINT256, s.line)?,
                    Some(bop) => {
                        let old = self.temp(Type::UINT256);
                        self.emit(Instr::IndexRead { dest: old, table, index: index.clone() });
                        let sum = super::expr::binary(bop, TExpr::Var(old, Type::UINT256), rhs, s.line)?;
                        coerce(sum, Type::UINT256, s.line)?
                    }
                };
                let value = self.operand(&stored)?;
                self.emit(Instr::IndexWrite { table, index, value });
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                let c = resolve_bool(cond, self)?;
                let cond = self.operand(&c)?;
                let node = self.emit(Instr::Condition { cond, guard: Guard::Branch });
                self.holes = vec![(node, Slot::Then)];
                self.block(then_branch)?;
                let after_then = std::mem::take(&mut self.holes);
                self.holes = vec![(node, Slot::Else)];
                if let Some(e) = else_branch {
                    self.block(e)?;
                }
                self.holes.extend(after_then);
            }
            StmtKind::While { cond, body } => {
                let head = self.f.nodes.len();
                let c = resolve_bool(cond, self)?;
                let cond = self.operand(&c)?;
                let node = self.emit(Instr::Condition { cond, guard: Guard::Loop });
                self.holes = vec![(node, Slot::Then)];
                self.block(body)?;
                for h in std::mem::take(&mut self.holes) {
                    self.patch(h, head);
                }
                self.holes = vec![(node, Slot::Else)];
            }
            StmtKind::Return(value) => {
                let value = match (value, self.f.returns) {
                    (Some(e), Some(ty)) => {
                        let t = coerce(resolve(e, self)?, ty, s.line)?;
                        Some(self.operand(&t)?)
                    }
                    (None, None) => None,
                    (Some(_), None) => {
                        return Err(IrError::Type { line: s.line, msg: "function does not return a value".into() })
                    }
                    (None, Some(_)) => return Err(IrError::Type { line: s.line, msg: "missing return value".into() }),
                };
                let id = self.emit(Instr::Return { value });
                self.holes.clear();
                self.returns.push((id, Slot::Next));
            }
            StmtKind::Require(e) | StmtKind::Assert(e) => {
                let c = resolve_bool(e, self)?;
                let cond = self.operand(&c)?;
                let guard = if matches!(s.kind, StmtKind::Require(_)) { Guard::Require } else { Guard::Assert };
                self.guard(cond, guard);
            }
            StmtKind::Call { name, args } => {
                let call =
                    resolve(&Expr::new(ExprKind::Call { name: name.clone(), args: args.clone() }, s.line), self)?;
                let TExpr::Call { callee, args, .. } = call else { unreachable!() };
                let args = args.iter().map(|a| self.operand(a)).collect::<Result<Vec<_>, _>>()?;
                self.emit(Instr::Call { dest: None, callee, args });
            }
            StmtKind::Block(b) => self.block(b)?,
        }
        Ok(())
    }
}

fn compound(op: AssignOp) -> Option<BinOp> {
    match op {
        AssignOp::Set => None,
        AssignOp::Add => Some(BinOp::Add),
        AssignOp::Sub => Some(BinOp::Sub),
    }
}

impl Names for FnBuilder<'_> {
    fn scalar(&self, name: &str) -> Option<(VarRef, Type)> {
        self.lookup_scalar(name)
    }

    fn table(&self, name: &str) -> Option<(StateId, Type)> {
        self.ctx
            .state_vars
            .iter()
            .position(|v| v.name == name && v.ty.is_storage_table())
            .map(|i| (StateId(i as u32), self.ctx.state_vars[i].ty))
    }

    fn function(&self, name: &str) -> Option<Signature> {
        self.ctx.signatures.get(name).cloned()
    }
}
