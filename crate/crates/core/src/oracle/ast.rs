//! Direct interpreter over the syntax tree. Shares typing with lowering
//! through `resolve` but nothing else, so it can cross-check the IR.

use std::collections::HashMap;

use super::{arg_value, binary, revert_reason, ReplayError, Storage, TxOutcome};
use crate::concretizer::Transaction;
use crate::frontend::ast::{
    AssignOp, BinOp, ContractAst, EnvVar, Expr, ExprKind, FunctionDecl, LValue, Stmt, StmtKind, Visibility,
    CONSTRUCTOR_NAME,
};
use crate::frontend::TargetSpec;
use crate::ir::{
    coerce, resolve, resolve_binary, resolve_bool, Guard, IrError, LocalId, Names, Signature, StateId, TExpr, VarRef,
};
use crate::types::{convert, Type, Value, U256};

/// Statements and loop iterations per transaction before giving up.
const STEP_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AstRun {
    pub outcomes: Vec<TxOutcome>,
    /// First safe arrival, else first arrival, with its safety value.
    pub hit: Option<(usize, bool)>,
    pub storage: Storage,
}

/// Early exits from statement execution.
enum Stop {
    Return(Option<Value>),
    Revert(String),
    /// Arrived at the target with the safety condition true.
    Hit,
    Fail(ReplayError),
}

impl From<IrError> for Stop {
    fn from(e: IrError) -> Self {
        Stop::Fail(e.into())
    }
}

#[derive(Default)]
struct Frame {
    locals: Vec<(String, Type, Value)>,
    /// Local count at each open block.
    blocks: Vec<usize>,
}

struct Interp<'a> {
    ast: &'a ContractAst,
    signatures: HashMap<&'a str, Signature>,
    storage: Storage,
    sender: U256,
    value: U256,
    timestamp: U256,
    target: Option<&'a TargetSpec>,
    /// Set when the target was passed with the safety condition false.
    unsafe_arrival: bool,
    steps: usize,
    tx: usize,
    /// Declared return type of each active call.
    returns: Vec<Option<Type>>,
}

/// Name lookup for one frame.
struct Scope<'a, 'b> {
    interp: &'b Interp<'a>,
    frame: &'b Frame,
}

impl Names for Scope<'_, '_> {
    fn scalar(&self, name: &str) -> Option<(VarRef, Type)> {
        if let Some(i) = self.frame.locals.iter().rposition(|(n, _, _)| n == name) {
            return Some((VarRef::Local(LocalId(i as u32)), self.frame.locals[i].1));
        }
        let vars = &self.interp.ast.state_vars;
        let i = vars.iter().position(|v| v.name == name && v.ty.is_scalar())?;
        Some((VarRef::State(StateId(i as u32)), vars[i].ty))
    }

    fn table(&self, name: &str) -> Option<(StateId, Type)> {
        let vars = &self.interp.ast.state_vars;
        let i = vars.iter().position(|v| v.name == name && v.ty.is_storage_table())?;
        Some((StateId(i as u32), vars[i].ty))
    }

    fn function(&self, name: &str) -> Option<Signature> {
        self.interp.signatures.get(name).cloned()
    }
}

fn is_leaf(e: &TExpr) -> bool {
    matches!(e, TExpr::Const(..) | TExpr::Var(..) | TExpr::Env(_))
}

impl<'a> Interp<'a> {
    fn names<'b>(&'b self, frame: &'b Frame) -> Scope<'a, 'b> {
        Scope { interp: self, frame }
    }

    fn tick(&mut self) -> Result<(), Stop> {
        self.steps += 1;
        if self.steps > STEP_LIMIT {
            return Err(Stop::Fail(ReplayError::StepLimit { tx: self.tx, limit: STEP_LIMIT }));
        }
        Ok(())
    }

    fn read(&self, frame: &Frame, v: VarRef) -> Value {
        match v {
            VarRef::State(s) => self.storage.scalars[s.0 as usize],
            VarRef::Local(l) => frame.locals[l.0 as usize].2,
        }
    }

    fn write(&mut self, frame: &mut Frame, v: VarRef, value: Value) {
        match v {
            VarRef::State(s) => self.storage.scalars[s.0 as usize] = value,
            VarRef::Local(l) => frame.locals[l.0 as usize].2 = value,
        }
    }

    fn env(&self, e: EnvVar) -> Value {
        Value::Word(match e {
            EnvVar::MsgSender | EnvVar::TxOrigin => self.sender,
            EnvVar::MsgValue => self.value,
            EnvVar::BlockTimestamp => self.timestamp,
        })
    }

    /// Composite operands are computed left to right first; plain
    /// variables are read afterwards, at the point of use.
    fn eval_all(&mut self, frame: &mut Frame, es: &[&TExpr], line: u32) -> Result<Vec<Value>, Stop> {
        let mut out = vec![None; es.len()];
        for (slot, e) in out.iter_mut().zip(es) {
            if !is_leaf(e) {
                *slot = Some(self.eval(frame, e, line)?);
            }
        }
        Ok(out.into_iter().zip(es).map(|(v, e)| v.unwrap_or_else(|| self.leaf(frame, e))).collect())
    }

    fn leaf(&self, frame: &Frame, e: &TExpr) -> Value {
        match e {
            TExpr::Const(v, _) => *v,
            TExpr::Var(v, _) => self.read(frame, *v),
            TExpr::Env(v) => self.env(*v),
            _ => unreachable!("not a leaf"),
        }
    }

    fn bounds(&self, table_ty: Type, key: U256, line: u32) -> Result<(), Stop> {
        match table_ty {
            Type::Array(len) if key >= U256::from(len) => Err(Stop::Revert(revert_reason(Guard::Bounds, line))),
            _ => Ok(()),
        }
    }

    fn eval(&mut self, frame: &mut Frame, e: &TExpr, line: u32) -> Result<Value, Stop> {
        Ok(match e {
            TExpr::Const(..) | TExpr::Var(..) | TExpr::Env(_) => self.leaf(frame, e),
            TExpr::Index { table, table_ty, index } => {
                let key = self.eval_all(frame, &[index], line)?[0].word();
                self.bounds(*table_ty, key, line)?;
                Value::Word(self.storage.read(table.0 as usize, key))
            }
            TExpr::Convert(inner, to) => convert(self.eval_all(frame, &[inner], line)?[0], *to),
            TExpr::Not(inner) => Value::Bool(!self.eval_all(frame, &[inner], line)?[0].bool()),
            TExpr::Binary { op, lhs, rhs, .. } => {
                let v = self.eval_all(frame, &[lhs, rhs], line)?;
                if matches!(op, BinOp::Div | BinOp::Mod) && v[1].word().is_zero() {
                    return Err(Stop::Revert(revert_reason(Guard::DivByZero, line)));
                }
                binary(*op, v[0], v[1], lhs.ty())
            }
            TExpr::Call { callee, args, ret } => {
                let refs: Vec<&TExpr> = args.iter().collect();
                let args = self.eval_all(frame, &refs, line)?;
                let returned = self.call(callee, args)?;
                returned.unwrap_or_else(|| ret.unwrap_or(Type::Bool).zero())
            }
        })
    }

    fn call(&mut self, name: &str, args: Vec<Value>) -> Result<Option<Value>, Stop> {
        let decl = self
            .ast
            .function(name)
            .ok_or_else(|| Stop::Fail(ReplayError::Unsupported(format!("call to undefined function `{name}`"))))?;
        self.invoke(decl, args)
    }

    fn invoke(&mut self, decl: &'a FunctionDecl, args: Vec<Value>) -> Result<Option<Value>, Stop> {
        let mut frame = Frame::default();
        for (p, v) in decl.params.iter().zip(args) {
            frame.locals.push((p.name.clone(), p.ty, v));
        }
        self.returns.push(decl.returns);
        let result = self.block(&mut frame, &decl.body);
        self.returns.pop();
        match result {
            Ok(()) => Ok(None),
            Err(Stop::Return(v)) => Ok(v),
            Err(other) => Err(other),
        }
    }

    fn block(&mut self, frame: &mut Frame, stmts: &'a [Stmt]) -> Result<(), Stop> {
        frame.blocks.push(frame.locals.len());
        let result = stmts.iter().try_for_each(|s| self.stmt(frame, s));
        let mark = frame.blocks.pop().expect("open block");
        frame.locals.truncate(mark);
        result
    }

    fn check_target(&mut self, frame: &mut Frame, line: u32) -> Result<(), Stop> {
        let Some(target) = self.target.filter(|t| t.line == line) else { return Ok(()) };
        let safety = match &target.safety {
            Some(s) => {
                let cond = resolve_bool(&s.expr, &self.names(frame))?;
                self.eval(frame, &cond, line)?.bool()
            }
            None => true,
        };
        if safety {
            return Err(Stop::Hit);
        }
        self.unsafe_arrival = true;
        Ok(())
    }

    fn stmt(&mut self, frame: &mut Frame, s: &'a Stmt) -> Result<(), Stop> {
        let line = s.line;
        if !matches!(s.kind, StmtKind::Block(_)) {
            self.tick()?;
            self.check_target(frame, line)?;
        }
        match &s.kind {
            StmtKind::VarDecl { name, ty, init } => {
                let value = match init {
                    Some(e) => {
                        let t = coerce(resolve(e, &self.names(frame))?, *ty, line)?;
                        self.eval(frame, &t, line)?
                    }
                    None => ty.zero(),
                };
                frame.locals.push((name.clone(), *ty, value));
            }
            StmtKind::Assign { target: LValue::Var(name), op, value } => {
                let names = self.names(frame);
                let (dest, ty) =
                    names.scalar(name).ok_or_else(|| IrError::UnknownIdent { line, name: name.clone() })?;
                let rhs = resolve(value, &names)?;
                let stored = match compound(*op) {
                    None => coerce(rhs, ty, line)?,
                    Some(bop) => coerce(resolve_binary(bop, TExpr::Var(dest, ty), rhs, line)?, ty, line)?,
                };
                let v = self.eval(frame, &stored, line)?;
                self.write(frame, dest, v);
            }
            StmtKind::Assign { target: LValue::Index { base, index }, op, value } => {
                let (table, table_ty) =
                    self.names(frame).table(base).ok_or_else(|| IrError::UnknownIdent { line, name: base.clone() })?;
                let key_ty = table_ty.index_type().expect("storage table");
                let key = coerce(resolve(index, &self.names(frame))?, key_ty, line)?;
                let key = self.eval_all(frame, &[&key], line)?[0].word();
                self.bounds(table_ty, key, line)?;
                let rhs = resolve(value, &self.names(frame))?;
                let stored = match compound(*op) {
                    None => coerce(rhs, Type::UINT256, line)?,
                    Some(bop) => {
                        // The old cell value lives in an unnamed local, as in lowering.
                        let old = self.storage.read(table.0 as usize, key);
                        frame.locals.push((String::new(), Type::UINT256, Value::Word(old)));
                        let slot = VarRef::Local(LocalId(frame.locals.len() as u32 - 1));
                        coerce(resolve_binary(bop, TExpr::Var(slot, Type::UINT256), rhs, line)?, Type::UINT256, line)?
                    }
                };
                let v = self.eval(frame, &stored, line)?.word();
                if compound(*op).is_some() {
                    frame.locals.pop();
                }
                self.storage.write(table.0 as usize, key, v);
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                let c = resolve_bool(cond, &self.names(frame))?;
                if self.eval(frame, &c, line)?.bool() {
                    self.block(frame, then_branch)?;
                } else if let Some(e) = else_branch {
                    self.block(frame, e)?;
                }
            }
            StmtKind::While { cond, body } => loop {
                let c = resolve_bool(cond, &self.names(frame))?;
                if !self.eval(frame, &c, line)?.bool() {
                    break;
                }
                self.block(frame, body)?;
                self.tick()?;
            },
            StmtKind::Return(value) => {
                let v = match value {
                    Some(e) => {
                        let ty = self.return_type(e.line)?;
                        let t = coerce(resolve(e, &self.names(frame))?, ty, line)?;
                        Some(self.eval(frame, &t, line)?)
                    }
                    None => None,
                };
                return Err(Stop::Return(v));
            }
            StmtKind::Require(e) | StmtKind::Assert(e) => {
                let c = resolve_bool(e, &self.names(frame))?;
                if !self.eval(frame, &c, line)?.bool() {
                    let guard = if matches!(s.kind, StmtKind::Require(_)) { Guard::Require } else { Guard::Assert };
                    return Err(Stop::Revert(revert_reason(guard, line)));
                }
            }
            StmtKind::Call { name, args } => {
                let call = Expr::new(ExprKind::Call { name: name.clone(), args: args.clone() }, line);
                let TExpr::Call { callee, args, .. } = resolve(&call, &self.names(frame))? else {
                    unreachable!("call resolves to a call")
                };
                let refs: Vec<&TExpr> = args.iter().collect();
                let args = self.eval_all(frame, &refs, line)?;
                self.call(&callee, args)?;
            }
            StmtKind::Block(b) => self.block(frame, b)?,
        }
        Ok(())
    }

    fn return_type(&self, line: u32) -> Result<Type, Stop> {
        self.returns.last().copied().flatten().ok_or_else(|| {
            Stop::Fail(ReplayError::Unsupported(format!("line {line}: return value in a function without one")))
        })
    }

    /// Constructor: state initializers in declaration order, then the body.
    fn deploy(&mut self, args: Vec<Value>) -> Result<Option<Value>, Stop> {
        let mut frame = Frame::default();
        for (i, v) in self.ast.state_vars.iter().enumerate() {
            let Some(init) = &v.init else { continue };
            self.tick()?;
            self.check_target(&mut frame, v.line)?;
            let t = coerce(resolve(init, &self.names(&frame))?, v.ty, v.line)?;
            let value = self.eval(&mut frame, &t, v.line)?;
            self.storage.scalars[i] = value;
        }
        let ast = self.ast;
        self.invoke(&ast.constructor, args)
    }
}

fn compound(op: AssignOp) -> Option<BinOp> {
    match op {
        AssignOp::Set => None,
        AssignOp::Add => Some(BinOp::Add),
        AssignOp::Sub => Some(BinOp::Sub),
    }
}

/// Runs `txs` from a fresh state, stopping at the first target hit.
pub fn run_ast(ast: &ContractAst, txs: &[Transaction], target: Option<&TargetSpec>) -> Result<AstRun, ReplayError> {
    let mut interp = Interp {
        ast,
        signatures: ast
            .functions
            .iter()
            .map(|f| {
                (f.name.as_str(), Signature { params: f.params.iter().map(|p| p.ty).collect(), returns: f.returns })
            })
            .collect(),
        storage: Storage::from_types(ast.state_vars.iter().map(|v| v.ty)),
        sender: U256::ZERO,
        value: U256::ZERO,
        timestamp: U256::ZERO,
        target,
        unsafe_arrival: false,
        steps: 0,
        tx: 0,
        returns: Vec::new(),
    };
    let mut outcomes = Vec::new();
    let mut unsafe_at = None;
    for (i, tx) in txs.iter().enumerate() {
        let decl = if tx.function == CONSTRUCTOR_NAME {
            if i != 0 {
                return Err(ReplayError::MisplacedDeployment { tx: i });
            }
            &ast.constructor
        } else {
            if i == 0 {
                return Err(ReplayError::NoDeployment);
            }
            ast.function(&tx.function)
                .filter(|f| f.visibility == Visibility::Public)
                .ok_or_else(|| ReplayError::UnknownFunction { tx: i, name: tx.function.clone() })?
        };
        if decl.params.len() != tx.args.len() {
            return Err(ReplayError::Arity {
                tx: i,
                name: tx.function.clone(),
                expected: decl.params.len(),
                got: tx.args.len(),
            });
        }
        let args = decl
            .params
            .iter()
            .zip(&tx.args)
            .enumerate()
            .map(|(index, (p, a))| arg_value(p.ty, *a).ok_or(ReplayError::ArgumentRange { tx: i, index, ty: p.ty }))
            .collect::<Result<Vec<_>, _>>()?;
        if !decl.payable && !tx.value.is_zero() {
            outcomes.push(TxOutcome::Reverted { reason: super::NON_PAYABLE.into() });
            continue;
        }
        interp.sender = tx.caller.address();
        interp.value = tx.value;
        interp.timestamp = tx.timestamp.unwrap_or_default();
        interp.steps = 0;
        interp.tx = i;
        interp.unsafe_arrival = false;
        let saved = interp.storage.clone();
        let result = if i == 0 { interp.deploy(args) } else { interp.invoke(decl, args) };
        if interp.unsafe_arrival {
            unsafe_at = unsafe_at.or(Some(i));
        }
        match result {
            Ok(returned) => outcomes.push(TxOutcome::Success { returned }),
            Err(Stop::Return(returned)) => outcomes.push(TxOutcome::Success { returned }),
            Err(Stop::Revert(reason)) => {
                interp.storage = saved;
                outcomes.push(TxOutcome::Reverted { reason });
            }
            Err(Stop::Hit) => {
                outcomes.push(TxOutcome::TargetHit);
                return Ok(AstRun { outcomes, hit: Some((i, true)), storage: interp.storage });
            }
            Err(Stop::Fail(e)) => return Err(e),
        }
    }
    Ok(AstRun { outcomes, hit: unsafe_at.map(|i| (i, false)), storage: interp.storage })
}
