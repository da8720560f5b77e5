//! Concrete interpreter over the lowered program. Replays transaction
//! sequences and reports whether, and how, the target was reached.

mod arith;
mod ast;
mod search;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::concretizer::{Transaction, TransactionSequence};
use crate::frontend::ast::CONSTRUCTOR_NAME;
use crate::frontend::TargetSpec;
use crate::ir::{
    resolve_bool, FuncRef, Guard, Instr, InstrId, IrError, IrFunction, IrProgram, NodeNames, Operand, Succ, TExpr,
    VarRef,
};
use crate::types::{convert, decimal, mask, Account, Type, Value, U256};

pub use arith::binary;
pub use ast::{run_ast, AstRun};
pub use search::{exhaustive_search, SearchBounds};

/// Executed nodes per transaction before replay gives up.
pub const DEFAULT_STEP_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("sequence does not start with a deployment")]
    NoDeployment,
    #[error("transaction {tx}: deployment may only be the first transaction")]
    MisplacedDeployment { tx: usize },
    #[error("transaction {tx}: unknown function `{name}`")]
    UnknownFunction { tx: usize, name: String },
    #[error("transaction {tx}: `{name}` takes {expected} arguments, got {got}")]
    Arity { tx: usize, name: String, expected: usize, got: usize },
    #[error("transaction {tx}: argument {index} does not fit {ty}")]
    ArgumentRange { tx: usize, index: usize, ty: Type },
    #[error("transaction {tx}: step limit of {limit} exceeded")]
    StepLimit { tx: usize, limit: usize },
    #[error("line {0}: no instruction on the target line")]
    NoTargetNode(u32),
    #[error(transparent)]
    Target(#[from] IrError),
    #[error("cannot interpret: {0}")]
    Unsupported(String),
}

/// Contract storage. Tables hold only cells that were written.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Storage {
    pub scalars: Vec<Value>,
    pub tables: Vec<BTreeMap<U256, U256>>,
}

impl Storage {
    pub fn new(p: &IrProgram) -> Self {
        Self::from_types(p.state_vars.iter().map(|v| v.ty))
    }

    /// Zeroed storage for state variables of the given types, in order.
    pub fn from_types(types: impl Iterator<Item = Type>) -> Self {
        let scalars: Vec<Value> = types.map(Type::zero).collect();
        let tables = vec![BTreeMap::new(); scalars.len()];
        Storage { scalars, tables }
    }

    pub fn read(&self, table: usize, key: U256) -> U256 {
        self.tables[table].get(&key).copied().unwrap_or(U256::ZERO)
    }

    pub fn write(&mut self, table: usize, key: U256, value: U256) {
        if value.is_zero() {
            self.tables[table].remove(&key);
        } else {
            self.tables[table].insert(key, value);
        }
    }

    pub fn snapshot(&self, p: &IrProgram) -> StorageSnapshot {
        let mut scalars = BTreeMap::new();
        let mut tables = BTreeMap::new();
        for (i, v) in p.state_vars.iter().enumerate() {
            if v.ty.is_scalar() {
                scalars.insert(v.name.clone(), self.scalars[i]);
            } else {
                tables.insert(v.name.clone(), Table(self.tables[i].clone()));
            }
        }
        StorageSnapshot { scalars, tables }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Table(#[serde(with = "decimal::map")] pub BTreeMap<U256, U256>);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StorageSnapshot {
    pub scalars: BTreeMap<String, Value>,
    pub tables: BTreeMap<String, Table>,
}

/// Storage plus bookkeeping of transferred value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvmState {
    pub storage: Storage,
    /// Wei sent by each account so far.
    pub sent: BTreeMap<Account, U256>,
    pub balance: U256,
    pub deployed: bool,
}

impl EvmState {
    pub fn new(p: &IrProgram) -> Self {
        EvmState { storage: Storage::new(p), sent: BTreeMap::new(), balance: U256::ZERO, deployed: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TxOutcome {
    Success {
        #[serde(skip_serializing_if = "Option::is_none")]
        returned: Option<Value>,
    },
    Reverted {
        reason: String,
    },
    TargetHit,
}

/// One executed IR node, for aligning a replay with a walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepRecord {
    pub tx: usize,
    pub func: FuncRef,
    pub instr: InstrId,
    /// Value written by the node, if any; for index writes the stored
    /// value.
    pub value: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub target_hit: bool,
    /// `true` if some arrival satisfied the safety condition (always, for
    /// targets without one); `false` if every arrival violated it.
    pub safety_value: Option<bool>,
    /// Transaction of the first safe arrival, else of the first arrival.
    pub hit_at_tx: Option<usize>,
    pub outcomes: Vec<TxOutcome>,
    /// Source lines in execution order, consecutive repeats collapsed.
    pub trace: Vec<(usize, u32)>,
    pub final_storage: StorageSnapshot,
    #[serde(skip)]
    pub steps: Vec<StepRecord>,
}

impl ReplayReport {
    /// Target reached with the safety condition true.
    pub fn confirmed(&self) -> bool {
        self.target_hit && self.safety_value == Some(true)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Target nodes with their safety conditions, per function.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayTarget {
    points: BTreeMap<(FuncRef, InstrId), Option<TExpr>>,
}

impl ReplayTarget {
    pub fn new(p: &IrProgram, spec: &TargetSpec) -> Result<Self, ReplayError> {
        let nodes = p.nodes_on_line(spec.line);
        if nodes.is_empty() {
            return Err(ReplayError::NoTargetNode(spec.line));
        }
        let mut points = BTreeMap::new();
        for (f, i) in nodes {
            let safety = match &spec.safety {
                Some(s) => Some(resolve_bool(&s.expr, &NodeNames::new(p, p.func(f), i))?),
                None => None,
            };
            points.insert((f, i), safety);
        }
        Ok(ReplayTarget { points })
    }
}

/// Per-transaction environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Env {
    sender: U256,
    value: U256,
    timestamp: U256,
}

struct Frame<'a> {
    func: &'a IrFunction,
    locals: Vec<Value>,
    env: Env,
}

impl Frame<'_> {
    fn read(&self, storage: &Storage, v: VarRef) -> Value {
        match v {
            VarRef::State(s) => storage.scalars[s.0 as usize],
            VarRef::Local(l) => self.locals[l.0 as usize],
        }
    }

    fn operand(&self, storage: &Storage, o: &Operand) -> Value {
        match o {
            Operand::Var(v) => self.read(storage, *v),
            Operand::Const(v, _) => *v,
            Operand::Env(e) => env_value(&self.env, *e),
        }
    }

    fn eval(&self, storage: &Storage, e: &TExpr) -> Result<Value, ReplayError> {
        Ok(match e {
            TExpr::Const(v, _) => *v,
            TExpr::Var(v, _) => self.read(storage, *v),
            TExpr::Env(v) => env_value(&self.env, *v),
            TExpr::Index { table, index, .. } => {
                Value::Word(storage.read(table.0 as usize, self.eval(storage, index)?.word()))
            }
            TExpr::Convert(inner, to) => convert(self.eval(storage, inner)?, *to),
            TExpr::Not(inner) => Value::Bool(!self.eval(storage, inner)?.bool()),
            TExpr::Binary { op, lhs, rhs, .. } => {
                binary(*op, self.eval(storage, lhs)?, self.eval(storage, rhs)?, lhs.ty())
            }
            TExpr::Call { callee, .. } => {
                return Err(ReplayError::Unsupported(format!("call to `{callee}` in a target condition")))
            }
        })
    }
}

fn env_value(env: &Env, e: crate::ir::EnvVar) -> Value {
    use crate::ir::EnvVar::*;
    Value::Word(match e {
        MsgSender | TxOrigin => env.sender,
        MsgValue => env.value,
        BlockTimestamp => env.timestamp,
    })
}

enum Exec {
    Done(Option<Value>),
    Reverted(String),
    /// Arrived at the target with the safety condition true.
    Hit,
}

/// How a transaction met the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Arrival {
    None,
    /// Passed the target line, safety false every time.
    Unsafe,
    Safe,
}

const NON_PAYABLE: &str = "value sent to a non-payable function";

/// A transaction argument as a value of `ty`, if it fits.
fn arg_value(ty: Type, arg: U256) -> Option<Value> {
    match ty {
        Type::Bool if arg <= U256::from(1u8) => Some(Value::Bool(!arg.is_zero())),
        Type::Uint(_) | Type::Address if mask(arg, ty.bits()?) == arg => Some(Value::Word(arg)),
        _ => None,
    }
}

fn revert_reason(guard: Guard, line: u32) -> String {
    let what = match guard {
        Guard::Require => "require",
        Guard::Assert => "assert",
        Guard::DivByZero => "division by zero",
        Guard::Bounds => "index out of bounds",
        Guard::Branch | Guard::Loop => "branch",
    };
    format!("{what} at line {line}")
}

/// Replays sequences against one program.
pub struct Replayer<'p> {
    program: &'p IrProgram,
    target: Option<ReplayTarget>,
    record_steps: bool,
    step_limit: usize,
}

impl<'p> Replayer<'p> {
    pub fn new(program: &'p IrProgram) -> Self {
        Replayer { program, target: None, record_steps: false, step_limit: DEFAULT_STEP_LIMIT }
    }

    pub fn with_target(mut self, spec: &TargetSpec) -> Result<Self, ReplayError> {
        self.target = Some(ReplayTarget::new(self.program, spec)?);
        Ok(self)
    }

    pub fn record_steps(mut self) -> Self {
        self.record_steps = true;
        self
    }

    pub fn step_limit(mut self, limit: usize) -> Self {
        self.step_limit = limit;
        self
    }

    /// Looks up the function and converts the arguments of `tx`.
    fn prepare(&self, i: usize, tx: &Transaction) -> Result<(FuncRef, Vec<Value>), ReplayError> {
        let p = self.program;
        let func = if tx.function == CONSTRUCTOR_NAME {
            if i != 0 {
                return Err(ReplayError::MisplacedDeployment { tx: i });
            }
            FuncRef::Constructor
        } else {
            if i == 0 {
                return Err(ReplayError::NoDeployment);
            }
            p.public_function(&tx.function)
                .ok_or_else(|| ReplayError::UnknownFunction { tx: i, name: tx.function.clone() })?
        };
        let f = p.func(func);
        if f.params.len() != tx.args.len() {
            return Err(ReplayError::Arity {
                tx: i,
                name: tx.function.clone(),
                expected: f.params.len(),
                got: tx.args.len(),
            });
        }
        let args = f
            .params
            .iter()
            .zip(&tx.args)
            .enumerate()
            .map(|(index, (param, arg))| {
                let ty = f.local(*param).ty;
                arg_value(ty, *arg).ok_or(ReplayError::ArgumentRange { tx: i, index, ty })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok((func, args))
    }

    /// Runs one transaction against `state`, rolling back on revert. A
    /// safe arrival stops the transaction where it stands.
    pub fn step(
        &self,
        state: &mut EvmState,
        i: usize,
        tx: &Transaction,
        trace: &mut Vec<(usize, u32)>,
        steps: &mut Vec<StepRecord>,
    ) -> Result<(TxOutcome, Arrival), ReplayError> {
        let (func, args) = self.prepare(i, tx)?;
        let f = self.program.func(func);
        if !f.payable && !tx.value.is_zero() {
            return Ok((TxOutcome::Reverted { reason: NON_PAYABLE.into() }, Arrival::None));
        }
        let saved = state.clone();
        *state.sent.entry(tx.caller).or_default() += tx.value;
        state.balance += tx.value;
        state.deployed = true;
        let env = Env { sender: tx.caller.address(), value: tx.value, timestamp: tx.timestamp.unwrap_or_default() };
        let mut frame = Frame { func: f, locals: f.locals.iter().map(|l| l.ty.zero()).collect(), env };
        for (param, v) in f.params.iter().zip(args) {
            frame.locals[param.0 as usize] = v;
        }
        let mut arrival = Arrival::None;
        Ok(match self.execute(&mut frame, func, &mut state.storage, i, trace, steps, &mut arrival)? {
            Exec::Done(returned) => (TxOutcome::Success { returned }, arrival),
            Exec::Reverted(reason) => {
                *state = saved;
                (TxOutcome::Reverted { reason }, arrival)
            }
            Exec::Hit => (TxOutcome::TargetHit, Arrival::Safe),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn execute(
        &self,
        frame: &mut Frame,
        func: FuncRef,
        storage: &mut Storage,
        tx: usize,
        trace: &mut Vec<(usize, u32)>,
        steps: &mut Vec<StepRecord>,
        arrival: &mut Arrival,
    ) -> Result<Exec, ReplayError> {
        let f = frame.func;
        let mut pc = IrFunction::ENTRY;
        let mut last_guard: Option<(Guard, u32)> = None;
        let mut returned = None;
        for _ in 0..self.step_limit {
            if let Some(safety) = self.target.as_ref().and_then(|t| t.points.get(&(func, pc))) {
                let safe = match safety {
                    Some(e) => frame.eval(storage, e)?.bool(),
                    None => true,
                };
                if safe {
                    return Ok(Exec::Hit);
                }
                *arrival = Arrival::Unsafe;
            }
            let node = &f.nodes[pc];
            if node.line > 0 && trace.last() != Some(&(tx, node.line)) {
                trace.push((tx, node.line));
            }
            let mut written = None;
            let mut stored = None;
            let mut next = match node.succ {
                Succ::Next(n) => Some(n),
                _ => None,
            };
            match &node.instr {
                Instr::Entry | Instr::InlineEnter { .. } | Instr::InlineExit { .. } => {}
                Instr::Exit => {
                    self.record(steps, tx, func, pc, None);
                    return Ok(Exec::Done(returned));
                }
                Instr::RevertSink => {
                    self.record(steps, tx, func, pc, None);
                    let reason = last_guard.map(|(g, l)| revert_reason(g, l)).unwrap_or_else(|| "revert".into());
                    return Ok(Exec::Reverted(reason));
                }
                Instr::Assign { dest, src } => written = Some((*dest, frame.operand(storage, src))),
                Instr::Convert { dest, src, to } => written = Some((*dest, convert(frame.operand(storage, src), *to))),
                Instr::Binary { dest, op, lhs, rhs } => {
                    let ty = self.program.operand_type(f, lhs);
                    let v = binary(*op, frame.operand(storage, lhs), frame.operand(storage, rhs), ty);
                    written = Some((*dest, v));
                }
                Instr::Unary { dest, src, .. } => {
                    written = Some((*dest, Value::Bool(!frame.operand(storage, src).bool())))
                }
                Instr::IndexRead { dest, table, index } => {
                    let key = frame.operand(storage, index).word();
                    written = Some((*dest, Value::Word(storage.read(table.0 as usize, key))));
                }
                Instr::IndexWrite { table, index, value } => {
                    let key = frame.operand(storage, index).word();
                    let v = frame.operand(storage, value).word();
                    storage.write(table.0 as usize, key, v);
                    stored = Some(Value::Word(v));
                }
                Instr::Condition { cond, guard } => {
                    let c = frame.operand(storage, cond).bool();
                    last_guard = Some((*guard, node.line));
                    if let Succ::Branch { then, otherwise } = node.succ {
                        next = Some(if c { then } else { otherwise });
                    }
                }
                Instr::Return { value } => returned = value.as_ref().map(|o| frame.operand(storage, o)),
                Instr::Call { callee, .. } => {
                    return Err(ReplayError::Unsupported(format!("call to `{callee}` was not inlined")))
                }
            }
            if let Some((dest, v)) = written {
                match dest {
                    VarRef::State(s) => storage.scalars[s.0 as usize] = v,
                    VarRef::Local(l) => frame.locals[l.0 as usize] = v,
                }
            }
            self.record(steps, tx, func, pc, written.map(|(_, v)| v).or(stored));
            pc = next.ok_or_else(|| ReplayError::Unsupported(format!("node {pc} of `{}` has no successor", f.name)))?;
        }
        Err(ReplayError::StepLimit { tx, limit: self.step_limit })
    }

    fn record(&self, steps: &mut Vec<StepRecord>, tx: usize, func: FuncRef, instr: InstrId, value: Option<Value>) {
        if self.record_steps {
            steps.push(StepRecord { tx, func, instr, value });
        }
    }

    /// Replays `txs` from a fresh state until the target is reached with
    /// its safety condition true, or the sequence ends.
    pub fn run(&self, txs: &[Transaction]) -> Result<ReplayReport, ReplayError> {
        if txs.first().map(|t| t.function.as_str()) != Some(CONSTRUCTOR_NAME) {
            return Err(ReplayError::NoDeployment);
        }
        let mut state = EvmState::new(self.program);
        let (mut trace, mut steps, mut outcomes) = (Vec::new(), Vec::new(), Vec::new());
        let (mut safe_at, mut unsafe_at) = (None, None);
        for (i, tx) in txs.iter().enumerate() {
            let (outcome, arrival) = self.step(&mut state, i, tx, &mut trace, &mut steps)?;
            outcomes.push(outcome);
            match arrival {
                Arrival::Safe => {
                    safe_at = Some(i);
                    break;
                }
                Arrival::Unsafe => unsafe_at = unsafe_at.or(Some(i)),
                Arrival::None => {}
            }
        }
        let hit = safe_at.map(|i| (i, true)).or(unsafe_at.map(|i| (i, false)));
        Ok(ReplayReport {
            target_hit: hit.is_some(),
            safety_value: hit.map(|(_, s)| s),
            hit_at_tx: hit.map(|(i, _)| i),
            outcomes,
            trace,
            final_storage: state.storage.snapshot(self.program),
            steps,
        })
    }
}

/// Replays `seq` and reports on `target`.
pub fn replay(
    program: &IrProgram,
    seq: &TransactionSequence,
    target: &TargetSpec,
) -> Result<ReplayReport, ReplayError> {
    Replayer::new(program).with_target(target)?.run(&seq.transactions)
}

#[cfg(test)]
mod tests;
