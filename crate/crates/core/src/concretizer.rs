//! Turns a model of a complete walk into a deployment plus calls.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{Model, SsaScript, Sym};
use crate::frontend::TargetInfo;
use crate::ir::{EnvVar, IrProgram};
use crate::types::{decimal, Account, Value, U256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    /// `<constructor>` for the deployment.
    pub function: String,
    pub caller: Account,
    /// Declaration order; booleans as 0 or 1.
    #[serde(with = "decimal::vec")]
    pub args: Vec<U256>,
    #[serde(with = "decimal")]
    pub value: U256,
    #[serde(with = "decimal")]
    pub gas: U256,
    /// Only present when the transaction reads `block.timestamp`.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "decimal::option")]
    pub timestamp: Option<U256>,
}

impl Transaction {
    /// A call with default environment: caller A0, no value, no gas.
    pub fn call(function: &str, args: Vec<U256>) -> Self {
        Transaction {
            function: function.to_string(),
            caller: Account(0),
            args,
            value: U256::ZERO,
            gas: U256::ZERO,
            timestamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionSequence {
    pub target: TargetInfo,
    pub heuristic: String,
    pub walks_explored: u64,
    pub time_ms: u64,
    /// Deployment first, then calls in execution order.
    pub transactions: Vec<Transaction>,
}

impl TransactionSequence {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("sequence serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Search metadata copied into the artifact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunInfo {
    pub target: TargetInfo,
    pub heuristic: String,
    pub walks_explored: u64,
    pub time_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConcretizeError {
    #[error("walk does not start at deployment")]
    IncompleteWalk,
    #[error("transaction {tx}: model has no value for `{name}`")]
    MissingSymbol { tx: usize, name: String },
    #[error("transaction {tx}: caller {address} is not a known account")]
    UnknownCaller { tx: usize, address: U256 },
}

fn as_word(v: Value) -> U256 {
    match v {
        Value::Bool(b) => U256::from(b as u8),
        Value::Word(w) => w,
    }
}

pub fn concretize(
    model: &Model,
    script: &SsaScript,
    program: &IrProgram,
    info: RunInfo,
) -> Result<TransactionSequence, ConcretizeError> {
    if !script.complete {
        return Err(ConcretizeError::IncompleteWalk);
    }
    let mut transactions = Vec::with_capacity(script.txs.len());
    for (i, seg) in script.txs.iter().enumerate() {
        let tx = i as u32;
        let f = program.func(seg.func);
        let get = |sym: Sym, name: &str| {
            model.get(sym).ok_or_else(|| ConcretizeError::MissingSymbol { tx: i, name: name.to_string() })
        };
        let env = |var: EnvVar| get(Sym::Env { tx, var }, var.as_str()).map(as_word);

        let address = env(EnvVar::MsgSender)?;
        let caller = Account::from_address(address).ok_or(ConcretizeError::UnknownCaller { tx: i, address })?;
        let args = f
            .params
            .iter()
            .map(|p| get(Sym::Local { tx, var: *p, ver: 0 }, &f.local(*p).name).map(as_word))
            .collect::<Result<Vec<_>, _>>()?;
        let timestamp_sym = Sym::Env { tx, var: EnvVar::BlockTimestamp };
        let timestamp = match script.sort_of(timestamp_sym) {
            Some(_) => Some(env(EnvVar::BlockTimestamp)?),
            None => None,
        };
        transactions.push(Transaction {
            function: f.name.clone(),
            caller,
            args,
            value: env(EnvVar::MsgValue)?,
            gas: get(Sym::Gas { tx }, "gas").map(as_word)?,
            timestamp,
        });
    }
    Ok(TransactionSequence {
        target: info.target,
        heuristic: info.heuristic,
        walks_explored: info.walks_explored,
        time_ms: info.time_ms,
        transactions,
    })
}
