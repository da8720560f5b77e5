//! Breadth-first enumeration of bounded transaction sequences. Slow, but
//! independent of the solver, so it can confirm both hits and misses.

use std::collections::HashSet;

use super::{arg_value, Arrival, EvmState, ReplayError, Replayer, Storage, TxOutcome};
use crate::concretizer::Transaction;
use crate::frontend::ast::CONSTRUCTOR_NAME;
use crate::ir::{FuncRef, IrFunction, IrProgram};
use crate::types::{Account, Type, U256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchBounds {
    /// Calls after the deployment.
    pub max_calls: usize,
    /// Candidate values for every integer or address argument.
    pub args: Vec<U256>,
    pub callers: Vec<Account>,
    /// Candidate `msg.value`s; non-zero ones are only tried on payable functions.
    pub values: Vec<U256>,
    pub timestamps: Vec<U256>,
}

impl Default for SearchBounds {
    fn default() -> Self {
        SearchBounds {
            max_calls: 3,
            args: [0u64, 1, 2, 10].into_iter().map(U256::from).collect(),
            callers: vec![Account(0)],
            values: vec![U256::ZERO],
            timestamps: vec![U256::ZERO],
        }
    }
}

fn arg_domain(ty: Type, bounds: &SearchBounds) -> Vec<U256> {
    match ty {
        Type::Bool => vec![U256::ZERO, U256::from(1u8)],
        _ => bounds.args.iter().copied().filter(|a| arg_value(ty, *a).is_some()).collect(),
    }
}

/// Every call of `f` within the bounds.
fn calls(f: &IrFunction, name: &str, bounds: &SearchBounds) -> Vec<Transaction> {
    let domains: Vec<Vec<U256>> = f.params.iter().map(|p| arg_domain(f.local(*p).ty, bounds)).collect();
    let mut arg_lists: Vec<Vec<U256>> = vec![Vec::new()];
    for d in &domains {
        arg_lists = arg_lists
            .into_iter()
            .flat_map(|prefix| {
                d.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push(*v);
                    next
                })
            })
            .collect();
    }
    let values: Vec<U256> = bounds.values.iter().copied().filter(|v| f.payable || v.is_zero()).collect();
    let mut out = Vec::new();
    for args in &arg_lists {
        for caller in &bounds.callers {
            for value in &values {
                for ts in &bounds.timestamps {
                    out.push(Transaction {
                        function: name.to_string(),
                        caller: *caller,
                        args: args.clone(),
                        value: *value,
                        gas: U256::ZERO,
                        timestamp: Some(*ts),
                    });
                }
            }
        }
    }
    out
}

/// Shortest sequence within `bounds` that reaches the target of
/// `replayer` with its safety condition true. Sequences reaching an
/// already seen storage state are not extended.
pub fn exhaustive_search(
    program: &IrProgram,
    replayer: &Replayer,
    bounds: &SearchBounds,
) -> Result<Option<Vec<Transaction>>, ReplayError> {
    let deployments = calls(&program.constructor, CONSTRUCTOR_NAME, bounds);
    let candidates: Vec<Transaction> = program
        .transaction_functions()
        .filter(|(r, _)| *r != FuncRef::Constructor)
        .flat_map(|(_, f)| calls(f, &f.name, bounds))
        .collect();

    let mut seen: HashSet<Storage> = HashSet::new();
    let mut frontier: Vec<(EvmState, Vec<Transaction>)> = Vec::new();
    let (mut trace, mut steps) = (Vec::new(), Vec::new());

    let mut expand = |state: &EvmState, prefix: &[Transaction], tx: &Transaction, frontier: &mut Vec<_>| {
        let mut next = state.clone();
        let (outcome, hit) = replayer.step(&mut next, prefix.len(), tx, &mut trace, &mut steps)?;
        trace.clear();
        let mut seq = prefix.to_vec();
        seq.push(tx.clone());
        match (outcome, hit) {
            (_, Arrival::Safe) => return Ok(Some(seq)),
            (TxOutcome::Success { .. }, _) if seen.insert(next.storage.clone()) => frontier.push((next, seq)),
            _ => {}
        }
        Ok::<_, ReplayError>(None)
    };

    let empty = EvmState::new(program);
    for d in &deployments {
        if let Some(seq) = expand(&empty, &[], d, &mut frontier)? {
            return Ok(Some(seq));
        }
    }
    for _ in 0..bounds.max_calls {
        let mut next_frontier = Vec::new();
        for (state, prefix) in &frontier {
            for tx in &candidates {
                if let Some(seq) = expand(state, prefix, tx, &mut next_frontier)? {
                    return Ok(Some(seq));
                }
            }
        }
        frontier = next_frontier;
    }
    Ok(None)
}
