//! Differential replay: the same transactions on the original and the
//! mutant, compared transaction by transaction.

use serde::Serialize;

use crate::concretizer::Transaction;
use crate::ir::{Instr, IrProgram, LocalKind, VarRef};
use crate::oracle::{ReplayError, ReplayReport, Replayer};
use crate::types::Value;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Divergence {
    /// Control flow, a written value or storage differs.
    pub weak: bool,
    /// Some transaction returned or reverted differently.
    pub strong: bool,
    /// First transaction where the runs differ.
    pub first_tx: Option<usize>,
}

impl Divergence {
    pub fn killed(&self) -> bool {
        self.weak || self.strong
    }
}

/// Named writes of one replay: (tx, line, variable, value). Temporaries
/// are skipped since their numbering differs between the two programs.
fn writes(program: &IrProgram, report: &ReplayReport) -> Vec<(usize, u32, String, Value)> {
    report
        .steps
        .iter()
        .filter_map(|s| {
            let f = program.func(s.func);
            let node = &f.nodes[s.instr];
            let name = match &node.instr {
                Instr::IndexWrite { table, .. } => program.state(*table).name.clone(),
                instr => match instr.dest()? {
                    VarRef::Local(l) if f.local(l).kind == LocalKind::Temp => return None,
                    v => program.var_name(f, v).to_string(),
                },
            };
            Some((s.tx, node.line, name, s.value?))
        })
        .collect()
}

fn run(program: &IrProgram, txs: &[Transaction]) -> Result<ReplayReport, ReplayError> {
    Replayer::new(program).record_steps().run(txs)
}

/// Replays `txs` on both programs. A transaction that only one program
/// accepts (an argument out of its declared range) counts as a strong
/// divergence at that transaction.
pub fn differential_replay(
    original: &IrProgram,
    mutant: &IrProgram,
    txs: &[Transaction],
) -> Result<Divergence, ReplayError> {
    let (a, b) = match (run(original, txs), run(mutant, txs)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(ReplayError::ArgumentRange { tx, .. }), Ok(_)) | (Ok(_), Err(ReplayError::ArgumentRange { tx, .. })) => {
            return Ok(Divergence { weak: true, strong: true, first_tx: Some(tx) })
        }
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    let (wa, wb) = (writes(original, &a), writes(mutant, &b));
    let mut first_tx = None;
    let mut strong = false;
    for tx in 0..txs.len() {
        let trace = |r: &ReplayReport| r.trace.iter().filter(|(t, _)| *t == tx).copied().collect::<Vec<_>>();
        let of_tx = |w: &[(usize, u32, String, Value)]| w.iter().filter(|x| x.0 == tx).cloned().collect::<Vec<_>>();
        let outcome_differs = a.outcomes.get(tx) != b.outcomes.get(tx);
        if outcome_differs || trace(&a) != trace(&b) || of_tx(&wa) != of_tx(&wb) {
            first_tx = first_tx.or(Some(tx));
            strong |= outcome_differs;
        }
    }
    let weak = first_tx.is_some() || a.final_storage != b.final_storage;
    Ok(Divergence { weak, strong, first_tx })
}
