//! Constraint generation for candidate walks and the external solver
//! interface.

mod sexpr;
mod smt;
mod solver;
mod ssa;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ir::{BinOp, EnvVar, FuncRef, LocalId, StateId};
use crate::types::{Type, Value, U256};

pub use smt::{encode, Query, SmtScript};
pub use solver::{check_sat, parse_response, SatResult, SolverConfig, SolverError, SolverSession};
pub use ssa::{ssa_number, SsaScript};

/// Index of a transaction along the walk, in execution order.
pub type TxIndex = u32;

/// A versioned scalar symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sym {
    State { var: StateId, ver: u32 },
    Local { tx: TxIndex, var: LocalId, ver: u32 },
    Env { tx: TxIndex, var: EnvVar },
    Gas { tx: TxIndex },
}

/// One generation of a storage table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MapRef {
    pub var: StateId,
    pub gen: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Sym(Sym),
    Const(Value, Type),
    /// `operand_ty` is the type of both operands.
    Binary {
        op: BinOp,
        lhs: Box<Term>,
        rhs: Box<Term>,
        operand_ty: Type,
    },
    Not(Box<Term>),
    Convert {
        term: Box<Term>,
        from: Type,
        to: Type,
    },
    Select {
        map: MapRef,
        key: Box<Term>,
    },
}

impl Term {
    pub fn eq(lhs: Term, rhs: Term, operand_ty: Type) -> Term {
        Term::Binary { op: BinOp::Eq, lhs: Box::new(lhs), rhs: Box::new(rhs), operand_ty }
    }

    pub fn walk(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        match self {
            Term::Binary { lhs, rhs, .. } => {
                lhs.walk(f);
                rhs.walk(f);
            }
            Term::Not(t) | Term::Convert { term: t, .. } | Term::Select { key: t, .. } => t.walk(f),
            Term::Sym(_) | Term::Const(..) => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Clause {
    /// `sym = term`; `step` is the execution index of the defining node.
    Define {
        sym: Sym,
        term: Term,
        step: Option<usize>,
    },
    Assume(Term),
    /// Every cell of the generation is zero.
    MapZero(MapRef),
    /// Point update from `old` to `new` plus the frame condition for every
    /// other key.
    MapStore {
        new: MapRef,
        old: MapRef,
        key: Term,
        value: Term,
    },
}

impl Clause {
    pub fn terms(&self) -> Vec<&Term> {
        match self {
            Clause::Define { term, .. } | Clause::Assume(term) => vec![term],
            Clause::MapZero(_) => Vec::new(),
            Clause::MapStore { key, value, .. } => vec![key, value],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxSegment {
    pub func: FuncRef,
    /// Starts at the function entry (not cut off by the walk's end).
    pub complete: bool,
    pub first_clause: usize,
    pub first_step: usize,
}

/// Concrete values from a satisfying assignment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Model {
    pub values: BTreeMap<Sym, Value>,
    /// Cells queried for each map generation.
    pub tables: BTreeMap<MapRef, BTreeMap<U256, U256>>,
}

impl Model {
    pub fn get(&self, sym: Sym) -> Option<Value> {
        self.values.get(&sym).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("line {line}: local `{name}` is read before it is assigned")]
    UndefinedLocal { name: String, line: u32 },
    #[error("unsupported in constraints: {0}")]
    Unsupported(String),
}

impl fmt::Display for MapRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "map{}#{}", self.var.0, self.gen)
    }
}

#[cfg(test)]
mod tests;
