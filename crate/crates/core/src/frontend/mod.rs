//! MiniSol front end: lexing, parsing, target annotations.

pub mod ast;
mod lexer;
mod parser;
mod printer;
mod targets;

use thiserror::Error;

pub use ast::ContractAst;
pub use parser::{parse_contract, parse_expression};
pub use printer::{print_contract, print_expr};
pub use targets::{
    check_names, extract_targets, names_in_scope, statement_lines, target_for_line, SafetyExpr, TargetInfo, TargetSpec,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: u32, col: u32, msg: String },
    #[error("line {line}: unsupported construct: {construct}")]
    Unsupported { line: u32, construct: String },
    #[error("line {line}: duplicate {what} `{name}`")]
    Duplicate { line: u32, what: &'static str, name: String },
    #[error("line {line}: unknown identifier `{name}`")]
    UnknownIdent { line: u32, name: String },
    #[error("line {line}: invalid target: {msg}")]
    Target { line: u32, msg: String },
}

impl FrontendError {
    pub fn line(&self) -> Option<u32> {
        match self {
            FrontendError::Syntax { line, .. }
            | FrontendError::Unsupported { line, .. }
            | FrontendError::Duplicate { line, .. }
            | FrontendError::UnknownIdent { line, .. }
            | FrontendError::Target { line, .. } => Some(*line),
        }
    }

    /// Re-anchors an error raised while parsing a single-line fragment.
    pub(crate) fn at_line(self, at: u32) -> FrontendError {
        match self {
            FrontendError::Syntax { col, msg, .. } => FrontendError::Syntax { line: at, col, msg },
            FrontendError::Unsupported { construct, .. } => FrontendError::Unsupported { line: at, construct },
            other => other,
        }
    }
}
