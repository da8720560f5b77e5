//! Kill queries for mutants: a target line plus an infection condition
//! under which the mutant and the original must behave differently.
//!
//! Queries are ordinary targets, so the engine solves them unchanged.
//! Whether a solved query actually kills its mutant is decided by
//! replaying the sequence on both programs and comparing.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::ast::{rewrite_exprs, walk_stmts, ContractAst, Expr, LValue, Stmt, StmtKind};
use crate::frontend::{names_in_scope, parse_expression, target_for_line, FrontendError, TargetSpec};
use crate::ir::{lower, resolve, IrError, IrProgram, NodeNames};
use crate::types::{max_value, Type, U256};

mod diff;

pub use diff::{differential_replay, Divergence};


#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutantKind {
    Condition,
    AssignmentRhs,
    WidthChange,
    SelfdestructLike,
    /// The remaining kinds need a synthesized attacker contract.
    AccessModifier,
    SenderOrigin,
    LineSwap,
    CallMechanism,
}

impl MutantKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MutantKind::Condition => "condition",
            MutantKind::AssignmentRhs => "assignment_rhs",
            MutantKind::WidthChange => "width_change",
            MutantKind::SelfdestructLike => "selfdestruct_like",
            MutantKind::AccessModifier => "access_modifier",
            MutantKind::SenderOrigin => "sender_origin",
            MutantKind::LineSwap => "line_swap",
            MutantKind::CallMechanism => "call_mechanism",
        }
    }

    pub fn is_supported(self) -> bool {
        matches!(
            self,
            MutantKind::Condition | MutantKind::AssignmentRhs | MutantKind::WidthChange | MutantKind::SelfdestructLike
        )
    }
}

impl fmt::Display for MutantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One mutant as listed in a mutants file.
///
/// For width changes `original` and `mutated` are type names and `var`
/// defaults to the variable declared on `line`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantSpec {
    pub kind: MutantKind,
    pub line: u32,
    #[serde(default)]
    pub original: String,
    #[serde(default)]
    pub mutated: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub var: Option<String>,
}

impl MutantSpec {
    pub fn new(kind: MutantKind, line: u32, original: &str, mutated: &str) -> Self {
        MutantSpec { kind, line, original: original.into(), mutated: mutated.into(), var: None }
    }
}

/// Which program a query has to be solved against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Subject {
    Original,
    /// Width changes that widen a variable: the infecting values only
    /// exist in the mutant.
    Mutant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KillQuery {
    /// The target's safety condition is the infection condition; `None`
    /// when reaching the line is enough.
    pub target: TargetSpec,
    pub subject: Subject,
    pub description: String,
}

impl KillQuery {
    pub fn infection(&self) -> Option<&str> {
        self.target.safety.as_ref().map(|s| s.text.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MutationError {
    #[error("{0} mutants require contract synthesis (unsupported)")]
    Unsupported(MutantKind),
    #[error("expected a {expected} mutant, got {got}")]
    WrongKind { expected: MutantKind, got: MutantKind },
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error("line {line}: `{fragment}` is not a boolean expression")]
    NotBoolean { line: u32, fragment: String },
    #[error("line {line}: `{original}` is {original_ty} but `{mutated}` is {mutated_ty}")]
    TypeMismatch { line: u32, original: String, mutated: String, original_ty: Type, mutated_ty: Type },
    #[error("line {line}: `{fragment}` does not occur on the line")]
    FragmentNotFound { line: u32, fragment: String },
    #[error("line {0}: no statement starts on the line")]
    NoStatement(u32),
    #[error("line {line}: no variable{} declared on the line", .name.as_ref().map(|n| format!(" `{n}`")).unwrap_or_default())]
    NoDeclaration { line: u32, name: Option<String> },
    #[error("`{0}` is not an unsigned integer type")]
    NotUnsigned(String),
    #[error("`{var}` is declared {declared}, not {expected}")]
    DeclaredType { var: String, declared: Type, expected: Type },
    #[error("both widths are {0}")]
    SameWidth(Type),
    #[error("`{0}` is never used")]
    Unused(String),
    #[error("invalid mutants file: {0}")]
    Json(String),
}

pub fn parse_mutants(text: &str) -> Result<Vec<MutantSpec>, MutationError> {
    serde_json::from_str(text).map_err(|e| MutationError::Json(e.to_string()))
}

fn expect_kind(spec: &MutantSpec, expected: MutantKind) -> Result<(), MutationError> {
    if spec.kind == expected {
        Ok(())
    } else {
        Err(MutationError::WrongKind { expected, got: spec.kind })
    }
}

/// Types `fragment` in the scope of the first instruction on `line`.
fn fragment_type(program: &IrProgram, line: u32, fragment: &Expr) -> Result<Type, MutationError> {
    let (f, instr) = *program.nodes_on_line(line).first().ok_or(MutationError::NoStatement(line))?;
    let names = NodeNames::new(program, program.func(f), instr);
    Ok(resolve(fragment, &names)?.ty())
}

struct Fragments {
    original_ty: Type,
    mutated_ty: Type,
}

/// Parses and types both fragments at the mutant's line.
fn fragments(ast: &ContractAst, spec: &MutantSpec) -> Result<Fragments, MutationError> {
    let original = parse_expression(&spec.original, spec.line)?;
    let mutated = parse_expression(&spec.mutated, spec.line)?;
    // Fails early when the fragment is not on the line.
    mutate(ast, spec)?;
    let program = lower(ast)?;
    let original_ty = fragment_type(&program, spec.line, &original)?;
    let mutated_ty = fragment_type(&program, spec.line, &mutated)?;
    Ok(Fragments { original_ty, mutated_ty })
}

fn xor_query(ast: &ContractAst, spec: &MutantSpec, label: &str) -> Result<KillQuery, MutationError> {
    let infection = format!("({}) != ({})", spec.original.trim(), spec.mutated.trim());
    let target = target_for_line(ast, spec.line, Some(&infection))?;
    Ok(KillQuery {
        target,
        subject: Subject::Original,
        description: format!(
            "{label} mutant at line {}: `{}` -> `{}`",
            spec.line,
            spec.original.trim(),
            spec.mutated.trim()
        ),
    })
}

/// Exactly one of the two conditions holds at the condition's line.
pub fn gen_condition_kill(ast: &ContractAst, spec: &MutantSpec) -> Result<KillQuery, MutationError> {
    expect_kind(spec, MutantKind::Condition)?;
    let frags = fragments(ast, spec)?;
    for (text, ty) in [(&spec.original, frags.original_ty), (&spec.mutated, frags.mutated_ty)] {
        if ty != Type::Bool {
            return Err(MutationError::NotBoolean { line: spec.line, fragment: text.trim().to_string() });
        }
    }
    xor_query(ast, spec, "condition")
}

/// The two right-hand sides evaluate differently at the assignment.
pub fn gen_assignment_kill(ast: &ContractAst, spec: &MutantSpec) -> Result<KillQuery, MutationError> {
    expect_kind(spec, MutantKind::AssignmentRhs)?;
    let frags = fragments(ast, spec)?;
    let comparable = match (frags.original_ty, frags.mutated_ty) {
        (Type::Uint(_), Type::Uint(_)) => true,
        (a, b) => a == b && a.is_scalar(),
    };
    if !comparable {
        return Err(MutationError::TypeMismatch {
            line: spec.line,
            original: spec.original.trim().into(),
            mutated: spec.mutated.trim().into(),
            original_ty: frags.original_ty,
            mutated_ty: frags.mutated_ty,
        });
    }
    xor_query(ast, spec, "assignment")
}

/// Values representable in exactly one of the two widths, as an
/// inclusive range.
pub fn symmetric_difference(old: Type, new: Type) -> Result<(U256, U256), MutationError> {
    let (Type::Uint(a), Type::Uint(b)) = (old, new) else {
        let bad = if matches!(old, Type::Uint(_)) { new } else { old };
        return Err(MutationError::NotUnsigned(bad.to_string()));
    };
    if a == b {
        return Err(MutationError::SameWidth(old));
    }
    let (narrow, wide) = (a.min(b), a.max(b));
    Ok((max_value(narrow) + U256::from(1u8), max_value(wide)))
}

/// One query per line that uses `var`, each asking for a value that
/// only the wider declaration can hold.
pub fn gen_width_kill(
    ast: &ContractAst,
    spec: &MutantSpec,
    var: &str,
    old: Type,
    new: Type,
) -> Result<Vec<KillQuery>, MutationError> {
    expect_kind(spec, MutantKind::WidthChange)?;
    let (lo, hi) = symmetric_difference(old, new)?;
    let (mutant, declared) = retype(ast, spec.line, var, new)?;
    if declared != old {
        return Err(MutationError::DeclaredType { var: var.to_string(), declared, expected: old });
    }
    let (subject, wide_ast) = match new > old {
        true => (Subject::Mutant, mutant),
        false => (Subject::Original, ast.clone()),
    };
    let lines = usage_lines(&wide_ast, spec.line, var);
    if lines.is_empty() {
        return Err(MutationError::Unused(var.to_string()));
    }
    let infection = format!("{lo} <= {var} && {var} <= {hi}");
    lines
        .into_iter()
        .map(|line| {
            Ok(KillQuery {
                target: target_for_line(&wide_ast, line, Some(&infection))?,
                subject,
                description: format!("width mutant of `{var}` ({old} -> {new}) used at line {line}"),
            })
        })
        .collect()
}

/// Reaching the line is enough.
pub fn gen_reachability_only(ast: &ContractAst, spec: &MutantSpec) -> Result<KillQuery, MutationError> {
    expect_kind(spec, MutantKind::SelfdestructLike)?;
    Ok(KillQuery {
        target: target_for_line(ast, spec.line, None)?,
        subject: Subject::Original,
        description: format!("reachability of line {}", spec.line),
    })
}

/// Dispatches on the mutant kind.
pub fn kill_queries(ast: &ContractAst, spec: &MutantSpec) -> Result<Vec<KillQuery>, MutationError> {
    match spec.kind {
        MutantKind::Condition => gen_condition_kill(ast, spec).map(|q| vec![q]),
        MutantKind::AssignmentRhs => gen_assignment_kill(ast, spec).map(|q| vec![q]),
        MutantKind::SelfdestructLike => gen_reachability_only(ast, spec).map(|q| vec![q]),
        MutantKind::WidthChange => {
            let old = parse_type(&spec.original)?;
            let new = parse_type(&spec.mutated)?;
            let var = match &spec.var {
                Some(v) => v.clone(),
                None => {
                    declared_on(ast, spec.line).ok_or(MutationError::NoDeclaration { line: spec.line, name: None })?
                }
            };
            gen_width_kill(ast, spec, &var, old, new)
        }
        other => Err(MutationError::Unsupported(other)),
    }
}

fn parse_type(name: &str) -> Result<Type, MutationError> {
    match name.trim() {
        "uint" | "uint256" => Ok(Type::UINT256),
        "uint8" => Ok(Type::UINT8),
        "uint16" => Ok(Type::UINT16),
        other => Err(MutationError::NotUnsigned(other.to_string())),
    }
}

/// The mutated contract. Line numbers are unchanged.
pub fn mutate(ast: &ContractAst, spec: &MutantSpec) -> Result<ContractAst, MutationError> {
    match spec.kind {
        MutantKind::Condition | MutantKind::AssignmentRhs => substitute(ast, spec),
        MutantKind::WidthChange => {
            let var = match &spec.var {
                Some(v) => v.clone(),
                None => {
                    declared_on(ast, spec.line).ok_or(MutationError::NoDeclaration { line: spec.line, name: None })?
                }
            };
            retype(ast, spec.line, &var, parse_type(&spec.mutated)?).map(|(m, _)| m)
        }
        MutantKind::SelfdestructLike => remove_line(ast, spec.line),
        other => Err(MutationError::Unsupported(other)),
    }
}

fn substitute(ast: &ContractAst, spec: &MutantSpec) -> Result<ContractAst, MutationError> {
    let original = parse_expression(&spec.original, spec.line)?;
    let mutated = parse_expression(&spec.mutated, spec.line)?;
    let mut out = ast.clone();
    let mut hits = 0;
    let mut replace = |e: &Expr, line: u32| {
        (line == spec.line && e.same_shape(&original)).then(|| {
            hits += 1;
            mutated.clone()
        })
    };
    rewrite_exprs(&mut out.constructor.body, &mut replace);
    for f in &mut out.functions {
        rewrite_exprs(&mut f.body, &mut replace);
    }
    if hits == 0 {
        return Err(MutationError::FragmentNotFound { line: spec.line, fragment: spec.original.trim().into() });
    }
    Ok(out)
}

/// Drops the statement on `line`; stands in for removing a selfdestruct.
fn remove_line(ast: &ContractAst, line: u32) -> Result<ContractAst, MutationError> {
    fn strip(stmts: &mut Vec<Stmt>, line: u32) -> bool {
        let before = stmts.len();
        stmts.retain(|s| s.line != line || matches!(s.kind, StmtKind::Block(_)));
        let mut removed = stmts.len() != before;
        for s in stmts.iter_mut() {
            removed |= match &mut s.kind {
                StmtKind::If { then_branch, else_branch, .. } => {
                    strip(then_branch, line) | else_branch.as_mut().is_some_and(|e| strip(e, line))
                }
                StmtKind::While { body, .. } | StmtKind::Block(body) => strip(body, line),
                _ => false,
            };
        }
        removed
    }
    let mut out = ast.clone();
    let mut removed = strip(&mut out.constructor.body, line);
    for f in &mut out.functions {
        removed |= strip(&mut f.body, line);
    }
    match removed {
        true => Ok(out),
        false => Err(MutationError::NoStatement(line)),
    }
}

/// Name of the state variable, parameter or local declared on `line`.
fn declared_on(ast: &ContractAst, line: u32) -> Option<String> {
    if let Some(v) = ast.state_vars.iter().find(|v| v.line == line) {
        return Some(v.name.clone());
    }
    for f in ast.all_functions() {
        if f.line == line {
            if let Some(p) = f.params.iter().find(|p| matches!(p.ty, Type::Uint(_))) {
                return Some(p.name.clone());
            }
        }
        let mut found = None;
        walk_stmts(&f.body, &mut |s| {
            if let StmtKind::VarDecl { name, .. } = &s.kind {
                if s.line == line && found.is_none() {
                    found = Some(name.clone());
                }
            }
        });
        if found.is_some() {
            return found;
        }
    }
    None
}

/// Changes the declared type of `var` declared on `line`; returns the
/// new contract and the type it replaced.
fn retype(ast: &ContractAst, line: u32, var: &str, ty: Type) -> Result<(ContractAst, Type), MutationError> {
    fn in_block(stmts: &mut [Stmt], line: u32, var: &str, ty: Type) -> Option<Type> {
        stmts.iter_mut().find_map(|s| match &mut s.kind {
            StmtKind::VarDecl { name, ty: t, .. } if s.line == line && name == var => Some(std::mem::replace(t, ty)),
            StmtKind::If { then_branch, else_branch, .. } => in_block(then_branch, line, var, ty)
                .or_else(|| else_branch.as_mut().and_then(|e| in_block(e, line, var, ty))),
            StmtKind::While { body, .. } | StmtKind::Block(body) => in_block(body, line, var, ty),
            _ => None,
        })
    }
    let mut out = ast.clone();
    let missing = || MutationError::NoDeclaration { line, name: Some(var.to_string()) };
    if let Some(v) = out.state_vars.iter_mut().find(|v| v.line == line && v.name == var) {
        if !matches!(v.ty, Type::Uint(_)) {
            return Err(MutationError::NotUnsigned(v.ty.to_string()));
        }
        let old = std::mem::replace(&mut v.ty, ty);
        return Ok((out, old));
    }
    for f in std::iter::once(&mut out.constructor).chain(out.functions.iter_mut()) {
        if f.line == line {
            if let Some(p) = f.params.iter_mut().find(|p| p.name == var) {
                let old = std::mem::replace(&mut p.ty, ty);
                return Ok((out, old));
            }
        }
        if let Some(old) = in_block(&mut f.body, line, var, ty) {
            return Ok((out, old));
        }
    }
    Err(missing())
}

/// Identifiers read or written by the statement itself, not by the
/// statements nested in it.
fn own_idents(s: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut add = |e: &Expr| {
        e.for_each_ident(&mut |n| {
            out.insert(n.to_string());
        })
    };
    match &s.kind {
        StmtKind::VarDecl { init, .. } => init.iter().for_each(add),
        StmtKind::Assign { target, value, .. } => {
            if let LValue::Index { index, .. } = target {
                add(index);
            }
            add(value);
            out.insert(target.base_name().to_string());
        }
        StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => add(cond),
        StmtKind::Return(e) => e.iter().for_each(add),
        StmtKind::Require(e) | StmtKind::Assert(e) => add(e),
        StmtKind::Call { args, .. } => args.iter().for_each(add),
        StmtKind::Block(_) => {}
    }
    out
}

/// Statement lines that mention `var` while the declaration on
/// `decl_line` is the binding in scope.
fn usage_lines(ast: &ContractAst, decl_line: u32, var: &str) -> BTreeSet<u32> {
    let is_state = ast.state_vars.iter().any(|v| v.line == decl_line && v.name == var);
    let mut lines = BTreeSet::new();
    for f in ast.all_functions() {
        let shadows = f.params.iter().any(|p| p.name == var) || {
            let mut local = false;
            walk_stmts(&f.body, &mut |s| {
                local |= matches!(&s.kind, StmtKind::VarDecl { name, .. } if name == var);
            });
            local
        };
        let owns = if is_state {
            !shadows
        } else {
            f.line == decl_line && f.params.iter().any(|p| p.name == var) || {
                let mut here = false;
                walk_stmts(&f.body, &mut |s| here |= s.line == decl_line);
                here
            }
        };
        if !owns {
            continue;
        }
        walk_stmts(&f.body, &mut |s| {
            if !matches!(s.kind, StmtKind::Block(_)) && own_idents(s).contains(var) {
                lines.insert(s.line);
            }
        });
    }
    lines.retain(|l| names_in_scope(ast, *l).is_some_and(|n| n.contains(var)));
    lines
}
