use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::parser::{parse_contract, parse_expression};
use super::FrontendError;

/// A target line plus the optional condition that must hold on arrival.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSpec {
    pub line: u32,
    pub safety: Option<SafetyExpr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyExpr {
    /// Source text as written after the marker (trimmed).
    pub text: String,
    pub expr: Expr,
}

/// Serialized form used in output artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub line: u32,
    pub safety: Option<String>,
}

impl TargetSpec {
    pub fn info(&self) -> TargetInfo {
        TargetInfo { line: self.line, safety: self.safety.as_ref().map(|s| s.text.clone()) }
    }
}

const MARKER: &str = "@target";

/// Returns the text after `// @target` on this line, if the line carries
/// the marker. `Some("")` means a marker with no condition.
fn marker_payload(line: &str) -> Option<&str> {
    let mut rest = line;
    while let Some(idx) = rest.find("//") {
        let after = rest[idx + 2..].trim_start();
        if let Some(tail) = after.strip_prefix(MARKER) {
            if tail.is_empty() || tail.starts_with(char::is_whitespace) {
                return Some(tail.trim());
            }
        }
        rest = &rest[idx + 2..];
    }
    None
}

pub fn extract_targets(source: &str) -> Result<Vec<TargetSpec>, FrontendError> {
    let marked: Vec<(u32, &str)> =
        source.lines().enumerate().filter_map(|(i, l)| marker_payload(l).map(|p| (i as u32 + 1, p))).collect();
    if marked.is_empty() {
        return Ok(Vec::new());
    }
    let ast = parse_contract(source)?;
    marked
        .into_iter()
        .map(|(line, payload)| target_for_line(&ast, line, (!payload.is_empty()).then_some(payload)))
        .collect()
}

/// Builds a validated target for `line`, parsing `safety` in that line's
/// scope.
pub fn target_for_line(ast: &ContractAst, line: u32, safety: Option<&str>) -> Result<TargetSpec, FrontendError> {
    let scope = names_in_scope(ast, line)
        .ok_or_else(|| FrontendError::Target { line, msg: "line does not start a statement".into() })?;
    let safety = match safety {
        None => None,
        Some(text) => {
            let expr = parse_expression(text, line)?;
            check_names(&expr, &scope, line)?;
            Some(SafetyExpr { text: text.to_string(), expr })
        }
    };
    Ok(TargetSpec { line, safety })
}

/// Fails if `expr` references a name not visible in `scope`, or calls a
/// function.
pub fn check_names(expr: &Expr, scope: &HashSet<String>, line: u32) -> Result<(), FrontendError> {
    let mut bad = None;
    let mut calls = false;
    expr.for_each_ident(&mut |n| {
        if bad.is_none() && !scope.contains(n) {
            bad = Some(n.to_string());
        }
    });
    check_no_calls(expr, &mut calls);
    if calls {
        return Err(FrontendError::Target { line, msg: "function calls are not allowed in conditions".into() });
    }
    match bad {
        Some(name) => Err(FrontendError::UnknownIdent { line, name }),
        None => Ok(()),
    }
}

fn check_no_calls(e: &Expr, found: &mut bool) {
    match &e.kind {
        ExprKind::Call { .. } => *found = true,
        ExprKind::Cast { arg, .. } | ExprKind::Unary { arg, .. } => check_no_calls(arg, found),
        ExprKind::Index { base, index } => {
            check_no_calls(base, found);
            check_no_calls(index, found);
        }
        ExprKind::Binary { lhs, rhs, .. } => {
            check_no_calls(lhs, found);
            check_no_calls(rhs, found);
        }
        _ => {}
    }
}

/// Lines holding a statement or an initialised state variable.
pub fn statement_lines(ast: &ContractAst) -> BTreeSet<u32> {
    let mut lines: BTreeSet<u32> = ast.state_vars.iter().filter(|v| v.init.is_some()).map(|v| v.line).collect();
    for f in ast.all_functions() {
        walk_stmts(&f.body, &mut |s| {
            if !matches!(s.kind, StmtKind::Block(_)) {
                lines.insert(s.line);
            }
        });
    }
    lines
}

/// Names visible just before the first statement on `line` executes:
/// state variables, the enclosing function's parameters and the locals
/// declared earlier in enclosing blocks. `None` when no statement starts
/// on the line.
pub fn names_in_scope(ast: &ContractAst, line: u32) -> Option<HashSet<String>> {
    let state: HashSet<String> = ast.state_vars.iter().map(|v| v.name.clone()).collect();
    if ast.state_vars.iter().any(|v| v.line == line && v.init.is_some()) {
        return Some(state);
    }
    for f in ast.all_functions() {
        let mut stack: Vec<String> = f.params.iter().map(|p| p.name.clone()).collect();
        if let Some(found) = scope_in_block(&f.body, line, &mut stack) {
            let mut names = state.clone();
            names.extend(found);
            return Some(names);
        }
    }
    None
}

fn scope_in_block(stmts: &[Stmt], line: u32, stack: &mut Vec<String>) -> Option<Vec<String>> {
    let mark = stack.len();
    let mut result = None;
    for s in stmts {
        if s.line == line && !matches!(s.kind, StmtKind::Block(_)) {
            result = Some(stack.clone());
            break;
        }
        let nested = match &s.kind {
            StmtKind::If { then_branch, else_branch, .. } => scope_in_block(then_branch, line, stack)
                .or_else(|| else_branch.as_ref().and_then(|e| scope_in_block(e, line, stack))),
            StmtKind::While { body, .. } | StmtKind::Block(body) => scope_in_block(body, line, stack),
            _ => None,
        };
        if nested.is_some() {
            result = nested;
            break;
        }
        if let StmtKind::VarDecl { name, .. } = &s.kind {
            stack.push(name.clone());
        }
    }
    stack.truncate(mark);
    result
}

#[cfg(test)]
mod tests {
    use super::*;

    const MAPPING: &str = "contract mappingSample {
    mapping(uint => uint) public dataStorage;

    function check() public returns (bool) {
        if (dataStorage[10] == 1)
            return true;  // @target
        return false;
    }

    function guess(uint index, uint value) public {
        dataStorage[index] = value;
    }
}
";

    const MULTI_TX: &str = "contract multi_tx {
    uint public counter = 0;
    uint public maximum_bid = 0;
    uint private threshold = 5;

    function bid(uint value) public {
        counter += 1;
        if (value > maximum_bid)
            maximum_bid = value;
    }

    function check() public returns (uint) {
        if (counter == threshold)
            return maximum_bid;  // @target maximum_bid > 100
        return 0;
    }
}
";

    #[test]
    fn bare_marker_has_no_safety() {
        let t = extract_targets(MAPPING).unwrap();
        assert_eq!(t, vec![TargetSpec { line: 6, safety: None }]);
    }

    #[test]
    fn marker_with_condition() {
        let t = extract_targets(MULTI_TX).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].line, 14);
        let s = t[0].safety.as_ref().unwrap();
        assert_eq!(s.text, "maximum_bid > 100");
        assert!(matches!(s.expr.kind, ExprKind::Binary { op: BinOp::Gt, .. }));
    }

    #[test]
    fn no_marker_no_targets() {
        assert!(extract_targets("contract C { uint x; }").unwrap().is_empty());
    }

    #[test]
    fn marker_syntax_is_exact() {
        assert_eq!(marker_payload("x = 1; //@target"), Some(""));
        assert_eq!(marker_payload("x = 1; //   @target  a > 1 "), Some("a > 1"));
        assert_eq!(marker_payload("x = 1; // @targets"), None);
        assert_eq!(marker_payload("x = 1; // target"), None);
    }

    #[test]
    fn unknown_identifier_in_safety() {
        let src = "contract C { uint x; function f(uint a) public {\n x = a; // @target y > 1\n } }";
        assert!(matches!(extract_targets(src), Err(FrontendError::UnknownIdent { line: 2, .. })));
    }

    #[test]
    fn unparseable_safety_reports_line() {
        let src = "contract C { uint x; function f(uint a) public {\n x = a; // @target a >\n } }";
        match extract_targets(src) {
            Err(e) => assert_eq!(e.line(), Some(2)),
            Ok(t) => panic!("{t:?}"),
        }
    }

    #[test]
    fn target_must_be_a_statement() {
        let src = "contract C {\n function f() public {\n } // @target\n}";
        assert!(matches!(extract_targets(src), Err(FrontendError::Target { line: 3, .. })));
    }

    #[test]
    fn scope_includes_earlier_locals_only() {
        let src = "contract C {
    uint s;
    function f(uint a) public {
        uint b = a;
        if (b > 1) {
            uint c = 2;
            s = c;
        }
        uint d = 3;
    }
}";
        let ast = parse_contract(src).unwrap();
        let at7 = names_in_scope(&ast, 7).unwrap();
        for n in ["s", "a", "b", "c"] {
            assert!(at7.contains(n), "{n}");
        }
        assert!(!at7.contains("d"));
        let at9 = names_in_scope(&ast, 9).unwrap();
        assert!(at9.contains("b") && !at9.contains("c") && !at9.contains("d"));
        assert!(names_in_scope(&ast, 10).is_none());
    }
}
