//! Canonical source rendering. Binary expressions are fully parenthesised,
//! so re-parsing the output reproduces the same tree.

use std::fmt::Write;

use super::ast::*;

pub fn print_contract(ast: &ContractAst) -> String {
    let mut out = String::new();
    writeln!(out, "contract {} {{", ast.name).unwrap();
    for v in &ast.state_vars {
        let vis = if v.public { " public" } else { "" };
        match &v.init {
            Some(e) => writeln!(out, "    {}{} {} = {};", v.ty, vis, v.name, print_expr(e)).unwrap(),
            None => writeln!(out, "    {}{} {};", v.ty, vis, v.name).unwrap(),
        }
    }
    if !ast.constructor.synthetic {
        print_function(&mut out, &ast.constructor);
    }
    for f in &ast.functions {
        print_function(&mut out, f);
    }
    out.push_str("}\n");
    out
}

fn print_function(out: &mut String, f: &FunctionDecl) {
    let params: Vec<String> = f.params.iter().map(|p| format!("{} {}", p.ty, p.name)).collect();
    let head = if f.is_constructor() { "constructor".to_string() } else { format!("function {}", f.name) };
    let vis = match f.visibility {
        Visibility::Public => "public",
        Visibility::Internal => "internal",
    };
    write!(out, "    {}({}) {}", head, params.join(", "), vis).unwrap();
    if f.payable {
        out.push_str(" payable");
    }
    if let Some(r) = f.returns {
        write!(out, " returns ({r})").unwrap();
    }
    out.push_str(" {\n");
    print_block(out, &f.body, 2);
    out.push_str("    }\n");
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn print_block(out: &mut String, stmts: &[Stmt], depth: usize) {
    for s in stmts {
        print_stmt(out, s, depth);
    }
}

fn print_stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match &s.kind {
        StmtKind::VarDecl { name, ty, init } => match init {
            Some(e) => writeln!(out, "{ty} {name} = {};", print_expr(e)).unwrap(),
            None => writeln!(out, "{ty} {name};").unwrap(),
        },
        StmtKind::Assign { target, op, value } => {
            let op = match op {
                AssignOp::Set => "=",
                AssignOp::Add => "+=",
                AssignOp::Sub => "-=",
            };
            writeln!(out, "{} {op} {};", print_lvalue(target), print_expr(value)).unwrap();
        }
        StmtKind::If { cond, then_branch, else_branch } => {
            writeln!(out, "if ({}) {{", print_expr(cond)).unwrap();
            print_block(out, then_branch, depth + 1);
            indent(out, depth);
            match else_branch {
                Some(e) => {
                    out.push_str("} else {\n");
                    print_block(out, e, depth + 1);
                    indent(out, depth);
                    out.push_str("}\n");
                }
                None => out.push_str("}\n"),
            }
        }
        StmtKind::While { cond, body } => {
            writeln!(out, "while ({}) {{", print_expr(cond)).unwrap();
            print_block(out, body, depth + 1);
            indent(out, depth);
            out.push_str("}\n");
        }
        StmtKind::Return(None) => out.push_str("return;\n"),
        StmtKind::Return(Some(e)) => writeln!(out, "return {};", print_expr(e)).unwrap(),
        StmtKind::Require(e) => writeln!(out, "require({});", print_expr(e)).unwrap(),
        StmtKind::Assert(e) => writeln!(out, "assert({});", print_expr(e)).unwrap(),
        StmtKind::Call { name, args } => writeln!(out, "{name}({});", print_args(args)).unwrap(),
        StmtKind::Block(b) => {
            out.push_str("{\n");
            print_block(out, b, depth + 1);
            indent(out, depth);
            out.push_str("}\n");
        }
    }
}

fn print_lvalue(lv: &LValue) -> String {
    match lv {
        LValue::Var(n) => n.clone(),
        LValue::Index { base, index } => format!("{base}[{}]", print_expr(index)),
    }
}

fn print_args(args: &[Expr]) -> String {
    args.iter().map(print_expr).collect::<Vec<_>>().join(", ")
}

pub fn print_expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Number(n) => n.to_string(),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Ident(n) => n.clone(),
        ExprKind::Env(v) => v.as_str().to_string(),
        ExprKind::Address(a) => format!("address({a})"),
        ExprKind::Cast { ty, arg } => format!("{ty}({})", print_expr(arg)),
        ExprKind::Index { base, index } => format!("{}[{}]", print_expr(base), print_expr(index)),
        ExprKind::Call { name, args } => format!("{name}({})", print_args(args)),
        ExprKind::Unary { op: UnOp::Not, arg } => format!("!{}", print_expr(arg)),
        ExprKind::Binary { op, lhs, rhs } => {
            format!("({} {} {})", print_expr(lhs), op.symbol(), print_expr(rhs))
        }
    }
}
