use std::collections::HashSet;

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::FrontendError;
use crate::types::{KeyType, Type, U256};

const UNSUPPORTED_STATEMENTS: &[&str] = &[
    "for",
    "do",
    "emit",
    "delete",
    "selfdestruct",
    "revert",
    "break",
    "continue",
    "unchecked",
    "try",
    "new",
    "assembly",
    "throw",
];

const UNSUPPORTED_MEMBERS: &[&str] =
    &["event", "modifier", "struct", "enum", "using", "error", "fallback", "receive", "library"];

pub fn parse_contract(source: &str) -> Result<ContractAst, FrontendError> {
    let tokens = tokenize(source)?;
    let source_lines = source.lines().count().max(1) as u32;
    let mut p = Parser { toks: tokens, pos: 0 };
    let ast = p.contract(source_lines)?;
    check_duplicates(&ast)?;
    Ok(ast)
}

/// Parses a standalone expression (a safety condition or a mutant
/// fragment). Every node is tagged with `line`.
pub fn parse_expression(text: &str, line: u32) -> Result<Expr, FrontendError> {
    let mut toks = tokenize(text).map_err(|e| e.at_line(line))?;
    for t in &mut toks {
        t.line = line;
    }
    let mut p = Parser { toks, pos: 0 };
    let e = p.expr()?;
    if p.peek() != &Tok::Eof {
        return Err(p.syntax("unexpected trailing input after expression"));
    }
    Ok(e)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        let i = (self.pos + n).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn line(&self) -> u32 {
        self.toks[self.pos].line
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax(&self, msg: impl Into<String>) -> FrontendError {
        let t = &self.toks[self.pos];
        FrontendError::Syntax { line: t.line, col: t.col, msg: msg.into() }
    }

    fn unsupported(&self, construct: impl Into<String>) -> FrontendError {
        FrontendError::Unsupported { line: self.line(), construct: construct.into() }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), FrontendError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.syntax(format!("expected `{p}`, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<String, FrontendError> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_reserved(&s) => {
                self.next();
                Ok(s)
            }
            other => Err(self.syntax(format!("expected identifier, found {}", describe(&other)))),
        }
    }

    fn contract(&mut self, source_lines: u32) -> Result<ContractAst, FrontendError> {
        for kw in ["pragma", "import", "interface", "library", "abstract"] {
            if self.is_word(kw) {
                return Err(self.unsupported(kw));
            }
        }
        if !self.eat_word("contract") {
            return Err(self.syntax(format!("expected `contract`, found {}", describe(self.peek()))));
        }
        let name = self.ident()?;
        if self.is_word("is") {
            return Err(self.unsupported("inheritance"));
        }
        self.expect_punct("{")?;

        let mut state_vars = Vec::new();
        let mut functions = Vec::new();
        let mut constructor: Option<FunctionDecl> = None;
        while !self.is_punct("}") {
            if self.peek() == &Tok::Eof {
                return Err(self.syntax("unexpected end of input, expected `}`"));
            }
            if self.is_word("function") {
                functions.push(self.function()?);
            } else if self.is_word("constructor") {
                let line = self.line();
                let ctor = self.constructor()?;
                if constructor.is_some() {
                    return Err(FrontendError::Duplicate { line, what: "constructor", name: name.clone() });
                }
                constructor = Some(ctor);
            } else if let Some(kw) = UNSUPPORTED_MEMBERS.iter().find(|k| self.is_word(k)) {
                return Err(self.unsupported(*kw));
            } else {
                state_vars.push(self.state_var()?);
            }
        }
        self.next();
        if self.peek() != &Tok::Eof {
            return Err(self.syntax("only one contract per file is supported"));
        }
        let constructor = constructor.unwrap_or_else(|| FunctionDecl {
            name: CONSTRUCTOR_NAME.into(),
            params: Vec::new(),
            returns: None,
            visibility: Visibility::Public,
            payable: false,
            synthetic: true,
            body: Vec::new(),
            line: 0,
        });
        Ok(ContractAst { name, state_vars, constructor, functions, source_lines })
    }

    fn starts_type(&self) -> bool {
        match self.peek() {
            Tok::Ident(s) => {
                let sized =
                    |prefix: &str| s.strip_prefix(prefix).is_some_and(|rest| rest.chars().all(|c| c.is_ascii_digit()));
                matches!(s.as_str(), "bool" | "address" | "mapping" | "string")
                    || sized("uint")
                    || sized("int")
                    || sized("bytes")
            }
            _ => false,
        }
    }

    fn ty(&mut self) -> Result<Type, FrontendError> {
        let word = match self.peek().clone() {
            Tok::Ident(w) => w,
            other => return Err(self.syntax(format!("expected type, found {}", describe(&other)))),
        };
        let base = match word.as_str() {
            "bool" => Type::Bool,
            "address" => Type::Address,
            "uint" | "uint256" => Type::UINT256,
            "uint8" => Type::UINT8,
            "uint16" => Type::UINT16,
            "mapping" => {
                self.next();
                self.expect_punct("(")?;
                let key = match self.ty()? {
                    Type::UINT256 => KeyType::Uint256,
                    Type::Address => KeyType::Address,
                    other => return Err(self.unsupported(format!("mapping key type {other}"))),
                };
                self.expect_punct("=>")?;
                match self.ty()? {
                    Type::UINT256 => {}
                    other => return Err(self.unsupported(format!("mapping value type {other}"))),
                }
                self.expect_punct(")")?;
                return Ok(Type::Mapping(key));
            }
            other => return Err(self.unsupported(format!("type {other}"))),
        };
        self.next();
        if self.is_punct("[") {
            self.next();
            let len = match self.next().tok {
                Tok::Number(n) if n > U256::ZERO && n <= U256::from(u32::MAX) => n.to::<u64>(),
                Tok::Punct("]") => return Err(self.unsupported("dynamic array")),
                _ => return Err(self.syntax("expected positive array length")),
            };
            self.expect_punct("]")?;
            if base != Type::UINT256 {
                return Err(self.unsupported(format!("array of {base}")));
            }
            return Ok(Type::Array(len));
        }
        Ok(base)
    }

    fn state_var(&mut self) -> Result<StateVarDecl, FrontendError> {
        let line = self.line();
        if !self.starts_type() {
            return Err(self.syntax(format!("expected declaration, found {}", describe(self.peek()))));
        }
        let ty = self.ty()?;
        let mut public = false;
        loop {
            if self.eat_word("public") {
                public = true;
            } else if self.eat_word("private") || self.eat_word("internal") {
            } else if self.is_word("constant") || self.is_word("immutable") {
                return Err(self.unsupported(self.word_text()));
            } else {
                break;
            }
        }
        let name = self.ident()?;
        let init = if self.eat_punct("=") { Some(self.expr()?) } else { None };
        self.expect_punct(";")?;
        if init.is_some() && ty.is_storage_table() {
            return Err(FrontendError::Unsupported { line, construct: format!("initializer for {ty}") });
        }
        Ok(StateVarDecl { name, ty, public, init, line })
    }

    fn word_text(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => s.clone(),
            other => describe(other),
        }
    }

    fn params(&mut self) -> Result<Vec<Param>, FrontendError> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                let ty = self.ty()?;
                if !ty.is_scalar() {
                    return Err(self.unsupported(format!("parameter of type {ty}")));
                }
                if self.is_word("memory") || self.is_word("storage") || self.is_word("calldata") {
                    return Err(self.unsupported("data location"));
                }
                let name = self.ident()?;
                params.push(Param { name, ty });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(params)
    }

    /// Visibility, mutability and `returns` clauses following a parameter list.
    fn header_tail(&mut self, allow_returns: bool) -> Result<(Visibility, bool, Option<Type>), FrontendError> {
        let mut visibility = Visibility::Public;
        let mut payable = false;
        let mut returns = None;
        loop {
            if self.eat_word("public") || self.eat_word("external") {
                visibility = Visibility::Public;
            } else if self.eat_word("internal") || self.eat_word("private") {
                visibility = Visibility::Internal;
            } else if self.eat_word("payable") {
                payable = true;
            } else if self.eat_word("view") || self.eat_word("pure") {
            } else if allow_returns && self.is_word("returns") {
                self.next();
                self.expect_punct("(")?;
                let ty = self.ty()?;
                if !ty.is_scalar() {
                    return Err(self.unsupported(format!("return type {ty}")));
                }
                if let Tok::Ident(_) = self.peek() {
                    return Err(self.unsupported("named return value"));
                }
                if self.is_punct(",") {
                    return Err(self.unsupported("multiple return values"));
                }
                self.expect_punct(")")?;
                returns = Some(ty);
            } else if let Tok::Ident(w) = self.peek() {
                return Err(self.unsupported(format!("modifier `{w}`")));
            } else {
                break;
            }
        }
        Ok((visibility, payable, returns))
    }

    fn function(&mut self) -> Result<FunctionDecl, FrontendError> {
        let line = self.line();
        self.next();
        let name = self.ident()?;
        let params = self.params()?;
        let (visibility, payable, returns) = self.header_tail(true)?;
        let body = self.block()?;
        Ok(FunctionDecl { name, params, returns, visibility, payable, synthetic: false, body, line })
    }

    fn constructor(&mut self) -> Result<FunctionDecl, FrontendError> {
        let line = self.line();
        self.next();
        let params = self.params()?;
        let (_, payable, _) = self.header_tail(false)?;
        let body = self.block()?;
        Ok(FunctionDecl {
            name: CONSTRUCTOR_NAME.into(),
            params,
            returns: None,
            visibility: Visibility::Public,
            payable,
            synthetic: false,
            body,
            line,
        })
    }

    fn block(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if self.peek() == &Tok::Eof {
                return Err(self.syntax("unexpected end of input, expected `}`"));
            }
            stmts.push(self.stmt()?);
        }
        self.next();
        Ok(stmts)
    }

    /// Body of `if`/`while`: a block or a single statement.
    fn branch(&mut self) -> Result<Vec<Stmt>, FrontendError> {
        if self.is_punct("{") {
            self.block()
        } else {
            Ok(vec![self.stmt()?])
        }
    }

    fn paren_expr(&mut self) -> Result<Expr, FrontendError> {
        self.expect_punct("(")?;
        let e = self.expr()?;
        self.expect_punct(")")?;
        Ok(e)
    }

    fn stmt(&mut self) -> Result<Stmt, FrontendError> {
        let line = self.line();
        if self.is_punct("{") {
            return Ok(Stmt { kind: StmtKind::Block(self.block()?), line });
        }
        if let Some(kw) = UNSUPPORTED_STATEMENTS.iter().find(|k| self.is_word(k)) {
            return Err(self.unsupported(*kw));
        }
        if self.eat_word("if") {
            let cond = self.paren_expr()?;
            let then_branch = self.branch()?;
            let else_branch = if self.eat_word("else") { Some(self.branch()?) } else { None };
            return Ok(Stmt { kind: StmtKind::If { cond, then_branch, else_branch }, line });
        }
        if self.eat_word("while") {
            let cond = self.paren_expr()?;
            let body = self.branch()?;
            return Ok(Stmt { kind: StmtKind::While { cond, body }, line });
        }
        if self.eat_word("return") {
            let value = if self.is_punct(";") { None } else { Some(self.expr()?) };
            self.expect_punct(";")?;
            return Ok(Stmt { kind: StmtKind::Return(value), line });
        }
        if self.is_word("require") || self.is_word("assert") {
            let is_require = self.is_word("require");
            self.next();
            self.expect_punct("(")?;
            let cond = self.expr()?;
            if self.is_punct(",") {
                return Err(self.unsupported("require message"));
            }
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            let kind = if is_require { StmtKind::Require(cond) } else { StmtKind::Assert(cond) };
            return Ok(Stmt { kind, line });
        }
        let is_decl = self.starts_type()
            && !matches!(self.peek_at(1), Tok::Punct("(") | Tok::Punct("."))
            && !(self.is_word("address") && self.peek_at(1) == &Tok::Punct("("));
        if is_decl {
            let ty = self.ty()?;
            if !ty.is_scalar() {
                return Err(FrontendError::Unsupported { line, construct: format!("local variable of type {ty}") });
            }
            if self.is_word("memory") || self.is_word("storage") {
                return Err(self.unsupported("data location"));
            }
            let name = self.ident()?;
            let init = if self.eat_punct("=") { Some(self.expr()?) } else { None };
            self.expect_punct(";")?;
            return Ok(Stmt { kind: StmtKind::VarDecl { name, ty, init }, line });
        }

        let lhs = self.expr()?;
        let op = match self.peek() {
            Tok::Punct("=") => Some(AssignOp::Set),
            Tok::Punct("+=") => Some(AssignOp::Add),
            Tok::Punct("-=") => Some(AssignOp::Sub),
            Tok::Punct(p @ ("*=" | "/=" | "%=" | "++" | "--")) => return Err(self.unsupported(format!("operator {p}"))),
            _ => None,
        };
        let kind = match op {
            Some(op) => {
                self.next();
                let target = to_lvalue(lhs, line)?;
                let value = self.expr()?;
                StmtKind::Assign { target, op, value }
            }
            None => match lhs.kind {
                ExprKind::Call { name, args } => StmtKind::Call { name, args },
                _ => return Err(FrontendError::Unsupported { line, construct: "expression statement".into() }),
            },
        };
        self.expect_punct(";")?;
        Ok(Stmt { kind, line })
    }

    fn expr(&mut self) -> Result<Expr, FrontendError> {
        self.binary(0)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, FrontendError> {
        let mut lhs = self.unary()?;
        while let Tok::Punct(p) = self.peek() {
            let Some((op, prec)) = binop(p) else {
                if matches!(*p, "**" | "<<" | ">>" | "&" | "|" | "^" | "?") {
                    return Err(self.unsupported(format!("operator {p}")));
                }
                break;
            };
            if prec < min_prec {
                break;
            }
            self.next();
            let rhs = self.binary(prec + 1)?;
            let line = lhs.line;
            lhs = Expr::new(ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, line);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FrontendError> {
        let line = self.line();
        if self.eat_punct("!") {
            let arg = self.unary()?;
            return Ok(Expr::new(ExprKind::Unary { op: UnOp::Not, arg: Box::new(arg) }, line));
        }
        if self.is_punct("-") {
            return Err(self.unsupported("unary minus"));
        }
        if self.is_punct("~") {
            return Err(self.unsupported("operator ~"));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.primary()?;
        loop {
            if self.is_punct("[") {
                self.next();
                let index = self.expr()?;
                self.expect_punct("]")?;
                let line = e.line;
                e = Expr::new(ExprKind::Index { base: Box::new(e), index: Box::new(index) }, line);
            } else if self.is_punct(".") {
                return Err(self.unsupported("member access"));
            } else {
                return Ok(e);
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, FrontendError> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if !self.is_punct(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    fn member(&mut self, object: &str) -> Result<String, FrontendError> {
        self.expect_punct(".")?;
        match self.next().tok {
            Tok::Ident(m) => Ok(m),
            _ => Err(self.syntax(format!("expected member name after `{object}.`"))),
        }
    }

    fn primary(&mut self) -> Result<Expr, FrontendError> {
        let line = self.line();
        let tok = self.peek().clone();
        match tok {
            Tok::Number(n) => {
                self.next();
                if let Tok::Ident(unit) = self.peek() {
                    return Err(self.unsupported(format!("unit suffix `{unit}`")));
                }
                Ok(Expr::new(ExprKind::Number(n), line))
            }
            Tok::Str => Err(self.unsupported("string literal")),
            Tok::Punct("(") => {
                self.next();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(word) => match word.as_str() {
                "true" | "false" => {
                    self.next();
                    Ok(Expr::new(ExprKind::Bool(word == "true"), line))
                }
                "msg" | "block" | "tx" => {
                    self.next();
                    let m = self.member(&word)?;
                    let env = match (word.as_str(), m.as_str()) {
                        ("msg", "sender") => EnvVar::MsgSender,
                        ("msg", "value") => EnvVar::MsgValue,
                        ("tx", "origin") => EnvVar::TxOrigin,
                        ("block", "timestamp") => EnvVar::BlockTimestamp,
                        _ => return Err(FrontendError::Unsupported { line, construct: format!("{word}.{m}") }),
                    };
                    Ok(Expr::new(ExprKind::Env(env), line))
                }
                "address" => {
                    self.next();
                    self.expect_punct("(")?;
                    let value = match self.peek().clone() {
                        Tok::Number(n) => {
                            self.next();
                            n
                        }
                        _ => return Err(self.unsupported("address conversion of non-literal")),
                    };
                    self.expect_punct(")")?;
                    if value >= (U256::from(1u8) << 160) {
                        return Err(FrontendError::Syntax {
                            line,
                            col: self.toks[self.pos].col,
                            msg: "address literal exceeds 160 bits".into(),
                        });
                    }
                    Ok(Expr::new(ExprKind::Address(value), line))
                }
                "uint" | "uint8" | "uint16" | "uint256" => {
                    let ty = self.ty()?;
                    self.expect_punct("(")?;
                    let arg = self.expr()?;
                    self.expect_punct(")")?;
                    Ok(Expr::new(ExprKind::Cast { ty, arg: Box::new(arg) }, line))
                }
                "this" | "now" | "new" | "type" | "keccak256" | "sha256" | "abi" | "super" => {
                    Err(self.unsupported(word.as_str()))
                }
                _ if is_reserved(&word) => Err(self.syntax(format!("unexpected keyword `{word}`"))),
                _ => {
                    self.next();
                    if self.is_punct("(") {
                        let args = self.args()?;
                        Ok(Expr::new(ExprKind::Call { name: word, args }, line))
                    } else {
                        Ok(Expr::new(ExprKind::Ident(word), line))
                    }
                }
            },
            other => Err(self.syntax(format!("expected expression, found {}", describe(&other)))),
        }
    }
}

fn binop(p: &str) -> Option<(BinOp, u8)> {
    Some(match p {
        "||" => (BinOp::Or, 1),
        "&&" => (BinOp::And, 2),
        "==" => (BinOp::Eq, 3),
        "!=" => (BinOp::Ne, 3),
        "<" => (BinOp::Lt, 4),
        "<=" => (BinOp::Le, 4),
        ">" => (BinOp::Gt, 4),
        ">=" => (BinOp::Ge, 4),
        "+" => (BinOp::Add, 5),
        "-" => (BinOp::Sub, 5),
        "*" => (BinOp::Mul, 6),
        "/" => (BinOp::Div, 6),
        "%" => (BinOp::Mod, 6),
        _ => return None,
    })
}

fn is_reserved(w: &str) -> bool {
    matches!(
        w,
        "contract"
            | "function"
            | "constructor"
            | "returns"
            | "return"
            | "if"
            | "else"
            | "while"
            | "require"
            | "assert"
            | "public"
            | "private"
            | "internal"
            | "external"
            | "payable"
            | "view"
            | "pure"
            | "true"
            | "false"
            | "msg"
            | "block"
            | "tx"
            | "mapping"
            | "bool"
            | "address"
            | "uint"
            | "uint8"
            | "uint16"
            | "uint256"
    ) || UNSUPPORTED_STATEMENTS.contains(&w)
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number(n) => format!("number {n}"),
        Tok::Str => "string literal".into(),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of input".into(),
    }
}

fn to_lvalue(e: Expr, line: u32) -> Result<LValue, FrontendError> {
    match e.kind {
        ExprKind::Ident(name) => Ok(LValue::Var(name)),
        ExprKind::Index { base, index } => match base.kind {
            ExprKind::Ident(name) => Ok(LValue::Index { base: name, index: *index }),
            _ => Err(FrontendError::Unsupported { line, construct: "nested index assignment".into() }),
        },
        _ => Err(FrontendError::Syntax { line, col: 1, msg: "invalid assignment target".into() }),
    }
}

fn check_duplicates(ast: &ContractAst) -> Result<(), FrontendError> {
    let mut names = HashSet::new();
    for v in &ast.state_vars {
        if !names.insert(v.name.as_str()) {
            return Err(FrontendError::Duplicate { line: v.line, what: "state variable", name: v.name.clone() });
        }
    }
    for f in &ast.functions {
        if !names.insert(f.name.as_str()) {
            return Err(FrontendError::Duplicate { line: f.line, what: "function", name: f.name.clone() });
        }
    }
    for f in ast.all_functions() {
        let mut params = HashSet::new();
        for p in &f.params {
            if !params.insert(p.name.as_str()) {
                return Err(FrontendError::Duplicate { line: f.line, what: "parameter", name: p.name.clone() });
            }
        }
        let mut scopes = vec![params];
        check_block_locals(&f.body, &mut scopes)?;
    }
    Ok(())
}

fn check_block_locals<'a>(stmts: &'a [Stmt], scopes: &mut Vec<HashSet<&'a str>>) -> Result<(), FrontendError> {
    scopes.push(HashSet::new());
    for s in stmts {
        match &s.kind {
            StmtKind::VarDecl { name, .. } => {
                if !scopes.last_mut().unwrap().insert(name) {
                    return Err(FrontendError::Duplicate { line: s.line, what: "local variable", name: name.clone() });
                }
            }
            StmtKind::If { then_branch, else_branch, .. } => {
                check_block_locals(then_branch, scopes)?;
                if let Some(e) = else_branch {
                    check_block_locals(e, scopes)?;
                }
            }
            StmtKind::While { body, .. } | StmtKind::Block(body) => check_block_locals(body, scopes)?,
            _ => {}
        }
    }
    scopes.pop();
    Ok(())
}
