use crate::types::{Type, U256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractAst {
    pub name: String,
    pub state_vars: Vec<StateVarDecl>,
    /// Always present; `synthetic` is set when the source declares none.
    pub constructor: FunctionDecl,
    pub functions: Vec<FunctionDecl>,
    pub source_lines: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Visibility {
    Public,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateVarDecl {
    pub name: String,
    pub ty: Type,
    pub public: bool,
    pub init: Option<Expr>,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub returns: Option<Type>,
    pub visibility: Visibility,
    pub payable: bool,
    pub synthetic: bool,
    pub body: Vec<Stmt>,
    pub line: u32,
}

impl FunctionDecl {
    pub fn is_constructor(&self) -> bool {
        self.name == CONSTRUCTOR_NAME
    }
}

/// Name under which the constructor appears in IR and transactions.
pub const CONSTRUCTOR_NAME: &str = "<constructor>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LValue {
    Var(String),
    Index { base: String, index: Expr },
}

impl LValue {
    pub fn base_name(&self) -> &str {
        match self {
            LValue::Var(n) | LValue::Index { base: n, .. } => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    VarDecl {
        name: String,
        ty: Type,
        init: Option<Expr>,
    },
    Assign {
        target: LValue,
        op: AssignOp,
        value: Expr,
    },
    If {
        cond: Expr,
        then_branch: Vec<Stmt>,
        else_branch: Option<Vec<Stmt>>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Require(Expr),
    Assert(Expr),
    /// A call to an internal function whose result is discarded.
    Call {
        name: String,
        args: Vec<Expr>,
    },
    Block(Vec<Stmt>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EnvVar {
    MsgSender,
    MsgValue,
    TxOrigin,
    BlockTimestamp,
}

impl EnvVar {
    pub const ALL: [EnvVar; 4] = [EnvVar::MsgSender, EnvVar::MsgValue, EnvVar::TxOrigin, EnvVar::BlockTimestamp];

    pub fn ty(self) -> Type {
        match self {
            EnvVar::MsgSender | EnvVar::TxOrigin => Type::Address,
            EnvVar::MsgValue | EnvVar::BlockTimestamp => Type::UINT256,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnvVar::MsgSender => "msg.sender",
            EnvVar::MsgValue => "msg.value",
            EnvVar::TxOrigin => "tx.origin",
            EnvVar::BlockTimestamp => "block.timestamp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod)
    }

    pub fn is_ordering(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    pub fn is_equality(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Not,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Number(U256),
    Bool(bool),
    Ident(String),
    Env(EnvVar),
    /// `address(n)` with a literal argument.
    Address(U256),
    /// Explicit integer conversion such as `uint8(x)`.
    Cast {
        ty: Type,
        arg: Box<Expr>,
    },
    Index {
        base: Box<Expr>,
        index: Box<Expr>,
    },
    Call {
        name: String,
        args: Vec<Expr>,
    },
    Unary {
        op: UnOp,
        arg: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    pub fn new(kind: ExprKind, line: u32) -> Expr {
        Expr { kind, line }
    }

    /// Visits every identifier read by the expression, including call
    /// names and indexed bases.
    pub fn for_each_ident(&self, f: &mut impl FnMut(&str)) {
        match &self.kind {
            ExprKind::Ident(n) => f(n),
            ExprKind::Number(_) | ExprKind::Bool(_) | ExprKind::Env(_) | ExprKind::Address(_) => {}
            ExprKind::Cast { arg, .. } | ExprKind::Unary { arg, .. } => arg.for_each_ident(f),
            ExprKind::Index { base, index } => {
                base.for_each_ident(f);
                index.for_each_ident(f);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| a.for_each_ident(f)),
            ExprKind::Binary { lhs, rhs, .. } => {
                lhs.for_each_ident(f);
                rhs.for_each_ident(f);
            }
        }
    }

    /// Structural equality ignoring line numbers.
    pub fn same_shape(&self, other: &Expr) -> bool {
        strip_expr(self) == strip_expr(other)
    }

    fn map_children(&self, f: &mut impl FnMut(&Expr) -> Expr) -> Expr {
        let kind = match &self.kind {
            ExprKind::Cast { ty, arg } => ExprKind::Cast { ty: *ty, arg: Box::new(f(arg)) },
            ExprKind::Unary { op, arg } => ExprKind::Unary { op: *op, arg: Box::new(f(arg)) },
            ExprKind::Index { base, index } => ExprKind::Index { base: Box::new(f(base)), index: Box::new(f(index)) },
            ExprKind::Call { name, args } => {
                ExprKind::Call { name: name.clone(), args: args.iter().map(&mut *f).collect() }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                ExprKind::Binary { op: *op, lhs: Box::new(f(lhs)), rhs: Box::new(f(rhs)) }
            }
            leaf => leaf.clone(),
        };
        Expr { kind, line: self.line }
    }
}

fn strip_expr(e: &Expr) -> Expr {
    let mut stripped = e.map_children(&mut strip_expr);
    stripped.line = 0;
    stripped
}

fn strip_stmts(stmts: &[Stmt]) -> Vec<Stmt> {
    stmts.iter().map(strip_stmt).collect()
}

fn strip_lvalue(lv: &LValue) -> LValue {
    match lv {
        LValue::Var(n) => LValue::Var(n.clone()),
        LValue::Index { base, index } => LValue::Index { base: base.clone(), index: strip_expr(index) },
    }
}

fn strip_stmt(s: &Stmt) -> Stmt {
    let kind = match &s.kind {
        StmtKind::VarDecl { name, ty, init } => {
            StmtKind::VarDecl { name: name.clone(), ty: *ty, init: init.as_ref().map(strip_expr) }
        }
        StmtKind::Assign { target, op, value } => {
            StmtKind::Assign { target: strip_lvalue(target), op: *op, value: strip_expr(value) }
        }
        StmtKind::If { cond, then_branch, else_branch } => StmtKind::If {
            cond: strip_expr(cond),
            then_branch: strip_stmts(then_branch),
            else_branch: else_branch.as_deref().map(strip_stmts),
        },
        StmtKind::While { cond, body } => StmtKind::While { cond: strip_expr(cond), body: strip_stmts(body) },
        StmtKind::Return(e) => StmtKind::Return(e.as_ref().map(strip_expr)),
        StmtKind::Require(e) => StmtKind::Require(strip_expr(e)),
        StmtKind::Assert(e) => StmtKind::Assert(strip_expr(e)),
        StmtKind::Call { name, args } => {
            StmtKind::Call { name: name.clone(), args: args.iter().map(strip_expr).collect() }
        }
        StmtKind::Block(b) => StmtKind::Block(strip_stmts(b)),
    };
    Stmt { kind, line: 0 }
}

fn strip_function(f: &FunctionDecl) -> FunctionDecl {
    FunctionDecl { body: strip_stmts(&f.body), line: 0, ..f.clone() }
}

impl ContractAst {
    /// Copy of the AST with every line number zeroed, for structural
    /// comparisons across re-formatting.
    pub fn without_lines(&self) -> ContractAst {
        ContractAst {
            name: self.name.clone(),
            state_vars: self
                .state_vars
                .iter()
                .map(|v| StateVarDecl { init: v.init.as_ref().map(strip_expr), line: 0, ..v.clone() })
                .collect(),
            constructor: strip_function(&self.constructor),
            functions: self.functions.iter().map(strip_function).collect(),
            source_lines: 0,
        }
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDecl> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn state_var(&self, name: &str) -> Option<&StateVarDecl> {
        self.state_vars.iter().find(|v| v.name == name)
    }

    /// Constructor followed by the declared functions.
    pub fn all_functions(&self) -> impl Iterator<Item = &FunctionDecl> {
        std::iter::once(&self.constructor).chain(self.functions.iter())
    }
}

/// Calls `f` on every statement in `stmts`, recursing into nested blocks.
pub fn walk_stmts<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match &s.kind {
            StmtKind::If { then_branch, else_branch, .. } => {
                walk_stmts(then_branch, f);
                if let Some(e) = else_branch {
                    walk_stmts(e, f);
                }
            }
            StmtKind::While { body, .. } | StmtKind::Block(body) => walk_stmts(body, f),
            _ => {}
        }
    }
}

/// Rewrites every expression in `stmts` bottom-up through `f`. Used by
/// mutant construction to substitute fragments.
pub fn rewrite_exprs(stmts: &mut [Stmt], f: &mut impl FnMut(&Expr, u32) -> Option<Expr>) {
    fn rw(e: &Expr, line: u32, f: &mut impl FnMut(&Expr, u32) -> Option<Expr>) -> Expr {
        if let Some(replacement) = f(e, line) {
            return replacement;
        }
        e.map_children(&mut |c| rw(c, line, f))
    }
    for s in stmts.iter_mut() {
        let line = s.line;
        match &mut s.kind {
            StmtKind::VarDecl { init: Some(e), .. }
            | StmtKind::Return(Some(e))
            | StmtKind::Require(e)
            | StmtKind::Assert(e) => *e = rw(e, line, f),
            StmtKind::VarDecl { init: None, .. } | StmtKind::Return(None) => {}
            StmtKind::Assign { target, value, .. } => {
                if let LValue::Index { index, .. } = target {
                    *index = rw(index, line, f);
                }
                *value = rw(value, line, f);
            }
            StmtKind::If { cond, then_branch, else_branch } => {
                *cond = rw(cond, line, f);
                rewrite_exprs(then_branch, f);
                if let Some(e) = else_branch {
                    rewrite_exprs(e, f);
                }
            }
            StmtKind::While { cond, body } => {
                *cond = rw(cond, line, f);
                rewrite_exprs(body, f);
            }
            StmtKind::Call { args, .. } => {
                for a in args.iter_mut() {
                    *a = rw(a, line, f);
                }
            }
            StmtKind::Block(b) => rewrite_exprs(b, f),
        }
    }
}
