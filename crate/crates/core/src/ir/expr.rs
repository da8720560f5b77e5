//! Typed, name-resolved expressions. Lowering, target conditions and the
//! AST interpreter all go through `resolve` so they agree on typing.

use super::{IrError, StateId, VarRef};
use crate::frontend::ast::{BinOp, EnvVar, Expr, ExprKind, UnOp};
use crate::types::{literal_type, mask, unify_uint, Type, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TExpr {
    Const(Value, Type),
    Var(VarRef, Type),
    Env(EnvVar),
    /// Storage table read; always `uint256`.
    Index {
        table: StateId,
        table_ty: Type,
        index: Box<TExpr>,
    },
    Convert(Box<TExpr>, Type),
    Not(Box<TExpr>),
    Binary {
        op: BinOp,
        lhs: Box<TExpr>,
        rhs: Box<TExpr>,
        ty: Type,
    },
    Call {
        callee: String,
        args: Vec<TExpr>,
        ret: Option<Type>,
    },
}

impl TExpr {
    pub fn ty(&self) -> Type {
        match self {
            TExpr::Const(_, t) | TExpr::Var(_, t) | TExpr::Convert(_, t) => *t,
            TExpr::Env(e) => e.ty(),
            TExpr::Index { .. } => Type::UINT256,
            TExpr::Not(_) => Type::Bool,
            TExpr::Binary { ty, .. } => *ty,
            // Only reachable for value-less calls in statement position.
            TExpr::Call { ret, .. } => ret.unwrap_or(Type::Bool),
        }
    }

    pub fn has_call(&self) -> bool {
        match self {
            TExpr::Call { .. } => true,
            TExpr::Const(..) | TExpr::Var(..) | TExpr::Env(_) => false,
            TExpr::Index { index, .. } => index.has_call(),
            TExpr::Convert(e, _) | TExpr::Not(e) => e.has_call(),
            TExpr::Binary { lhs, rhs, .. } => lhs.has_call() || rhs.has_call(),
        }
    }

    /// Every variable and storage table read.
    pub fn reads(&self, out: &mut Vec<VarRef>) {
        match self {
            TExpr::Var(v, _) => out.push(*v),
            TExpr::Const(..) | TExpr::Env(_) => {}
            TExpr::Index { table, index, .. } => {
                out.push(VarRef::State(*table));
                index.reads(out);
            }
            TExpr::Convert(e, _) | TExpr::Not(e) => e.reads(out),
            TExpr::Binary { lhs, rhs, .. } => {
                lhs.reads(out);
                rhs.reads(out);
            }
            TExpr::Call { args, .. } => args.iter().for_each(|a| a.reads(out)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub params: Vec<Type>,
    pub returns: Option<Type>,
}

/// Name lookup used during resolution.
pub trait Names {
    /// A scalar variable (local shadows state).
    fn scalar(&self, name: &str) -> Option<(VarRef, Type)>;
    fn table(&self, name: &str) -> Option<(StateId, Type)>;
    fn function(&self, name: &str) -> Option<Signature>;
}

fn type_err(line: u32, msg: impl Into<String>) -> IrError {
    IrError::Type { line, msg: msg.into() }
}

fn is_literal(e: &TExpr) -> bool {
    matches!(e, TExpr::Const(Value::Word(_), Type::Uint(_)))
}

/// Implicit conversion to `to` for assignments, arguments and returns.
/// Integer narrowing truncates.
pub fn coerce(e: TExpr, to: Type, line: u32) -> Result<TExpr, IrError> {
    let from = e.ty();
    if from == to {
        return Ok(e);
    }
    match (from, to) {
        (Type::Uint(_), Type::Uint(w)) => Ok(match e {
            TExpr::Const(Value::Word(v), _) => TExpr::Const(Value::Word(mask(v, w)), to),
            other => TExpr::Convert(Box::new(other), to),
        }),
        _ => Err(type_err(line, format!("cannot convert {from} to {to}"))),
    }
}

pub fn resolve_bool(e: &Expr, names: &dyn Names) -> Result<TExpr, IrError> {
    let t = resolve(e, names)?;
    if t.ty() != Type::Bool {
        return Err(type_err(e.line, format!("expected bool, found {}", t.ty())));
    }
    Ok(t)
}

pub fn resolve(e: &Expr, names: &dyn Names) -> Result<TExpr, IrError> {
    let line = e.line;
    Ok(match &e.kind {
        ExprKind::Number(n) => TExpr::Const(Value::Word(*n), literal_type(*n)),
        ExprKind::Bool(b) => TExpr::Const(Value::Bool(*b), Type::Bool),
        ExprKind::Env(v) => TExpr::Env(*v),
        ExprKind::Address(a) => {
            if a.bit_len() > 160 {
                return Err(type_err(line, "address literal exceeds 160 bits"));
            }
            TExpr::Const(Value::Word(*a), Type::Address)
        }
        ExprKind::Ident(name) => match names.scalar(name) {
            Some((v, ty)) => TExpr::Var(v, ty),
            None if names.table(name).is_some() => {
                return Err(type_err(line, format!("`{name}` is a storage table and must be indexed")))
            }
            None => return Err(IrError::UnknownIdent { line, name: name.clone() }),
        },
        ExprKind::Cast { ty, arg } => {
            let inner = resolve(arg, names)?;
            match (inner.ty(), ty) {
                (Type::Uint(_), Type::Uint(_)) => coerce(inner, *ty, line)?,
                (from, _) => return Err(type_err(line, format!("cannot cast {from} to {ty}"))),
            }
        }
        ExprKind::Index { base, index } => {
            let ExprKind::Ident(name) = &base.kind else {
                return Err(type_err(line, "only storage tables can be indexed"));
            };
            let (table, table_ty) = match names.table(name) {
                Some(t) => t,
                None if names.scalar(name).is_some() => {
                    return Err(type_err(line, format!("`{name}` is not a mapping or array")))
                }
                None => return Err(IrError::UnknownIdent { line, name: name.clone() }),
            };
            let key_ty = table_ty.index_type().expect("storage table");
            let idx = resolve(index, names)?;
            let idx = match (idx.ty(), key_ty) {
                (Type::Uint(_), Type::Uint(_)) | (Type::Address, Type::Address) => coerce(idx, key_ty, line)?,
                (found, _) => return Err(type_err(line, format!("index of `{name}` must be {key_ty}, found {found}"))),
            };
            TExpr::Index { table, table_ty, index: Box::new(idx) }
        }
        ExprKind::Call { name, args } => {
            let sig = names.function(name).ok_or_else(|| IrError::UndefinedFunction { line, name: name.clone() })?;
            if sig.params.len() != args.len() {
                return Err(type_err(
                    line,
                    format!("`{name}` expects {} arguments, got {}", sig.params.len(), args.len()),
                ));
            }
            let args = args
                .iter()
                .zip(&sig.params)
                .map(|(a, ty)| coerce(resolve(a, names)?, *ty, line))
                .collect::<Result<Vec<_>, _>>()?;
            TExpr::Call { callee: name.clone(), args, ret: sig.returns }
        }
        ExprKind::Unary { op: UnOp::Not, arg } => TExpr::Not(Box::new(resolve_bool(arg, names)?)),
        ExprKind::Binary { op, lhs, rhs } => {
            let l = resolve(lhs, names)?;
            let r = resolve(rhs, names)?;
            for side in [&l, &r] {
                if matches!(side, TExpr::Call { ret: None, .. }) {
                    return Err(type_err(line, "function returns no value"));
                }
            }
            binary(*op, l, r, line)?
        }
    })
}

pub fn binary(op: BinOp, l: TExpr, r: TExpr, line: u32) -> Result<TExpr, IrError> {
    let (lt, rt) = (l.ty(), r.ty());
    let mismatch = || type_err(line, format!("operator `{}` cannot combine {lt} and {rt}", op.symbol()));
    if op.is_logical() {
        if lt != Type::Bool || rt != Type::Bool {
            return Err(mismatch());
        }
        return Ok(TExpr::Binary { op, lhs: Box::new(l), rhs: Box::new(r), ty: Type::Bool });
    }
    if op.is_equality() && lt == rt && matches!(lt, Type::Bool | Type::Address) {
        return Ok(TExpr::Binary { op, lhs: Box::new(l), rhs: Box::new(r), ty: Type::Bool });
    }
    let common = unify_uint(lt, is_literal(&l), rt, is_literal(&r)).ok_or_else(mismatch)?;
    let l = coerce(l, common, line)?;
    let r = coerce(r, common, line)?;
    let ty = if op.is_arithmetic() { common } else { Type::Bool };
    Ok(TExpr::Binary { op, lhs: Box::new(l), rhs: Box::new(r), ty })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_expression;
    use crate::ir::LocalId;
    use std::collections::HashMap;

    struct Fixed(HashMap<&'static str, Type>);

    impl Names for Fixed {
        fn scalar(&self, name: &str) -> Option<(VarRef, Type)> {
            let ty = *self.0.get(name)?;
            ty.is_scalar().then_some((VarRef::Local(LocalId(name.len() as u32)), ty))
        }
        fn table(&self, name: &str) -> Option<(StateId, Type)> {
            let ty = *self.0.get(name)?;
            ty.is_storage_table().then_some((StateId(0), ty))
        }
        fn function(&self, _: &str) -> Option<Signature> {
            None
        }
    }

    fn names() -> Fixed {
        Fixed(HashMap::from([
            ("a", Type::UINT8),
            ("b", Type::UINT16),
            ("c", Type::UINT256),
            ("who", Type::Address),
            ("m", Type::Mapping(crate::types::KeyType::Address)),
            ("flag", Type::Bool),
        ]))
    }

    fn ty(src: &str) -> Result<Type, IrError> {
        resolve(&parse_expression(src, 1).unwrap(), &names()).map(|t| t.ty())
    }

    #[test]
    fn widening_follows_the_wider_operand() {
        assert_eq!(ty("a + b").unwrap(), Type::UINT16);
        assert_eq!(ty("a + 1").unwrap(), Type::UINT8);
        assert_eq!(ty("a + 300").unwrap(), Type::UINT16);
        assert_eq!(ty("1 + 2").unwrap(), Type::UINT256);
        assert_eq!(ty("b < c").unwrap(), Type::Bool);
    }

    #[test]
    fn operands_share_width_after_conversion() {
        let t = resolve(&parse_expression("a + b", 1).unwrap(), &names()).unwrap();
        let TExpr::Binary { lhs, rhs, .. } = t else { panic!() };
        assert_eq!(lhs.ty(), rhs.ty());
        assert!(matches!(*lhs, TExpr::Convert(_, Type::Uint(16))));
    }

    #[test]
    fn address_keys_and_comparisons() {
        assert_eq!(ty("m[msg.sender] + 1").unwrap(), Type::UINT256);
        assert_eq!(ty("who == msg.sender").unwrap(), Type::Bool);
        assert!(ty("m[1]").is_err());
        assert!(ty("who + 1").is_err());
    }

    #[test]
    fn rejects_ill_typed() {
        assert!(ty("flag + 1").is_err());
        assert!(ty("!a").is_err());
        assert!(ty("a && flag").is_err());
        assert!(matches!(ty("zz"), Err(IrError::UnknownIdent { .. })));
        assert!(matches!(ty("f(1)"), Err(IrError::UndefinedFunction { .. })));
    }

    #[test]
    fn literal_casts_fold() {
        let t = resolve(&parse_expression("uint8(300)", 1).unwrap(), &names()).unwrap();
        assert_eq!(t, TExpr::Const(Value::from_u64(44), Type::UINT8));
    }
}
