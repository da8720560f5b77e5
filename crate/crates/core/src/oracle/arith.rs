//! Concrete fixed-width arithmetic, shared by both interpreters.

use crate::ir::BinOp;
use crate::types::{mask, Type, Value, U256};

/// Applies `op` to operands of type `operand_ty`. Division and modulo by
/// zero yield zero; callers that must revert check the divisor first.
pub fn binary(op: BinOp, l: Value, r: Value, operand_ty: Type) -> Value {
    let bits = operand_ty.bits().unwrap_or(256);
    let (a, b) = (l.word(), r.word());
    let word = |v: U256| Value::Word(mask(v, bits));
    match op {
        BinOp::Add => word(a.wrapping_add(b)),
        BinOp::Sub => word(a.wrapping_sub(b)),
        BinOp::Mul => word(a.wrapping_mul(b)),
        BinOp::Div => word(if b.is_zero() { U256::ZERO } else { a / b }),
        BinOp::Mod => word(if b.is_zero() { U256::ZERO } else { a % b }),
        BinOp::Eq => Value::Bool(l == r),
        BinOp::Ne => Value::Bool(l != r),
        BinOp::Lt => Value::Bool(a < b),
        BinOp::Le => Value::Bool(a <= b),
        BinOp::Gt => Value::Bool(a > b),
        BinOp::Ge => Value::Bool(a >= b),
        BinOp::And => Value::Bool(l.bool() && r.bool()),
        BinOp::Or => Value::Bool(l.bool() || r.bool()),
    }
}
