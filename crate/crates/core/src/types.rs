//! Value types shared by every stage: declared MiniSol types, concrete
//! values, fixed-width arithmetic and the finite account universe.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ruint::aliases::U256;

/// Key type of a `mapping`. Values are always `uint256`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyType {
    Uint256,
    Address,
}

impl KeyType {
    pub fn as_type(self) -> Type {
        match self {
            KeyType::Uint256 => Type::UINT256,
            KeyType::Address => Type::Address,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Bool,
    /// Unsigned integer of the given bit width (8, 16 or 256).
    Uint(u16),
    Address,
    Mapping(KeyType),
    /// Fixed-size `uint256[len]` storage array.
    Array(u64),
}

impl Type {
    pub const UINT8: Type = Type::Uint(8);
    pub const UINT16: Type = Type::Uint(16);
    pub const UINT256: Type = Type::Uint(256);

    pub fn is_scalar(self) -> bool {
        matches!(self, Type::Bool | Type::Uint(_) | Type::Address)
    }

    pub fn is_storage_table(self) -> bool {
        matches!(self, Type::Mapping(_) | Type::Array(_))
    }

    /// Bit width of a bitvector-backed scalar. `None` for `bool` and tables.
    pub fn bits(self) -> Option<u16> {
        match self {
            Type::Uint(w) => Some(w),
            Type::Address => Some(160),
            _ => None,
        }
    }

    /// Key type used to index a storage table.
    pub fn index_type(self) -> Option<Type> {
        match self {
            Type::Mapping(k) => Some(k.as_type()),
            Type::Array(_) => Some(Type::UINT256),
            _ => None,
        }
    }

    pub fn zero(self) -> Value {
        match self {
            Type::Bool => Value::Bool(false),
            _ => Value::Word(U256::ZERO),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Bool => f.write_str("bool"),
            Type::Uint(w) => write!(f, "uint{w}"),
            Type::Address => f.write_str("address"),
            Type::Mapping(KeyType::Uint256) => f.write_str("mapping(uint256 => uint256)"),
            Type::Mapping(KeyType::Address) => f.write_str("mapping(address => uint256)"),
            Type::Array(n) => write!(f, "uint256[{n}]"),
        }
    }
}

/// A concrete runtime value. Integers and addresses share the word form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Word(U256),
}

impl Value {
    pub fn word(self) -> U256 {
        match self {
            Value::Word(w) => w,
            Value::Bool(b) => U256::from(b as u8),
        }
    }

    pub fn bool(self) -> bool {
        match self {
            Value::Bool(b) => b,
            Value::Word(w) => !w.is_zero(),
        }
    }

    pub fn from_u64(v: u64) -> Value {
        Value::Word(U256::from(v))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Word(w) => write!(f, "{w}"),
        }
    }
}

/// Booleans as JSON booleans, words as decimal strings.
impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Word(w) => s.collect_str(w),
        }
    }
}

/// Truncates `v` to its low `bits` bits.
pub fn mask(v: U256, bits: u16) -> U256 {
    if bits >= 256 {
        v
    } else {
        v & ((U256::from(1u8) << bits as usize) - U256::from(1u8))
    }
}

/// Largest value representable in `bits` bits.
pub fn max_value(bits: u16) -> U256 {
    mask(U256::MAX, bits)
}

/// Converts a scalar value to `to`, truncating or zero-extending as needed.
pub fn convert(v: Value, to: Type) -> Value {
    match to {
        Type::Bool => Value::Bool(v.bool()),
        _ => Value::Word(mask(v.word(), to.bits().unwrap_or(256))),
    }
}

/// Narrowest integer type holding `v`: literals are typed this way before
/// they meet another operand.
pub fn literal_type(v: U256) -> Type {
    if v < U256::from(256u32) {
        Type::UINT8
    } else if v < U256::from(65536u32) {
        Type::UINT16
    } else {
        Type::UINT256
    }
}

/// Common operand type for an arithmetic or ordering operation.
///
/// Both sides are widened to the wider width. A literal contributes the
/// width of its narrowest type; two literals meet at `uint256`.
pub fn unify_uint(lhs: Type, lhs_literal: bool, rhs: Type, rhs_literal: bool) -> Option<Type> {
    match (lhs, rhs) {
        (Type::Uint(a), Type::Uint(b)) => {
            if lhs_literal && rhs_literal {
                Some(Type::UINT256)
            } else {
                Some(Type::Uint(a.max(b)))
            }
        }
        _ => None,
    }
}

/// Number of accounts in the finite caller universe.
pub const ACCOUNT_COUNT: u8 = 8;

/// One of the predefined externally-owned accounts `A0`..`A7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Account(pub u8);

impl Account {
    pub fn all() -> impl Iterator<Item = Account> {
        (0..ACCOUNT_COUNT).map(Account)
    }

    /// On-chain address of the account. `A<i>` lives at address `i + 1`.
    pub fn address(self) -> U256 {
        U256::from(self.0 as u64 + 1)
    }

    pub fn from_address(addr: U256) -> Option<Account> {
        Account::all().find(|a| a.address() == addr)
    }
}

impl fmt::Display for Account {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.0)
    }
}

impl FromStr for Account {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix('A')
            .and_then(|n| n.parse::<u8>().ok())
            .filter(|n| *n < ACCOUNT_COUNT)
            .map(Account)
            .ok_or_else(|| format!("unknown account `{s}` (expected A0..A{})", ACCOUNT_COUNT - 1))
    }
}

impl Serialize for Account {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Account {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Serde adapter writing `U256` values as decimal strings.
pub mod decimal {
    use super::U256;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &U256, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<U256, D::Error> {
        let s = String::deserialize(d)?;
        U256::from_str_radix(&s, 10).map_err(serde::de::Error::custom)
    }

    pub mod option {
        use super::U256;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<U256>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(x) => s.collect_str(x),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<U256>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|s| U256::from_str_radix(&s, 10).map_err(serde::de::Error::custom))
                .transpose()
        }
    }

    /// Map with decimal keys and values, in numeric key order.
    pub mod map {
        use std::collections::BTreeMap;

        use super::U256;
        use serde::ser::SerializeMap;
        use serde::Serializer;

        pub fn serialize<S: Serializer>(v: &BTreeMap<U256, U256>, s: S) -> Result<S::Ok, S::Error> {
            let mut m = s.serialize_map(Some(v.len()))?;
            for (k, x) in v {
                m.serialize_entry(&k.to_string(), &x.to_string())?;
            }
            m.end()
        }
    }

    pub mod vec {
        use super::U256;
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[U256], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&x.to_string())?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<U256>, D::Error> {
            let raw = Vec::<String>::deserialize(d)?;
            raw.iter().map(|s| U256::from_str_radix(s, 10).map_err(serde::de::Error::custom)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_wraps_to_width() {
        assert_eq!(mask(U256::from(65536u32), 16), U256::ZERO);
        assert_eq!(mask(U256::from(0x1ffu32), 8), U256::from(0xffu32));
        assert_eq!(mask(U256::MAX, 256), U256::MAX);
    }

    #[test]
    fn literal_widths() {
        assert_eq!(literal_type(U256::from(255u32)), Type::UINT8);
        assert_eq!(literal_type(U256::from(256u32)), Type::UINT16);
        assert_eq!(literal_type(U256::from(65536u32)), Type::UINT256);
    }

    #[test]
    fn unify_prefers_wider_operand() {
        assert_eq!(unify_uint(Type::UINT8, false, Type::UINT16, true), Some(Type::UINT16));
        assert_eq!(unify_uint(Type::UINT256, false, Type::UINT8, true), Some(Type::UINT256));
        assert_eq!(unify_uint(Type::UINT8, true, Type::UINT8, true), Some(Type::UINT256));
        assert_eq!(unify_uint(Type::Address, false, Type::UINT8, true), None);
    }

    #[test]
    fn accounts_round_trip() {
        for a in Account::all() {
            assert_eq!(a.to_string().parse::<Account>().unwrap(), a);
            assert_eq!(Account::from_address(a.address()), Some(a));
        }
        assert!("A8".parse::<Account>().is_err());
        assert_eq!(Account::from_address(U256::ZERO), None);
    }
}
