//! Corpus sources shared by unit tests.

pub const OVERFLOW: &str = include_str!("../../../corpus/overflow.msol");
pub const MAPPING: &str = include_str!("../../../corpus/mapping_sample.msol");
pub const MULTI_TX: &str = include_str!("../../../corpus/multi_tx.msol");
pub const SIMPLE_CONDITION: &str = include_str!("../../../corpus/simple_condition.msol");
pub const MSG_VALUE: &str = include_str!("../../../corpus/msg_value.msol");
pub const TWO_TX_OVERFLOW: &str = include_str!("../../../corpus/two_tx_overflow.msol");
pub const INTERNAL_CALL: &str = include_str!("../../../corpus/internal_call.msol");
pub const TOKEN: &str = include_str!("../../../corpus/token.msol");
pub const MUTANT_KILLING: &str = include_str!("../../../corpus/mutant_killing.msol");
pub const CONTRADICTION: &str = include_str!("../../../corpus/contradiction.msol");

pub const ALL: &[(&str, &str)] = &[
    ("overflow", OVERFLOW),
    ("mapping_sample", MAPPING),
    ("multi_tx", MULTI_TX),
    ("simple_condition", SIMPLE_CONDITION),
    ("msg_value", MSG_VALUE),
    ("two_tx_overflow", TWO_TX_OVERFLOW),
    ("internal_call", INTERNAL_CALL),
    ("token", TOKEN),
    ("mutant_killing", MUTANT_KILLING),
    ("contradiction", CONTRADICTION),
];
