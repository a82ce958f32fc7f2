//! Expression trees over a primitive set.

use std::collections::BTreeMap;
use std::sync::Arc;

mod eval;
mod generate;
mod prefix;
mod pset;
mod tree;

pub use eval::{evaluate, Program};
pub use generate::{generate_full, generate_grow, generate_half_and_half};
pub use prefix::{format_f64, parse_prefix, print_prefix};
pub use pset::{build_pset, Primitive, PrimitiveSet, SymbolKind};
pub use tree::{Expression, Node};

/// Interned primitive name.
pub type Symbol = Arc<str>;

/// Values of symbolic constants, keyed by constant name.
pub type Constants = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("duplicate primitive name `{0}`")]
    DuplicateName(String),
    #[error("`{0}` is not a valid primitive name")]
    InvalidName(String),
    #[error("function `{0}` declared with arity 0")]
    ZeroArityFunction(String),
    #[error("primitive set has no terminals")]
    NoTerminals,
    #[error("primitive set has no functions")]
    NoFunctions,
    #[error("invalid height range {min}..={max}")]
    HeightRange { min: usize, max: usize },
    #[error("empty expression")]
    Empty,
    #[error("empty token (tokens must be separated by a single space)")]
    EmptyToken,
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("expression truncated: {missing} operand(s) missing")]
    Truncated { missing: usize },
    #[error("trailing tokens starting at token {position}")]
    TrailingTokens { position: usize },
    #[error("no binding for `{0}`")]
    MissingBinding(String),
    #[error("no evaluation rule for `{name}`/{arity}")]
    UnsupportedFunction { name: String, arity: usize },
}
