//! Symbolic expressions over jet-bundle coordinates.

mod calculus;
mod display;
mod eval;
mod node;
mod parse;
mod symbol;

pub use calculus::{derive, total_derivative_unchecked, Bindings, JetSpace, DEFAULT_MAX_ORDER};
pub use eval::{Compiled, Point};
pub use node::{Expr, Func, Node, Rational};
pub use parse::{parse, ParseContext};
pub use symbol::{base_index, base_name, Coordinate, FunctionSymbol, MultiIndex, Name, Symbol, BASE_NAMES};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("unknown base index {index} (base dimension is {dim})")]
    UnknownBaseIndex { index: usize, dim: usize },
    #[error("jet-order overflow: order {requested} requested, maximum is {max}")]
    JetOrderOverflow { requested: usize, max: usize },
    #[error("inconsistent binding for {symbol}: given {given}, derived {derived}")]
    InconsistentBinding {
        symbol: String,
        given: String,
        derived: String,
    },
    #[error("cannot substitute through the arguments of {0}")]
    UnsupportedSubstitution(String),
    #[error("missing numeric binding for {0}")]
    MissingBinding(String),
    #[error("domain error ({reason}) in {subexpression}")]
    Domain { reason: String, subexpression: String },
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown symbol `{name}` at position {pos}")]
    UnknownSymbol { name: String, pos: usize },
}
