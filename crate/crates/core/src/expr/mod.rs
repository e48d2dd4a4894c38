//! Token libraries, expression trees and protected evaluation.
//!
//! An expression is stored both as a tree and as its pre-order token
//! sequence; the two are interchangeable because every token has a fixed
//! arity. `pow` is the unary square.

mod file;
mod library;
mod mask;
mod tree;

pub use file::{
    format_expressions, header_line, parse_expressions, parse_header, read_expressions,
    write_expressions,
};
pub use library::{
    Extension, LibraryMode, Op, Token, TokenKind, TokenLibrary, CONST_GRID, DEFAULT_CONSTANTS,
    DEFAULT_MAX_LENGTH,
};
pub use mask::{valid_next_tokens, SlotCount};
pub use tree::{apply_op, ExprNode, ExprTree, EXP_CLAMP, PROTECT_EPS, VALUE_CAP};
