use serde::{Deserialize, Serialize};

use crate::expr::{ExprTree, LibraryMode};
use crate::features::N_NODE_FEATURES;

/// Outcome of a pairwise node comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Node1,
    Node2,
}

impl Decision {
    /// Label encoding used in dataset files: `-1` selects node 1, `1` node 2.
    pub fn label(self) -> i8 {
        match self {
            Decision::Node1 => -1,
            Decision::Node2 => 1,
        }
    }

    pub fn from_label(v: i64) -> Option<Self> {
        match v {
            -1 => Some(Decision::Node1),
            1 => Some(Decision::Node2),
            _ => None,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Decision::Node1 => Decision::Node2,
            Decision::Node2 => Decision::Node1,
        }
    }
}

/// Applies an expression comparator to one ordered pair `(x1..x20, x21..x40)`.
///
/// Pair mode: `f(pair) > 0` selects node 1. Symmetric mode: the expression
/// scores each node on its own 20 features and `g(n1) >= g(n2)` selects
/// node 1. Callers must have checked the expression's variable range.
pub fn expression_decision(tree: &ExprTree, mode: LibraryMode, pair: &[f64]) -> Decision {
    let node1 = match mode {
        LibraryMode::Pair => tree.eval_unchecked(pair) > 0.0,
        LibraryMode::Symmetric => {
            tree.eval_unchecked(&pair[..N_NODE_FEATURES]) - tree.eval_unchecked(&pair[N_NODE_FEATURES..]) >= 0.0
        }
    };
    if node1 {
        Decision::Node1
    } else {
        Decision::Node2
    }
}
