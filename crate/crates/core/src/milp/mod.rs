//! Branch-and-bound MILP solver with pluggable node comparators.

mod decision;
mod instance;
mod lp;
mod propagate;
mod select;
mod solve;
mod tree;

#[cfg(test)]
mod tests;

pub use decision::{expression_decision, Decision};
pub use instance::{MilpInstance, Row, Sense};
pub use lp::{solve_lp, Basis, LpResult, LpStatus, FEAS_TOL, INT_TOL, PIVOT_TOL};
pub use propagate::propagate;
pub use select::{select_node, Comparator, NodeComparator};
pub use solve::{
    branching_variable, pd_integral, solve, NodeFate, SolveLimits, SolveOutcome, SolveStats, SolveStatus, TraceEntry,
};
pub use tree::{is_fractional, BnbNode, BoundEvent, BranchInfo, Direction, DirectionalStats, SearchTree};
