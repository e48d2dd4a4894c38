//! Learning compact symbolic node-selection rules for branch-and-bound.
//!
//! The crate is organised bottom-up:
//!
//! * [`expr`]: token libraries, expression trees, protected evaluation.
//! * [`policy`]: the recurrent expression generator with exact likelihoods
//!   and hand-written backpropagation.
//! * [`train`]: risk-seeking PPO over sampled expressions, rewarded by
//!   behavioural-cloning accuracy.
//! * [`milp`]: a small exact MILP solver (bounded dual simplex plus
//!   branch-and-bound with pluggable node comparators).
//! * [`features`]: the 20-per-node feature vector fed to expressions.
//! * [`expert`]: the solution-aware plunging expert and dataset collection.
//! * [`gen`]: seeded set-cover and capacitated facility location generators.
//! * [`dataset`]: on-disk behaviour datasets.
//! * [`pipeline`]: the gen, collect, train and eval stages.

pub mod dataset;
pub mod error;
pub mod expert;
pub mod expr;
pub mod features;
pub mod gen;
pub mod milp;
pub mod pipeline;
pub mod policy;
pub mod stats;
pub mod train;
pub mod util;


pub use dataset::{BehaviorSample, Dataset, Split};
pub use error::{Error, Result};
pub use expr::{ExprTree, LibraryMode, Op, Token, TokenLibrary};
pub use features::{NodeFeatures, PairFeatures};
pub use milp::{solve, Comparator, Decision, MilpInstance, NodeComparator, SolveLimits, SolveOutcome, SolveStats};
pub use train::{train, TrainerConfig};



