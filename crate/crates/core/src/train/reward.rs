use crate::dataset::{Columns, Dataset};
use crate::error::{Error, Result};
use crate::expr::{ExprTree, LibraryMode};
use crate::features::N_NODE_FEATURES;

fn check_dims(tree: &ExprTree, mode: LibraryMode) -> Result<()> {
    if tree.max_var() > mode.n_vars() {
        return Err(Error::DimensionMismatch { needed: tree.max_var(), got: mode.n_vars() });
    }
    Ok(())
}

/// Per-row "selects node 1" flags for every row of `cols`.
pub fn predict_node1(tree: &ExprTree, cols: &Columns, mode: LibraryMode) -> Result<Vec<bool>> {
    check_dims(tree, mode)?;
    Ok(match mode {
        LibraryMode::Pair => tree.eval_columns(cols.n, |i| cols.column(i)).into_iter().map(|f| f > 0.0).collect(),
        LibraryMode::Symmetric => {
            let g1 = tree.eval_columns(cols.n, |i| cols.column(i));
            let g2 = tree.eval_columns(cols.n, |i| cols.column(i + N_NODE_FEATURES));
            g1.iter().zip(&g2).map(|(a, b)| a - b >= 0.0).collect()
        }
    })
}

/// Behavioural-cloning accuracy on a column view.
pub fn reward_on_columns(tree: &ExprTree, cols: &Columns, mode: LibraryMode) -> Result<f64> {
    if cols.n == 0 {
        return Err(Error::Dataset("reward on an empty dataset".into()));
    }
    let pred = predict_node1(tree, cols, mode)?;
    let hits = pred.iter().zip(&cols.node1).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / cols.n as f64)
}

/// Fraction of samples whose recorded decision the expression reproduces.
pub fn compute_reward(tree: &ExprTree, data: &Dataset, mode: LibraryMode) -> Result<f64> {
    reward_on_columns(tree, &data.columns(), mode)
}
