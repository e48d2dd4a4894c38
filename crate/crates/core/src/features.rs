//! The 20-per-node feature vector and ordered pair layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{BnbNode, Direction, SearchTree};

/// Denominator floor for gap-style ratios.
const GAP_EPS: f64 = 1e-9;

pub const N_NODE_FEATURES: usize = 20;
pub const N_PAIR_FEATURES: usize = 2 * N_NODE_FEATURES;

/// Row names in storage order; `x_i` of an expression reads row `i`.
pub const FEATURE_NAMES: [&str; N_NODE_FEATURES] = [
    "GAPINF",
    "GAP",
    "GLOBALUPPERBOUNDINF",
    "GLOBALUPPERBOUND",
    "PLUNGEDEPTH",
    "RELATIVEDEPTH",
    "LOWERBOUND",
    "ESTIMATE",
    "RELATIVEBOUND",
    "NODE_TYPE_SIBLING",
    "NODE_TYPE_CHILD",
    "NODE_TYPE_LEAF",
    "BRANCHVAR_BOUNDLPDIFF",
    "BRANCHVAR_ROOTLPDIFF",
    "BRANCHVAR_PRIO_DOWN",
    "BRANCHVAR_PRIO_UP",
    "BRANCHVAR_PSEUDOCOST",
    "BRANCHVAR_INF",
    "NODE_DEPTH",
    "MAXDEPTH",
];

/// Comma-joined feature map written into dataset headers.
pub fn feature_map() -> String {
    FEATURE_NAMES.join(",")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeFeatures(pub [f64; N_NODE_FEATURES]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFeatures(pub [f64; N_PAIR_FEATURES]);

impl PairFeatures {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn first(&self) -> &[f64] {
        &self.0[..N_NODE_FEATURES]
    }

    pub fn second(&self) -> &[f64] {
        &self.0[N_NODE_FEATURES..]
    }
}

/// Concatenates `a` (x1..x20) and `b` (x21..x40).
pub fn pair(a: &NodeFeatures, b: &NodeFeatures) -> PairFeatures {
    let mut out = [0.0; N_PAIR_FEATURES];
    out[..N_NODE_FEATURES].copy_from_slice(&a.0);
    out[N_NODE_FEATURES..].copy_from_slice(&b.0);
    PairFeatures(out)
}

/// Computes the 20 node features against the current tree state.
pub fn extract(tree: &SearchTree, node: &BnbNode) -> Result<NodeFeatures> {
    let root = tree.root_bound.ok_or(Error::MissingRootBound)?;
    let scale = root.abs().max(1.0);
    let mut f = [0.0; N_NODE_FEATURES];
    let lb = tree.global_lower_bound();
    let ub = tree.incumbent_value();

    let gap_inf = ub.is_none() || lb.abs() < GAP_EPS;
    f[0] = gap_inf as u8 as f64;
    if let (false, Some(u)) = (gap_inf, ub) {
        f[1] = (u - lb) / lb.abs();
    }
    f[2] = ub.is_none() as u8 as f64;
    f[3] = ub.map_or(0.0, |u| u / scale);
    f[4] = tree.plunge_depth as f64;
    f[5] = node.depth as f64 / (tree.max_depth.max(1)) as f64;
    f[6] = node.lp_bound / scale;
    f[7] = node.estimate / scale;
    if let Some(u) = ub {
        let gap = u - lb;
        if gap >= GAP_EPS {
            f[8] = (node.lp_bound - lb) / gap;
        }
    }

    let kind = match tree.last_expanded {
        Some((last, _)) if node.parent == Some(last) => 1,
        Some((last, last_parent)) if node.parent.is_some() && node.parent == last_parent && node.id != last => 0,
        _ => 2,
    };
    f[9 + kind] = 1.0;

    if let Some(b) = node.branch {
        f[12] = b.new_bound - b.parent_value;
        f[13] = tree.root_solution.get(b.var).copied().unwrap_or(b.parent_value) - b.parent_value;
        match b.dir {
            Direction::Down => f[14] = 1.0,
            Direction::Up => f[15] = 1.0,
        }
        f[16] = tree.pseudocost(b.var, b.dir) * (b.new_bound - b.parent_value).abs();
        f[17] = tree.inferences.mean(b.var, b.dir).unwrap_or(0.0);
    }
    f[18] = node.depth as f64;
    f[19] = tree.max_depth as f64;
    Ok(NodeFeatures(f))
}
