use super::decision::{expression_decision, Decision};
use super::tree::{BnbNode, SearchTree};
use crate::error::{Error, Result};
use crate::expr::{ExprTree, LibraryMode};
use crate::features::{extract, pair, NodeFeatures};

/// Pairwise node preference used by the champion scan.
pub trait NodeComparator {
    /// When true, `compare` receives the feature vectors of both nodes.
    fn wants_features(&self) -> bool {
        false
    }

    fn compare(
        &mut self,
        tree: &SearchTree,
        node1: &BnbNode,
        node2: &BnbNode,
        features: Option<(&NodeFeatures, &NodeFeatures)>,
    ) -> Decision;
}

/// Built-in comparators. Ties keep the champion (node 1).
#[derive(Debug, Clone)]
pub enum Comparator {
    Dfs,
    Bfs,
    BestFirst,
    Estimate,
    Expression { tree: ExprTree, mode: LibraryMode },
}

impl Comparator {
    pub fn name(&self) -> String {
        match self {
            Comparator::Dfs => "dfs".into(),
            Comparator::Bfs => "bfs".into(),
            Comparator::BestFirst => "bestfirst".into(),
            Comparator::Estimate => "estimate".into(),
            Comparator::Expression { tree, .. } => format!("expr:{}", tree.render()),
        }
    }
}

fn prefer_second(second_better: bool) -> Decision {
    if second_better {
        Decision::Node2
    } else {
        Decision::Node1
    }
}

impl NodeComparator for Comparator {
    fn wants_features(&self) -> bool {
        matches!(self, Comparator::Expression { .. })
    }

    fn compare(
        &mut self,
        _tree: &SearchTree,
        a: &BnbNode,
        b: &BnbNode,
        features: Option<(&NodeFeatures, &NodeFeatures)>,
    ) -> Decision {
        match self {
            Comparator::Dfs => prefer_second(b.depth > a.depth || (b.depth == a.depth && b.lp_bound < a.lp_bound)),
            Comparator::Bfs => prefer_second(b.depth < a.depth || (b.depth == a.depth && b.lp_bound < a.lp_bound)),
            Comparator::BestFirst => prefer_second(b.lp_bound < a.lp_bound),
            Comparator::Estimate => prefer_second(b.estimate < a.estimate),
            Comparator::Expression { tree, mode } => {
                let (fa, fb) = features.expect("expression comparator needs features");
                expression_decision(tree, *mode, pair(fa, fb).as_slice())
            }
        }
    }
}

/// Champion scan over the frontier in creation order; removes and returns
/// the winner.
pub fn select_node(tree: &mut SearchTree, comp: &mut dyn NodeComparator) -> Result<BnbNode> {
    if tree.frontier.is_empty() {
        return Err(Error::EmptyFrontier);
    }
    let feats: Option<Vec<NodeFeatures>> = if comp.wants_features() {
        Some(tree.frontier.iter().map(|n| extract(tree, n)).collect::<Result<_>>()?)
    } else {
        None
    };
    let mut champ = 0;
    for i in 1..tree.frontier.len() {
        let f = feats.as_ref().map(|f| (&f[champ], &f[i]));
        if comp.compare(tree, &tree.frontier[champ], &tree.frontier[i], f) == Decision::Node2 {
            champ = i;
        }
    }
    tree.decisions += tree.frontier.len() - 1;
    Ok(tree.frontier.remove(champ))
}
