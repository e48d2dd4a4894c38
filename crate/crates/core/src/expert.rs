//! The optimal-plunger expert and behaviour collection.

use rayon::prelude::*;

use crate::dataset::{BehaviorSample, Dataset, Split};
use crate::error::{Error, Result};
use crate::features::{pair, NodeFeatures};
use crate::milp::{solve, BnbNode, Comparator, Decision, MilpInstance, NodeComparator, SearchTree, SolveLimits, SolveOutcome, SolveStatus};

/// Exact optimum from a best-first solve.
pub fn solve_to_optimal(inst: &MilpInstance, node_limit: Option<usize>) -> Result<Vec<f64>> {
    let limits = SolveLimits { node_limit, ..SolveLimits::default() };
    let out = solve(inst, &mut Comparator::BestFirst, &limits)?;
    if out.status == SolveStatus::NodeLimit {
        return Err(Error::NodeLimitReached(out.stats.nodes));
    }
    out.solution.ok_or(Error::Infeasible)
}

/// Prefers the node whose box contains `x`; the deeper one if both do, the
/// lower estimate if neither does; lower id on ties.
pub fn plunger_decide(tree: &SearchTree, x: &[f64], node1: &BnbNode, node2: &BnbNode) -> Decision {
    let in1 = node1.contains(x, &tree.root_lo, &tree.root_hi);
    let in2 = node2.contains(x, &tree.root_lo, &tree.root_hi);
    let by_id = || if node1.id <= node2.id { Decision::Node1 } else { Decision::Node2 };
    match (in1, in2) {
        (true, false) => Decision::Node1,
        (false, true) => Decision::Node2,
        (true, true) => match node1.depth.cmp(&node2.depth) {
            std::cmp::Ordering::Greater => Decision::Node1,
            std::cmp::Ordering::Less => Decision::Node2,
            std::cmp::Ordering::Equal => by_id(),
        },
        (false, false) => {
            if node1.estimate < node2.estimate {
                Decision::Node1
            } else if node2.estimate < node1.estimate {
                Decision::Node2
            } else {
                by_id()
            }
        }
    }
}

/// The expert as a comparator, optionally recording every comparison.
#[derive(Debug, Clone)]
pub struct Expert {
    solution: Vec<f64>,
    record: Option<(String, Vec<BehaviorSample>)>,
}

impl Expert {
    pub fn new(solution: Vec<f64>) -> Self {
        Self { solution, record: None }
    }

    pub fn recording(solution: Vec<f64>, instance: impl Into<String>) -> Self {
        Self { solution, record: Some((instance.into(), Vec::new())) }
    }

    pub fn take_samples(&mut self) -> Vec<BehaviorSample> {
        self.record.as_mut().map(|r| std::mem::take(&mut r.1)).unwrap_or_default()
    }
}

impl NodeComparator for Expert {
    fn wants_features(&self) -> bool {
        self.record.is_some()
    }

    fn compare(
        &mut self,
        tree: &SearchTree,
        node1: &BnbNode,
        node2: &BnbNode,
        features: Option<(&NodeFeatures, &NodeFeatures)>,
    ) -> Decision {
        let d = plunger_decide(tree, &self.solution, node1, node2);
        if let (Some((id, samples)), Some((f1, f2))) = (self.record.as_mut(), features) {
            let step = samples.len();
            samples.push(BehaviorSample { features: pair(f1, f2), decision: d, instance: id.clone(), step });
        }
        d
    }
}

/// Solves one instance under the recording expert.
pub fn collect_instance(
    inst: &MilpInstance,
    id: &str,
    node_limit: Option<usize>,
) -> Result<(Vec<BehaviorSample>, SolveOutcome)> {
    let x = solve_to_optimal(inst, node_limit)?;
    let mut expert = Expert::recording(x, id);
    let limits = SolveLimits { node_limit, ..SolveLimits::default() };
    let out = solve(inst, &mut expert, &limits)?;
    if out.status == SolveStatus::NodeLimit {
        return Err(Error::NodeLimitReached(out.stats.nodes));
    }
    Ok((expert.take_samples(), out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectReport {
    pub instance: String,
    /// `None` when the instance was rejected.
    pub samples: Option<usize>,
    pub nodes: Option<usize>,
    pub note: String,
}

/// Collects a dataset over `instances` in parallel; rejected instances
/// (infeasible or over the node limit) are skipped and reported.
pub fn collect(
    instances: &[(String, MilpInstance)],
    split: Split,
    generator: &str,
    node_limit: Option<usize>,
) -> Result<(Dataset, Vec<CollectReport>)> {
    let results: Vec<Result<(Vec<BehaviorSample>, SolveOutcome)>> =
        instances.par_iter().map(|(id, inst)| collect_instance(inst, id, node_limit)).collect();
    let mut data = Dataset::new(split, generator);
    let mut reports = Vec::with_capacity(instances.len());
    for ((id, _), r) in instances.iter().zip(results) {
        match r {
            Ok((samples, out)) => {
                reports.push(CollectReport {
                    instance: id.clone(),
                    samples: Some(samples.len()),
                    nodes: Some(out.stats.nodes),
                    note: String::new(),
                });
                data.push_instance(id.clone(), samples);
            }
            Err(e @ (Error::Infeasible | Error::NodeLimitReached(_))) => {
                log::warn!("skipping {id}: {e}");
                reports.push(CollectReport { instance: id.clone(), samples: None, nodes: None, note: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }
    Ok((data, reports))
}
