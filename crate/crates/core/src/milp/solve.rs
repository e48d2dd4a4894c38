use serde::{Deserialize, Serialize};

use super::instance::MilpInstance;
use super::lp::{solve_lp, LpStatus};
use super::propagate::propagate;
use super::select::{select_node, NodeComparator};
use super::tree::{is_fractional, BnbNode, BoundEvent, BranchInfo, Direction, SearchTree};
use crate::error::{Error, Result};

const SCORE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveLimits {
    /// Maximum number of expanded nodes.
    pub node_limit: Option<usize>,
    /// Primal value used before the first incumbent; defaults to
    /// `root + |root| + 1`.
    pub primal_cap: Option<f64>,
    /// Keep a record of every evaluated node.
    pub record_trace: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Expanded nodes, the root included.
    pub nodes: usize,
    /// LP relaxations solved.
    pub lps: usize,
    pub pd_integral: f64,
    /// Relative gap at termination; `None` without an incumbent.
    pub final_gap: Option<f64>,
    pub incumbent_value: Option<f64>,
    pub decisions: usize,
    pub max_depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeFate {
    Expanded,
    Integral,
    Pruned,
    LpInfeasible,
    PropagationInfeasible,
    Open,
}

#[derive(Debug, Clone)]
pub struct TraceEntry {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub lp_bound: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub fate: NodeFate,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub solution: Option<Vec<f64>>,
    pub stats: SolveStats,
    pub events: Vec<BoundEvent>,
    pub trace: Vec<TraceEntry>,
}

impl SolveOutcome {
    pub fn objective(&self) -> Option<f64> {
        self.stats.incumbent_value
    }
}

struct Solver<'a> {
    inst: &'a MilpInstance,
    tree: SearchTree,
    expanded: usize,
    trace: Option<Vec<TraceEntry>>,
}

/// Branch and bound with eager child evaluation.
pub fn solve(inst: &MilpInstance, comp: &mut dyn NodeComparator, limits: &SolveLimits) -> Result<SolveOutcome> {
    inst.validate()?;
    if limits.node_limit == Some(0) {
        return Err(Error::Config("node limit must be at least 1".into()));
    }
    let mut s = Solver {
        inst,
        tree: SearchTree::new(inst),
        expanded: 0,
        trace: limits.record_trace.then(Vec::new),
    };
    s.root(limits)?;
    let mut status = SolveStatus::Optimal;
    if s.tree.frontier.is_empty() {
        // Integral root.
        s.expanded = 1;
        s.log_event();
    }
    while !s.tree.frontier.is_empty() {
        if limits.node_limit.is_some_and(|l| s.expanded >= l) {
            status = SolveStatus::NodeLimit;
            break;
        }
        let node = select_node(&mut s.tree, comp)?;
        s.tree.plunge_depth = match s.tree.last_expanded {
            Some((last, _)) if node.parent == Some(last) => s.tree.plunge_depth + 1,
            _ => 0,
        };
        s.tree.last_expanded = Some((node.id, node.parent));
        s.expanded += 1;
        s.expand(node)?;
        s.log_event();
    }
    if status == SolveStatus::Optimal && s.tree.incumbent.is_none() {
        return Err(Error::Infeasible);
    }
    Ok(s.finish(status))
}

impl Solver<'_> {
    fn root(&mut self, limits: &SolveLimits) -> Result<()> {
        let (mut lo, mut hi) = (self.inst.lo.clone(), self.inst.hi.clone());
        if propagate(self.inst, &mut lo, &mut hi).is_none() {
            return Err(Error::Infeasible);
        }
        self.tree.root_lo = lo.clone();
        self.tree.root_hi = hi.clone();
        let lp = solve_lp(self.inst, &lo, &hi, None)?;
        self.tree.nodes_solved += 1;
        match lp.status {
            LpStatus::Infeasible => return Err(Error::Infeasible),
            LpStatus::Unbounded => return Err(Error::InvalidInstance("LP relaxation is unbounded".into())),
            LpStatus::Optimal => {}
        }
        let root = lp.objective;
        self.tree.root_bound = Some(root);
        self.tree.root_solution = lp.x.clone();
        self.tree.primal_cap = limits.primal_cap.unwrap_or(root + root.abs() + 1.0);
        self.tree.next_id = 1;
        let node = BnbNode {
            id: 0,
            parent: None,
            depth: 0,
            bounds: Vec::new(),
            lp_bound: root,
            estimate: self.tree.estimate_score(root, &lp.x, self.inst.p),
            lp_solution: lp.x,
            branch: None,
            basis: lp.basis,
        };
        if self.integral(&node.lp_solution) {
            self.record(&node, &lo, &hi, NodeFate::Integral);
            self.accept(&node.lp_solution);
        } else {
            self.tree.frontier.push(node);
        }
        Ok(())
    }

    fn integral(&self, x: &[f64]) -> bool {
        x.iter().take(self.inst.p).all(|&v| !is_fractional(v))
    }

    fn record(&mut self, node: &BnbNode, lo: &[f64], hi: &[f64], fate: NodeFate) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEntry {
                id: node.id,
                parent: node.parent,
                depth: node.depth,
                lp_bound: node.lp_bound,
                lo: lo.to_vec(),
                hi: hi.to_vec(),
                fate,
            });
        }
    }

    /// Offers an integral LP solution as incumbent and sweeps the frontier.
    fn accept(&mut self, x: &[f64]) {
        let mut x = x.to_vec();
        for v in x.iter_mut().take(self.inst.p) {
            *v = v.round();
        }
        let obj = self.inst.objective(&x);
        if self.tree.incumbent_value().is_none_or(|inc| obj < inc) {
            self.tree.incumbent = Some((x, obj));
            let tree = &self.tree;
            let keep: Vec<bool> = tree.frontier.iter().map(|n| !tree.prunable(n.lp_bound)).collect();
            let mut it = keep.iter();
            let mut pruned = Vec::new();
            self.tree.frontier.retain(|n| {
                let k = *it.next().unwrap();
                if !k {
                    pruned.push(n.clone());
                }
                k
            });
            if self.trace.is_some() {
                for n in pruned {
                    let (lo, hi) = n.local_bounds(&self.tree.root_lo, &self.tree.root_hi);
                    self.record(&n, &lo, &hi, NodeFate::Pruned);
                }
            }
        }
    }

    fn expand(&mut self, node: BnbNode) -> Result<()> {
        let var = branching_variable(&self.tree, &node, self.inst.p)?;
        let v = node.lp_solution[var];
        let (lo, hi) = node.local_bounds(&self.tree.root_lo, &self.tree.root_hi);
        self.record(&node, &lo, &hi, NodeFate::Expanded);
        for dir in [Direction::Down, Direction::Up] {
            let (mut clo, mut chi) = (lo.clone(), hi.clone());
            let new_bound = match dir {
                Direction::Down => {
                    chi[var] = v.floor();
                    chi[var]
                }
                Direction::Up => {
                    clo[var] = v.ceil();
                    clo[var]
                }
            };
            let mut child = BnbNode {
                id: self.tree.next_id,
                parent: Some(node.id),
                depth: node.depth + 1,
                bounds: Vec::new(),
                lp_bound: node.lp_bound,
                estimate: node.lp_bound,
                lp_solution: Vec::new(),
                branch: Some(BranchInfo { var, dir, new_bound, parent_value: v }),
                basis: None,
            };
            self.tree.next_id += 1;
            self.tree.max_depth = self.tree.max_depth.max(child.depth);
            let Some(tightened) = propagate(self.inst, &mut clo, &mut chi) else {
                self.record(&child, &clo, &chi, NodeFate::PropagationInfeasible);
                continue;
            };
            self.tree.inferences.record(var, dir, tightened as f64);
            let lp = solve_lp(self.inst, &clo, &chi, node.basis.as_ref())?;
            self.tree.nodes_solved += 1;
            match lp.status {
                LpStatus::Infeasible => {
                    self.record(&child, &clo, &chi, NodeFate::LpInfeasible);
                    continue;
                }
                LpStatus::Unbounded => {
                    return Err(Error::NumericalBreakdown("child LP unbounded under a bounded parent".into()))
                }
                LpStatus::Optimal => {}
            }
            let step = (new_bound - v).abs();
            self.tree.pseudocosts.record(var, dir, (lp.objective - node.lp_bound).max(0.0) / step);
            child.lp_bound = lp.objective.max(node.lp_bound);
            child.lp_solution = lp.x;
            child.basis = lp.basis;
            if self.tree.prunable(child.lp_bound) {
                self.record(&child, &clo, &chi, NodeFate::Pruned);
                continue;
            }
            if self.integral(&child.lp_solution) {
                self.record(&child, &clo, &chi, NodeFate::Integral);
                let x = std::mem::take(&mut child.lp_solution);
                self.accept(&x);
                continue;
            }
            child.bounds = (0..self.inst.n)
                .filter(|&j| clo[j] != self.tree.root_lo[j] || chi[j] != self.tree.root_hi[j])
                .map(|j| (j, clo[j], chi[j]))
                .collect();
            child.estimate = self.tree.estimate_score(child.lp_bound, &child.lp_solution, self.inst.p);
            self.tree.frontier.push(child);
        }
        Ok(())
    }

    fn log_event(&mut self) {
        let e = BoundEvent {
            nodes: self.expanded,
            primal: self.tree.primal_or_cap(),
            dual: self.tree.global_lower_bound(),
            has_incumbent: self.tree.incumbent.is_some(),
        };
        self.tree.events.push(e);
    }

    fn finish(mut self, status: SolveStatus) -> SolveOutcome {
        if let Some(t) = self.trace.as_mut() {
            for n in &self.tree.frontier {
                let (lo, hi) = n.local_bounds(&self.tree.root_lo, &self.tree.root_hi);
                t.push(TraceEntry {
                    id: n.id,
                    parent: n.parent,
                    depth: n.depth,
                    lp_bound: n.lp_bound,
                    lo,
                    hi,
                    fate: NodeFate::Open,
                });
            }
        }
        let inc = self.tree.incumbent_value();
        let dual = self.tree.global_lower_bound();
        let final_gap = inc.map(|p| ((p - dual).max(0.0)) / p.abs().max(dual.abs()).max(1e-9));
        let stats = SolveStats {
            nodes: self.expanded,
            lps: self.tree.nodes_solved,
            pd_integral: pd_integral(&self.tree.events),
            final_gap,
            incumbent_value: inc,
            decisions: self.tree.decisions,
            max_depth: self.tree.max_depth,
        };
        SolveOutcome {
            status,
            solution: self.tree.incumbent.take().map(|i| i.0),
            stats,
            events: std::mem::take(&mut self.tree.events),
            trace: self.trace.unwrap_or_default(),
        }
    }
}

/// `sum gap_k * (nodes_{k+1} - nodes_k)` over consecutive events, with gaps
/// clamped at zero.
pub fn pd_integral(events: &[BoundEvent]) -> f64 {
    events
        .windows(2)
        .map(|w| (w[0].primal - w[0].dual).max(0.0) * (w[1].nodes - w[0].nodes) as f64)
        .sum()
}

/// Pseudocost product score; most fractional when no candidate has been
/// observed in either direction. Ties go to the lowest index.
pub fn branching_variable(tree: &SearchTree, node: &BnbNode, p: usize) -> Result<usize> {
    let cands = node.fractional_vars(p);
    if cands.is_empty() {
        return Err(Error::NoFractionalVariable);
    }
    let observed = cands.iter().any(|&j| {
        tree.pseudocosts.count(j, Direction::Down) > 0 || tree.pseudocosts.count(j, Direction::Up) > 0
    });
    let mut best = cands[0];
    let mut best_score = f64::NEG_INFINITY;
    for &j in &cands {
        let v = node.lp_solution[j];
        let f = v - v.floor();
        let score = if observed {
            let down = (tree.pseudocost(j, Direction::Down) * f).max(SCORE_EPS);
            let up = (tree.pseudocost(j, Direction::Up) * (1.0 - f)).max(SCORE_EPS);
            down * up
        } else {
            f.min(1.0 - f)
        };
        if score > best_score {
            best = j;
            best_score = score;
        }
    }
    Ok(best)
}
