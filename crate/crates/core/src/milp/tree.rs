use super::instance::MilpInstance;
use super::lp::{Basis, INT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Down,
    Up,
}

/// The bound change that created a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchInfo {
    pub var: usize,
    pub dir: Direction,
    pub new_bound: f64,
    /// Value of `var` in the parent's LP solution.
    pub parent_value: f64,
}

#[derive(Debug, Clone)]
pub struct BnbNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// `(var, lo, hi)` for every variable whose bounds differ from the
    /// root's, sorted by variable.
    pub bounds: Vec<(usize, f64, f64)>,
    pub lp_bound: f64,
    pub estimate: f64,
    pub lp_solution: Vec<f64>,
    pub branch: Option<BranchInfo>,
    pub basis: Option<Basis>,
}

impl BnbNode {
    /// Full local bound vectors.
    pub fn local_bounds(&self, root_lo: &[f64], root_hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut lo = root_lo.to_vec();
        let mut hi = root_hi.to_vec();
        for &(j, l, h) in &self.bounds {
            lo[j] = l;
            hi[j] = h;
        }
        (lo, hi)
    }

    /// True when `x` satisfies every local bound of this node.
    pub fn contains(&self, x: &[f64], root_lo: &[f64], root_hi: &[f64]) -> bool {
        let ok = |j: usize, lo: f64, hi: f64| x[j] >= lo - INT_TOL && x[j] <= hi + INT_TOL;
        (0..x.len()).all(|j| {
            match self.bounds.binary_search_by_key(&j, |b| b.0) {
                Ok(k) => ok(j, self.bounds[k].1, self.bounds[k].2),
                Err(_) => ok(j, root_lo[j], root_hi[j]),
            }
        })
    }

    pub fn fractional_vars(&self, p: usize) -> Vec<usize> {
        (0..p).filter(|&j| is_fractional(self.lp_solution[j])).collect()
    }
}

pub fn is_fractional(v: f64) -> bool {
    (v - v.round()).abs() > INT_TOL
}

/// Running averages per variable and direction.
#[derive(Debug, Clone, Default)]
pub struct DirectionalStats {
    sum: [Vec<f64>; 2],
    count: [Vec<u32>; 2],
}

fn slot(dir: Direction) -> usize {
    match dir {
        Direction::Down => 0,
        Direction::Up => 1,
    }
}

impl DirectionalStats {
    pub fn new(n: usize) -> Self {
        Self { sum: [vec![0.0; n], vec![0.0; n]], count: [vec![0; n], vec![0; n]] }
    }

    pub fn record(&mut self, var: usize, dir: Direction, value: f64) {
        self.sum[slot(dir)][var] += value;
        self.count[slot(dir)][var] += 1;
    }

    pub fn count(&self, var: usize, dir: Direction) -> u32 {
        self.count[slot(dir)][var]
    }

    pub fn mean(&self, var: usize, dir: Direction) -> Option<f64> {
        let c = self.count(var, dir);
        (c > 0).then(|| self.sum[slot(dir)][var] / c as f64)
    }
}

/// One expansion event on the node-count axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundEvent {
    pub nodes: usize,
    pub primal: f64,
    pub dual: f64,
    /// False while `primal` is still the configured cap.
    pub has_incumbent: bool,
}

/// Mutable solver state shared with comparators and feature extraction.
#[derive(Debug, Clone)]
pub struct SearchTree {
    pub root_lo: Vec<f64>,
    pub root_hi: Vec<f64>,
    pub cost_abs: Vec<f64>,
    pub frontier: Vec<BnbNode>,
    pub incumbent: Option<(Vec<f64>, f64)>,
    pub root_bound: Option<f64>,
    pub root_solution: Vec<f64>,
    pub pseudocosts: DirectionalStats,
    pub inferences: DirectionalStats,
    pub max_depth: usize,
    /// Consecutive selections of a direct child of the previously expanded node.
    pub plunge_depth: usize,
    /// `(id, parent)` of the most recently expanded node.
    pub last_expanded: Option<(usize, Option<usize>)>,
    pub events: Vec<BoundEvent>,
    pub nodes_solved: usize,
    pub decisions: usize,
    pub next_id: usize,
    pub primal_cap: f64,
}

impl SearchTree {
    pub fn new(inst: &MilpInstance) -> Self {
        Self {
            root_lo: inst.lo.clone(),
            root_hi: inst.hi.clone(),
            cost_abs: inst.c.iter().map(|c| c.abs()).collect(),
            frontier: Vec::new(),
            incumbent: None,
            root_bound: None,
            root_solution: Vec::new(),
            pseudocosts: DirectionalStats::new(inst.n),
            inferences: DirectionalStats::new(inst.n),
            max_depth: 0,
            plunge_depth: 0,
            last_expanded: None,
            events: Vec::new(),
            nodes_solved: 0,
            decisions: 0,
            next_id: 0,
            primal_cap: f64::INFINITY,
        }
    }

    pub fn incumbent_value(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|i| i.1)
    }

    /// Smallest open bound; the incumbent value once the frontier is empty.
    pub fn global_lower_bound(&self) -> f64 {
        let open = self.frontier.iter().map(|n| n.lp_bound).fold(f64::INFINITY, f64::min);
        if open.is_finite() {
            open
        } else {
            self.incumbent_value().or(self.root_bound).unwrap_or(f64::NEG_INFINITY)
        }
    }

    /// Pseudocost per unit change, falling back to `|c_j|` before the first
    /// observation.
    pub fn pseudocost(&self, var: usize, dir: Direction) -> f64 {
        self.pseudocosts.mean(var, dir).unwrap_or(self.cost_abs[var])
    }

    /// LP bound plus the cheapest predicted repair of every fractional
    /// integer variable.
    pub fn estimate_score(&self, lp_bound: f64, lp_solution: &[f64], p: usize) -> f64 {
        let mut est = lp_bound;
        for (j, &v) in lp_solution.iter().enumerate().take(p) {
            if is_fractional(v) {
                let f = v - v.floor();
                est += (self.pseudocost(j, Direction::Down) * f).min(self.pseudocost(j, Direction::Up) * (1.0 - f));
            }
        }
        est
    }

    /// Whether a node with this bound can be discarded.
    pub fn prunable(&self, bound: f64) -> bool {
        match self.incumbent_value() {
            Some(inc) => bound >= inc - 1e-6 * inc.abs().max(1.0),
            None => false,
        }
    }

    pub fn primal_or_cap(&self) -> f64 {
        self.incumbent_value().unwrap_or(self.primal_cap)
    }
}
