use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::*;
use crate::error::Error;
use crate::expr::{ExprTree, LibraryMode, TokenLibrary};

fn brute_force(inst: &MilpInstance) -> Option<f64> {
    let n = inst.n;
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
        if inst.is_feasible(&x, 1e-9) {
            let v = inst.objective(&x);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

fn random_cover(rng: &mut StdRng, n: usize, m: usize) -> MilpInstance {
    let mut rows = Vec::new();
    for _ in 0..m {
        let mut cols: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
        while cols.len() < 2 {
            let j = rng.gen_range(0..n);
            if !cols.contains(&j) {
                cols.push(j);
            }
        }
        cols.sort();
        MilpInstance::push_row(&mut rows, cols.into_iter().map(|j| (j, 1.0)).collect(), Sense::Ge, 1.0);
    }
    let c = (0..n).map(|_| rng.gen_range(1..=100) as f64).collect();
    MilpInstance::new(n, c, vec![0.0; n], vec![1.0; n], rows).unwrap()
}

/// Mixed-sign rows, possibly infeasible.
fn random_general(rng: &mut StdRng, n: usize, m: usize) -> MilpInstance {
    let mut rows = Vec::new();
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.5) {
                coeffs.push((j, rng.gen_range(-9..=9) as f64));
            }
        }
        let sum_pos: f64 = coeffs.iter().map(|c| c.1.max(0.0)).sum();
        rows.push(Row { coeffs, rhs: (rng.gen_range(0.0..0.6) * sum_pos).round() });
    }
    let c = (0..n).map(|_| rng.gen_range(-20..=20) as f64).collect();
    MilpInstance::new(n, c, vec![0.0; n], vec![1.0; n], rows).unwrap()
}

fn builtins() -> Vec<Comparator> {
    vec![Comparator::Dfs, Comparator::Bfs, Comparator::BestFirst, Comparator::Estimate]
}

fn traced() -> SolveLimits {
    SolveLimits { record_trace: true, ..SolveLimits::default() }
}

fn node(id: usize, depth: usize, bound: f64) -> BnbNode {
    BnbNode {
        id,
        parent: None,
        depth,
        bounds: vec![],
        lp_bound: bound,
        estimate: bound,
        lp_solution: vec![0.5],
        branch: None,
        basis: None,
    }
}

fn tree_with(nodes: Vec<BnbNode>) -> SearchTree {
    let inst = MilpInstance::new(1, vec![1.0], vec![0.0], vec![1.0], vec![]).unwrap();
    let mut t = SearchTree::new(&inst);
    t.root_bound = Some(0.0);
    t.root_solution = vec![0.5];
    t.frontier = nodes;
    t
}

#[test]
fn branch_single_binary() {
    // min -x0 + x1 s.t. 2x0 - x1 <= 1 with x1 continuous: LP at (1/2, 0).
    let rows = vec![Row { coeffs: vec![(0, 2.0), (1, -1.0)], rhs: 1.0 }];
    let inst = MilpInstance::new(1, vec![-1.0, 1.0], vec![0.0; 2], vec![1.0; 2], rows).unwrap();
    let out = solve(&inst, &mut Comparator::BestFirst, &traced()).unwrap();
    let root = out.trace.iter().find(|t| t.id == 0).unwrap();
    assert!((root.lp_bound + 0.5).abs() < 1e-9);
    let children: Vec<_> = out.trace.iter().filter(|t| t.parent == Some(0)).collect();
    assert_eq!(children.len(), 2);
    assert_eq!((children[0].lo[0], children[0].hi[0]), (0.0, 0.0));
    assert_eq!((children[1].lo[0], children[1].hi[0]), (1.0, 1.0));
    // The up child ties the incumbent found by the down child.
    assert_eq!((children[0].fate, children[1].fate), (NodeFate::Integral, NodeFate::Pruned));
    assert_eq!(out.objective(), Some(0.0));
    assert_eq!(out.stats.nodes, 1);
}

#[test]
fn integral_solution_has_no_branching_variable() {
    let t = tree_with(vec![]);
    let mut n = node(0, 0, 0.0);
    n.lp_solution = vec![1.0];
    assert!(matches!(branching_variable(&t, &n, 1), Err(Error::NoFractionalVariable)));
}

#[test]
fn branch_three_variables_by_hand() {
    // min -5x0 - 4x1 - 3x2 s.t. 2x0 + 3x1 + x2 <= 5, 4x0 + x1 + 2x2 <= 11,
    // 3x0 + 4x1 + 2x2 <= 8, x binary. LP optimum (1, 2/3, 1) at -32/3; the
    // children fix x1 and reach (1, 0, 1) at -8 and (1/2, 1, 1) at -19/2.
    let rows = vec![
        Row { coeffs: vec![(0, 2.0), (1, 3.0), (2, 1.0)], rhs: 5.0 },
        Row { coeffs: vec![(0, 4.0), (1, 1.0), (2, 2.0)], rhs: 11.0 },
        Row { coeffs: vec![(0, 3.0), (1, 4.0), (2, 2.0)], rhs: 8.0 },
    ];
    let inst = MilpInstance::new(3, vec![-5.0, -4.0, -3.0], vec![0.0; 3], vec![1.0; 3], rows).unwrap();
    let out = solve(&inst, &mut Comparator::BestFirst, &traced()).unwrap();
    let root = out.trace.iter().find(|t| t.id == 0).unwrap();
    assert!((root.lp_bound + 32.0 / 3.0).abs() < 1e-9);
    let kids: Vec<_> = out.trace.iter().filter(|t| t.parent == Some(0)).collect();
    assert_eq!((kids[0].lo.clone(), kids[0].hi.clone()), (vec![0.0; 3], vec![1.0, 0.0, 1.0]));
    assert_eq!((kids[1].lo.clone(), kids[1].hi.clone()), (vec![0.0, 1.0, 0.0], vec![1.0; 3]));
    assert!((kids[0].lp_bound + 8.0).abs() < 1e-9);
    assert!((kids[1].lp_bound + 9.5).abs() < 1e-9);
    assert_eq!(out.objective(), Some(-9.0));
    assert_eq!(out.objective(), brute_force(&inst));
}

#[test]
fn integral_root_explores_one_node() {
    let rows = vec![Row { coeffs: vec![(0, -1.0), (1, -1.0)], rhs: -1.0 }];
    let inst = MilpInstance::new(2, vec![1.0, 2.0], vec![0.0; 2], vec![1.0; 2], rows).unwrap();
    for mut c in builtins() {
        let out = solve(&inst, &mut c, &SolveLimits::default()).unwrap();
        assert_eq!(out.stats.nodes, 1);
        assert_eq!(out.stats.decisions, 0);
        assert_eq!(out.objective(), Some(1.0));
        assert_eq!(out.stats.pd_integral, 0.0);
    }
}

#[test]
fn infeasible_instance() {
    let mut rows = vec![];
    MilpInstance::push_row(&mut rows, vec![(0, 2.0), (1, 2.0)], Sense::Eq, 1.0);
    let inst = MilpInstance::new(2, vec![1.0, 1.0], vec![0.0; 2], vec![1.0; 2], rows).unwrap();
    for mut c in builtins() {
        assert!(matches!(solve(&inst, &mut c, &SolveLimits::default()), Err(Error::Infeasible)));
    }
}

#[test]
fn select_singleton() {
    let mut t = tree_with(vec![node(7, 2, 1.0)]);
    assert_eq!(select_node(&mut t, &mut Comparator::Bfs).unwrap().id, 7);
    assert_eq!(t.decisions, 0);
    assert!(matches!(select_node(&mut t, &mut Comparator::Bfs), Err(Error::EmptyFrontier)));
}

#[test]
fn select_dfs_picks_deepest() {
    let mut t = tree_with(vec![node(0, 1, 0.0), node(1, 2, 0.0), node(2, 3, 0.0)]);
    assert_eq!(select_node(&mut t, &mut Comparator::Dfs).unwrap().depth, 3);
    assert_eq!(t.decisions, 2);
    assert_eq!(t.frontier.iter().map(|n| n.id).collect::<Vec<_>>(), vec![0, 1]);
}

#[test]
fn select_constant_expression_keeps_first() {
    let lib = TokenLibrary::new(LibraryMode::Pair, 10).unwrap();
    let tree = ExprTree::parse_symbols("0.5", &lib).unwrap();
    let mut c = Comparator::Expression { tree, mode: LibraryMode::Pair };
    let mut t = tree_with(vec![node(0, 1, 3.0), node(1, 2, 1.0), node(2, 3, 2.0)]);
    t.last_expanded = Some((9, None));
    assert_eq!(select_node(&mut t, &mut c).unwrap().id, 0);
}

/// Scripted comparator: answers from a queue and logs the pairs it saw.
struct Scripted {
    answers: Vec<Decision>,
    seen: Vec<(usize, usize)>,
}

impl NodeComparator for Scripted {
    fn compare(
        &mut self,
        _: &SearchTree,
        a: &BnbNode,
        b: &BnbNode,
        _: Option<(&crate::features::NodeFeatures, &crate::features::NodeFeatures)>,
    ) -> Decision {
        self.seen.push((a.id, b.id));
        self.answers.remove(0)
    }
}

#[test]
fn champion_scan_semantics() {
    use Decision::*;
    let mut t = tree_with((0..4).map(|i| node(i, 1, 0.0)).collect());
    let mut s = Scripted { answers: vec![Node2, Node1, Node2], seen: vec![] };
    let won = select_node(&mut t, &mut s).unwrap();
    assert_eq!(s.seen, vec![(0, 1), (1, 2), (1, 3)]);
    assert_eq!(won.id, 3);
    assert_eq!(t.decisions, 3);
}

#[test]
fn estimate_closed_forms() {
    let mut t = tree_with(vec![]);
    assert_eq!(t.estimate_score(4.0, &[1.0], 1), 4.0);
    t.pseudocosts.record(0, Direction::Down, 2.0);
    t.pseudocosts.record(0, Direction::Up, 2.0);
    assert_eq!(t.estimate_score(4.0, &[0.5], 1), 5.0);
    // Unobserved directions fall back to |c| = 1.
    let t = tree_with(vec![]);
    assert_eq!(t.estimate_score(4.0, &[0.25], 1), 4.25);
}

#[test]
fn estimate_matches_reference() {
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.gen_range(1..12);
        let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let inst = MilpInstance::new(n, c.clone(), vec![0.0; n], vec![3.0; n], vec![]).unwrap();
        let mut t = SearchTree::new(&inst);
        let mut sums = vec![[0.0f64; 2]; n];
        let mut counts = vec![[0u32; 2]; n];
        for _ in 0..rng.gen_range(0..30) {
            let j = rng.gen_range(0..n);
            let up = rng.gen_bool(0.5);
            let v = rng.gen_range(0.0..10.0);
            t.pseudocosts.record(j, if up { Direction::Up } else { Direction::Down }, v);
            sums[j][up as usize] += v;
            counts[j][up as usize] += 1;
        }
        let x: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { 1.0 } else { rng.gen_range(0.0..3.0) }).collect();
        let bound = rng.gen_range(-10.0..10.0);
        let pc = |j: usize, k: usize| if counts[j][k] > 0 { sums[j][k] / counts[j][k] as f64 } else { c[j].abs() };
        let mut want = bound;
        for j in 0..n {
            let f = x[j] - x[j].floor();
            if f > 1e-6 && f < 1.0 - 1e-6 {
                want += (pc(j, 0) * f).min(pc(j, 1) * (1.0 - f));
            }
        }
        assert!((t.estimate_score(bound, &x, n) - want).abs() < 1e-12);
    }
}

#[test]
fn exact_on_random_covers() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.gen_range(4..=12);
        let m = rng.gen_range(3..10);
        let inst = random_cover(&mut rng, n, m);
        let want = brute_force(&inst).unwrap();
        let mut nodes = vec![];
        for mut c in builtins() {
            let out = solve(&inst, &mut c, &SolveLimits::default()).unwrap();
            assert_eq!(out.status, SolveStatus::Optimal);
            assert!((out.objective().unwrap() - want).abs() < 1e-6, "{} on {:?}", c.name(), inst);
            assert!(inst.is_feasible(out.solution.as_ref().unwrap(), 1e-6));
            nodes.push(out.stats.nodes);
        }
        assert!(nodes.iter().all(|&k| k >= 1));
    }
}

#[test]
fn node_limit_returns_best_so_far() {
    let mut rng = StdRng::seed_from_u64(5);
    let inst = (0..500).map(|_| random_general(&mut rng, 10, 4)).find(|i| {
        solve(i, &mut Comparator::Bfs, &SolveLimits::default()).is_ok_and(|o| o.stats.nodes > 3)
    });
    let inst = inst.expect("some cover needs branching");
    let lim = SolveLimits { node_limit: Some(2), ..SolveLimits::default() };
    let out = solve(&inst, &mut Comparator::Bfs, &lim).unwrap();
    assert_eq!(out.status, SolveStatus::NodeLimit);
    assert_eq!(out.stats.nodes, 2);
}

#[test]
fn pd_integral_by_hand() {
    let e = |nodes, primal, dual| BoundEvent { nodes, primal, dual, has_incumbent: true };
    let events = [e(1, 10.0, 4.0), e(3, 8.0, 5.0), e(4, 8.0, 9.0), e(6, 8.0, 8.0)];
    assert_eq!(pd_integral(&events), 6.0 * 2.0 + 3.0 * 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_and_sound_on_general_rows(seed in any::<u64>(), n in 2usize..=10, m in 1usize..6) {
        let mut rng = StdRng::seed_from_u64(seed);
        let inst = random_general(&mut rng, n, m);
        let want = brute_force(&inst);
        for mut c in builtins() {
            match (solve(&inst, &mut c, &traced()), want) {
                (Err(Error::Infeasible), None) => {}
                (Ok(out), Some(w)) => {
                    let got = out.objective().unwrap();
                    prop_assert!((got - w).abs() < 1e-6, "{} got {} want {}", c.name(), got, w);
                    check_trace(&inst, &out, got)?;
                    check_events(&out)?;
                }
                (r, w) => prop_assert!(false, "{}: {:?} vs {:?}", c.name(), r.map(|o| o.objective()), w),
            }
        }
    }

    #[test]
    fn dfs_selects_a_deepest_node(depths in prop::collection::vec(0usize..8, 1..12)) {
        let nodes = depths.iter().enumerate().map(|(i, &d)| node(i, d, (i % 3) as f64)).collect();
        let mut t = tree_with(nodes);
        let got = select_node(&mut t, &mut Comparator::Dfs).unwrap();
        prop_assert_eq!(got.depth, *depths.iter().max().unwrap());
    }
}

/// Bounds never decrease from parent to child, and no pruned or
/// infeasible box holds anything better than the final incumbent.
fn check_trace(inst: &MilpInstance, out: &SolveOutcome, best: f64) -> Result<(), TestCaseError> {
    for t in &out.trace {
        if let Some(p) = t.parent {
            let parent = out.trace.iter().find(|e| e.id == p).unwrap();
            if !matches!(t.fate, NodeFate::LpInfeasible | NodeFate::PropagationInfeasible) {
                prop_assert!(t.lp_bound >= parent.lp_bound - 1e-6);
            }
            prop_assert_eq!(t.depth, parent.depth + 1);
        }
        if t.fate != NodeFate::Expanded {
            let mut boxed = inst.clone();
            boxed.lo = t.lo.clone();
            boxed.hi = t.hi.clone();
            if let Some(v) = brute_force(&boxed) {
                prop_assert!(v >= best - 1e-6, "{:?} box holds {} < {}", t.fate, v, best);
            }
        }
    }
    Ok(())
}

fn check_events(out: &SolveOutcome) -> Result<(), TestCaseError> {
    prop_assert!(out.stats.pd_integral >= 0.0);
    for w in out.events.windows(2) {
        prop_assert!(w[1].dual >= w[0].dual - 1e-9);
        prop_assert!(w[1].nodes > w[0].nodes);
        if w[0].has_incumbent {
            prop_assert!(w[1].primal <= w[0].primal);
            prop_assert!(w[1].primal - w[1].dual <= w[0].primal - w[0].dual + 1e-9);
        }
    }
    for e in out.events.iter().filter(|e| e.has_incumbent) {
        prop_assert!(e.dual <= e.primal + 1e-6);
    }
    Ok(())
}
