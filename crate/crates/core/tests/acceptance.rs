//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p symnode-core --test acceptance -- 1 4`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use symnode_core::expert::{solve_to_optimal, Expert};
use symnode_core::expr::{valid_next_tokens, ExprNode, Extension};
use symnode_core::gen::{Family, GenConfig, SetcoverConfig};
use symnode_core::milp::{Row, Sense};
use symnode_core::pipeline::{run_all, PipelineConfig, Paths};
use symnode_core::policy::{
    accumulate_gradient, log_likelihood, sample_batch, trace_sequence, PolicyNet, SamplerConfig,
};
use symnode_core::stats::shifted_geometric_mean;
use symnode_core::train::{
    compute_reward, ppo_loss, risk_filter, synthetic_dataset, PpoParams, RewardRecord,
};
use symnode_core::{
    solve, Comparator, Error, ExprTree, LibraryMode, MilpInstance, Op, SolveLimits, Split, Token, TokenLibrary,
    TrainerConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(limit_secs: u64, t0: Instant) -> (bool, String) {
    let e = t0.elapsed();
    (e <= Duration::from_secs(limit_secs), format!("{:.1}s of {limit_secs}s", e.as_secs_f64()))
}

// ------------------------------------------------------------------ 1

/// Uniform random walk over the sampling mask.
fn random_sequence(lib: &TokenLibrary, rng: &mut impl Rng) -> Vec<usize> {
    let mut seq = Vec::new();
    loop {
        let mask = valid_next_tokens(&seq, lib).unwrap();
        let open: Vec<usize> = (0..lib.len()).filter(|&i| mask[i]).collect();
        seq.push(open[rng.gen_range(0..open.len())]);
        let toks: Vec<Token> = seq.iter().map(|&i| lib.token(i)).collect();
        if ExprTree::parse_prefix(&toks, lib).is_ok() {
            return seq;
        }
    }
}

/// Reference interpreter written from the protected-operator definitions.
fn oracle(node: &ExprNode, x: &[f64]) -> f64 {
    let cap = |v: f64| v.clamp(-1e100, 1e100);
    let eps = 1e-9;
    let v = match node.token {
        Token::Var(i) => x[i - 1],
        Token::Const(c) => c,
        Token::Op(op) => {
            let a = oracle(&node.children[0], x);
            let b = node.children.get(1).map(|c| oracle(c, x)).unwrap_or(0.0);
            match op {
                Op::Add => a + b,
                Op::Sub => a - b,
                Op::Mul => a * b,
                Op::Div => {
                    if b < 0.0 {
                        a / -(b.abs().max(eps))
                    } else {
                        a / b.max(eps)
                    }
                }
                Op::Log => (a.abs() + eps).ln(),
                Op::Exp => a.max(-50.0).min(50.0).exp(),
                Op::Pow => a * a,
                Op::Sin => a.sin(),
                Op::Cos => a.cos(),
            }
        }
    };
    cap(v)
}

fn fuzz_vector(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| match rng.gen_range(0..6) {
            0 => 0.0,
            1 => -rng.gen_range(0.0..1e-6),
            2 => rng.gen_range(-1e6..1e6),
            3 => rng.gen_range(-1e300..1e300),
            _ => rng.gen_range(-5.0..5.0),
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let libs = [
        TokenLibrary::new(LibraryMode::Pair, 10).unwrap(),
        TokenLibrary::new(LibraryMode::Symmetric, 10).unwrap(),
        TokenLibrary::with_extensions(LibraryMode::Pair, 10, &[Extension::Trig, Extension::ConstGrid]).unwrap(),
    ];
    let (mut round_trip_bad, mut oracle_bad, mut non_finite, mut evals) = (0, 0, 0, 0);
    for k in 0..10_000 {
        let lib = &libs[k % libs.len()];
        let seq = random_sequence(lib, &mut rng);
        let toks: Vec<Token> = seq.iter().map(|&i| lib.token(i)).collect();
        let t = ExprTree::parse_prefix(&toks, lib).unwrap();
        let again = ExprTree::parse_prefix(&t.to_prefix(), lib).unwrap();
        if t.to_prefix() != toks || again.root() != t.root() || t.len() > 10 {
            round_trip_bad += 1;
        }
        let n = lib.mode().n_vars();
        for _ in 0..3 {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let (got, want) = (t.evaluate(&x).unwrap(), oracle(t.root(), &x));
            if (got - want).abs() > 1e-12 * want.abs().max(1.0) {
                oracle_bad += 1;
            }
            let f = fuzz_vector(&mut rng, n);
            if !t.evaluate(&f).unwrap().is_finite() {
                non_finite += 1;
            }
            evals += 2;
        }
    }
    let (fast, time) = within(60, t0);
    outcome(
        round_trip_bad == 0 && oracle_bad == 0 && non_finite == 0 && fast,
        format!("10000 trees: round-trip failures {round_trip_bad}, oracle mismatches {oracle_bad}, non-finite {non_finite} over {evals} evaluations; {time}"),
    )
}

// ------------------------------------------------------------------ 2

fn criterion_2() -> Outcome {
    let t0 = Instant::now();
    let lib = TokenLibrary::new(LibraryMode::Pair, 10).unwrap();
    let cfg = SamplerConfig::with_default_prior();
    let net = PolicyNet::new(lib.len(), 32, 7);
    let mut invalid = 0;
    let mut worst_ll = 0.0f64;
    for chunk in 0..20u64 {
        let batch = sample_batch(&net, &lib, &cfg, 5_000, chunk);
        for s in &batch.samples {
            let toks: Vec<Token> = s.tokens.iter().map(|&i| lib.token(i)).collect();
            if s.tokens.len() > 10 || ExprTree::parse_prefix(&toks, &lib).is_err() {
                invalid += 1;
            }
            let replay = log_likelihood(&net, &lib, &cfg, &s.tokens).unwrap();
            let sum: f64 = s.log_probs.iter().sum();
            worst_ll = worst_ll.max((replay - s.log_likelihood).abs()).max((sum - s.log_likelihood).abs());
        }
    }

    // Finite differences on a probe net: d/dθ [log p(seq) + Σ e_t H_t].
    let probe_lib = TokenLibrary::from_tokens(
        vec![Token::Op(Op::Add), Token::Op(Op::Log), Token::Var(1), Token::Const(0.5)],
        6,
        LibraryMode::Pair,
    )
    .unwrap();
    let probe = PolicyNet::new(probe_lib.len(), 3, 11);
    let seqs = [vec![0, 1, 2, 3], vec![1, 1, 2], vec![0, 2, 3]];
    let ent = [0.4, 0.3, 0.2, 0.1];
    let objective = |n: &PolicyNet, seq: &[usize]| {
        let tr = trace_sequence(n, &probe_lib, &cfg, seq, false).unwrap();
        tr.log_likelihood() + tr.entropies.iter().zip(ent).map(|(h, e)| h * e).sum::<f64>()
    };
    let mut worst_rel = 0.0f64;
    for seq in &seqs {
        let mut grad = vec![0.0; probe.n_params()];
        accumulate_gradient(&probe, &probe_lib, &cfg, seq, 1.0, &ent, &mut grad).unwrap();
        // Five-point stencil keeps truncation and rounding both near 1e-12.
        let h = 1e-4;
        for i in 0..probe.n_params() {
            let at = |d: f64| {
                let mut p = probe.clone();
                p.params_mut()[i] += d;
                objective(&p, seq)
            };
            let fd = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
            let scale = grad[i].abs().max(fd.abs());
            if scale > 1e-7 {
                worst_rel = worst_rel.max((grad[i] - fd).abs() / scale);
            }
        }
    }
    let (fast, time) = within(300, t0);
    outcome(
        invalid == 0 && worst_ll <= 1e-10 && worst_rel <= 1e-4 && fast,
        format!(
            "100000 draws: invalid {invalid}, worst likelihood drift {worst_ll:.1e}; gradient worst relative error {worst_rel:.1e} over {} params; {time}",
            probe.n_params()
        ),
    )
}

// ------------------------------------------------------------------ 3

/// Keep the `ceil(eps K)` largest values and everything tied with the last.
fn sort_oracle(r: &[f64], eps_milli: usize) -> (Vec<usize>, f64) {
    let k = r.len();
    let top = ((eps_milli * k).div_ceil(1000)).clamp(1, k);
    let mut sorted = r.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let q = sorted[top - 1];
    ((0..k).filter(|&i| r[i] >= q).collect(), q)
}

fn criterion_3() -> Outcome {
    let mut rng = StdRng::seed_from_u64(3);
    let mut filter_bad = 0;
    for _ in 0..10_000 {
        let k = rng.gen_range(1..=600);
        let levels = rng.gen_range(2..50);
        let r: Vec<f64> = (0..k).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect();
        let eps_milli = rng.gen_range(1..1000);
        if risk_filter(&r, eps_milli as f64 / 1000.0) != sort_oracle(&r, eps_milli) {
            filter_bad += 1;
        }
    }

    let lib = TokenLibrary::new(LibraryMode::Pair, 10).unwrap();
    let net = PolicyNet::new(lib.len(), 16, 5);
    let cfg = SamplerConfig::with_default_prior();
    let batch = sample_batch(&net, &lib, &cfg, 200, 9);
    let rewards: Vec<f64> = (0..200).map(|_| rng.gen_range(0..20) as f64 / 20.0).collect();
    let (kept, q) = risk_filter(&rewards, 0.2);
    let records: Vec<RewardRecord> = batch
        .samples
        .iter()
        .zip(&rewards)
        .map(|(s, &r)| RewardRecord {
            tree: s.to_tree(&lib),
            tokens: s.tokens.clone(),
            reward: r,
            old_log_likelihood: s.log_likelihood,
            advantage: r - q,
        })
        .collect();
    let params = PpoParams { clip: 0.2, entropy_weight: 0.005, entropy_gamma: 0.9 };
    let mut full = vec![0.0; net.n_params()];
    ppo_loss(&net, &lib, &cfg, &records, &kept, &params, &mut full).unwrap();
    // Gradient built from the kept records alone must be bit-identical.
    let only: Vec<RewardRecord> = kept.iter().map(|&i| records[i].clone()).collect();
    let mut alone = vec![0.0; net.n_params()];
    ppo_loss(&net, &lib, &cfg, &only, &(0..only.len()).collect::<Vec<_>>(), &params, &mut alone).unwrap();
    let filtered_zero = full == alone && kept.len() < records.len();

    // An active clip branch: ratio 1.5 with positive advantage, no entropy.
    let s = &batch.samples[0];
    let no_ent = PpoParams { entropy_weight: 0.0, ..params };
    let mut clip_zero = true;
    for (ratio, adv) in [(1.5, 0.3), (0.5, -0.3), (1.25, 1.0), (0.7, -2.0)] {
        let rec = RewardRecord {
            tree: s.to_tree(&lib),
            tokens: s.tokens.clone(),
            reward: 0.0,
            old_log_likelihood: s.log_likelihood - f64::ln(ratio),
            advantage: adv,
        };
        let mut g = vec![0.0; net.n_params()];
        ppo_loss(&net, &lib, &cfg, &[rec], &[0], &no_ent, &mut g).unwrap();
        clip_zero &= g.iter().all(|&v| v == 0.0);
    }
    outcome(
        filter_bad == 0 && filtered_zero && clip_zero,
        format!(
            "10000 vectors: oracle mismatches {filter_bad}; filtered samples add zero gradient: {filtered_zero}; active clip gives zero gradient: {clip_zero}"
        ),
    )
}

// ------------------------------------------------------------------ 4

fn small_instance(rng: &mut StdRng) -> MilpInstance {
    let n = rng.gen_range(3..=12);
    let m = rng.gen_range(1..=8);
    let mut rows = Vec::new();
    let cover = rng.gen_bool(0.5);
    for _ in 0..m {
        if cover {
            let mut cols: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.35)).collect();
            if cols.is_empty() {
                cols.push(rng.gen_range(0..n));
            }
            MilpInstance::push_row(&mut rows, cols.into_iter().map(|j| (j, 1.0)).collect(), Sense::Ge, 1.0);
        } else {
            let mut coeffs = Vec::new();
            for j in 0..n {
                if rng.gen_bool(0.6) {
                    coeffs.push((j, rng.gen_range(-9..=9) as f64));
                }
            }
            let pos: f64 = coeffs.iter().map(|c| c.1.max(0.0)).sum();
            rows.push(Row { coeffs, rhs: (rng.gen_range(-0.2..0.7) * pos).round() });
        }
    }
    let c = (0..n)
        .map(|_| if cover { rng.gen_range(1..=50) as f64 } else { rng.gen_range(-20..=20) as f64 })
        .collect();
    MilpInstance::new(n, c, vec![0.0; n], vec![1.0; n], rows).unwrap()
}

fn enumerate(inst: &MilpInstance) -> Option<f64> {
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << inst.n) {
        let x: Vec<f64> = (0..inst.n).map(|j| ((mask >> j) & 1) as f64).collect();
        if inst.is_feasible(&x, 1e-9) {
            let v = inst.objective(&x);
            best = Some(best.map_or(v, |b| b.min(v)));
        }
    }
    best
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let mut rng = StdRng::seed_from_u64(4);
    let lib = TokenLibrary::new(LibraryMode::Pair, 10).unwrap();
    let constant = ExprTree::parse_symbols("0.5", &lib).unwrap();
    let (mut mismatches, mut infeasible) = (0, 0);
    let mut first_bad = String::new();
    for k in 0..100 {
        let inst = small_instance(&mut rng);
        let truth = enumerate(&inst);
        infeasible += truth.is_none() as usize;
        let mut comps = vec![
            ("dfs", Comparator::Dfs),
            ("bfs", Comparator::Bfs),
            ("bestfirst", Comparator::BestFirst),
            ("estimate", Comparator::Estimate),
            ("constant", Comparator::Expression { tree: constant.clone(), mode: LibraryMode::Pair }),
        ];
        let mut results: Vec<(&str, Option<f64>)> = comps
            .iter_mut()
            .map(|(name, c)| (*name, solve(&inst, c, &SolveLimits::default()).ok().and_then(|o| o.objective())))
            .collect();
        let expert = match solve_to_optimal(&inst, None) {
            Ok(x) => solve(&inst, &mut Expert::new(x), &SolveLimits::default()).unwrap().objective(),
            Err(Error::Infeasible) => None,
            Err(e) => panic!("{e}"),
        };
        results.push(("expert", expert));
        for (name, got) in results {
            let same = match (got, truth) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-6,
                (None, None) => true,
                _ => false,
            };
            if !same {
                mismatches += 1;
                if first_bad.is_empty() {
                    first_bad = format!(" (first: instance {k}, {name}: {got:?} vs {truth:?})");
                }
            }
        }
    }
    let (fast, time) = within(600, t0);
    outcome(
        mismatches == 0 && fast,
        format!("100 instances ({infeasible} infeasible) x 6 comparators: {mismatches} mismatches{first_bad}; {time}"),
    )
}

// ------------------------------------------------------------------ 6, 9

fn recovery(extensions: &[Extension]) -> (f64, ExprTree, Duration) {
    let t0 = Instant::now();
    let lib = TokenLibrary::with_extensions(LibraryMode::Pair, 10, extensions).unwrap();
    let truth = ExprTree::parse_symbols("+ - x19 x39 0.2", &lib).unwrap();
    let train = synthetic_dataset(&truth, LibraryMode::Pair, 2000, 0, Split::Train).unwrap();
    let val = synthetic_dataset(&truth, LibraryMode::Pair, 1000, 0, Split::Val).unwrap();
    let cfg = TrainerConfig {
        batch_size: 500,
        iterations: 300,
        risk_eps: 0.2,
        learning_rate: 1e-3,
        stop_at_reward: Some(1.0),
        seed: 0,
        ..TrainerConfig::default()
    };
    let mut net = PolicyNet::new(lib.len(), cfg.hidden, cfg.seed);
    let report = symnode_core::train(&mut net, &lib, &train, &val, &cfg).unwrap();
    let acc = compute_reward(&report.best.tree, &val, LibraryMode::Pair).unwrap();
    (acc, report.best.tree, t0.elapsed())
}

fn criterion_6() -> Outcome {
    let (acc, tree, took) = recovery(&[]);
    outcome(
        acc >= 0.99 && took <= Duration::from_secs(1800),
        format!("recovered `{}` with validation accuracy {acc:.4} in {:.0}s", tree.render(), took.as_secs_f64()),
    )
}

fn criterion_9() -> Outcome {
    let (acc, tree, took) = recovery(&[Extension::Trig]);
    let trig = tree.uses_op(Op::Sin) || tree.uses_op(Op::Cos);
    outcome(
        acc >= 0.99 && !trig,
        format!(
            "with sin/cos: `{}`, validation accuracy {acc:.4}, trigonometric token: {trig}, {:.0}s",
            tree.render(),
            took.as_secs_f64()
        ),
    )
}

// ------------------------------------------------------------------ 5, 7, 8

fn desk_config(root: &Path) -> PipelineConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut cfg: PipelineConfig = toml::from_str(&text).unwrap();
    cfg.paths = Paths::under(root);
    cfg
}

fn desk_checks() -> Vec<(usize, Outcome)> {
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    assert_eq!(cfg.corpus.generator.family, Family::Setcover);
    let run = run_all(&cfg, false).unwrap();
    let eval = &run.eval;
    let dfs = eval.nodes_of("dfs");
    let expert = eval.nodes_of("expert");
    let est = eval.nodes_of("estimate");
    let learned = eval.nodes_of("learned");
    let n = dfs.len();

    let dominated = expert.iter().zip(&dfs).filter(|(e, d)| e <= d).count();
    let c5 = outcome(
        n >= 30 && dominated as f64 >= 0.7 * n as f64,
        format!("expert <= DFS nodes on {dominated}/{n} desk setcover instances"),
    );

    let acc = eval.summary_of("learned").and_then(|s| s.accuracy).unwrap();
    let base = eval.constant_baseline.unwrap();
    let c7 = outcome(
        acc >= 0.85 && acc >= base + 0.10,
        format!(
            "learned `{}` held-out accuracy {acc:.4}, constant baseline {base:.4}",
            run.train.expression.render()
        ),
    );

    let wins = learned.iter().zip(&est).filter(|(l, e)| l < e).count();
    let ties = learned.iter().zip(&est).filter(|(l, e)| l == e).count();
    let f = |v: &[usize]| shifted_geometric_mean(&v.iter().map(|&x| x as f64).collect::<Vec<_>>(), 1.0);
    let (sgm_l, sgm_e) = (f(&learned), f(&est));
    let c8 = outcome(
        sgm_l < sgm_e && wins as f64 >= 0.6 * n as f64,
        format!(
            "learned fewer nodes than Estimate on {wins}/{n} (ties {ties}); node SGM learned {sgm_l:.2} vs Estimate {sgm_e:.2}"
        ),
    );
    vec![(5, c5), (7, c7), (8, c8)]
}

// ------------------------------------------------------------------ 10

fn small_pipeline(root: &Path) -> PipelineConfig {
    let mut cfg = desk_config(root);
    cfg.seed = 10;
    cfg.corpus.train = 10;
    cfg.corpus.val = 4;
    cfg.corpus.test = 6;
    cfg.corpus.generator = GenConfig {
        setcover: SetcoverConfig { rows: 150, cols: 120, ..cfg.corpus.generator.setcover },
        ..cfg.corpus.generator
    };
    cfg.trainer.batch_size = 100;
    cfg.trainer.iterations = 20;
    cfg
}

fn criterion_10() -> Outcome {
    let fingerprint = |root: &Path| -> Vec<String> {
        let cfg = small_pipeline(root);
        let run = run_all(&cfg, false).unwrap();
        let p = &cfg.paths;
        let mut files = vec![p.manifest(), p.expression(), p.checkpoint()];
        files.extend([Split::Train, Split::Val, Split::Test].map(|s| p.dataset(s)));
        let mut out = vec![run.eval.hash()];
        out.extend(files.iter().map(|f| symnode_core::util::sha256_hex(&std::fs::read(f).unwrap())));
        out
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ha, hb) = (fingerprint(a.path()), fingerprint(b.path()));
    let same = ha == hb;
    outcome(same, format!("report hash {} vs {}; artifacts identical: {same}", &ha[0][..12], &hb[0][..12]))
}

// ------------------------------------------------------------------

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |k: usize| wanted.is_empty() || wanted.contains(&k);
    let single: [(usize, fn() -> Outcome); 7] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (6, criterion_6),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let guard = |f: &dyn Fn() -> Vec<(usize, Outcome)>, ids: &[usize]| -> Vec<(usize, Outcome)> {
        let t0 = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            ids.iter().map(|&k| (k, outcome(false, format!("panicked: {msg}")))).collect()
        });
        for (k, o) in &out {
            println!(
                "criterion {k:>2}: {}  {}  [{:.1}s]",
                if o.pass { "PASS" } else { "FAIL" },
                o.detail,
                t0.elapsed().as_secs_f64()
            );
        }
        out
    };
    for (k, f) in single {
        if want(k) {
            results.extend(guard(&|| vec![(k, f())], &[k]));
        }
    }
    if [5, 7, 8].iter().any(|&k| want(k)) {
        results.extend(guard(&desk_checks, &[5, 7, 8]).into_iter().filter(|(k, _)| want(*k)));
    }
    results.sort_by_key(|r| r.0);
    let failed: Vec<usize> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!("acceptance: {} passed, {} failed {:?}", results.len() - failed.len(), failed.len(), failed);
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
