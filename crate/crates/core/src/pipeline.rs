//! The gen, collect, train and eval stages behind the command-line tool.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{check_disjoint, Dataset, Split};
use crate::error::{Error, Result};
use crate::expert::{collect, solve_to_optimal, CollectReport, Expert};
use crate::expr::{read_expressions, write_expressions, Extension, ExprTree, LibraryMode, TokenLibrary, DEFAULT_MAX_LENGTH};
use crate::features::N_NODE_FEATURES;
use crate::gen::{manifest_tsv, parse_manifest, CorpusConfig, ManifestEntry};
use crate::milp::{solve, Comparator, Decision, MilpInstance, SolveLimits, SolveStatus};
use crate::policy::PolicyNet;
use crate::stats::{mean, shifted_geometric_mean, std_dev};
use crate::train::{compute_reward, train_with, TrainerConfig};
use crate::util::{sha256_hex, write_atomic};

const CHECKPOINT_EVERY: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: PathBuf,
    pub datasets: PathBuf,
    pub model: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self::under(Path::new("work"))
    }
}

impl Paths {
    pub fn under(root: &Path) -> Self {
        Self {
            corpus: root.join("corpus"),
            datasets: root.join("datasets"),
            model: root.join("model"),
            reports: root.join("reports"),
        }
    }

    pub fn manifest(&self) -> PathBuf {
        self.corpus.join("manifest.tsv")
    }

    pub fn instance(&self, id: &str) -> PathBuf {
        self.corpus.join(format!("{id}.json"))
    }

    pub fn dataset(&self, split: Split) -> PathBuf {
        self.datasets.join(format!("{split}.data"))
    }

    pub fn expression(&self) -> PathBuf {
        self.model.join("best.expr")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.model.join("policy.ckpt")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibraryConfig {
    pub mode: LibraryMode,
    pub max_length: usize,
    pub extensions: Vec<Extension>,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self { mode: LibraryMode::Pair, max_length: DEFAULT_MAX_LENGTH, extensions: vec![] }
    }
}

impl LibraryConfig {
    pub fn build(&self) -> Result<TokenLibrary> {
        TokenLibrary::with_extensions(self.mode, self.max_length, &self.extensions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectConfig {
    pub node_limit: Option<usize>,
}

impl Default for CollectConfig {
    fn default() -> Self {
        Self { node_limit: Some(50_000) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub node_limit: Option<usize>,
    /// Comparator specs; see [`ComparatorSpec`].
    pub comparators: Vec<String>,
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            node_limit: Some(50_000),
            comparators: ["dfs", "bfs", "bestfirst", "estimate", "expert", "learned"].map(String::from).to_vec(),
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed for the corpus and the trainer; replaces `trainer.seed`.
    pub seed: u64,
    pub paths: Paths,
    pub corpus: CorpusConfig,
    pub library: LibraryConfig,
    pub trainer: TrainerConfig,
    pub collect: CollectConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            corpus: CorpusConfig::default(),
            library: LibraryConfig::default(),
            trainer: TrainerConfig::default(),
            collect: CollectConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn trainer(&self) -> TrainerConfig {
        TrainerConfig { seed: self.seed, ..self.trainer.clone() }
    }

    /// Cheap checks run before any long stage.
    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        self.library.build()?;
        for s in &self.eval.comparators {
            s.parse::<ComparatorSpec>()?;
        }
        if self.collect.node_limit == Some(0) || self.eval.node_limit == Some(0) {
            return Err(Error::Config("node limits must be at least 1".into()));
        }
        Ok(())
    }
}

fn is_nonempty_dir(p: &Path) -> bool {
    fs::read_dir(p).map(|mut d| d.next().is_some()).unwrap_or(false)
}

// ---------------------------------------------------------------- gen

#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    pub instances: usize,
    pub manifest_hash: String,
}

/// Writes every planned instance and the manifest.
pub fn cmd_gen(cfg: &PipelineConfig, force: bool) -> Result<GenSummary> {
    let paths = &cfg.paths;
    if paths.manifest().exists() && !force {
        return Err(Error::Config(format!("{} exists; pass --force to overwrite", paths.manifest().display())));
    }
    let plan = cfg.corpus.plan(cfg.seed);
    if plan.is_empty() {
        return Err(Error::Config("corpus plan is empty".into()));
    }
    let generated: Vec<Result<MilpInstance>> =
        plan.par_iter().map(|e| cfg.corpus.generator.generate(e.seed)).collect();
    let mut instances = Vec::with_capacity(plan.len());
    for g in generated {
        instances.push(g?);
    }
    fs::create_dir_all(&paths.corpus)?;
    for (e, inst) in plan.iter().zip(&instances) {
        inst.write(&paths.instance(&e.id))?;
    }
    let manifest = manifest_tsv(&plan);
    write_atomic(&paths.manifest(), manifest.as_bytes())?;
    Ok(GenSummary { instances: plan.len(), manifest_hash: sha256_hex(manifest.as_bytes()) })
}

pub fn read_manifest(paths: &Paths) -> Result<Vec<ManifestEntry>> {
    let path = paths.manifest();
    if !path.exists() {
        return Err(Error::Config(format!("no corpus manifest at {}; run gen first", path.display())));
    }
    let text = fs::read_to_string(&path)?;
    parse_manifest(&text).map_err(|e| Error::Parse { path, msg: e.to_string() })
}

fn load_split(paths: &Paths, manifest: &[ManifestEntry], split: Split) -> Result<Vec<(String, MilpInstance)>> {
    manifest
        .iter()
        .filter(|e| e.split == split)
        .map(|e| Ok((e.id.clone(), MilpInstance::read(&paths.instance(&e.id))?)))
        .collect()
}

// ---------------------------------------------------------------- collect

#[derive(Debug, Clone, PartialEq)]
pub struct CollectSummary {
    /// `(split, instances kept, samples)`.
    pub splits: Vec<(Split, usize, usize)>,
    pub reports: Vec<(Split, CollectReport)>,
}

/// Runs the recording expert on every split and writes three datasets.
pub fn cmd_collect(cfg: &PipelineConfig) -> Result<CollectSummary> {
    let paths = &cfg.paths;
    let manifest = read_manifest(paths)?;
    if manifest.is_empty() {
        return Err(Error::Config("corpus is empty".into()));
    }
    let generator = format!("{} seed={}", cfg.corpus.generator.fingerprint(), cfg.seed);
    let mut sets = Vec::new();
    let mut summary = CollectSummary { splits: vec![], reports: vec![] };
    for split in [Split::Train, Split::Val, Split::Test] {
        let instances = load_split(paths, &manifest, split)?;
        let (data, reports) = collect(&instances, split, &generator, cfg.collect.node_limit)?;
        log::info!("{split}: {} instances, {} samples", data.instances.len(), data.len());
        summary.splits.push((split, data.instances.len(), data.len()));
        summary.reports.extend(reports.into_iter().map(|r| (split, r)));
        sets.push(data);
    }
    check_disjoint(&sets.iter().collect::<Vec<_>>())?;
    for d in &sets {
        d.write(&paths.dataset(d.split))?;
    }
    let mut tsv = String::from("split\tinstance\tsamples\tnodes\tnote\n");
    for (split, r) in &summary.reports {
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        tsv.push_str(&format!("{split}\t{}\t{}\t{}\t{}\n", r.instance, opt(r.samples), opt(r.nodes), r.note));
    }
    write_atomic(&paths.datasets.join("collect.tsv"), tsv.as_bytes())?;
    Ok(summary)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub expression: ExprTree,
    pub train_reward: f64,
    pub val_reward: f64,
    pub iterations: usize,
}

/// Trains on the train split, selects on val, and writes the expression,
/// the log and policy checkpoints.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainSummary> {
    let paths = &cfg.paths;
    let train_data = Dataset::read(&paths.dataset(Split::Train))?;
    let val_data = Dataset::read(&paths.dataset(Split::Val))?;
    let lib = cfg.library.build()?;
    let tcfg = cfg.trainer();
    let mut net = PolicyNet::new(lib.len(), tcfg.hidden, tcfg.seed);
    let fp = lib.fingerprint();
    fs::create_dir_all(&paths.model)?;
    let ckpt = paths.checkpoint();
    let mut save = |it: usize, net: &PolicyNet| -> Result<()> {
        if (it + 1) % CHECKPOINT_EVERY == 0 {
            write_atomic(&ckpt, net.to_checkpoint(&fp).as_bytes())?;
        }
        Ok(())
    };
    let report = train_with(&mut net, &lib, &train_data, &val_data, &tcfg, &mut save)?;
    write_atomic(&ckpt, net.to_checkpoint(&fp).as_bytes())?;
    report.write_log(&paths.model.join("train_log.jsonl"))?;
    let best = &report.best;
    let comments = vec![
        format!("train_reward={}", best.train_reward),
        format!("val_reward={}", best.val_reward),
        format!("rendered: {}", best.tree.render()),
    ];
    write_expressions(&paths.expression(), &lib, std::slice::from_ref(&best.tree), &comments)?;
    let mut hof = String::from("rank\ttrain_reward\tval_reward\texpression\n");
    for (i, h) in report.hall_of_fame.iter().enumerate() {
        hof.push_str(&format!("{}\t{}\t{}\t{}\n", i + 1, h.train_reward, h.val_reward, h.tree.prefix_string()));
    }
    write_atomic(&paths.model.join("hall_of_fame.tsv"), hof.as_bytes())?;
    Ok(TrainSummary {
        expression: best.tree.clone(),
        train_reward: best.train_reward,
        val_reward: best.val_reward,
        iterations: report.log.len(),
    })
}

// ---------------------------------------------------------------- eval

/// `dfs | bfs | bestfirst | estimate | expert | learned | expr:<file>`.
/// `learned` is the trained model's expression file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ComparatorSpec {
    Dfs,
    Bfs,
    BestFirst,
    Estimate,
    Expert,
    Learned,
    Expr(PathBuf),
}

impl FromStr for ComparatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dfs" => ComparatorSpec::Dfs,
            "bfs" => ComparatorSpec::Bfs,
            "bestfirst" => ComparatorSpec::BestFirst,
            "estimate" => ComparatorSpec::Estimate,
            "expert" => ComparatorSpec::Expert,
            "learned" => ComparatorSpec::Learned,
            _ => match s.strip_prefix("expr:") {
                Some(p) if !p.is_empty() => ComparatorSpec::Expr(PathBuf::from(p)),
                _ => return Err(Error::Config(format!("unknown comparator `{s}`"))),
            },
        })
    }
}

impl fmt::Display for ComparatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComparatorSpec::Dfs => f.write_str("dfs"),
            ComparatorSpec::Bfs => f.write_str("bfs"),
            ComparatorSpec::BestFirst => f.write_str("bestfirst"),
            ComparatorSpec::Estimate => f.write_str("estimate"),
            ComparatorSpec::Expert => f.write_str("expert"),
            ComparatorSpec::Learned => f.write_str("learned"),
            ComparatorSpec::Expr(p) => write!(f, "expr:{}", p.display()),
        }
    }
}

/// A spec with its expression loaded.
#[derive(Debug, Clone)]
pub enum Resolved {
    Builtin(Comparator),
    Expert,
}

impl ComparatorSpec {
    pub fn resolve(&self, paths: &Paths) -> Result<Resolved> {
        let expr = |path: &Path| -> Result<Resolved> {
            let (lib, exprs) = read_expressions(path)?;
            let tree = exprs
                .into_iter()
                .next()
                .ok_or_else(|| Error::Config(format!("{} holds no expression", path.display())))?;
            let mode = lib.mode();
            if tree.max_var() > mode.n_vars() {
                return Err(Error::DimensionMismatch { needed: tree.max_var(), got: mode.n_vars() });
            }
            Ok(Resolved::Builtin(Comparator::Expression { tree, mode }))
        };
        Ok(match self {
            ComparatorSpec::Dfs => Resolved::Builtin(Comparator::Dfs),
            ComparatorSpec::Bfs => Resolved::Builtin(Comparator::Bfs),
            ComparatorSpec::BestFirst => Resolved::Builtin(Comparator::BestFirst),
            ComparatorSpec::Estimate => Resolved::Builtin(Comparator::Estimate),
            ComparatorSpec::Expert => Resolved::Expert,
            ComparatorSpec::Learned => expr(&paths.expression())?,
            ComparatorSpec::Expr(p) => expr(p)?,
        })
    }
}

/// The decision a built-in comparator takes, read off a stored feature
/// pair. Rows 7, 8 and 19 hold bound, estimate and depth; the bound and
/// estimate share one positive scale within a solve, so orderings match.
pub fn decision_from_features(comp: &Comparator, pair: &[f64]) -> Decision {
    let (a, b) = pair.split_at(N_NODE_FEATURES);
    let (bound, est, depth) = (6, 7, 18);
    let second = match comp {
        Comparator::Dfs => b[depth] > a[depth] || (b[depth] == a[depth] && b[bound] < a[bound]),
        Comparator::Bfs => b[depth] < a[depth] || (b[depth] == a[depth] && b[bound] < a[bound]),
        Comparator::BestFirst => b[bound] < a[bound],
        Comparator::Estimate => b[est] < a[est],
        Comparator::Expression { tree, mode } => {
            return crate::milp::expression_decision(tree, *mode, pair);
        }
    };
    if second {
        Decision::Node2
    } else {
        Decision::Node1
    }
}

/// Fraction of stored expert decisions a comparator reproduces.
pub fn selection_accuracy(comp: &Comparator, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Dataset("accuracy needs a nonempty dataset".into()));
    }
    if let Comparator::Expression { tree, mode } = comp {
        return compute_reward(tree, data, *mode);
    }
    let hits = data.samples.iter().filter(|s| decision_from_features(comp, s.features.as_slice()) == s.decision).count();
    Ok(hits as f64 / data.len() as f64)
}

/// Accuracy of the better of the two constant rules (always node 1, always
/// node 2).
pub fn constant_baseline(data: &Dataset) -> f64 {
    let s = data.node1_share();
    s.max(1.0 - s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance: String,
    pub comparator: String,
    pub status: String,
    pub nodes: usize,
    pub lps: usize,
    pub pd_integral: f64,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorSummary {
    pub comparator: String,
    pub instances: usize,
    pub nodes_sgm: f64,
    pub nodes_mean: f64,
    pub nodes_std: f64,
    pub pd_integral_sgm: f64,
    pub pd_integral_mean: f64,
    pub pd_integral_std: f64,
    /// Agreement with stored expert decisions, when a dataset exists.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub seed: u64,
    pub comparators: Vec<ComparatorSummary>,
    pub constant_baseline: Option<f64>,
    pub instances: Vec<InstanceResult>,
}

impl EvalReport {
    pub fn nodes_of(&self, comparator: &str) -> Vec<usize> {
        self.instances.iter().filter(|r| r.comparator == comparator).map(|r| r.nodes).collect()
    }

    pub fn summary_of(&self, comparator: &str) -> Option<&ComparatorSummary> {
        self.comparators.iter().find(|c| c.comparator == comparator)
    }

    pub fn instances_tsv(&self) -> String {
        let mut out = String::from("instance\tcomparator\tstatus\tnodes\tlps\tpd_integral\tobjective\n");
        for r in &self.instances {
            let obj = r.objective.map(|v| format!("{v}")).unwrap_or_default();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\n",
                r.instance, r.comparator, r.status, r.nodes, r.lps, r.pd_integral, obj
            ));
        }
        out
    }

    pub fn summary_tsv(&self) -> String {
        let mut out = String::from(
            "comparator\tinstances\tnodes_sgm\tnodes_mean\tnodes_std\tpdi_sgm\tpdi_mean\tpdi_std\taccuracy\n",
        );
        for c in &self.comparators {
            let acc = c.accuracy.map(|a| format!("{a:.4}")).unwrap_or_default();
            out.push_str(&format!(
                "{}\t{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{}\n",
                c.comparator,
                c.instances,
                c.nodes_sgm,
                c.nodes_mean,
                c.nodes_std,
                c.pd_integral_sgm,
                c.pd_integral_mean,
                c.pd_integral_std,
                acc
            ));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            split: Split,
            seed: u64,
            constant_baseline: Option<f64>,
            comparators: &'a [ComparatorSummary],
        }
        let s = Summary {
            split: self.split,
            seed: self.seed,
            constant_baseline: self.constant_baseline,
            comparators: &self.comparators,
        };
        serde_json::to_string_pretty(&s).expect("plain data")
    }

    /// Hash over the three deterministic report files.
    pub fn hash(&self) -> String {
        let mut all = self.instances_tsv();
        all.push_str(&self.summary_tsv());
        all.push_str(&self.summary_json());
        sha256_hex(all.as_bytes())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("eval.tsv"), self.instances_tsv().as_bytes())?;
        write_atomic(&dir.join("summary.tsv"), self.summary_tsv().as_bytes())?;
        write_atomic(&dir.join("summary.json"), self.summary_json().as_bytes())?;
        Ok(())
    }
}

fn solve_one(inst: &MilpInstance, id: &str, name: &str, which: &Resolved, node_limit: Option<usize>) -> Result<InstanceResult> {
    let limits = SolveLimits { node_limit, ..SolveLimits::default() };
    let out = match which {
        Resolved::Builtin(c) => solve(inst, &mut c.clone(), &limits)?,
        Resolved::Expert => {
            let x = solve_to_optimal(inst, None)?;
            solve(inst, &mut Expert::new(x), &limits)?
        }
    };
    Ok(InstanceResult {
        instance: id.to_string(),
        comparator: name.to_string(),
        status: match out.status {
            SolveStatus::Optimal => "optimal".into(),
            SolveStatus::NodeLimit => "node_limit".into(),
        },
        nodes: out.stats.nodes,
        lps: out.stats.lps,
        pd_integral: out.stats.pd_integral,
        objective: out.objective(),
    })
}

/// Solves the evaluation split under every comparator and writes reports.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<EvalReport> {
    let paths = &cfg.paths;
    let specs: Vec<ComparatorSpec> = cfg.eval.comparators.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    let resolved: Vec<Resolved> = specs.iter().map(|s| s.resolve(paths)).collect::<Result<_>>()?;
    let manifest = read_manifest(paths)?;
    let instances = load_split(paths, &manifest, cfg.eval.split)?;
    if instances.is_empty() {
        return Err(Error::Config(format!("no {} instances in the corpus", cfg.eval.split)));
    }
    let data_path = paths.dataset(cfg.eval.split);
    let data = if data_path.exists() { Some(Dataset::read(&data_path)?) } else { None };
    if let Some(d) = &data {
        let ids: Vec<&str> = instances.iter().map(|(id, _)| id.as_str()).collect();
        if let Some(bad) = d.instances.iter().find(|i| !ids.contains(&i.as_str())) {
            return Err(Error::Dataset(format!("dataset instance {bad} is not in the corpus split")));
        }
    }

    let mut report = EvalReport {
        split: cfg.eval.split,
        seed: cfg.seed,
        comparators: vec![],
        constant_baseline: data.as_ref().filter(|d| !d.is_empty()).map(constant_baseline),
        instances: vec![],
    };
    let mut timing = String::from("comparator\tseconds\n");
    for (spec, which) in specs.iter().zip(&resolved) {
        let name = spec.to_string();
        let t0 = Instant::now();
        let rows: Vec<Result<InstanceResult>> = instances
            .par_iter()
            .map(|(id, inst)| solve_one(inst, id, &name, which, cfg.eval.node_limit))
            .collect();
        let rows: Vec<InstanceResult> = rows.into_iter().collect::<Result<_>>()?;
        timing.push_str(&format!("{name}\t{:.3}\n", t0.elapsed().as_secs_f64()));
        let nodes: Vec<f64> = rows.iter().map(|r| r.nodes as f64).collect();
        let pdi: Vec<f64> = rows.iter().map(|r| r.pd_integral).collect();
        let accuracy = match (which, &data) {
            (Resolved::Builtin(c), Some(d)) if !d.is_empty() => Some(selection_accuracy(c, d)?),
            _ => None,
        };
        report.comparators.push(ComparatorSummary {
            comparator: name,
            instances: rows.len(),
            nodes_sgm: shifted_geometric_mean(&nodes, 1.0),
            nodes_mean: mean(&nodes),
            nodes_std: std_dev(&nodes),
            pd_integral_sgm: shifted_geometric_mean(&pdi, 1.0),
            pd_integral_mean: mean(&pdi),
            pd_integral_std: std_dev(&pdi),
            accuracy,
        });
        report.instances.extend(rows);
    }
    report.write(&paths.reports)?;
    // Wall-clock is informational and kept out of the hashed reports.
    write_atomic(&paths.reports.join("timing.tsv"), timing.as_bytes())?;
    Ok(report)
}

// ---------------------------------------------------------------- all

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub gen: GenSummary,
    pub collect: CollectSummary,
    pub train: TrainSummary,
    pub eval: EvalReport,
}

/// gen, collect, train and eval in sequence.
pub fn run_all(cfg: &PipelineConfig, force: bool) -> Result<RunSummary> {
    cfg.validate()?;
    if !force && is_nonempty_dir(&cfg.paths.corpus) {
        return Err(Error::Config(format!("{} is not empty; pass --force to overwrite", cfg.paths.corpus.display())));
    }
    let gen = cmd_gen(cfg, true)?;
    let collect = cmd_collect(cfg)?;
    let train = cmd_train(cfg)?;
    let eval = cmd_eval(cfg)?;
    Ok(RunSummary { gen, collect, train, eval })
}
