use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use symnode_core::pipeline::{self, Paths, PipelineConfig};

const REPORT_DIR_ENV: &str = "SYMNODE_REPORT_DIR";

#[derive(Parser)]
#[command(name = "symnode", version, about = "Learned node selection for a small branch-and-bound MILP solver")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// TOML pipeline configuration; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for gen, collect and eval.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Put corpus, datasets, model and reports under this directory.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Overwrite an existing corpus.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the instance corpus and its manifest.
    Gen {
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        val: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
    },
    /// Record expert node selections on every split.
    Collect {
        #[arg(long)]
        node_limit: Option<usize>,
    },
    /// Search for a node-selection expression.
    Train {
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Solve the evaluation split under each comparator and write reports.
    Eval {
        /// dfs | bfs | bestfirst | estimate | expert | learned | expr:<file>;
        /// repeat to compare several.
        #[arg(long = "comparator")]
        comparators: Vec<String>,
        #[arg(long)]
        node_limit: Option<usize>,
    },
    /// gen, collect, train and eval in one go.
    Run,
    /// Print the effective configuration as TOML.
    Config,
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match &g.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(dir) = &g.workdir {
        cfg.paths = Paths::under(dir);
    }
    if let Some(dir) = std::env::var_os(REPORT_DIR_ENV) {
        cfg.paths.reports = PathBuf::from(dir);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    if let Some(j) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global()?;
    }
    match cli.cmd {
        Cmd::Gen { train, val, test } => {
            let c = &mut cfg.corpus;
            c.train = train.unwrap_or(c.train);
            c.val = val.unwrap_or(c.val);
            c.test = test.unwrap_or(c.test);
            let s = pipeline::cmd_gen(&cfg, cli.global.force)?;
            println!("generated {} instances in {}", s.instances, cfg.paths.corpus.display());
            println!("manifest sha256 {}", s.manifest_hash);
        }
        Cmd::Collect { node_limit } => {
            if node_limit.is_some() {
                cfg.collect.node_limit = node_limit;
            }
            cfg.validate()?;
            let s = pipeline::cmd_collect(&cfg)?;
            for (split, instances, samples) in s.splits {
                println!("{split}: {samples} samples from {instances} instances");
            }
        }
        Cmd::Train { iterations, batch_size, learning_rate } => {
            let t = &mut cfg.trainer;
            t.iterations = iterations.unwrap_or(t.iterations);
            t.batch_size = batch_size.unwrap_or(t.batch_size);
            t.learning_rate = learning_rate.unwrap_or(t.learning_rate);
            cfg.validate()?;
            let s = pipeline::cmd_train(&cfg)?;
            println!("best {} (train {:.4}, val {:.4}) after {} iterations", s.expression.render(), s.train_reward, s.val_reward, s.iterations);
            println!("wrote {}", cfg.paths.expression().display());
        }
        Cmd::Eval { comparators, node_limit } => {
            if !comparators.is_empty() {
                cfg.eval.comparators = comparators;
            }
            if node_limit.is_some() {
                cfg.eval.node_limit = node_limit;
            }
            cfg.validate()?;
            let r = pipeline::cmd_eval(&cfg)?;
            print!("{}", r.summary_tsv());
            println!("report sha256 {}", r.hash());
        }
        Cmd::Run => {
            let s = pipeline::run_all(&cfg, cli.global.force)?;
            print!("{}", s.eval.summary_tsv());
            println!("report sha256 {}", s.eval.hash());
        }
        Cmd::Config => print!("{}", toml::to_string(&cfg)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
