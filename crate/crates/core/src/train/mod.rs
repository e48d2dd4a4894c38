//! Risk-seeking PPO over sampled expressions.
//!
//! Each iteration samples a batch, scores every expression by
//! behavioural-cloning accuracy, keeps the top `eps` fraction and takes one
//! clipped policy-gradient step with a discounted entropy bonus. A small
//! hall of fame of full-dataset winners is re-scored on validation data to
//! pick the returned expression.

mod adam;
mod objective;
mod reward;

use std::collections::HashMap;
use std::path::Path;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use objective::{
    clip_ratio, discounted_entropy, hierarchical_entropy, ppo_loss, risk_filter, PpoParams, RewardRecord,
};
pub use reward::{compute_reward, predict_node1, reward_on_columns};

use crate::dataset::{BehaviorSample, Columns, Dataset, Split};
use crate::error::{Error, Result};
use crate::expr::{ExprTree, LibraryMode, TokenLibrary};
use crate::features::{PairFeatures, N_PAIR_FEATURES};
use crate::milp::expression_decision;
use crate::policy::{sample_batch, LengthPrior, PolicyNet, SamplerConfig};
use crate::util::{derive_seed, rng_for, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub risk_eps: f64,
    pub clip: f64,
    pub learning_rate: f64,
    pub entropy_weight: f64,
    pub entropy_gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub hidden: usize,
    pub hall_of_fame: usize,
    /// Rows scored per batch evaluation; larger training sets are
    /// subsampled uniformly per iteration.
    pub reward_subsample: usize,
    pub length_prior: Option<LengthPrior>,
    /// Stop once a hall-of-fame entry reaches this full training reward.
    pub stop_at_reward: Option<f64>,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            batch_size: 500,
            iterations: 300,
            risk_eps: 0.2,
            clip: 0.2,
            learning_rate: 5e-5,
            entropy_weight: 0.005,
            entropy_gamma: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            hidden: crate::policy::DEFAULT_HIDDEN,
            hall_of_fame: 10,
            reward_subsample: 20_000,
            length_prior: Some(LengthPrior::default()),
            stop_at_reward: None,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleConfig(m.to_string()));
        if !(self.risk_eps > 0.0 && self.risk_eps < 1.0) {
            return bad("risk_eps must lie in (0, 1)");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be positive");
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.learning_rate >= 0.0) || self.hidden == 0 || self.hall_of_fame == 0 || self.reward_subsample == 0 {
            return bad("learning_rate, hidden, hall_of_fame and reward_subsample must be positive");
        }
        if let Some(p) = self.length_prior {
            if !(p.sigma > 0.0) {
                return bad("length prior sigma must be positive");
            }
        }
        Ok(())
    }

    fn sampler(&self) -> SamplerConfig {
        SamplerConfig { length_prior: self.length_prior }
    }

    fn ppo(&self) -> PpoParams {
        PpoParams { clip: self.clip, entropy_weight: self.entropy_weight, entropy_gamma: self.entropy_gamma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub best_reward: f64,
    pub mean_reward: f64,
    pub quantile: f64,
    pub kept: usize,
    pub entropy: f64,
    pub loss: f64,
    pub best_val_reward: f64,
    pub best_expression: String,
}

#[derive(Debug, Clone)]
pub struct HofEntry {
    pub tree: ExprTree,
    pub tokens: Vec<usize>,
    pub train_reward: f64,
    pub val_reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Highest validation reward among every expression ever admitted to
    /// the hall of fame.
    pub best: HofEntry,
    pub hall_of_fame: Vec<HofEntry>,
    pub log: Vec<IterationLog>,
}

impl TrainReport {
    pub fn log_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.log {
            out.push_str(&serde_json::to_string(rec).expect("plain record"));
            out.push('\n');
        }
        out
    }

    pub fn write_log(&self, path: &Path) -> Result<()> {
        Ok(write_atomic(path, self.log_jsonl().as_bytes())?)
    }
}

/// Trains `net` in place and returns the selected expression.
pub fn train(
    net: &mut PolicyNet,
    lib: &TokenLibrary,
    train_data: &Dataset,
    val_data: &Dataset,
    cfg: &TrainerConfig,
) -> Result<TrainReport> {
    train_with(net, lib, train_data, val_data, cfg, &mut |_, _| Ok(()))
}

/// As [`train`], calling `after_update(iteration, net)` after every
/// parameter update.
pub fn train_with(
    net: &mut PolicyNet,
    lib: &TokenLibrary,
    train_data: &Dataset,
    val_data: &Dataset,
    cfg: &TrainerConfig,
    after_update: &mut dyn FnMut(usize, &PolicyNet) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if net.n_tokens() != lib.len() {
        return Err(Error::DimensionMismatch { needed: lib.len(), got: net.n_tokens() });
    }
    let train_cols = train_data.columns();
    let val_cols = val_data.columns();
    if train_cols.n == 0 || val_cols.n == 0 {
        return Err(Error::Dataset("training and validation sets must be nonempty".into()));
    }
    let mode = lib.mode();
    let sampler = cfg.sampler();
    let ppo = cfg.ppo();
    let subsampled = train_cols.n > cfg.reward_subsample;
    let mut full_cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut opt = Adam::new(net.n_params(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut hof: Vec<HofEntry> = Vec::new();
    let mut best: Option<HofEntry> = None;
    let mut log = Vec::new();

    for it in 0..cfg.iterations.max(1) {
        let batch = sample_batch(net, lib, &sampler, cfg.batch_size, derive_seed(cfg.seed, &[it as u64]));
        let trees: Vec<ExprTree> = batch.samples.iter().map(|s| s.to_tree(lib)).collect();
        let tokens: Vec<Vec<usize>> = batch.samples.iter().map(|s| s.tokens.clone()).collect();

        let sub_cols;
        let cols: &Columns = if subsampled {
            let mut rng = rng_for(cfg.seed, &[it as u64, 0x5eed]);
            let mut idx = index::sample(&mut rng, train_cols.n, cfg.reward_subsample).into_vec();
            idx.sort_unstable();
            sub_cols = train_cols.select(&idx);
            &sub_cols
        } else {
            &train_cols
        };
        let cache = if subsampled { None } else { Some(&full_cache) };
        let rewards = score_batch(&trees, &tokens, cols, mode, cache)?;
        if !subsampled {
            for (t, &r) in tokens.iter().zip(&rewards) {
                full_cache.entry(t.clone()).or_insert(r);
            }
        }

        update_hall_of_fame(
            &mut hof,
            &mut best,
            &trees,
            &tokens,
            &rewards,
            &train_cols,
            &val_cols,
            mode,
            cfg.hall_of_fame,
            &mut full_cache,
        )?;

        let (kept, quantile) = risk_filter(&rewards, cfg.risk_eps);
        let entropy = hierarchical_entropy(batch.samples.iter().map(|s| s.entropies.as_slice()), cfg.entropy_gamma);
        let mut loss = 0.0;
        if it < cfg.iterations {
            let records: Vec<RewardRecord> = batch
                .samples
                .iter()
                .zip(trees.iter().zip(&tokens))
                .zip(&rewards)
                .map(|((s, (t, toks)), &r)| RewardRecord {
                    tree: t.clone(),
                    tokens: toks.clone(),
                    reward: r,
                    old_log_likelihood: s.log_likelihood,
                    advantage: r - quantile,
                })
                .collect();
            let mut grad = vec![0.0; net.n_params()];
            loss = ppo_loss(net, lib, &sampler, &records, &kept, &ppo, &mut grad)?;
            opt.step(net.params_mut(), &grad);
            after_update(it, net)?;
        }
        let best_now = best.as_ref().expect("hall of fame is nonempty after scoring");
        log.push(IterationLog {
            iteration: it,
            best_reward: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
            quantile,
            kept: kept.len(),
            entropy,
            loss,
            best_val_reward: best_now.val_reward,
            best_expression: best_now.tree.render(),
        });
        log::debug!(
            "iter {it}: best {:.4} mean {:.4} q {:.4} val* {:.4} {}",
            log[it].best_reward,
            log[it].mean_reward,
            quantile,
            best_now.val_reward,
            best_now.tree.render()
        );
        if let Some(target) = cfg.stop_at_reward {
            if hof.first().is_some_and(|h| h.train_reward >= target) {
                break;
            }
        }
    }
    Ok(TrainReport { best: best.expect("at least one batch was scored"), hall_of_fame: hof, log })
}

fn score_batch(
    trees: &[ExprTree],
    tokens: &[Vec<usize>],
    cols: &Columns,
    mode: LibraryMode,
    cache: Option<&HashMap<Vec<usize>, f64>>,
) -> Result<Vec<f64>> {
    // Score each distinct expression once.
    let mut first: HashMap<&[usize], usize> = HashMap::new();
    let mut todo = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if cache.is_some_and(|c| c.contains_key(t)) {
            continue;
        }
        if first.insert(t.as_slice(), i).is_none() {
            todo.push(i);
        }
    }
    let scored: Vec<Result<f64>> = todo.par_iter().map(|&i| reward_on_columns(&trees[i], cols, mode)).collect();
    let mut fresh: HashMap<&[usize], f64> = HashMap::new();
    for (&i, r) in todo.iter().zip(scored) {
        fresh.insert(tokens[i].as_slice(), r?);
    }
    Ok(tokens
        .iter()
        .map(|t| match cache.and_then(|c| c.get(t)) {
            Some(&r) => r,
            None => fresh[t.as_slice()],
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn update_hall_of_fame(
    hof: &mut Vec<HofEntry>,
    best: &mut Option<HofEntry>,
    trees: &[ExprTree],
    tokens: &[Vec<usize>],
    rewards: &[f64],
    train_cols: &Columns,
    val_cols: &Columns,
    mode: LibraryMode,
    size: usize,
    full_cache: &mut HashMap<Vec<usize>, f64>,
) -> Result<()> {
    let mut order: Vec<usize> = (0..rewards.len()).collect();
    order.sort_by(|&a, &b| rewards[b].total_cmp(&rewards[a]).then(a.cmp(&b)));
    let mut candidates: Vec<usize> = Vec::new();
    for i in order {
        if candidates.len() == size {
            break;
        }
        if hof.iter().any(|h| h.tokens == tokens[i]) || candidates.iter().any(|&c| tokens[c] == tokens[i]) {
            continue;
        }
        candidates.push(i);
    }
    let full: Vec<Result<f64>> = candidates
        .par_iter()
        .map(|&i| match full_cache.get(&tokens[i]) {
            Some(&r) => Ok(r),
            None => reward_on_columns(&trees[i], train_cols, mode),
        })
        .collect();
    for (&i, r) in candidates.iter().zip(full) {
        let r = r?;
        full_cache.insert(tokens[i].clone(), r);
        hof.push(HofEntry { tree: trees[i].clone(), tokens: tokens[i].clone(), train_reward: r, val_reward: f64::NAN });
    }
    // Stable: incumbents win ties against newcomers.
    hof.sort_by(|a, b| b.train_reward.total_cmp(&a.train_reward));
    hof.truncate(size);
    for h in hof.iter_mut() {
        if h.val_reward.is_nan() {
            h.val_reward = reward_on_columns(&h.tree, val_cols, mode)?;
            if best.as_ref().is_none_or(|b| h.val_reward > b.val_reward) {
                *best = Some(h.clone());
            }
        }
    }
    Ok(())
}

/// Gaussian features labelled by `truth`, in blocks of 100 samples per
/// synthetic instance id so splits stay disjoint by instance.
pub fn synthetic_dataset(truth: &ExprTree, mode: LibraryMode, n: usize, seed: u64, split: Split) -> Result<Dataset> {
    if truth.max_var() > mode.n_vars() {
        return Err(Error::DimensionMismatch { needed: truth.max_var(), got: mode.n_vars() });
    }
    let mut rng = rng_for(seed, &[split as u64, 0x5717]);
    let mut ds = Dataset::new(split, format!("synthetic truth={}", truth.prefix_string()));
    let mut block = Vec::new();
    let mut block_id = 0;
    for i in 0..n {
        let mut f = [0.0; N_PAIR_FEATURES];
        for v in f.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let id = format!("syn-{}-{block_id:04}", split.as_str());
        let decision = expression_decision(truth, mode, &f);
        block.push(BehaviorSample { features: PairFeatures(f), decision, instance: id.clone(), step: block.len() });
        if block.len() == 100 || i + 1 == n {
            ds.push_instance(id, std::mem::take(&mut block));
            block_id += 1;
        }
    }
    Ok(ds)
}
