use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{PolicyNet, StepCache};
use crate::error::{Error, Result};
use crate::expr::{ExprTree, SlotCount, TokenLibrary};
use crate::util::{derive_seed, rng_for};

/// Gaussian length prior on the logits: before `target` terminals are
/// discouraged, after it non-terminals are.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LengthPrior {
    pub target: f64,
    pub sigma: f64,
}

impl Default for LengthPrior {
    fn default() -> Self {
        Self { target: 6.0, sigma: 2.0 }
    }
}

impl LengthPrior {
    /// Additive logit adjustment for a token of `arity` chosen at position `t`.
    pub fn adjustment(&self, t: usize, arity: usize) -> f64 {
        let t = t as f64;
        let penalty = -(t - self.target).powi(2) / (2.0 * self.sigma * self.sigma);
        if (t < self.target && arity == 0) || (t > self.target && arity > 0) {
            penalty
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct SamplerConfig {
    pub length_prior: Option<LengthPrior>,
}

impl SamplerConfig {
    pub fn with_default_prior() -> Self {
        Self { length_prior: Some(LengthPrior::default()) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    parent: Option<usize>,
    sibling: Option<usize>,
    first_of_binary: bool,
}

/// Partial sequence, recurrent state and the stack of open child slots.
#[derive(Debug, Clone)]
pub struct SamplerState {
    tokens: Vec<usize>,
    slots: Vec<Slot>,
}

impl Default for SamplerState {
    fn default() -> Self {
        Self::new()
    }
}

impl SamplerState {
    pub fn new() -> Self {
        Self { tokens: Vec::new(), slots: vec![Slot { parent: None, sibling: None, first_of_binary: false }] }
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn is_complete(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slot_count(&self) -> SlotCount {
        SlotCount { len: self.tokens.len(), open: self.slots.len() }
    }

    /// `(parent, sibling)` of the slot the next token fills.
    pub fn context(&self) -> Option<(Option<usize>, Option<usize>)> {
        self.slots.last().map(|s| (s.parent, s.sibling))
    }

    pub fn push(&mut self, token: usize, lib: &TokenLibrary) {
        let slot = self.slots.pop().expect("push onto a complete sequence");
        if slot.first_of_binary {
            // The pending second-child slot sees this token as its sibling.
            if let Some(next) = self.slots.last_mut() {
                next.sibling = Some(token);
            }
        }
        match lib.arity(token) {
            2 => {
                self.slots.push(Slot { parent: Some(token), sibling: None, first_of_binary: false });
                self.slots.push(Slot { parent: Some(token), sibling: None, first_of_binary: true });
            }
            1 => self.slots.push(Slot { parent: Some(token), sibling: None, first_of_binary: false }),
            _ => {}
        }
        self.tokens.push(token);
    }
}

/// Masks infeasible tokens to `-inf` and adds the length prior.
pub fn apply_priors(logits: &mut [f64], state: SlotCount, lib: &TokenLibrary, prior: Option<LengthPrior>) {
    for (i, z) in logits.iter_mut().enumerate() {
        let arity = lib.arity(i);
        if !state.admits(arity, lib.max_length()) {
            *z = f64::NEG_INFINITY;
        } else if let Some(p) = prior {
            *z += p.adjustment(state.len, arity);
        }
    }
}

/// Softmax over finite entries; returns `(probs, log_probs, entropy)`.
pub fn masked_softmax(adjusted: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let max = adjusted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = adjusted.iter().map(|&z| if z.is_finite() { (z - max).exp() } else { 0.0 }).sum();
    let log_z = max + sum.ln();
    let mut probs = vec![0.0; adjusted.len()];
    let mut log_probs = vec![f64::NEG_INFINITY; adjusted.len()];
    let mut entropy = 0.0;
    for (i, &z) in adjusted.iter().enumerate() {
        if z.is_finite() {
            let lp = z - log_z;
            log_probs[i] = lp;
            probs[i] = lp.exp();
            entropy -= probs[i] * lp;
        }
    }
    (probs, log_probs, entropy)
}

/// One sampled expression with its likelihood bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tokens: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub log_likelihood: f64,
    /// Entropy of the masked distribution at each step.
    pub entropies: Vec<f64>,
}

impl Sample {
    pub fn to_tree(&self, lib: &TokenLibrary) -> ExprTree {
        let toks: Vec<_> = self.tokens.iter().map(|&i| lib.token(i)).collect();
        ExprTree::parse_prefix(&toks, lib).expect("masked sampling yields valid expressions")
    }
}

/// Draws one complete expression.
pub fn sample_expression(net: &PolicyNet, lib: &TokenLibrary, cfg: &SamplerConfig, seed: u64) -> Sample {
    let mut rng = rng_for(seed, &[0x5a4d]);
    let mut state = SamplerState::new();
    let mut lstm = net.initial_state();
    let mut logits = vec![0.0; lib.len()];
    let mut log_probs = Vec::new();
    let mut entropies = Vec::new();
    while let Some((parent, sibling)) = state.context() {
        let (p, s) = net.input_indices(parent, sibling).expect("library-sized net");
        net.step_indices(p, s, &mut lstm, &mut logits, None);
        apply_priors(&mut logits, state.slot_count(), lib, cfg.length_prior);
        let (probs, lps, h) = masked_softmax(&logits);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut choice = None;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                choice = Some(i);
                if u < acc {
                    break;
                }
            }
        }
        let choice = choice.expect("at least one token is always admissible");
        log_probs.push(lps[choice]);
        entropies.push(h);
        state.push(choice, lib);
    }
    let log_likelihood = log_probs.iter().sum();
    Sample { tokens: state.tokens, log_probs, log_likelihood, entropies }
}

/// `k` independent draws; draw `i` uses a stream derived from `(seed, i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledBatch {
    pub samples: Vec<Sample>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn sample_batch(net: &PolicyNet, lib: &TokenLibrary, cfg: &SamplerConfig, k: usize, seed: u64) -> SampledBatch {
    let samples = (0..k as u64)
        .into_par_iter()
        .map(|i| sample_expression(net, lib, cfg, derive_seed(seed, &[i])))
        .collect();
    SampledBatch { samples }
}

/// Forward replay of a fixed sequence.
#[derive(Debug, Clone)]
pub struct SequenceTrace {
    pub log_probs: Vec<f64>,
    pub entropies: Vec<f64>,
    pub(crate) probs: Vec<Vec<f64>>,
    pub(crate) caches: Vec<StepCache>,
}

impl SequenceTrace {
    pub fn log_likelihood(&self) -> f64 {
        self.log_probs.iter().sum()
    }
}

pub fn trace_sequence(
    net: &PolicyNet,
    lib: &TokenLibrary,
    cfg: &SamplerConfig,
    seq: &[usize],
    keep_cache: bool,
) -> Result<SequenceTrace> {
    let mut state = SamplerState::new();
    let mut lstm = net.initial_state();
    let mut logits = vec![0.0; lib.len()];
    let mut trace = SequenceTrace { log_probs: Vec::new(), entropies: Vec::new(), probs: Vec::new(), caches: Vec::new() };
    for (t, &tok) in seq.iter().enumerate() {
        let (parent, sibling) = state
            .context()
            .ok_or_else(|| Error::InvalidSequence(format!("sequence complete after {t} tokens")))?;
        if tok >= lib.len() {
            return Err(Error::InvalidSequence(format!("token #{tok} outside the library")));
        }
        let (p, s) = net.input_indices(parent, sibling)?;
        let mut cache = StepCache::default();
        net.step_indices(p, s, &mut lstm, &mut logits, keep_cache.then_some(&mut cache));
        apply_priors(&mut logits, state.slot_count(), lib, cfg.length_prior);
        let (probs, lps, h) = masked_softmax(&logits);
        if probs[tok] <= 0.0 {
            return Err(Error::InvalidSequence(format!("`{}` is masked at position {t}", lib.symbol(tok))));
        }
        trace.log_probs.push(lps[tok]);
        trace.entropies.push(h);
        if keep_cache {
            trace.probs.push(probs);
            trace.caches.push(cache);
        }
        state.push(tok, lib);
    }
    if !state.is_complete() {
        return Err(Error::InvalidSequence(format!("{} open slot(s) remain", state.slot_count().open)));
    }
    Ok(trace)
}

/// Log-likelihood the sampler would report for drawing exactly `seq`.
pub fn log_likelihood(net: &PolicyNet, lib: &TokenLibrary, cfg: &SamplerConfig, seq: &[usize]) -> Result<f64> {
    Ok(trace_sequence(net, lib, cfg, seq, false)?.log_likelihood())
}

/// Adds the parameter gradient of
/// `ll_coef * log p(seq) + sum_t entropy_coefs[t] * H_t`
/// into `grad` and returns the forward trace.
pub fn accumulate_gradient(
    net: &PolicyNet,
    lib: &TokenLibrary,
    cfg: &SamplerConfig,
    seq: &[usize],
    ll_coef: f64,
    entropy_coefs: &[f64],
    grad: &mut [f64],
) -> Result<SequenceTrace> {
    accumulate_gradient_with(net, lib, cfg, seq, |_| ll_coef, entropy_coefs, grad)
}

/// As [`accumulate_gradient`], with the log-likelihood coefficient chosen
/// after the forward pass (e.g. from the probability ratio).
pub fn accumulate_gradient_with(
    net: &PolicyNet,
    lib: &TokenLibrary,
    cfg: &SamplerConfig,
    seq: &[usize],
    ll_coef: impl FnOnce(&SequenceTrace) -> f64,
    entropy_coefs: &[f64],
    grad: &mut [f64],
) -> Result<SequenceTrace> {
    let trace = trace_sequence(net, lib, cfg, seq, true)?;
    let ll_coef = ll_coef(&trace);
    let dlogits: Vec<Vec<f64>> = trace
        .probs
        .iter()
        .enumerate()
        .map(|(t, probs)| {
            let h = trace.entropies[t];
            let e = entropy_coefs.get(t).copied().unwrap_or(0.0);
            probs
                .iter()
                .enumerate()
                .map(|(k, &p)| {
                    if p <= 0.0 {
                        return 0.0;
                    }
                    let onehot = if k == seq[t] { 1.0 } else { 0.0 };
                    ll_coef * (onehot - p) - e * p * (p.ln() + h)
                })
                .collect()
        })
        .collect();
    net.backward(&trace.caches, &dlogits, grad);
    Ok(trace)
}
