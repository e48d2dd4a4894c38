use rayon::prelude::*;

use crate::error::Result;
use crate::expr::{ExprTree, TokenLibrary};
use crate::policy::{accumulate_gradient_with, PolicyNet, SamplerConfig};

/// One scored expression from the current batch.
#[derive(Debug, Clone)]
pub struct RewardRecord {
    pub tree: ExprTree,
    pub tokens: Vec<usize>,
    pub reward: f64,
    /// Log-likelihood under the policy that sampled it.
    pub old_log_likelihood: f64,
    pub advantage: f64,
}

/// Returns the kept indices (ascending) and the `(1 - eps)` quantile.
///
/// The quantile is the order statistic that leaves `ceil(eps * K)` values
/// at or above it; every value tied with it is kept.
pub fn risk_filter(rewards: &[f64], eps: f64) -> (Vec<usize>, f64) {
    assert!(!rewards.is_empty(), "risk filter on an empty batch");
    let k = rewards.len();
    let top = ((eps * k as f64) - 1e-9).ceil().clamp(1.0, k as f64) as usize;
    let mut sorted = rewards.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = sorted[k - top];
    let kept = (0..k).filter(|&i| rewards[i] >= q).collect();
    (kept, q)
}

/// One-sided clip of the probability ratio: only the side the advantage pushes toward is capped.
pub fn clip_ratio(q: f64, advantage: f64, eta: f64) -> f64 {
    if advantage > 0.0 && q >= 1.0 + eta {
        1.0 + eta
    } else if advantage < 0.0 && q <= 1.0 - eta {
        1.0 - eta
    } else {
        q
    }
}

/// `sum_t gamma^t H_t` for one entropy trace.
pub fn discounted_entropy(trace: &[f64], gamma: f64) -> f64 {
    let mut w = 1.0;
    let mut acc = 0.0;
    for h in trace {
        acc += w * h;
        w *= gamma;
    }
    acc
}

/// Batch average of the discounted per-step entropy.
pub fn hierarchical_entropy<'a>(traces: impl IntoIterator<Item = &'a [f64]>, gamma: f64) -> f64 {
    let mut n = 0usize;
    let mut acc = 0.0;
    for t in traces {
        acc += discounted_entropy(t, gamma);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        acc / n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoParams {
    pub clip: f64,
    pub entropy_weight: f64,
    pub entropy_gamma: f64,
}

/// Samples per gradient chunk; fixed so the reduction order does not depend
/// on the thread count.
const CHUNK: usize = 8;

/// Evaluates the clipped risk-seeking loss over `kept` records and adds its
/// parameter gradient into `grad`. Returns the loss.
///
/// `loss = -mean_kept(clip(q) * A) - w_H * mean_kept(sum_t gamma^t H_t)`
pub fn ppo_loss(
    net: &PolicyNet,
    lib: &TokenLibrary,
    sampler: &SamplerConfig,
    records: &[RewardRecord],
    kept: &[usize],
    params: &PpoParams,
    grad: &mut [f64],
) -> Result<f64> {
    if kept.is_empty() {
        return Ok(0.0);
    }
    let m = kept.len() as f64;
    let ent_coefs: Vec<f64> = {
        let max_len = kept.iter().map(|&i| records[i].tokens.len()).max().unwrap_or(0);
        let mut w = 1.0;
        (0..max_len)
            .map(|_| {
                let c = -params.entropy_weight * w / m;
                w *= params.entropy_gamma;
                c
            })
            .collect()
    };
    let parts: Vec<Result<(Vec<f64>, f64)>> = kept
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; grad.len()];
            let mut loss = 0.0;
            for &i in chunk {
                let r = &records[i];
                let mut qc = 1.0;
                let trace = accumulate_gradient_with(
                    net,
                    lib,
                    sampler,
                    &r.tokens,
                    |tr| {
                        let q = (tr.log_likelihood() - r.old_log_likelihood).exp();
                        qc = clip_ratio(q, r.advantage, params.clip);
                        // An active clip branch is constant in the parameters.
                        if qc != q {
                            0.0
                        } else {
                            -r.advantage * q / m
                        }
                    },
                    &ent_coefs,
                    &mut g,
                )?;
                loss -= qc * r.advantage / m;
                loss -= params.entropy_weight * discounted_entropy(&trace.entropies, params.entropy_gamma) / m;
            }
            Ok((g, loss))
        })
        .collect();
    let mut total = 0.0;
    for part in parts {
        let (g, l) = part?;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        total += l;
    }
    Ok(total)
}
