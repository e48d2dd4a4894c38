//! Recurrent expression generator.
//!
//! Each step reads the one-hot `(parent, sibling)` context of the slot being
//! filled, produces logits over the token library, masks tokens that could
//! not complete within the length cap, adds the soft length prior, and
//! samples. Likelihoods and their gradients are exact for that masked,
//! prior-adjusted distribution.

mod net;
mod sampler;

pub use net::{LstmState, PolicyNet, DEFAULT_HIDDEN, N_LAYERS};
pub use sampler::{
    accumulate_gradient, accumulate_gradient_with, apply_priors, log_likelihood, masked_softmax, sample_batch,
    sample_expression, trace_sequence, LengthPrior, Sample, SampledBatch, SamplerConfig,
    SamplerState, SequenceTrace,
};
