//! Non-learning reference policies. Each one maps a single sample to an
//! outcome and never looks at correctness flags.

use serde::{Deserialize, Serialize};

use crate::cost::{realized_reward, reward_unchecked, CostModel, RewardOutcome, Variant};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::trace::SampleTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicySpec {
    /// Always infer at the last layer on the edge.
    FinalExit,
    /// Uniformly random splitting layer per sample.
    RandomExit { seed: u64 },
    /// Always split at the given layer.
    FixedLayer(usize),
    /// Exit at the first confident layer, never offload.
    Cascade { alpha: f64 },
}

/// Processes every layer up to `L`: cost `(lambda1 + lambda2) * L`.
pub fn policy_final_exit(sample: &SampleTrace, model: &CostModel) -> RewardOutcome {
    let last = model.layers;
    RewardOutcome::local_exit(sample, last, model.lambda() * last as f64, model.mu)
}

/// Splits at a uniformly drawn layer, costed like the single-inference learner.
pub fn policy_random_exit(
    sample: &SampleTrace,
    model: &CostModel,
    alpha: f64,
    rng: &mut SplitMix64,
) -> RewardOutcome {
    let layer = 1 + rng.below(model.layers as u64) as usize;
    reward_unchecked(sample, layer, alpha, model, Variant::SplitEe)
}

pub fn policy_fixed_layer(
    sample: &SampleTrace,
    layer: usize,
    model: &CostModel,
    alpha: f64,
) -> Result<RewardOutcome> {
    realized_reward(sample, layer, alpha, model, Variant::SplitEe)
}

/// First layer whose confidence clears `alpha`, or `L`.
pub fn cascade_exit_layer(sample: &SampleTrace, alpha: f64) -> usize {
    sample
        .confidences()
        .iter()
        .position(|&c| c >= alpha)
        .map_or(sample.layers(), |idx| idx + 1)
}

/// Walks the exits in order, inferring at each, and exits at the first
/// confident one. Cost `(lambda1 + lambda2) * exit_layer`.
pub fn policy_cascade(sample: &SampleTrace, alpha: f64, model: &CostModel) -> RewardOutcome {
    let layer = cascade_exit_layer(sample, alpha);
    RewardOutcome::local_exit(sample, layer, model.lambda() * layer as f64, model.mu)
}

/// A baseline instantiated for one run, carrying its random stream if any.
#[derive(Debug, Clone)]
pub enum Baseline {
    FinalExit,
    RandomExit(SplitMix64),
    FixedLayer(usize),
    Cascade { alpha: f64 },
}

impl Baseline {
    pub fn new(spec: PolicySpec, layers: usize) -> Result<Self> {
        Ok(match spec {
            PolicySpec::FinalExit => Self::FinalExit,
            PolicySpec::RandomExit { seed } => Self::RandomExit(SplitMix64::new(seed)),
            PolicySpec::FixedLayer(layer) => {
                if layer == 0 || layer > layers {
                    return Err(Error::LayerOutOfRange { layer, layers });
                }
                Self::FixedLayer(layer)
            }
            PolicySpec::Cascade { alpha } => Self::Cascade { alpha },
        })
    }

    /// `alpha` is the offload threshold used by the split-based baselines.
    pub fn decide(&mut self, sample: &SampleTrace, model: &CostModel, alpha: f64) -> Result<RewardOutcome> {
        match self {
            Self::FinalExit => Ok(policy_final_exit(sample, model)),
            Self::RandomExit(rng) => Ok(policy_random_exit(sample, model, alpha, rng)),
            Self::FixedLayer(layer) => policy_fixed_layer(sample, *layer, model, alpha),
            Self::Cascade { alpha } => Ok(policy_cascade(sample, *alpha, model)),
        }
    }
}
