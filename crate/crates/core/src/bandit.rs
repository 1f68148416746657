//! UCB learners for the splitting layer.
//!
//! Every arm is a candidate splitting layer `1..=L`. After one round-robin
//! pass over the arms, each round picks the arm maximizing
//! `Q(i) + beta * sqrt(ln t / N(i))`, processes the sample at that split, and
//! folds the realized reward into the running mean of the chosen arm. The
//! side-observation learner additionally credits every shallower arm `j < i_t`
//! with the reward it would have earned, since the sample already passed
//! through those exits.
//!
//! `t` counts every round including the initialization pass, so the first
//! index-driven round uses `ln(L + 1)`.

use serde::{Deserialize, Serialize};

use crate::cost::{reward_unchecked, CostModel, RewardOutcome, Variant};
use crate::error::{invalid, Error, Result};
use crate::trace::SampleTrace;

pub const DEFAULT_BETA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    means: Vec<f64>,
    counts: Vec<u64>,
    rounds: u64,
}

impl BanditState {
    pub fn new(layers: usize) -> Result<Self> {
        if layers < 2 {
            return Err(Error::TooFewLayers(layers));
        }
        Ok(Self {
            means: vec![0.0; layers],
            counts: vec![0; layers],
            rounds: 0,
        })
    }

    /// Builds a state from explicit per-arm statistics, mostly for tests and
    /// warm starts.
    pub fn from_parts(means: Vec<f64>, counts: Vec<u64>, rounds: u64) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::TooFewLayers(means.len()));
        }
        if means.len() != counts.len() {
            return Err(invalid("counts", "must have one entry per arm"));
        }
        Ok(Self {
            means,
            counts,
            rounds,
        })
    }

    pub fn layers(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mean(&self, arm: usize) -> f64 {
        self.means[arm - 1]
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm - 1]
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_initialized(&self) -> bool {
        self.counts.iter().all(|&n| n > 0)
    }

    /// `Q(arm) + beta * sqrt(ln(round) / N(arm))`.
    pub fn ucb_index(&self, arm: usize, round: f64, beta: f64) -> Result<f64> {
        self.check_arm(arm)?;
        let n = self.counts[arm - 1];
        if n == 0 {
            return Err(Error::NotInitialized { arm });
        }
        if !(round >= 1.0) {
            return Err(invalid("round", format!("must be >= 1, got {round}")));
        }
        Ok(self.means[arm - 1] + beta * (round.ln() / n as f64).sqrt())
    }

    fn check_arm(&self, arm: usize) -> Result<()> {
        if arm == 0 || arm > self.layers() {
            return Err(Error::LayerOutOfRange {
                layer: arm,
                layers: self.layers(),
            });
        }
        Ok(())
    }

    // Incremental form of the cumulative-sum mean.
    fn record(&mut self, arm: usize, reward: f64) {
        let n = &mut self.counts[arm - 1];
        *n += 1;
        let q = &mut self.means[arm - 1];
        *q += (reward - *q) / *n as f64;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BanditParams {
    pub beta: f64,
    pub alpha: f64,
    pub variant: Variant,
    pub cost_model: CostModel,
}

impl BanditParams {
    pub fn new(beta: f64, alpha: f64, variant: Variant, cost_model: CostModel) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(invalid("beta", format!("must be finite and >= 0, got {beta}")));
        }
        if !(alpha >= 0.0) {
            return Err(invalid("alpha", format!("must be >= 0, got {alpha}")));
        }
        Ok(Self {
            beta,
            alpha,
            variant,
            cost_model,
        })
    }
}

pub fn init_state(layers: usize) -> Result<BanditState> {
    BanditState::new(layers)
}

/// Arm with the largest UCB index for the upcoming round `t + 1`. Ties go to
/// the shallowest layer.
pub fn select_arm(state: &BanditState, params: &BanditParams) -> Result<usize> {
    let round = (state.rounds + 1) as f64;
    let mut best = (1, f64::NEG_INFINITY);
    for arm in 1..=state.layers() {
        let index = state.ucb_index(arm, round, params.beta)?;
        if index > best.1 {
            best = (arm, index);
        }
    }
    Ok(best.0)
}

fn check_sample(state: &BanditState, sample: &SampleTrace, params: &BanditParams) -> Result<()> {
    if sample.layers() != state.layers() || params.cost_model.layers != state.layers() {
        return Err(Error::LengthMismatch {
            line: 0,
            field: "conf",
            expected: state.layers(),
            found: sample.layers(),
        });
    }
    Ok(())
}

/// One round-robin initialization round: round `k` plays arm `k`.
///
/// Only the played arm is updated, for both variants; rewards use the
/// variant's own costing.
pub fn init_round(
    state: &mut BanditState,
    sample: &SampleTrace,
    params: &BanditParams,
) -> Result<RewardOutcome> {
    check_sample(state, sample, params)?;
    let arm = state.rounds as usize + 1;
    if arm > state.layers() {
        return Err(invalid("init_round", "initialization already complete"));
    }
    let outcome = reward_unchecked(sample, arm, params.alpha, &params.cost_model, params.variant);
    state.rounds += 1;
    state.record(arm, outcome.reward);
    Ok(outcome)
}

/// One index-driven round of the single-observation learner.
pub fn step_splitee(
    state: &mut BanditState,
    sample: &SampleTrace,
    params: &BanditParams,
) -> Result<RewardOutcome> {
    check_sample(state, sample, params)?;
    let arm = select_arm(state, params)?;
    let outcome = reward_unchecked(sample, arm, params.alpha, &params.cost_model, Variant::SplitEe);
    state.rounds += 1;
    state.record(arm, outcome.reward);
    Ok(outcome)
}

/// Result of a side-observation round.
#[derive(Debug, Clone, PartialEq)]
pub struct SideObservationStep {
    /// Observations for arms `1..=i_t`, in layer order. The last entry is the
    /// sample's actual execution outcome.
    pub observations: Vec<RewardOutcome>,
}

impl SideObservationStep {
    pub fn chosen(&self) -> &RewardOutcome {
        self.observations
            .last()
            .expect("a round always observes the chosen arm")
    }
}

/// One index-driven round of the side-observation learner: every arm
/// `j <= i_t` receives the reward it would have earned on this sample.
pub fn step_splitee_s(
    state: &mut BanditState,
    sample: &SampleTrace,
    params: &BanditParams,
) -> Result<SideObservationStep> {
    check_sample(state, sample, params)?;
    let chosen = select_arm(state, params)?;
    let observations: Vec<_> = (1..=chosen)
        .map(|arm| reward_unchecked(sample, arm, params.alpha, &params.cost_model, Variant::SplitEeS))
        .collect();
    state.rounds += 1;
    for obs in &observations {
        state.record(obs.arm, obs.reward);
    }
    Ok(SideObservationStep { observations })
}

/// What one round produced, independent of variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub outcome: RewardOutcome,
    /// Number of arms whose statistics were updated this round.
    pub observations: usize,
}

/// Owns a learner's state and drives initialization and index rounds.
#[derive(Debug, Clone)]
pub struct Learner {
    state: BanditState,
    params: BanditParams,
}

impl Learner {
    pub fn new(params: BanditParams) -> Result<Self> {
        Ok(Self {
            state: init_state(params.cost_model.layers)?,
            params,
        })
    }

    pub fn state(&self) -> &BanditState {
        &self.state
    }

    pub fn params(&self) -> &BanditParams {
        &self.params
    }

    pub fn process(&mut self, sample: &SampleTrace) -> Result<Round> {
        if (self.state.rounds as usize) < self.state.layers() {
            let outcome = init_round(&mut self.state, sample, &self.params)?;
            return Ok(Round {
                outcome,
                observations: 1,
            });
        }
        match self.params.variant {
            Variant::SplitEe => Ok(Round {
                outcome: step_splitee(&mut self.state, sample, &self.params)?,
                observations: 1,
            }),
            Variant::SplitEeS => {
                let step = step_splitee_s(&mut self.state, sample, &self.params)?;
                Ok(Round {
                    outcome: *step.chosen(),
                    observations: step.observations.len(),
                })
            }
        }
    }
}
