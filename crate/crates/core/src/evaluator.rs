//! In-sample oracle, regret curves, and accuracy/cost accounting.
//!
//! Costs are reported in units of `10^4 * lambda`. Regret is pseudo-regret by
//! default: each round adds the optimality gap of the arm chosen, computed from
//! full-dataset mean rewards.

use serde::{Deserialize, Serialize};

use crate::cost::{reward_unchecked, CostModel, RewardOutcome, Variant};
use crate::error::{invalid, Error, Result};
use crate::trace::{SampleTrace, TraceDataset};

/// Divisor that converts raw `lambda` totals into reporting units.
pub const COST_UNIT: f64 = 1e4;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub mean_rewards: Vec<f64>,
    pub best_arm: usize,
    pub gaps: Vec<f64>,
}

impl OracleResult {
    pub fn gap(&self, arm: usize) -> f64 {
        self.gaps[arm - 1]
    }

    /// Smallest nonzero gap, if any arm is suboptimal.
    pub fn min_gap(&self) -> Option<f64> {
        self.gaps
            .iter()
            .copied()
            .filter(|&g| g > 0.0)
            .min_by(f64::total_cmp)
    }
}

pub fn oracle(
    dataset: &TraceDataset,
    alpha: f64,
    model: &CostModel,
    variant: Variant,
) -> Result<OracleResult> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.layers() != model.layers {
        return Err(invalid(
            "layers",
            format!("cost model has {} layers, dataset {}", model.layers, dataset.layers()),
        ));
    }
    let layers = model.layers;
    // Accumulate all arms in one pass over the samples.
    let mut sums = vec![0.0; layers];
    for sample in dataset.samples() {
        for (arm, sum) in (1..=layers).zip(sums.iter_mut()) {
            *sum += reward_unchecked(sample, arm, alpha, model, variant).reward;
        }
    }
    let n = dataset.len() as f64;
    let mean_rewards: Vec<f64> = sums.into_iter().map(|s| s / n).collect();
    Ok(from_means(mean_rewards))
}

pub(crate) fn from_means(mean_rewards: Vec<f64>) -> OracleResult {
    let mut best = 0;
    for (idx, &m) in mean_rewards.iter().enumerate() {
        if m > mean_rewards[best] {
            best = idx;
        }
    }
    let top = mean_rewards[best];
    let gaps = mean_rewards.iter().map(|&m| top - m).collect();
    OracleResult {
        mean_rewards,
        best_arm: best + 1,
        gaps,
    }
}

/// `curve[t]` is the summed gap of the first `t + 1` selections.
pub fn pseudo_regret_curve(selections: &[usize], oracle: &OracleResult) -> Result<Vec<f64>> {
    let layers = oracle.gaps.len();
    let mut total = 0.0;
    selections
        .iter()
        .map(|&arm| {
            if arm == 0 || arm > layers {
                return Err(Error::LayerOutOfRange { layer: arm, layers });
            }
            total += oracle.gaps[arm - 1];
            Ok(total)
        })
        .collect()
}

/// Regret measured on the realized per-sample rewards instead of expected
/// ones. Diagnostic only: it can decrease and go negative.
pub fn realized_regret_curve(
    samples: &[SampleTrace],
    selections: &[usize],
    best_arm: usize,
    alpha: f64,
    model: &CostModel,
    variant: Variant,
) -> Result<Vec<f64>> {
    if samples.len() != selections.len() {
        return Err(Error::MismatchedHorizon {
            expected: samples.len(),
            found: selections.len(),
        });
    }
    model.check_layer(best_arm)?;
    let mut total = 0.0;
    samples
        .iter()
        .zip(selections)
        .map(|(s, &arm)| {
            model.check_layer(arm)?;
            let best = reward_unchecked(s, best_arm, alpha, model, variant).reward;
            let got = reward_unchecked(s, arm, alpha, model, variant).reward;
            total += best - got;
            Ok(total)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    /// Total cost in `10^4 * lambda` units.
    pub total_cost: f64,
    pub offload_fraction: f64,
}

pub fn accuracy_cost_summary(outcomes: &[RewardOutcome]) -> Result<Summary> {
    if outcomes.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = outcomes.len() as f64;
    let correct = outcomes.iter().filter(|o| o.correct).count() as f64;
    let offloaded = outcomes.iter().filter(|o| !o.exited_locally).count() as f64;
    let cost: f64 = outcomes.iter().map(RewardOutcome::total_cost).sum();
    Ok(Summary {
        accuracy: correct / n,
        total_cost: cost / COST_UNIT,
        offload_fraction: offloaded / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub selections: Vec<usize>,
    pub regret_curve: Vec<f64>,
    pub accuracy: f64,
    pub total_cost: f64,
    pub offload_fraction: f64,
    pub arm_histogram: Vec<u64>,
    /// Total arm-statistic updates over the run (equals rounds unless the
    /// policy uses side observations).
    pub observations: u64,
}

impl RunResult {
    pub fn from_outcomes(
        outcomes: &[RewardOutcome],
        oracle: &OracleResult,
        observations: u64,
    ) -> Result<Self> {
        let summary = accuracy_cost_summary(outcomes)?;
        let selections: Vec<usize> = outcomes.iter().map(|o| o.arm).collect();
        let regret_curve = pseudo_regret_curve(&selections, oracle)?;
        let mut arm_histogram = vec![0u64; oracle.gaps.len()];
        for &arm in &selections {
            arm_histogram[arm - 1] += 1;
        }
        Ok(Self {
            selections,
            regret_curve,
            accuracy: summary.accuracy,
            total_cost: summary.total_cost,
            offload_fraction: summary.offload_fraction,
            arm_histogram,
            observations,
        })
    }

    pub fn rounds(&self) -> usize {
        self.selections.len()
    }

    /// Cumulative regret after `t` rounds (`t >= 1`).
    pub fn regret_at(&self, t: usize) -> f64 {
        self.regret_curve[t - 1]
    }
}

/// Mean, sample standard deviation, and 95% normal half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub ci_halfwidth: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n > 0, "no values");
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return Self {
                mean,
                std: 0.0,
                ci_halfwidth: 0.0,
            };
        }
        // Shifted-data variance: exactly zero when all values are equal.
        let pivot = values[0];
        let (s1, s2) = values.iter().fold((0.0, 0.0), |(s1, s2), v| {
            let d = v - pivot;
            (s1 + d, s2 + d * d)
        });
        let var = ((s2 - s1 * s1 / n as f64) / (n - 1) as f64).max(0.0);
        let std = var.sqrt();
        Self {
            mean,
            std,
            ci_halfwidth: Z_95 * std / (n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub runs: usize,
    pub mean_regret: Vec<f64>,
    pub regret_halfwidth: Vec<f64>,
    pub accuracy: Stat,
    pub total_cost: Stat,
    pub offload_fraction: Stat,
    /// Selection counts per arm summed over runs.
    pub arm_histogram: Vec<u64>,
}

impl AggregateResult {
    pub fn final_regret(&self) -> f64 {
        self.mean_regret.last().copied().unwrap_or(0.0)
    }
}

pub fn aggregate_runs(results: &[RunResult]) -> Result<AggregateResult> {
    let first = results.first().ok_or(Error::EmptyDataset)?;
    let rounds = first.rounds();
    let layers = first.arm_histogram.len();
    for r in results {
        if r.rounds() != rounds {
            return Err(Error::MismatchedHorizon {
                expected: rounds,
                found: r.rounds(),
            });
        }
    }
    let mut mean_regret = Vec::with_capacity(rounds);
    let mut regret_halfwidth = Vec::with_capacity(rounds);
    let mut column = vec![0.0; results.len()];
    for t in 0..rounds {
        for (slot, r) in column.iter_mut().zip(results) {
            *slot = r.regret_curve[t];
        }
        let stat = Stat::of(&column);
        mean_regret.push(stat.mean);
        regret_halfwidth.push(stat.ci_halfwidth);
    }
    let scalar = |f: fn(&RunResult) -> f64| Stat::of(&results.iter().map(f).collect::<Vec<_>>());
    let mut arm_histogram = vec![0u64; layers];
    for r in results {
        for (acc, c) in arm_histogram.iter_mut().zip(&r.arm_histogram) {
            *acc += c;
        }
    }
    Ok(AggregateResult {
        runs: results.len(),
        mean_regret,
        regret_halfwidth,
        accuracy: scalar(|r| r.accuracy),
        total_cost: scalar(|r| r.total_cost),
        offload_fraction: scalar(|r| r.offload_fraction),
        arm_histogram,
    })
}
