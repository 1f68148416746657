//! Experiment orchestration: repeated reshuffled runs of one policy over a
//! trace, for every offload cost in a sweep, with artifacts on disk.
//!
//! Run `r` (1-based) at offload cost `o` reshuffles the trace with seed
//! `derive_seed(base_seed, [o.to_bits(), r])`. The random-exit baseline draws
//! its layers from `derive_seed(run_seed, [1])`. Runs execute in parallel and
//! are reduced in run order, so artifacts do not depend on scheduling.
//!
//! Artifacts written to the output directory:
//!
//! * `config.json`: the resolved configuration.
//! * `regret_o<o>.csv`: `round,mean_regret,ci_halfwidth` per offload cost.
//! * `summary.json`: per-offload-cost oracle, accuracy, cost and histogram.
//! * `sweep.csv` / `sweep.txt`: one row per offload cost.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandit::{BanditParams, Learner, DEFAULT_BETA};
use crate::baselines::{Baseline, PolicySpec};
use crate::cost::{CostModel, RewardOutcome, Variant, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, DEFAULT_MU};
use crate::error::{Error, Result};
use crate::evaluator::{
    aggregate_runs, oracle, realized_regret_curve, AggregateResult, OracleResult, RunResult, Stat,
};
use crate::io::write_atomic;
use crate::rng::derive_seed;
use crate::synth::{generate, SynthConfig};
use crate::trace::{SampleTrace, TraceDataset};

const RANDOM_EXIT_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    SplitEe,
    SplitEeS,
    FinalExit,
    RandomExit,
    Fixed(usize),
    Cascade,
}

impl Policy {
    pub fn is_bandit(self) -> bool {
        matches!(self, Self::SplitEe | Self::SplitEeS)
    }

    /// Costing used for the oracle and regret of this policy.
    pub fn variant(self) -> Variant {
        match self {
            Self::SplitEeS => Variant::SplitEeS,
            _ => Variant::SplitEe,
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "splitee" => Ok(Self::SplitEe),
            "splitee-s" => Ok(Self::SplitEeS),
            "final-exit" => Ok(Self::FinalExit),
            "random-exit" => Ok(Self::RandomExit),
            "cascade" => Ok(Self::Cascade),
            _ => s
                .strip_prefix("fixed:")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(Self::Fixed)
                .ok_or_else(|| Error::InvalidPolicy(s.to_string())),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SplitEe => f.write_str("splitee"),
            Self::SplitEeS => f.write_str("splitee-s"),
            Self::FinalExit => f.write_str("final-exit"),
            Self::RandomExit => f.write_str("random-exit"),
            Self::Fixed(i) => write!(f, "fixed:{i}"),
            Self::Cascade => f.write_str("cascade"),
        }
    }
}

impl Serialize for Policy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegretMode {
    /// Sum of optimality gaps of the chosen arms.
    #[default]
    Pseudo,
    /// Realized per-sample reward differences against the oracle arm.
    Realized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSource {
    File(PathBuf),
    Synth(SynthConfig),
}

impl TraceSource {
    pub fn load(&self) -> Result<TraceDataset> {
        match self {
            Self::File(path) => TraceDataset::load(path),
            Self::Synth(cfg) => generate(cfg),
        }
    }
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_mu() -> f64 {
    DEFAULT_MU
}
fn default_lambda1() -> f64 {
    DEFAULT_LAMBDA1
}
fn default_lambda2() -> f64 {
    DEFAULT_LAMBDA2
}
fn default_offload_costs() -> Vec<f64> {
    vec![1.0, 2.0, 3.0, 4.0, 5.0]
}
fn default_runs() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub trace: TraceSource,
    pub policy: Policy,
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    #[serde(default = "default_lambda2")]
    pub lambda2: f64,
    /// Offload costs to sweep, in the same units as `lambda1`/`lambda2`.
    #[serde(default = "default_offload_costs")]
    pub offload_costs: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub regret: RegretMode,
    /// `summary.json` of a final-exit run to report deltas against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_summary: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(trace: TraceSource, policy: Policy, alpha: f64) -> Self {
        Self {
            trace,
            policy,
            alpha,
            beta: DEFAULT_BETA,
            mu: DEFAULT_MU,
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
            offload_costs: default_offload_costs(),
            runs: default_runs(),
            base_seed: 0,
            regret: RegretMode::Pseudo,
            baseline_summary: None,
        }
    }

    /// Reads a TOML file, or JSON when the extension is `.json`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            toml::from_str(&text).map_err(|e| Error::InvalidConfig(e.to_string()))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        if self.offload_costs.is_empty() {
            return Err(Error::InvalidConfig("offload_costs must not be empty".into()));
        }
        if let Some(o) = self.offload_costs.iter().find(|o| !(o.is_finite() && **o >= 0.0)) {
            return Err(Error::InvalidConfig(format!("offload cost {o} must be >= 0")));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidConfig(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn cost_model(&self, offload_cost: f64, layers: usize) -> Result<CostModel> {
        CostModel::new(self.lambda1, self.lambda2, self.mu, offload_cost, layers)
    }

    pub fn run_seed(&self, offload_cost: f64, run: usize) -> u64 {
        derive_seed(self.base_seed, &[offload_cost.to_bits(), run as u64])
    }
}

/// Outcomes of one online pass of a policy over a sample stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRun {
    pub outcomes: Vec<RewardOutcome>,
    /// Arm-statistic updates made by a learner; equals the number of rounds
    /// for non-learning policies.
    pub observations: u64,
}

impl PolicyRun {
    pub fn selections(&self) -> Vec<usize> {
        self.outcomes.iter().map(|o| o.arm).collect()
    }
}

/// Feeds `samples` in order to `policy`. `seed` drives the random-exit
/// baseline only.
pub fn run_policy(
    samples: &[SampleTrace],
    policy: Policy,
    model: &CostModel,
    alpha: f64,
    beta: f64,
    seed: u64,
) -> Result<PolicyRun> {
    if policy.is_bandit() {
        if samples.len() < model.layers {
            return Err(Error::DatasetTooSmall {
                samples: samples.len(),
                layers: model.layers,
            });
        }
        let params = BanditParams::new(beta, alpha, policy.variant(), *model)?;
        let mut learner = Learner::new(params)?;
        let mut outcomes = Vec::with_capacity(samples.len());
        for sample in samples {
            outcomes.push(learner.process(sample)?.outcome);
        }
        return Ok(PolicyRun {
            outcomes,
            observations: learner.state().total_count(),
        });
    }
    let spec = match policy {
        Policy::FinalExit => PolicySpec::FinalExit,
        Policy::RandomExit => PolicySpec::RandomExit {
            seed: derive_seed(seed, &[RANDOM_EXIT_STREAM]),
        },
        Policy::Fixed(layer) => PolicySpec::FixedLayer(layer),
        Policy::Cascade => PolicySpec::Cascade { alpha },
        Policy::SplitEe | Policy::SplitEeS => unreachable!(),
    };
    let mut baseline = Baseline::new(spec, model.layers)?;
    let outcomes = samples
        .iter()
        .map(|s| baseline.decide(s, model, alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyRun {
        observations: outcomes.len() as u64,
        outcomes,
    })
}

/// Everything needed to execute the runs of one offload cost.
#[derive(Debug, Clone)]
pub struct RunPlan<'a> {
    pub dataset: &'a TraceDataset,
    pub policy: Policy,
    pub model: CostModel,
    pub alpha: f64,
    pub beta: f64,
    pub regret: RegretMode,
    pub oracle: &'a OracleResult,
}

impl RunPlan<'_> {
    pub fn execute(&self, seed: u64) -> Result<RunResult> {
        let shuffled = self.dataset.reshuffle(seed);
        let run = run_policy(
            shuffled.samples(),
            self.policy,
            &self.model,
            self.alpha,
            self.beta,
            seed,
        )?;
        let mut result = RunResult::from_outcomes(&run.outcomes, self.oracle, run.observations)?;
        if self.regret == RegretMode::Realized {
            result.regret_curve = realized_regret_curve(
                shuffled.samples(),
                &result.selections,
                self.oracle.best_arm,
                self.alpha,
                &self.model,
                self.policy.variant(),
            )?;
        }
        Ok(result)
    }
}

/// Runs `config.runs` reshuffled repetitions at one offload cost, in parallel,
/// returned in run order.
pub fn simulate_runs(
    config: &ExperimentConfig,
    dataset: &TraceDataset,
    offload_cost: f64,
) -> Result<(OracleResult, Vec<RunResult>)> {
    let model = config.cost_model(offload_cost, dataset.layers())?;
    let oracle = oracle(dataset, config.alpha, &model, config.policy.variant())?;
    let plan = RunPlan {
        dataset,
        policy: config.policy,
        model,
        alpha: config.alpha,
        beta: config.beta,
        regret: config.regret,
        oracle: &oracle,
    };
    let results = (1..=config.runs)
        .into_par_iter()
        .map(|r| plan.execute(config.run_seed(offload_cost, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok((oracle, results))
}

/// Deltas against a final-exit reference, in the usual reporting form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    /// Accuracy difference in percentage points.
    pub accuracy_points: f64,
    /// Relative cost change in percent.
    pub cost_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadReport {
    pub offload_cost: f64,
    pub best_arm: usize,
    pub oracle_mean_rewards: Vec<f64>,
    pub min_gap: Option<f64>,
    pub rounds: usize,
    pub accuracy: Stat,
    pub total_cost: Stat,
    pub offload_fraction: Stat,
    pub final_regret: f64,
    pub final_regret_halfwidth: f64,
    pub arm_histogram: Vec<u64>,
    pub mean_observations: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_vs_final_exit: Option<Delta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub policy: Policy,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub runs: usize,
    pub base_seed: u64,
    pub layers: usize,
    pub samples: usize,
    pub regret: RegretMode,
    pub sweep: Vec<OffloadReport>,
}

impl ExperimentReport {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    /// One aggregate per offload cost, in sweep order.
    pub aggregates: Vec<AggregateResult>,
    pub artifacts: Vec<PathBuf>,
}

fn offload_label(o: f64) -> String {
    format!("o{o}")
}

fn regret_csv(agg: &AggregateResult) -> String {
    let mut out = String::from("round,mean_regret,ci_halfwidth\n");
    for (t, (m, h)) in agg.mean_regret.iter().zip(&agg.regret_halfwidth).enumerate() {
        let _ = writeln!(out, "{},{},{}", t + 1, m, h);
    }
    out
}

fn reference_for(baseline: &ExperimentReport, offload_cost: f64) -> Option<&OffloadReport> {
    baseline
        .sweep
        .iter()
        .find(|r| r.offload_cost == offload_cost)
        .or_else(|| baseline.sweep.first())
}

fn delta(row: &OffloadReport, reference: &OffloadReport) -> Delta {
    Delta {
        accuracy_points: 100.0 * (row.accuracy.mean - reference.accuracy.mean),
        cost_percent: 100.0 * (row.total_cost.mean - reference.total_cost.mean)
            / reference.total_cost.mean,
    }
}

/// Machine- and human-readable tables of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub csv: String,
    pub text: String,
}

pub fn sweep_report(rows: &[OffloadReport]) -> SweepReport {
    let mut csv = String::from(
        "offload_cost,accuracy_mean,accuracy_ci,cost_mean,cost_ci,offload_fraction_mean,offload_fraction_ci,best_arm,final_regret\n",
    );
    let mut text = format!(
        "{:>8}  {:>18}  {:>20}  {:>10}  {:>8}  {:>12}\n",
        "o", "accuracy (%)", "cost (1e4 lambda)", "offloaded", "best", "regret"
    );
    for r in rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.offload_cost,
            r.accuracy.mean,
            r.accuracy.ci_halfwidth,
            r.total_cost.mean,
            r.total_cost.ci_halfwidth,
            r.offload_fraction.mean,
            r.offload_fraction.ci_halfwidth,
            r.best_arm,
            r.final_regret
        );
        let _ = writeln!(
            text,
            "{:>8}  {:>18}  {:>20}  {:>9.1}%  {:>8}  {:>12.2}",
            r.offload_cost,
            format!("{:.2} ± {:.2}", 100.0 * r.accuracy.mean, 100.0 * r.accuracy.ci_halfwidth),
            format!("{:.3} ± {:.3}", r.total_cost.mean, r.total_cost.ci_halfwidth),
            100.0 * r.offload_fraction.mean,
            r.best_arm,
            r.final_regret
        );
        if let Some(d) = r.delta_vs_final_exit {
            let _ = writeln!(
                text,
                "{:>8}  vs final-exit: accuracy {:+.1} points, cost {:+.1}%",
                "", d.accuracy_points, d.cost_percent
            );
        }
    }
    SweepReport { csv, text }
}

/// Runs the whole sweep and writes every artifact into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    config.validate()?;
    let dataset = config.trace.load()?;
    if config.policy.is_bandit() && dataset.len() < dataset.layers() {
        return Err(Error::DatasetTooSmall {
            samples: dataset.len(),
            layers: dataset.layers(),
        });
    }
    if let Policy::Fixed(layer) = config.policy {
        if layer > dataset.layers() {
            return Err(Error::LayerOutOfRange {
                layer,
                layers: dataset.layers(),
            });
        }
    }
    let baseline = config
        .baseline_summary
        .as_deref()
        .map(ExperimentReport::load)
        .transpose()?;

    std::fs::create_dir_all(out_dir)?;
    let mut artifacts = Vec::new();
    let mut write = |name: String, bytes: &[u8]| -> Result<()> {
        let path = out_dir.join(name);
        write_atomic(&path, bytes)?;
        artifacts.push(path);
        Ok(())
    };

    let mut sweep = Vec::with_capacity(config.offload_costs.len());
    let mut aggregates = Vec::with_capacity(config.offload_costs.len());
    for &o in &config.offload_costs {
        let (oracle, results) = simulate_runs(config, &dataset, o)?;
        let agg = aggregate_runs(&results)?;
        write(format!("regret_{}.csv", offload_label(o)), regret_csv(&agg).as_bytes())?;
        let mean_observations =
            results.iter().map(|r| r.observations as f64).sum::<f64>() / results.len() as f64;
        let mut row = OffloadReport {
            offload_cost: o,
            best_arm: oracle.best_arm,
            min_gap: oracle.min_gap(),
            oracle_mean_rewards: oracle.mean_rewards,
            rounds: dataset.len(),
            accuracy: agg.accuracy,
            total_cost: agg.total_cost,
            offload_fraction: agg.offload_fraction,
            final_regret: agg.final_regret(),
            final_regret_halfwidth: agg.regret_halfwidth.last().copied().unwrap_or(0.0),
            arm_histogram: agg.arm_histogram.clone(),
            mean_observations,
            delta_vs_final_exit: None,
        };
        if let Some(reference) = baseline.as_ref().and_then(|b| reference_for(b, o)) {
            row.delta_vs_final_exit = Some(delta(&row, reference));
        }
        sweep.push(row);
        aggregates.push(agg);
    }

    let report = ExperimentReport {
        policy: config.policy,
        alpha: config.alpha,
        beta: config.beta,
        mu: config.mu,
        lambda1: config.lambda1,
        lambda2: config.lambda2,
        runs: config.runs,
        base_seed: config.base_seed,
        layers: dataset.layers(),
        samples: dataset.len(),
        regret: config.regret,
        sweep,
    };
    let tables = sweep_report(&report.sweep);
    write("sweep.csv".into(), tables.csv.as_bytes())?;
    write("sweep.txt".into(), tables.text.as_bytes())?;
    let mut summary = serde_json::to_vec_pretty(&report)?;
    summary.push(b'\n');
    write("summary.json".into(), &summary)?;
    let mut echoed = serde_json::to_vec_pretty(config)?;
    echoed.push(b'\n');
    write("config.json".into(), &echoed)?;

    Ok(ExperimentOutcome {
        report,
        aggregates,
        artifacts,
    })
}
