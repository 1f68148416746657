//! Trace-driven simulation of split computing with early exits.
//!
//! An early-exit network with `L` exits is abstracted by per-sample confidence
//! traces ([`trace`]). Choosing a splitting layer `i` either exits on the edge
//! when `C_i` clears a threshold or offloads the sample to the cloud; the
//! [`cost`] module turns that choice into a reward. The [`bandit`] learners
//! find the best splitting layer online with UCB, optionally exploiting side
//! observations from shallower exits, and [`evaluator`] measures them against
//! the in-sample oracle. [`experiment`] ties everything into reproducible
//! multi-seed sweeps.

pub mod bandit;
pub mod baselines;
pub mod cost;
pub mod error;
pub mod evaluator;
pub mod experiment;
pub mod io;
pub mod rng;
pub mod synth;
pub mod trace;

pub use bandit::{BanditParams, BanditState, Learner};
pub use baselines::PolicySpec;
pub use cost::{CostModel, RewardOutcome, Variant};
pub use error::{Error, Result};
pub use evaluator::{AggregateResult, OracleResult, RunResult};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport, Policy, TraceSource};
pub use synth::SynthConfig;
pub use trace::{SampleTrace, TraceDataset};
