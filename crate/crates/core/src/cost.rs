//! Cost model and the per-sample reward kernel.
//!
//! Splitting at layer `i` either exits locally (when `C_i >= alpha` or
//! `i == L`) and earns `C_i - mu * gamma(i)`, or offloads to the cloud and
//! earns `C_L - mu * (gamma(i) + o)`. All costs are expressed in units of the
//! per-layer cost `lambda = lambda1 + lambda2`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::trace::{SampleTrace, TraceDataset};

pub const DEFAULT_LAMBDA1: f64 = 6.0 / 7.0;
pub const DEFAULT_LAMBDA2: f64 = 1.0 / 7.0;
pub const DEFAULT_MU: f64 = 0.1;
pub const DEFAULT_OFFLOAD_COST: f64 = 5.0;

/// How edge inference is charged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Inference only at the splitting layer: `lambda1 * i + lambda2`.
    SplitEe,
    /// Inference at every edge layer: `(lambda1 + lambda2) * i`.
    SplitEeS,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Per-layer processing cost.
    pub lambda1: f64,
    /// Per-exit inference cost.
    pub lambda2: f64,
    /// Confidence-per-cost conversion factor.
    pub mu: f64,
    /// Cost of offloading one sample to the cloud.
    pub offload_cost: f64,
    pub layers: usize,
}

impl CostModel {
    pub fn new(lambda1: f64, lambda2: f64, mu: f64, offload_cost: f64, layers: usize) -> Result<Self> {
        for (name, v) in [
            ("lambda1", lambda1),
            ("lambda2", lambda2),
            ("mu", mu),
            ("offload_cost", offload_cost),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if layers < 2 {
            return Err(Error::TooFewLayers(layers));
        }
        Ok(Self {
            lambda1,
            lambda2,
            mu,
            offload_cost,
            layers,
        })
    }

    /// Default cost split (`lambda2 = lambda1 / 6`, `lambda = 1`), `mu = 0.1`
    /// and worst-case offload cost `5 lambda`.
    pub fn with_defaults(layers: usize) -> Result<Self> {
        Self::new(
            DEFAULT_LAMBDA1,
            DEFAULT_LAMBDA2,
            DEFAULT_MU,
            DEFAULT_OFFLOAD_COST,
            layers,
        )
    }

    /// Per-layer total cost `lambda1 + lambda2`.
    pub fn lambda(&self) -> f64 {
        self.lambda1 + self.lambda2
    }

    pub fn with_offload_cost(self, offload_cost: f64) -> Self {
        Self {
            offload_cost,
            ..self
        }
    }

    pub fn with_mu(self, mu: f64) -> Self {
        Self { mu, ..self }
    }

    pub(crate) fn check_layer(&self, layer: usize) -> Result<()> {
        if layer == 0 || layer > self.layers {
            return Err(Error::LayerOutOfRange {
                layer,
                layers: self.layers,
            });
        }
        Ok(())
    }

    /// Edge compute cost of splitting at `layer`.
    pub fn gamma(&self, variant: Variant, layer: usize) -> Result<f64> {
        self.check_layer(layer)?;
        Ok(self.gamma_unchecked(variant, layer))
    }

    #[inline]
    pub(crate) fn gamma_unchecked(&self, variant: Variant, layer: usize) -> f64 {
        let i = layer as f64;
        match variant {
            Variant::SplitEe => self.lambda1 * i + self.lambda2,
            Variant::SplitEeS => (self.lambda1 + self.lambda2) * i,
        }
    }
}

/// The outcome of processing one sample with a given splitting layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardOutcome {
    pub arm: usize,
    pub exited_locally: bool,
    pub inference_layer: usize,
    pub reward: f64,
    pub compute_cost: f64,
    pub comms_cost: f64,
    pub confidence_used: f64,
    /// Correctness at `inference_layer`; for accounting only.
    pub correct: bool,
}

impl RewardOutcome {
    pub fn total_cost(&self) -> f64 {
        self.compute_cost + self.comms_cost
    }

    /// A local exit at `layer` with an explicit compute charge. Used by the
    /// baselines whose costing differs from the bandit variants.
    pub(crate) fn local_exit(sample: &SampleTrace, layer: usize, compute_cost: f64, mu: f64) -> Self {
        let confidence = sample.confidence(layer);
        Self {
            arm: layer,
            exited_locally: true,
            inference_layer: layer,
            reward: confidence - mu * compute_cost,
            compute_cost,
            comms_cost: 0.0,
            confidence_used: confidence,
            correct: sample.is_correct(layer),
        }
    }
}

/// Reward of splitting `sample` at `layer` with exit threshold `alpha`.
pub fn realized_reward(
    sample: &SampleTrace,
    layer: usize,
    alpha: f64,
    model: &CostModel,
    variant: Variant,
) -> Result<RewardOutcome> {
    model.check_layer(layer)?;
    if sample.layers() != model.layers {
        return Err(Error::LengthMismatch {
            line: 0,
            field: "conf",
            expected: model.layers,
            found: sample.layers(),
        });
    }
    Ok(reward_unchecked(sample, layer, alpha, model, variant))
}

#[inline]
pub(crate) fn reward_unchecked(
    sample: &SampleTrace,
    layer: usize,
    alpha: f64,
    model: &CostModel,
    variant: Variant,
) -> RewardOutcome {
    let last = model.layers;
    let gamma = model.gamma_unchecked(variant, layer);
    let c_i = sample.confidence(layer);
    if c_i >= alpha || layer == last {
        RewardOutcome::local_exit(sample, layer, gamma, model.mu)
    } else {
        let c_last = sample.confidence(last);
        RewardOutcome {
            arm: layer,
            exited_locally: false,
            inference_layer: last,
            reward: c_last - model.mu * (gamma + model.offload_cost),
            compute_cost: gamma,
            comms_cost: model.offload_cost,
            confidence_used: c_last,
            correct: sample.is_correct(last),
        }
    }
}

/// Empirical expected reward of `layer` over the whole dataset.
pub fn arm_mean_reward(
    dataset: &TraceDataset,
    layer: usize,
    alpha: f64,
    model: &CostModel,
    variant: Variant,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    model.check_layer(layer)?;
    if dataset.layers() != model.layers {
        return Err(invalid(
            "layers",
            format!("cost model has {} layers, dataset {}", model.layers, dataset.layers()),
        ));
    }
    let sum: f64 = dataset
        .samples()
        .iter()
        .map(|s| reward_unchecked(s, layer, alpha, model, variant).reward)
        .sum();
    Ok(sum / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Metadata;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    fn model(offload: f64, layers: usize) -> CostModel {
        CostModel::new(6.0 / 7.0, 1.0 / 7.0, 0.1, offload, layers).unwrap()
    }

    fn sample(c: &[f64]) -> SampleTrace {
        SampleTrace::new("x", c.to_vec(), vec![true; c.len()]).unwrap()
    }

    #[test]
    fn gamma_values() {
        let m = model(5.0, 12);
        assert_abs_diff_eq!(m.gamma(Variant::SplitEeS, 12).unwrap(), 12.0, epsilon = TOL);
        assert_abs_diff_eq!(
            m.gamma(Variant::SplitEe, 12).unwrap(),
            6.0 / 7.0 * 12.0 + 1.0 / 7.0,
            epsilon = TOL
        );
        assert_abs_diff_eq!(m.gamma(Variant::SplitEe, 12).unwrap(), 10.4286, epsilon = 1e-4);
        for v in [Variant::SplitEe, Variant::SplitEeS] {
            assert!(matches!(m.gamma(v, 0), Err(Error::LayerOutOfRange { .. })));
            assert!(m.gamma(v, 13).is_err());
        }
    }

    #[test]
    fn rejects_negative_costs() {
        assert!(CostModel::new(-1.0, 0.0, 0.1, 1.0, 4).is_err());
        assert!(CostModel::new(1.0, 0.0, f64::NAN, 1.0, 4).is_err());
        assert!(CostModel::new(1.0, 0.0, 0.1, 1.0, 1).is_err());
    }

    #[test]
    fn reward_exit_branch() {
        let s = sample(&[0.9, 0.95]);
        let out = realized_reward(&s, 1, 0.8, &model(5.0, 2), Variant::SplitEeS).unwrap();
        assert!(out.exited_locally);
        assert_eq!(out.inference_layer, 1);
        assert_abs_diff_eq!(out.reward, 0.8, epsilon = TOL);
        assert_eq!(out.comms_cost, 0.0);
    }

    #[test]
    fn reward_offload_branch() {
        let s = sample(&[0.9, 0.95]);
        let out = realized_reward(&s, 1, 0.99, &model(5.0, 2), Variant::SplitEeS).unwrap();
        assert!(!out.exited_locally);
        assert_eq!(out.inference_layer, 2);
        assert_abs_diff_eq!(out.reward, 0.35, epsilon = TOL);
        assert_eq!(out.comms_cost, 5.0);
        assert_eq!(out.confidence_used, 0.95);
    }

    #[test]
    fn reward_last_layer_always_exits() {
        let s = sample(&[0.9, 0.95]);
        let out = realized_reward(&s, 2, 0.99, &model(5.0, 2), Variant::SplitEeS).unwrap();
        assert!(out.exited_locally);
        assert_abs_diff_eq!(out.reward, 0.75, epsilon = TOL);
    }

    #[test]
    fn tie_at_threshold_exits() {
        let s = sample(&[0.8, 0.95]);
        let out = realized_reward(&s, 1, 0.8, &model(5.0, 2), Variant::SplitEe).unwrap();
        assert!(out.exited_locally);
    }

    #[test]
    fn reward_layer_out_of_range() {
        let s = sample(&[0.9, 0.95]);
        assert!(realized_reward(&s, 0, 0.8, &model(5.0, 2), Variant::SplitEe).is_err());
        assert!(realized_reward(&s, 3, 0.8, &model(5.0, 2), Variant::SplitEe).is_err());
    }

    fn two_sample_toy() -> TraceDataset {
        TraceDataset::new(
            2,
            vec![
                SampleTrace::new("a", vec![0.9, 0.95], vec![true, true]).unwrap(),
                SampleTrace::new("b", vec![0.5, 0.99], vec![false, true]).unwrap(),
            ],
            Metadata::new(),
        )
        .unwrap()
    }

    #[test]
    fn arm_mean_two_sample_toy() {
        // Hand enumeration: sample a exits at 1 with 0.9 - 0.1 = 0.8, sample b
        // offloads with 0.99 - 0.1 * (1 + 5) = 0.39.
        let ds = two_sample_toy();
        let m = model(5.0, 2);
        let mean = arm_mean_reward(&ds, 1, 0.8, &m, Variant::SplitEeS).unwrap();
        assert_abs_diff_eq!(mean, 0.595, epsilon = TOL);
    }

    #[test]
    fn arm_mean_zero_mu_last_layer_is_mean_confidence() {
        let ds = two_sample_toy();
        let m = model(5.0, 2).with_mu(0.0);
        for v in [Variant::SplitEe, Variant::SplitEeS] {
            let mean = arm_mean_reward(&ds, 2, 0.8, &m, v).unwrap();
            assert_abs_diff_eq!(mean, (0.95 + 0.99) / 2.0, epsilon = TOL);
        }
    }

    #[test]
    fn arm_mean_all_exit_case() {
        let ds = two_sample_toy();
        let m = model(5.0, 2);
        let mean = arm_mean_reward(&ds, 1, 0.0, &m, Variant::SplitEe).unwrap();
        let gamma = m.gamma(Variant::SplitEe, 1).unwrap();
        assert_abs_diff_eq!(mean, (0.9 + 0.5) / 2.0 - 0.1 * gamma, epsilon = TOL);
    }

    #[test]
    fn arm_mean_empty_dataset() {
        let ds = TraceDataset::new(2, vec![], Metadata::new()).unwrap();
        assert!(matches!(
            arm_mean_reward(&ds, 1, 0.8, &model(5.0, 2), Variant::SplitEe),
            Err(Error::EmptyDataset)
        ));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<f64>, usize, f64, f64, f64, f64, f64)> {
        (2usize..10).prop_flat_map(|layers| {
            (
                prop::collection::vec(0.0f64..=1.0, layers),
                1..=layers,
                0.0f64..1.2,
                0.0f64..2.0,
                0.0f64..1.0,
                0.0f64..1.0,
                0.0f64..10.0,
            )
        })
    }

    proptest! {
        #[test]
        fn outcome_invariants((c, layer, alpha, mu, l1, l2, o) in arb_case()) {
            let layers = c.len();
            let m = CostModel::new(l1, l2, mu, o, layers).unwrap();
            let s = sample(&c);
            for v in [Variant::SplitEe, Variant::SplitEeS] {
                let out = realized_reward(&s, layer, alpha, &m, v).unwrap();
                let expected_exit = c[layer - 1] >= alpha || layer == layers;
                prop_assert_eq!(out.exited_locally, expected_exit);
                prop_assert_eq!(out.comms_cost > 0.0, !out.exited_locally && o > 0.0);
                let recomputed = out.confidence_used - mu * (out.compute_cost + out.comms_cost);
                prop_assert!((out.reward - recomputed).abs() <= TOL);
                let lower = -mu * (m.gamma(v, layers).unwrap() + o);
                prop_assert!(out.reward <= 1.0 + TOL && out.reward >= lower - TOL);
            }
        }

        #[test]
        fn gamma_ordering(l1 in 0.0f64..2.0, l2 in 0.0f64..2.0, layer in 1usize..20) {
            let m = CostModel::new(l1, l2, 0.1, 1.0, 20).unwrap();
            let a = m.gamma(Variant::SplitEe, layer).unwrap();
            let b = m.gamma(Variant::SplitEeS, layer).unwrap();
            prop_assert!(a <= b + TOL);
            if l2 > 1e-9 && layer > 1 {
                prop_assert!(a < b);
            }
        }

        #[test]
        fn reward_non_increasing_in_mu(
            (c, layer, alpha, mu, l1, l2, o) in arb_case(),
            extra in 0.0f64..2.0,
        ) {
            let m = CostModel::new(l1, l2, mu, o, c.len()).unwrap();
            let s = sample(&c);
            for v in [Variant::SplitEe, Variant::SplitEeS] {
                let lo = realized_reward(&s, layer, alpha, &m, v).unwrap().reward;
                let hi = realized_reward(&s, layer, alpha, &m.with_mu(mu + extra), v).unwrap().reward;
                prop_assert!(hi <= lo + TOL);
            }
        }

        #[test]
        fn mean_matches_conditional_decomposition(
            rows in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 4), 1..40),
            layer in 1usize..=4,
            alpha in 0.0f64..1.1,
        ) {
            let samples = rows.iter().enumerate()
                .map(|(k, c)| SampleTrace::new(format!("s{k}"), c.clone(), vec![true; 4]).unwrap())
                .collect();
            let ds = TraceDataset::new(4, samples, Metadata::new()).unwrap();
            let m = model(3.0, 4);
            let mean = arm_mean_reward(&ds, layer, alpha, &m, Variant::SplitEe).unwrap();
            let outs: Vec<_> = ds.samples().iter()
                .map(|s| realized_reward(s, layer, alpha, &m, Variant::SplitEe).unwrap())
                .collect();
            let (exits, offs): (Vec<_>, Vec<_>) = outs.iter().partition(|o| o.exited_locally);
            let n = outs.len() as f64;
            let p_exit = exits.len() as f64 / n;
            let avg = |v: &[&RewardOutcome]| if v.is_empty() { 0.0 } else {
                v.iter().map(|o| o.reward).sum::<f64>() / v.len() as f64
            };
            let decomposed = p_exit * avg(&exits) + (1.0 - p_exit) * avg(&offs);
            prop_assert!((mean - decomposed).abs() <= 1e-12);
        }
    }
}
