//! Seeded synthetic traces with logistic confidence trajectories.
//!
//! Each sample draws a difficulty component `(steepness a, midpoint b)` and
//! gets `c_i = clamp(logistic(a * (i - b)) + eps_i, 0, 1)` with
//! `eps_i ~ Normal(0, sigma)`. Exit `i` predicts correctly with probability
//! `clamp(p0 + p1 * c_i, 0, 1)`. An infinite steepness gives a step profile
//! that is 1 from layer `b` onward.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::SplitMix64;
use crate::trace::{Metadata, SampleTrace, TraceDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixComponent {
    pub weight: f64,
    pub steepness: f64,
    pub midpoint: f64,
}

impl MixComponent {
    pub fn new(weight: f64, steepness: f64, midpoint: f64) -> Self {
        Self {
            weight,
            steepness,
            midpoint,
        }
    }

    /// Noise-free confidence at 1-indexed `layer`.
    pub fn profile(&self, layer: usize) -> f64 {
        let x = layer as f64 - self.midpoint;
        if self.steepness.is_infinite() {
            if x >= 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 / (1.0 + (-self.steepness * x).exp())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectnessLink {
    pub p0: f64,
    pub p1: f64,
}

impl CorrectnessLink {
    pub fn probability(&self, confidence: f64) -> f64 {
        (self.p0 + self.p1 * confidence).clamp(0.0, 1.0)
    }
}

impl Default for CorrectnessLink {
    fn default() -> Self {
        Self { p0: 0.1, p1: 0.85 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub layers: usize,
    pub samples: usize,
    pub seed: u64,
    pub difficulty_mix: Vec<MixComponent>,
    pub sigma: f64,
    #[serde(default)]
    pub correctness_link: CorrectnessLink,
}

impl SynthConfig {
    /// Two-population trace for `L = 12` and threshold 0.8: 65% easy samples
    /// that clear the threshold from layer 3, 35% hard samples that only clear
    /// it near layer 11. About 35% of samples travel past layer 6 under a
    /// confidence cascade.
    pub fn two_population(samples: usize, seed: u64) -> Self {
        Self {
            layers: 12,
            samples,
            seed,
            difficulty_mix: vec![
                MixComponent::new(0.65, 6.0, 2.0),
                MixComponent::new(0.35, 1.0, 9.0),
            ],
            sigma: 0.05,
            correctness_link: CorrectnessLink::default(),
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
        if self.layers < 2 {
            return Err(Error::TooFewLayers(self.layers));
        }
        if self.samples == 0 {
            return Err(invalid("samples", "must be positive"));
        }
        if self.difficulty_mix.is_empty() {
            return Err(invalid("difficulty_mix", "needs at least one component"));
        }
        for c in &self.difficulty_mix {
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(invalid("weight", format!("must be positive, got {}", c.weight)));
            }
            if c.steepness.is_nan() || !c.midpoint.is_finite() {
                return Err(invalid("difficulty_mix", "steepness and midpoint must be numbers"));
            }
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(invalid("sigma", format!("must be >= 0, got {}", self.sigma)));
        }
        let CorrectnessLink { p0, p1 } = self.correctness_link;
        if !((0.0..=1.0).contains(&p0) && (0.0..=1.0).contains(&(p0 + p1))) {
            return Err(invalid(
                "correctness_link",
                format!("need 0 <= p0 <= 1 and 0 <= p0 + p1 <= 1, got ({p0}, {p1})"),
            ));
        }
        Ok(())
    }

    fn normalized_weights(&self) -> Vec<f64> {
        let total: f64 = self.difficulty_mix.iter().map(|c| c.weight).sum();
        self.difficulty_mix.iter().map(|c| c.weight / total).collect()
    }

    /// Mixture mean of the noise-free profile at `layer`.
    pub fn expected_profile(&self, layer: usize) -> f64 {
        self.normalized_weights()
            .iter()
            .zip(&self.difficulty_mix)
            .map(|(w, c)| w * c.profile(layer))
            .sum()
    }
}

pub fn generate(config: &SynthConfig) -> Result<TraceDataset> {
    config.validate()?;
    let weights = config.normalized_weights();
    let mut rng = SplitMix64::new(config.seed);
    let layers = config.layers;
    let mut samples = Vec::with_capacity(config.samples);
    for k in 0..config.samples {
        let u = rng.next_f64();
        let mut acc = 0.0;
        let mut pick = weights.len() - 1;
        for (idx, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = idx;
                break;
            }
        }
        let component = &config.difficulty_mix[pick];
        let confidences: Vec<f64> = (1..=layers)
            .map(|layer| {
                let noise = if config.sigma > 0.0 {
                    config.sigma * rng.standard_normal()
                } else {
                    0.0
                };
                (component.profile(layer) + noise).clamp(0.0, 1.0)
            })
            .collect();
        let correct = confidences
            .iter()
            .map(|&c| rng.next_f64() < config.correctness_link.probability(c))
            .collect();
        samples.push(SampleTrace::new(format!("syn-{k}"), confidences, correct)?);
    }
    let mut metadata = Metadata::new();
    metadata.insert("source".into(), "synthetic".into());
    metadata.insert("seed".into(), config.seed.into());
    TraceDataset::new(layers, samples, metadata)
}
