//! Per-sample confidence traces of an early-exit network over a dataset, and
//! their line-delimited JSON serialization.
//!
//! A trace file starts with a header line `{"L": <layers>, "metadata": {...}}`
//! followed by one record per sample:
//!
//! ```text
//! {"id": "s0", "conf": [0.31, 0.72, 0.93], "correct": [false, true, true]}
//! ```
//!
//! Layers are 1-indexed everywhere in the public API; `conf[i - 1]` is the
//! top-class probability at exit `i`. The `correct` flags exist only for
//! accuracy reporting and must never feed a policy decision.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub type Metadata = BTreeMap<String, serde_json::Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub id: String,
    #[serde(rename = "conf")]
    confidences: Vec<f64>,
    correct: Vec<bool>,
}

impl SampleTrace {
    /// Builds a sample, checking that both vectors have equal length and that
    /// every confidence lies in `[0, 1]`.
    pub fn new(id: impl Into<String>, confidences: Vec<f64>, correct: Vec<bool>) -> Result<Self> {
        let sample = Self {
            id: id.into(),
            confidences,
            correct,
        };
        sample.validate(sample.confidences.len(), 0)?;
        Ok(sample)
    }

    pub fn layers(&self) -> usize {
        self.confidences.len()
    }

    /// Confidence `C_i` at 1-indexed exit `layer`.
    ///
    /// Panics if `layer` is outside `1..=L`.
    #[inline]
    pub fn confidence(&self, layer: usize) -> f64 {
        self.confidences[layer - 1]
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    /// Ground-truth agreement at exit `layer`. Evaluator-only.
    #[inline]
    pub fn is_correct(&self, layer: usize) -> bool {
        self.correct[layer - 1]
    }

    pub fn correct_flags(&self) -> &[bool] {
        &self.correct
    }

    /// Copy of this sample with every correctness flag negated.
    pub fn with_flipped_correctness(&self) -> Self {
        Self {
            id: self.id.clone(),
            confidences: self.confidences.clone(),
            correct: self.correct.iter().map(|c| !c).collect(),
        }
    }

    fn validate(&self, layers: usize, line: usize) -> Result<()> {
        if self.confidences.len() != layers {
            return Err(Error::LengthMismatch {
                line,
                field: "conf",
                expected: layers,
                found: self.confidences.len(),
            });
        }
        if self.correct.len() != layers {
            return Err(Error::LengthMismatch {
                line,
                field: "correct",
                expected: layers,
                found: self.correct.len(),
            });
        }
        if let Some((idx, &value)) = self
            .confidences
            .iter()
            .enumerate()
            .find(|(_, c)| !(0.0..=1.0).contains(*c))
        {
            return Err(Error::ConfidenceOutOfRange {
                line,
                layer: idx + 1,
                value,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    #[serde(rename = "L")]
    layers: usize,
    #[serde(default)]
    metadata: Metadata,
}

/// An ordered, validated collection of sample traces sharing a layer count.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceDataset {
    layers: usize,
    samples: Vec<SampleTrace>,
    pub metadata: Metadata,
}

impl TraceDataset {
    pub fn new(layers: usize, samples: Vec<SampleTrace>, metadata: Metadata) -> Result<Self> {
        if layers < 2 {
            return Err(Error::TooFewLayers(layers));
        }
        let mut seen = HashSet::with_capacity(samples.len());
        for (idx, sample) in samples.iter().enumerate() {
            // Record k sits on line k + 2 of a serialized file.
            let line = idx + 2;
            sample.validate(layers, line)?;
            if !seen.insert(sample.id.as_str()) {
                return Err(Error::DuplicateId {
                    line,
                    id: sample.id.clone(),
                });
            }
        }
        Ok(Self {
            layers,
            samples,
            metadata,
        })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn samples(&self) -> &[SampleTrace] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Uniformly random permutation of the samples, fully determined by `seed`.
    pub fn reshuffle(&self, seed: u64) -> Self {
        let mut samples = self.samples.clone();
        SplitMix64::new(seed).shuffle(&mut samples);
        Self {
            layers: self.layers,
            samples,
            metadata: self.metadata.clone(),
        }
    }

    /// Same dataset with every correctness flag negated.
    pub fn with_flipped_correctness(&self) -> Self {
        Self {
            layers: self.layers,
            samples: self
                .samples
                .iter()
                .map(SampleTrace::with_flipped_correctness)
                .collect(),
            metadata: self.metadata.clone(),
        }
    }

    /// Parses a trace stream, validating every record as it is read.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let header: Header = loop {
            match lines.next() {
                None => return Err(Error::MissingHeader),
                Some((idx, line)) => {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                        line: idx + 1,
                        message: format!("header: {e}"),
                    })?;
                }
            }
        };
        if header.layers < 2 {
            return Err(Error::TooFewLayers(header.layers));
        }

        let mut samples = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let sample: SampleTrace =
                serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
                    line: line_no,
                    message: e.to_string(),
                })?;
            sample.validate(header.layers, line_no)?;
            if !seen.insert(sample.id.clone()) {
                return Err(Error::DuplicateId {
                    line: line_no,
                    id: sample.id,
                });
            }
            samples.push(sample);
        }
        Ok(Self {
            layers: header.layers,
            samples,
            metadata: header.metadata,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::TraceNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_reader(file)
    }

    pub fn write_to<W: Write>(&self, mut writer: W) -> Result<()> {
        let header = Header {
            layers: self.layers,
            metadata: self.metadata.clone(),
        };
        serde_json::to_writer(&mut writer, &header)?;
        writer.write_all(b"\n")?;
        for sample in &self.samples {
            serde_json::to_writer(&mut writer, sample)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), &self.to_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<TraceDataset> {
        TraceDataset::from_reader(text.as_bytes())
    }

    #[test]
    fn boundary_confidences_are_legal() {
        let ds = parse(
            "{\"L\":2}\n{\"id\":\"a\",\"conf\":[0.0,1.0],\"correct\":[false,true]}\n",
        )
        .unwrap();
        assert_eq!(ds.layers(), 2);
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.samples()[0].confidence(2), 1.0);
    }

    #[test]
    fn out_of_range_confidence_names_line_and_field() {
        let err = parse(
            "{\"L\":2,\"metadata\":{}}\n\
             {\"id\":\"a\",\"conf\":[0.5,0.6],\"correct\":[true,true]}\n\
             {\"id\":\"b\",\"conf\":[1.2,0.6],\"correct\":[true,true]}\n",
        )
        .unwrap_err();
        match &err {
            Error::ConfidenceOutOfRange { line, layer, value } => {
                assert_eq!((*line, *layer, *value), (3, 1, 1.2));
            }
            other => panic!("unexpected {other:?}"),
        }
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("conf"), "{msg}");
    }

    #[test]
    fn length_mismatch_is_reported() {
        let err = parse("{\"L\":3}\n{\"id\":\"a\",\"conf\":[0.5,0.6,0.7],\"correct\":[true]}\n")
            .unwrap_err();
        assert!(matches!(
            err,
            Error::LengthMismatch {
                line: 2,
                field: "correct",
                expected: 3,
                found: 1
            }
        ));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let rec = "{\"id\":\"x\",\"conf\":[0.5,0.6],\"correct\":[true,true]}\n";
        let err = parse(&format!("{{\"L\":2}}\n{rec}{rec}")).unwrap_err();
        assert!(matches!(err, Error::DuplicateId { line: 3, .. }));
    }

    #[test]
    fn malformed_record_reports_line() {
        let err = parse("{\"L\":2}\n{\"id\":\"x\",\"conf\":[0.5,0.6],\"correct\":[true,true]}\nnot json\n")
            .unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { line: 3, .. }));
    }

    #[test]
    fn single_layer_header_is_rejected() {
        assert!(matches!(parse("{\"L\":1}\n"), Err(Error::TooFewLayers(1))));
        assert!(matches!(parse(""), Err(Error::MissingHeader)));
    }

    #[test]
    fn missing_file_is_named() {
        let err = TraceDataset::load("/definitely/not/here.jsonl").unwrap_err();
        assert!(matches!(err, Error::TraceNotFound(_)));
    }

    fn toy(n: usize) -> TraceDataset {
        let samples = (0..n)
            .map(|k| SampleTrace::new(format!("s{k}"), vec![0.1, 0.2], vec![true, false]).unwrap())
            .collect();
        TraceDataset::new(2, samples, Metadata::new()).unwrap()
    }

    #[test]
    fn reshuffle_is_deterministic() {
        let ds = toy(50);
        assert_eq!(ds.reshuffle(7), ds.reshuffle(7));
    }

    #[test]
    fn reshuffle_singleton_is_identity() {
        let ds = toy(1);
        assert_eq!(ds.reshuffle(12345), ds);
    }

    #[test]
    fn different_seeds_give_different_orders() {
        let ds = toy(100);
        let ids = |d: &TraceDataset| d.samples().iter().map(|s| s.id.clone()).collect::<Vec<_>>();
        assert_ne!(ids(&ds.reshuffle(1)), ids(&ds.reshuffle(2)));
    }

    fn arb_dataset() -> impl Strategy<Value = TraceDataset> {
        (2usize..6).prop_flat_map(|layers| {
            prop::collection::vec(
                (
                    prop::collection::vec(0.0f64..=1.0, layers),
                    prop::collection::vec(any::<bool>(), layers),
                ),
                0..30,
            )
            .prop_map(move |rows| {
                let samples = rows
                    .into_iter()
                    .enumerate()
                    .map(|(k, (c, f))| SampleTrace::new(format!("id-{k}"), c, f).unwrap())
                    .collect();
                let mut meta = Metadata::new();
                meta.insert("source".into(), "proptest".into());
                TraceDataset::new(layers, samples, meta).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn serialization_round_trips(ds in arb_dataset()) {
            let back = TraceDataset::from_reader(ds.to_bytes().as_slice()).unwrap();
            prop_assert_eq!(back, ds);
        }

        #[test]
        fn reshuffle_is_a_bijection(ds in arb_dataset(), seed in any::<u64>()) {
            let mut before: Vec<_> = ds.samples().iter().map(|s| s.id.clone()).collect();
            let shuffled = ds.reshuffle(seed);
            let mut after: Vec<_> = shuffled.samples().iter().map(|s| s.id.clone()).collect();
            before.sort();
            after.sort();
            prop_assert_eq!(before, after);
            for s in shuffled.samples() {
                let orig = ds.samples().iter().find(|o| o.id == s.id).unwrap();
                prop_assert_eq!(orig, s);
            }
        }
    }
}
