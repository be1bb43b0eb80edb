//! Preference records and datasets, with the JSONL wire format.
//!
//! One record per line:
//!
//! ```text
//! {"a1": [..], "a2": [..], "label": 1, "feature_labels": [{"j": 0, "label": -1}],
//!  "mask": [1, 0, ..] | null, "utterance": "..." | null, "synthesized": false}
//! ```
//!
//! Labels encode `1` = first preferred, `-1` = second preferred, `0` = tie
//! (or, for feature labels, indifference).

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::domain::{Action, FeatureSpace};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum ExamplePrefLabel {
    PreferFirst,
    PreferSecond,
    Tie,
}

impl ExamplePrefLabel {
    /// Target probability that the first action is preferred.
    pub fn target(self) -> f64 {
        match self {
            Self::PreferFirst => 1.0,
            Self::PreferSecond => 0.0,
            Self::Tie => 0.5,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::PreferFirst => Self::PreferSecond,
            Self::PreferSecond => Self::PreferFirst,
            Self::Tie => Self::Tie,
        }
    }
}

impl From<ExamplePrefLabel> for i8 {
    fn from(l: ExamplePrefLabel) -> i8 {
        match l {
            ExamplePrefLabel::PreferFirst => 1,
            ExamplePrefLabel::PreferSecond => -1,
            ExamplePrefLabel::Tie => 0,
        }
    }
}

impl TryFrom<i8> for ExamplePrefLabel {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Self::PreferFirst),
            -1 => Ok(Self::PreferSecond),
            0 => Ok(Self::Tie),
            other => Err(format!("label must be 1, -1 or 0, got {other}")),
        }
    }
}

/// Per-feature preference outcome. `None` means indifference on that feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum FeatureLabel {
    PreferFirst,
    PreferSecond,
    None,
}

impl FeatureLabel {
    pub fn flipped(self) -> Self {
        match self {
            Self::PreferFirst => Self::PreferSecond,
            Self::PreferSecond => Self::PreferFirst,
            Self::None => Self::None,
        }
    }

    pub fn target(self) -> Option<f64> {
        match self {
            Self::PreferFirst => Some(1.0),
            Self::PreferSecond => Some(0.0),
            Self::None => None,
        }
    }
}

impl From<FeatureLabel> for i8 {
    fn from(l: FeatureLabel) -> i8 {
        match l {
            FeatureLabel::PreferFirst => 1,
            FeatureLabel::PreferSecond => -1,
            FeatureLabel::None => 0,
        }
    }
}

impl TryFrom<i8> for FeatureLabel {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Self::PreferFirst),
            -1 => Ok(Self::PreferSecond),
            0 => Ok(Self::None),
            other => Err(format!("feature label must be 1, -1 or 0, got {other}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeaturePrefLabel {
    #[serde(rename = "j")]
    pub feature_index: usize,
    pub label: FeatureLabel,
}

/// Which features are reward-relevant (`true`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<u8>", try_from = "Vec<u8>")]
pub struct RelevanceMask(pub Vec<bool>);

impl RelevanceMask {
    pub fn all(n: usize, value: bool) -> Self {
        Self(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_relevant(&self, j: usize) -> bool {
        self.0.get(j).copied().unwrap_or(false)
    }

    pub fn relevant(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn union(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| *a || *b).collect())
    }
}

impl From<RelevanceMask> for Vec<u8> {
    fn from(m: RelevanceMask) -> Vec<u8> {
        m.0.into_iter().map(u8::from).collect()
    }
}

impl TryFrom<Vec<u8>> for RelevanceMask {
    type Error = String;

    fn try_from(v: Vec<u8>) -> std::result::Result<Self, String> {
        v.into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(format!("mask entries must be 0 or 1, got {other}")),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(RelevanceMask)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub a1: Action,
    pub a2: Action,
    #[serde(rename = "label")]
    pub example_label: ExamplePrefLabel,
    #[serde(default)]
    pub feature_labels: Vec<FeaturePrefLabel>,
    #[serde(default)]
    pub mask: Option<RelevanceMask>,
    #[serde(default)]
    pub utterance: Option<String>,
    #[serde(default)]
    pub synthesized: bool,
}

impl PreferenceRecord {
    pub fn new(a1: Action, a2: Action, example_label: ExamplePrefLabel) -> Self {
        Self {
            a1,
            a2,
            example_label,
            feature_labels: Vec::new(),
            mask: None,
            utterance: None,
            synthesized: false,
        }
    }

    pub fn n(&self) -> usize {
        self.a1.len()
    }

    /// Same comparison seen from the other side.
    pub fn swapped(&self) -> Self {
        Self {
            a1: self.a2.clone(),
            a2: self.a1.clone(),
            example_label: self.example_label.flipped(),
            feature_labels: self
                .feature_labels
                .iter()
                .map(|f| FeaturePrefLabel {
                    feature_index: f.feature_index,
                    label: f.label.flipped(),
                })
                .collect(),
            mask: self.mask.clone(),
            utterance: self.utterance.clone(),
            synthesized: self.synthesized,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.a1.len() != n || self.a2.len() != n {
            return Err(invalid(format!(
                "record actions have lengths {}/{}, expected {n}",
                self.a1.len(),
                self.a2.len()
            )));
        }
        let mut seen = HashSet::new();
        for f in &self.feature_labels {
            if f.feature_index >= n {
                return Err(invalid(format!("feature label index {} out of range", f.feature_index)));
            }
            if !seen.insert(f.feature_index) {
                return Err(invalid(format!("duplicate feature label index {}", f.feature_index)));
            }
        }
        if let Some(mask) = &self.mask {
            if mask.len() != n {
                return Err(invalid(format!("mask has length {}, expected {n}", mask.len())));
            }
        }
        if self.synthesized && (self.mask.is_some() || self.utterance.is_some()) {
            return Err(invalid("synthesized records carry neither mask nor utterance"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PreferenceDataset {
    pub records: Vec<PreferenceRecord>,
}

impl PreferenceDataset {
    pub fn new(records: Vec<PreferenceRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: PreferenceRecord) {
        self.records.push(record);
    }

    pub fn synthesized_count(&self) -> usize {
        self.records.iter().filter(|r| r.synthesized).count()
    }

    pub fn raw_count(&self) -> usize {
        self.len() - self.synthesized_count()
    }

    /// Only the records that were collected rather than synthesized.
    pub fn raw(&self) -> Self {
        Self::new(self.records.iter().filter(|r| !r.synthesized).cloned().collect())
    }

    pub fn validate(&self, space: &FeatureSpace) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            r.validate(space.len())
                .and_then(|_| r.a1.validate(space))
                .and_then(|_| r.a2.validate(space))
                .map_err(|e| invalid(format!("record {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: PreferenceRecord = serde_json::from_str(&line).map_err(|e| Error::Ingestion {
                line: i + 1,
                detail: e.to_string(),
            })?;
            record.validate(record.n()).map_err(|e| Error::Ingestion {
                line: i + 1,
                detail: e.to_string(),
            })?;
            records.push(record);
        }
        Ok(Self { records })
    }

    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut writer, r)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn from_jsonl(s: &str) -> Result<Self> {
        Self::read_jsonl(s.as_bytes())
    }
}
