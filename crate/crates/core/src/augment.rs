//! Pragmatic data augmentation.
//!
//! When a user says which features mattered for a comparison, every other
//! feature is taken to be irrelevant to it. New comparisons are synthesized
//! by exchanging the irrelevant feature values between the two actions while
//! keeping the original preference label.
//!
//! Two enumeration modes exist:
//!
//! * [`AugmentMode::SeenValues`] (default) only swaps the values actually
//!   observed in the comparison, coordinate by coordinate. For `k` irrelevant
//!   coordinates whose values differ, this yields `2^k - 1` new pairs.
//! * [`AugmentMode::AnyValue`] additionally lets every irrelevant coordinate
//!   of either action take any declared encoding. Discrete features only.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{PreferenceDataset, PreferenceRecord};
use crate::domain::{Action, FeatureKind, FeatureSpace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentMode {
    #[default]
    SeenValues,
    AnyValue,
}

impl std::str::FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" | "seen-values" => Ok(Self::SeenValues),
            "any" | "any-value" => Ok(Self::AnyValue),
            other => Err(Error::InvalidArgument(format!("unknown augment mode '{other}'"))),
        }
    }
}

/// An action with irrelevant coordinates blanked out (`None`).
pub type MaskedAction = Vec<Option<f64>>;

/// One way of rewriting the irrelevant coordinates of a pair.
#[derive(Debug, Clone, PartialEq)]
pub enum Combo {
    /// Exchange these coordinates between the two actions.
    Swap(Vec<usize>),
    /// Set coordinate `j` to `(first, second)` in the two actions.
    Assign(Vec<(usize, f64, f64)>),
}

impl Combo {
    pub fn apply(&self, a1: &Action, a2: &Action) -> (Action, Action) {
        let mut b1 = a1.clone();
        let mut b2 = a2.clone();
        match self {
            Combo::Swap(idx) => {
                for &j in idx {
                    b1.0[j] = a2.0[j];
                    b2.0[j] = a1.0[j];
                }
            }
            Combo::Assign(values) => {
                for &(j, v1, v2) in values {
                    b1.0[j] = v1;
                    b2.0[j] = v2;
                }
            }
        }
        (b1, b2)
    }
}

pub fn mask_irrelevant(record: &PreferenceRecord) -> Result<(MaskedAction, MaskedAction)> {
    let mask = record
        .mask
        .as_ref()
        .ok_or_else(|| Error::PreconditionViolation("record has no relevance mask".into()))?;
    if mask.len() != record.n() {
        return Err(Error::PreconditionViolation(format!(
            "mask length {} does not match action length {}",
            mask.len(),
            record.n()
        )));
    }
    let blank = |a: &Action| -> MaskedAction {
        a.values()
            .iter()
            .zip(&mask.0)
            .map(|(&v, &relevant)| relevant.then_some(v))
            .collect()
    };
    Ok((blank(&record.a1), blank(&record.a2)))
}

/// Non-empty subsets of `items`, ordered by size then lexicographically.
fn subsets_by_size(items: &[usize]) -> Vec<Vec<usize>> {
    fn extend(items: &[usize], start: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            extend(items, i + 1, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::with_capacity((1usize << items.len()) - 1);
    for size in 1..=items.len() {
        extend(items, 0, size, &mut Vec::with_capacity(size), &mut out);
    }
    out
}

pub fn feat_combos(
    masked_a1: &[Option<f64>],
    masked_a2: &[Option<f64>],
    original_a1: &Action,
    original_a2: &Action,
    mode: AugmentMode,
    space: &FeatureSpace,
) -> Result<Vec<Combo>> {
    let blanked: Vec<usize> = (0..masked_a1.len())
        .filter(|&j| masked_a1[j].is_none() && masked_a2[j].is_none())
        .collect();
    let swappable: Vec<usize> = blanked
        .iter()
        .copied()
        .filter(|&j| original_a1.0[j] != original_a2.0[j])
        .collect();
    let mut combos: Vec<Combo> = subsets_by_size(&swappable).into_iter().map(Combo::Swap).collect();
    if mode == AugmentMode::SeenValues || blanked.is_empty() {
        return Ok(combos);
    }

    let mut choices: Vec<Vec<(f64, f64)>> = Vec::with_capacity(blanked.len());
    for &j in &blanked {
        let spec = space.features.get(j).ok_or_else(|| {
            Error::InvalidArgument(format!("feature index {j} outside the feature space"))
        })?;
        match &spec.kind {
            FeatureKind::Discrete { encodings, .. } => choices.push(
                encodings
                    .iter()
                    .flat_map(|&x| encodings.iter().map(move |&y| (x, y)))
                    .collect(),
            ),
            FeatureKind::Continuous { .. } => {
                return Err(Error::UnsupportedMode(format!(
                    "any-value augmentation needs discrete features, '{}' is continuous",
                    spec.name
                )))
            }
        }
    }

    let relevant_equal = (0..original_a1.len())
        .filter(|j| !blanked.contains(j))
        .all(|j| original_a1.0[j] == original_a2.0[j]);
    let mut cursor = vec![0usize; blanked.len()];
    loop {
        let assignment: Vec<(usize, f64, f64)> = blanked
            .iter()
            .zip(&cursor)
            .zip(&choices)
            .map(|((&j, &c), opts)| (j, opts[c].0, opts[c].1))
            .collect();
        let is_seen = assignment.iter().all(|&(j, x, y)| {
            let (p, q) = (original_a1.0[j], original_a2.0[j]);
            (x == p && y == q) || (x == q && y == p)
        });
        let collapses = relevant_equal && assignment.iter().all(|&(_, x, y)| x == y);
        if !is_seen && !collapses {
            combos.push(Combo::Assign(assignment));
        }
        // odometer increment, last coordinate fastest
        let mut k = cursor.len();
        loop {
            if k == 0 {
                return Ok(combos);
            }
            k -= 1;
            cursor[k] += 1;
            if cursor[k] < choices[k].len() {
                break;
            }
            cursor[k] = 0;
        }
    }
}

#[derive(Hash, PartialEq, Eq)]
struct RecordKey(Vec<u64>, Vec<u64>, i8);

impl RecordKey {
    fn of(r: &PreferenceRecord) -> Self {
        let bits = |a: &Action| a.values().iter().map(|v| (v + 0.0).to_bits()).collect();
        Self(bits(&r.a1), bits(&r.a2), r.example_label.into())
    }
}

/// Synthesized records for a single masked source record, before dedup.
pub fn synthesize(record: &PreferenceRecord, mode: AugmentMode, space: &FeatureSpace) -> Result<Vec<PreferenceRecord>> {
    let (m1, m2) = mask_irrelevant(record)?;
    let mask = record.mask.as_ref().expect("checked by mask_irrelevant");
    let combos = feat_combos(&m1, &m2, &record.a1, &record.a2, mode, space)?;
    let feature_labels: Vec<_> = record
        .feature_labels
        .iter()
        .filter(|f| mask.is_relevant(f.feature_index))
        .copied()
        .collect();
    Ok(combos
        .iter()
        .map(|combo| {
            let (a1, a2) = combo.apply(&record.a1, &record.a2);
            PreferenceRecord {
                a1,
                a2,
                example_label: record.example_label,
                feature_labels: feature_labels.clone(),
                mask: None,
                utterance: None,
                synthesized: true,
            }
        })
        .collect())
}

/// Returns the input records followed by every new synthesized record.
///
/// Records without a mask pass through untouched. A synthesized record that
/// duplicates any record already present is dropped.
pub fn augment(dataset: &PreferenceDataset, mode: AugmentMode, space: &FeatureSpace) -> Result<PreferenceDataset> {
    let mut seen: HashSet<RecordKey> = dataset.records.iter().map(RecordKey::of).collect();
    let mut out = dataset.records.clone();
    for record in &dataset.records {
        if record.mask.is_none() || record.synthesized {
            continue;
        }
        for synth in synthesize(record, mode, space)? {
            if seen.insert(RecordKey::of(&synth)) {
                out.push(synth);
            }
        }
    }
    Ok(PreferenceDataset::new(out))
}
