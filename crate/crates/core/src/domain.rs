//! Feature spaces, actions, contexts and linear ground-truth rewards.
//!
//! An action is a point in an `n`-dimensional feature space; a context is a
//! small set of actions the user chooses between. Discrete features carry a
//! list of named values, each with a numeric encoding; continuous features
//! carry a closed interval.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::seed;

/// The value domain of one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    Discrete {
        values: Vec<String>,
        encodings: Vec<f64>,
    },
    Continuous {
        lower: f64,
        upper: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn discrete(name: &str, values: &[&str], encodings: &[f64]) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Discrete {
                values: values.iter().map(|v| v.to_string()).collect(),
                encodings: encodings.to_vec(),
            },
        }
    }

    pub fn continuous(name: &str, lower: f64, upper: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Continuous { lower, upper },
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, FeatureKind::Discrete { .. })
    }

    /// Position of `value` among the declared encodings of a discrete feature.
    pub fn encoding_index(&self, value: f64) -> Option<usize> {
        match &self.kind {
            FeatureKind::Discrete { encodings, .. } => encodings.iter().position(|&e| e == value),
            FeatureKind::Continuous { .. } => None,
        }
    }

    /// Human-readable rendering of a coordinate value.
    pub fn value_name(&self, value: f64) -> String {
        match &self.kind {
            FeatureKind::Discrete { values, .. } => self
                .encoding_index(value)
                .map(|i| values[i].clone())
                .unwrap_or_else(|| format!("{value}")),
            FeatureKind::Continuous { .. } => format!("{value:.3}"),
        }
    }

    pub fn accepts(&self, value: f64) -> bool {
        match &self.kind {
            FeatureKind::Discrete { encodings, .. } => encodings.contains(&value),
            FeatureKind::Continuous { lower, upper } => {
                value.is_finite() && value >= *lower && value <= *upper
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(invalid("feature name must be non-empty"));
        }
        match &self.kind {
            FeatureKind::Discrete { values, encodings } => {
                if values.len() < 2 {
                    return Err(invalid(format!(
                        "discrete feature '{}' needs at least 2 values",
                        self.name
                    )));
                }
                if values.len() != encodings.len() {
                    return Err(invalid(format!(
                        "feature '{}' has {} values but {} encodings",
                        self.name,
                        values.len(),
                        encodings.len()
                    )));
                }
                let names: HashSet<&str> = values.iter().map(String::as_str).collect();
                if names.len() != values.len() {
                    return Err(invalid(format!("feature '{}' has duplicate value names", self.name)));
                }
                for (i, e) in encodings.iter().enumerate() {
                    if !e.is_finite() || encodings[..i].contains(e) {
                        return Err(invalid(format!(
                            "feature '{}' has a non-finite or duplicate encoding",
                            self.name
                        )));
                    }
                }
            }
            FeatureKind::Continuous { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(invalid(format!(
                        "continuous feature '{}' needs finite lower < upper",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ordered feature vocabulary. Index order is canonical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureSpace {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSpace {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let space = Self { features };
        space.validate()?;
        Ok(space)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(invalid("feature space must have at least one feature"));
        }
        let mut seen = HashSet::new();
        for f in &self.features {
            f.validate()?;
            if !seen.insert(f.name.as_str()) {
                return Err(invalid(format!("duplicate feature name '{}'", f.name)));
            }
        }
        Ok(())
    }
}

/// A point in the feature space (numeric encoding of each feature's value).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(pub Vec<f64>);

impl Action {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, space: &FeatureSpace) -> Result<()> {
        if self.len() != space.len() {
            return Err(invalid(format!(
                "action has {} coordinates, feature space has {}",
                self.len(),
                space.len()
            )));
        }
        for (j, (v, f)) in self.0.iter().zip(&space.features).enumerate() {
            if !f.accepts(*v) {
                return Err(invalid(format!(
                    "coordinate {j} ({}) has invalid value {v}",
                    f.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context {
    pub actions: Vec<Action>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainLabel {
    Mushroom,
    Flight,
    Custom,
}

impl std::str::FromStr for DomainLabel {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mushroom" => Ok(Self::Mushroom),
            "flight" => Ok(Self::Flight),
            "custom" => Ok(Self::Custom),
            other => Err(invalid(format!("unknown domain '{other}'"))),
        }
    }
}

impl std::fmt::Display for DomainLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mushroom => "mushroom",
            Self::Flight => "flight",
            Self::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub label: DomainLabel,
    pub features: FeatureSpace,
    pub theta_value_set: Vec<f64>,
}

impl DomainSpec {
    pub fn new(label: DomainLabel, features: FeatureSpace, theta_value_set: Vec<f64>) -> Result<Self> {
        let d = Self {
            label,
            features,
            theta_value_set,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        if !self.theta_value_set.contains(&0.0) {
            return Err(invalid("theta_value_set must contain 0"));
        }
        if !self.theta_value_set.iter().any(|&t| t != 0.0) {
            return Err(invalid("theta_value_set needs at least one nonzero weight"));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("domain serialises")
    }

    pub fn builtin(label: DomainLabel) -> Result<Self> {
        match label {
            DomainLabel::Mushroom => Ok(make_mushroom_domain()),
            DomainLabel::Flight => Ok(make_flight_domain()),
            DomainLabel::Custom => Err(invalid("custom domains must be loaded from JSON")),
        }
    }
}

const TERNARY: [f64; 3] = [-1.0, 0.0, 1.0];

pub fn make_mushroom_domain() -> DomainSpec {
    let features = vec![
        FeatureSpec::discrete("texture", &["slimy", "bumpy", "smooth"], &TERNARY),
        FeatureSpec::discrete("color", &["red", "green", "purple"], &TERNARY),
        FeatureSpec::discrete("shape", &["flat", "round", "bell"], &TERNARY),
        FeatureSpec::discrete("height", &["short", "medium", "tall"], &TERNARY),
        FeatureSpec::discrete("weight", &["light", "average", "heavy"], &TERNARY),
        FeatureSpec::discrete("smell", &["stinky", "neutral", "pleasant"], &TERNARY),
    ];
    DomainSpec {
        label: DomainLabel::Mushroom,
        features: FeatureSpace { features },
        theta_value_set: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
    }
}

pub const FLIGHT_FEATURES: [&str; 8] = [
    "arrival-time-before-meeting",
    "american",
    "delta",
    "jetblue",
    "southwest",
    "longest-stop",
    "number-of-stops",
    "price",
];

pub fn make_flight_domain() -> DomainSpec {
    let features = FLIGHT_FEATURES
        .iter()
        .map(|&name| match name {
            "american" | "delta" | "jetblue" | "southwest" => {
                FeatureSpec::discrete(name, &["no", "yes"], &[0.0, 1.0])
            }
            _ => FeatureSpec::continuous(name, 0.0, 1.0),
        })
        .collect();
    DomainSpec {
        label: DomainLabel::Flight,
        features: FeatureSpace { features },
        theta_value_set: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
    }
}

/// Linear ground-truth reward `R(a) = theta . a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthReward {
    pub theta: Vec<f64>,
    pub relevant_set: Vec<usize>,
}

impl GroundTruthReward {
    pub fn new(theta: Vec<f64>) -> Self {
        let relevant_set = theta
            .iter()
            .enumerate()
            .filter(|(_, &t)| t != 0.0)
            .map(|(j, _)| j)
            .collect();
        Self { theta, relevant_set }
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn reward(&self, a: &Action) -> Result<f64> {
        true_reward(self, a)
    }
}

/// Samples a reward with exactly `relevant_count` nonzero weights.
pub fn sample_reward(domain: &DomainSpec, relevant_count: usize, rng_seed: u64) -> Result<GroundTruthReward> {
    let n = domain.n();
    if relevant_count == 0 || relevant_count > n {
        return Err(invalid(format!(
            "relevant_count must be in 1..={n}, got {relevant_count}"
        )));
    }
    let nonzero: Vec<f64> = domain
        .theta_value_set
        .iter()
        .copied()
        .filter(|&t| t != 0.0)
        .collect();
    let mut rng = seed::rng(rng_seed);
    let mut chosen = index::sample(&mut rng, n, relevant_count).into_vec();
    chosen.sort_unstable();
    let mut theta = vec![0.0; n];
    for j in chosen {
        theta[j] = nonzero[rng.random_range(0..nonzero.len())];
    }
    Ok(GroundTruthReward::new(theta))
}

pub fn true_reward(gt: &GroundTruthReward, a: &Action) -> Result<f64> {
    if gt.n() != a.len() {
        return Err(invalid(format!(
            "reward has {} weights, action has {} coordinates",
            gt.n(),
            a.len()
        )));
    }
    Ok(gt.theta.iter().zip(a.values()).map(|(t, x)| t * x).sum())
}

/// Draws contexts: each coordinate independently uniform over its encodings
/// (discrete) or its interval (continuous).
#[derive(Debug, Clone)]
pub struct ContextSampler {
    pub context_size: usize,
    rng: ChaCha8Rng,
}

impl ContextSampler {
    pub fn new(context_size: usize, rng_seed: u64) -> Self {
        Self {
            context_size,
            rng: seed::rng(rng_seed),
        }
    }

    pub fn sample_action(&mut self, domain: &DomainSpec) -> Action {
        let values = domain
            .features
            .features
            .iter()
            .map(|f| match &f.kind {
                FeatureKind::Discrete { encodings, .. } => {
                    encodings[self.rng.random_range(0..encodings.len())]
                }
                FeatureKind::Continuous { lower, upper } => {
                    lower + (upper - lower) * self.rng.random::<f64>()
                }
            })
            .collect();
        Action(values)
    }

    pub fn sample(&mut self, domain: &DomainSpec) -> Result<Context> {
        sample_context(domain, self)
    }
}

pub fn sample_context(domain: &DomainSpec, sampler: &mut ContextSampler) -> Result<Context> {
    if sampler.context_size < 2 {
        return Err(invalid("context_size must be at least 2"));
    }
    let mut actions: Vec<Action> = Vec::with_capacity(sampler.context_size);
    while actions.len() < sampler.context_size {
        let a = sampler.sample_action(domain);
        if !actions.contains(&a) {
            actions.push(a);
        }
    }
    Ok(Context { actions })
}
