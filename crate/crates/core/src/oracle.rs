//! Simulated user: answers example, feature and relevance queries from a
//! known ground-truth reward.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ExamplePrefLabel, FeatureLabel, FeaturePrefLabel, PreferenceRecord, RelevanceMask};
use crate::domain::{true_reward, Action, GroundTruthReward};
use crate::error::{invalid, Result};
use crate::seed;

/// Which kinds of labels a query collects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "rlhf")]
    Rlhf,
    #[serde(rename = "fp")]
    Fp,
    #[serde(rename = "prag-rlhf")]
    PragRlhf,
    #[serde(rename = "prag-fp")]
    PragFp,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Self::Rlhf, Self::Fp, Self::PragRlhf, Self::PragFp];

    pub fn is_pragmatic(self) -> bool {
        matches!(self, Self::PragRlhf | Self::PragFp)
    }

    pub fn uses_feature_labels(self) -> bool {
        matches!(self, Self::Fp | Self::PragFp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rlhf => "rlhf",
            Self::Fp => "fp",
            Self::PragRlhf => "prag-rlhf",
            Self::PragFp => "prag-fp",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Condition {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rlhf" => Ok(Self::Rlhf),
            "fp" => Ok(Self::Fp),
            "prag-rlhf" => Ok(Self::PragRlhf),
            "prag-fp" => Ok(Self::PragFp),
            other => Err(invalid(format!("unknown condition '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Noise {
    #[default]
    None,
    /// Bradley-Terry choice with the given temperature.
    Boltzmann { temperature: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct OracleConfig {
    pub noise: Noise,
    pub rng_seed: u64,
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if let Noise::Boltzmann { temperature } = self.noise {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(invalid("Boltzmann temperature must be positive"));
            }
        }
        Ok(())
    }
}

/// Oracle bound to one ground truth, owning its noise RNG stream.
#[derive(Debug, Clone)]
pub struct Oracle {
    gt: GroundTruthReward,
    noise: Noise,
    rng: ChaCha8Rng,
}

impl Oracle {
    pub fn new(gt: GroundTruthReward, cfg: OracleConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            gt,
            noise: cfg.noise,
            rng: seed::rng(cfg.rng_seed),
        })
    }

    pub fn gt(&self) -> &GroundTruthReward {
        &self.gt
    }

    pub fn example_pref(&mut self, a1: &Action, a2: &Action) -> Result<ExamplePrefLabel> {
        let r1 = true_reward(&self.gt, a1)?;
        let r2 = true_reward(&self.gt, a2)?;
        Ok(match self.noise {
            Noise::None => exact_label(r1, r2),
            Noise::Boltzmann { temperature } => {
                let p_first = 1.0 / (1.0 + ((r2 - r1) / temperature).exp());
                if self.rng.random::<f64>() < p_first {
                    ExamplePrefLabel::PreferFirst
                } else {
                    ExamplePrefLabel::PreferSecond
                }
            }
        })
    }

    /// Feature labels stay exact under noise.
    pub fn feature_pref(&self, a1: &Action, a2: &Action, j: usize) -> Result<FeaturePrefLabel> {
        oracle_feature_pref(&self.gt, a1, a2, j)
    }

    pub fn relevance_mask(&self) -> RelevanceMask {
        oracle_relevance_mask(&self.gt)
    }

    /// Assembles the labels a query of type `condition` collects.
    pub fn answer_query(&mut self, a1: &Action, a2: &Action, condition: Condition) -> Result<PreferenceRecord> {
        let label = self.example_pref(a1, a2)?;
        let mut record = PreferenceRecord::new(a1.clone(), a2.clone(), label);
        let mask = self.relevance_mask();
        match condition {
            Condition::Rlhf => {}
            Condition::Fp => {
                record.feature_labels = (0..self.gt.n())
                    .map(|j| self.feature_pref(a1, a2, j))
                    .collect::<Result<_>>()?;
            }
            Condition::PragRlhf => record.mask = Some(mask),
            Condition::PragFp => {
                record.feature_labels = mask
                    .relevant()
                    .into_iter()
                    .map(|j| self.feature_pref(a1, a2, j))
                    .collect::<Result<_>>()?;
                record.mask = Some(mask);
            }
        }
        Ok(record)
    }
}

fn exact_label(r1: f64, r2: f64) -> ExamplePrefLabel {
    if r1 > r2 {
        ExamplePrefLabel::PreferFirst
    } else if r1 < r2 {
        ExamplePrefLabel::PreferSecond
    } else {
        ExamplePrefLabel::Tie
    }
}

pub fn oracle_example_pref(
    gt: &GroundTruthReward,
    a1: &Action,
    a2: &Action,
    cfg: OracleConfig,
) -> Result<ExamplePrefLabel> {
    Oracle::new(gt.clone(), cfg)?.example_pref(a1, a2)
}

pub fn oracle_feature_pref(gt: &GroundTruthReward, a1: &Action, a2: &Action, j: usize) -> Result<FeaturePrefLabel> {
    let n = gt.n();
    if j >= n {
        return Err(invalid(format!("feature index {j} out of range for n = {n}")));
    }
    if a1.len() != n || a2.len() != n {
        return Err(invalid("action dimension does not match reward"));
    }
    let c1 = gt.theta[j] * a1.values()[j];
    let c2 = gt.theta[j] * a2.values()[j];
    let label = if c1 > c2 {
        FeatureLabel::PreferFirst
    } else if c1 < c2 {
        FeatureLabel::PreferSecond
    } else {
        FeatureLabel::None
    };
    Ok(FeaturePrefLabel { feature_index: j, label })
}

pub fn oracle_relevance_mask(gt: &GroundTruthReward) -> RelevanceMask {
    RelevanceMask(gt.theta.iter().map(|&t| t != 0.0).collect())
}

pub fn answer_query(
    gt: &GroundTruthReward,
    a1: &Action,
    a2: &Action,
    condition: Condition,
    cfg: OracleConfig,
) -> Result<PreferenceRecord> {
    Oracle::new(gt.clone(), cfg)?.answer_query(a1, a2, condition)
}
