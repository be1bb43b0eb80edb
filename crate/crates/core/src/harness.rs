//! Experiment orchestration: training sets per condition, the GT-best
//! probability metric, seed/budget sweeps and CSV output.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentMode};
use crate::dataset::{ExamplePrefLabel, PreferenceDataset, PreferenceRecord, RelevanceMask};
use crate::domain::{sample_reward, true_reward, Action, ContextSampler, DomainLabel, DomainSpec, GroundTruthReward};
use crate::error::{invalid, Error, Result};
use crate::flights::{row_to_records, FlightRecordFile};
use crate::model::{bt_prob, train, RewardModel, TrainConfig};
use crate::oracle::{Condition, Noise, Oracle, OracleConfig};
use crate::parse::{Lexicon, LmClientConfig, MaskParser};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskSource {
    Oracle,
    Keyword,
    Lm,
}

impl std::str::FromStr for MaskSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "keyword" => Ok(Self::Keyword),
            "lm" => Ok(Self::Lm),
            other => Err(invalid(format!("unknown mask source '{other}'"))),
        }
    }
}

pub const DEFAULT_EVAL_PAIRS: usize = 200;

/// Inputs for one training set, beyond the ground truth and budget.
#[derive(Debug, Clone, Default)]
pub struct DataConfig {
    pub data_seed: u64,
    pub oracle: OracleConfig,
    pub augment_mode: AugmentMode,
    /// Pre-labeled comparisons used before any sampled ones (e.g. ingested
    /// flight choices). Their example labels are kept as given.
    pub given: Vec<PreferenceRecord>,
    /// Mask for sampled comparisons; the oracle mask when absent.
    pub sampled_mask: Option<RelevanceMask>,
}

/// Shapes a labeled pair into the record a `condition` query would produce.
fn shape_record(
    oracle: &Oracle,
    a1: &Action,
    a2: &Action,
    label: ExamplePrefLabel,
    mask: RelevanceMask,
    utterance: Option<String>,
    condition: Condition,
) -> Result<PreferenceRecord> {
    let mut r = PreferenceRecord::new(a1.clone(), a2.clone(), label);
    r.utterance = utterance;
    let n = a1.len();
    match condition {
        Condition::Rlhf => {}
        Condition::Fp => {
            r.feature_labels = (0..n).map(|j| oracle.feature_pref(a1, a2, j)).collect::<Result<_>>()?;
        }
        Condition::PragRlhf => r.mask = Some(mask),
        Condition::PragFp => {
            r.feature_labels = mask
                .relevant()
                .into_iter()
                .map(|j| oracle.feature_pref(a1, a2, j))
                .collect::<Result<_>>()?;
            r.mask = Some(mask);
        }
    }
    Ok(r)
}

/// `budget` comparisons labeled under `condition`, augmented for pragmatic
/// conditions. The first `b` raw records do not depend on the budget.
pub fn build_training_set(
    gt: &GroundTruthReward,
    domain: &DomainSpec,
    condition: Condition,
    budget: usize,
    cfg: &DataConfig,
) -> Result<PreferenceDataset> {
    if budget == 0 {
        return Err(Error::PreconditionViolation("budget must be at least 1".into()));
    }
    let mut oracle = Oracle::new(gt.clone(), cfg.oracle)?;
    let oracle_mask = oracle.relevance_mask();
    let mut sampler = ContextSampler::new(2, cfg.data_seed);
    let mut raw = PreferenceDataset::default();
    for i in 0..budget {
        let record = match cfg.given.get(i) {
            Some(g) => {
                let mask = g.mask.clone().unwrap_or_else(|| oracle_mask.clone());
                shape_record(&oracle, &g.a1, &g.a2, g.example_label, mask, g.utterance.clone(), condition)?
            }
            None => {
                let ctx = sampler.sample(domain)?;
                let (a1, a2) = (&ctx.actions[0], &ctx.actions[1]);
                let label = oracle.example_pref(a1, a2)?;
                let mask = cfg.sampled_mask.clone().unwrap_or_else(|| oracle_mask.clone());
                shape_record(&oracle, a1, a2, label, mask, None, condition)?
            }
        };
        raw.push(record);
    }
    if condition.is_pragmatic() {
        augment(&raw, cfg.augment_mode, &domain.features)
    } else {
        Ok(raw)
    }
}

/// Mean Bradley-Terry probability the model gives the truly better action of
/// fresh random pairs. Pairs with equal true reward are skipped.
pub fn eval_gt_best_prob(
    model: &RewardModel,
    gt: &GroundTruthReward,
    domain: &DomainSpec,
    eval_pairs: usize,
    seed: u64,
) -> Result<f64> {
    if eval_pairs == 0 {
        return Err(Error::PreconditionViolation("eval_pairs must be at least 1".into()));
    }
    let mut sampler = ContextSampler::new(2, seed);
    let mut total = 0.0;
    let mut counted = 0usize;
    for _ in 0..eval_pairs {
        let ctx = sampler.sample(domain)?;
        let (a, b) = (&ctx.actions[0], &ctx.actions[1]);
        let (ra, rb) = (true_reward(gt, a)?, true_reward(gt, b)?);
        if ra == rb {
            continue;
        }
        let (best, other) = if ra > rb { (a, b) } else { (b, a) };
        total += bt_prob(model.reward(best)?, model.reward(other)?)?;
        counted += 1;
    }
    Ok(if counted == 0 { 0.5 } else { total / counted as f64 })
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub domain: DomainSpec,
    pub condition: Condition,
    pub relevant_count: usize,
    /// Number of ground-truth rewards; 0 means every group in the flight file.
    pub reward_functions: usize,
    pub reward_seed: u64,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub eval_pairs: usize,
    pub train: TrainConfig,
    pub augment_mode: AugmentMode,
    pub mask_source: MaskSource,
    pub noise: Noise,
    pub lexicon: Option<Lexicon>,
    pub lm: Option<LmClientConfig>,
    pub flights: Option<FlightRecordFile>,
}

impl ExperimentConfig {
    pub fn new(domain: DomainSpec, condition: Condition) -> Self {
        let mask_source = match domain.label {
            DomainLabel::Flight => MaskSource::Keyword,
            _ => MaskSource::Oracle,
        };
        Self {
            domain,
            condition,
            relevant_count: 1,
            reward_functions: 2,
            reward_seed: 0,
            budgets: (1..=20).collect(),
            seeds: (0..5).collect(),
            eval_pairs: DEFAULT_EVAL_PAIRS,
            train: TrainConfig::default(),
            augment_mode: AugmentMode::SeenValues,
            mask_source,
            noise: Noise::None,
            lexicon: None,
            lm: None,
            flights: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        self.train.validate()?;
        if self.budgets.is_empty() || self.budgets[0] == 0 || self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("budgets must be positive and strictly increasing"));
        }
        if self.seeds.is_empty() {
            return Err(invalid("at least one seed is required"));
        }
        if self.eval_pairs == 0 {
            return Err(invalid("eval_pairs must be at least 1"));
        }
        if self.flights.is_none() {
            if self.reward_functions == 0 {
                return Err(invalid("reward_functions must be at least 1 without a flight file"));
            }
            if self.mask_source != MaskSource::Oracle {
                return Err(invalid("keyword and lm masks need described comparisons (a flight file)"));
            }
        } else if self.domain.label != DomainLabel::Flight {
            return Err(invalid("a flight file requires the flight domain"));
        }
        if self.mask_source == MaskSource::Lm && self.lm.is_none() {
            return Err(invalid("mask source 'lm' needs an LM client configuration"));
        }
        OracleConfig { noise: self.noise, rng_seed: 0 }.validate()
    }

    fn mask_parser(&self) -> Option<MaskParser> {
        match self.mask_source {
            MaskSource::Oracle => None,
            MaskSource::Keyword => Some(MaskParser::Keyword(
                self.lexicon.clone().unwrap_or_else(|| Lexicon::default_for(&self.domain)),
            )),
            MaskSource::Lm => self.lm.clone().map(MaskParser::Lm),
        }
    }
}

/// One ground-truth reward with its (optional) pre-labeled comparisons.
#[derive(Debug, Clone)]
struct Task {
    gt: GroundTruthReward,
    given: Vec<PreferenceRecord>,
    sampled_mask: Option<RelevanceMask>,
}

/// Draws `reward_functions` rewards, redrawing any that repeats an earlier one
/// (a bounded number of times, so tiny domains still terminate).
fn sample_distinct_rewards(cfg: &ExperimentConfig) -> Result<Vec<GroundTruthReward>> {
    const MAX_REDRAWS: u64 = 64;
    let mut out: Vec<GroundTruthReward> = Vec::with_capacity(cfg.reward_functions);
    for r in 0..cfg.reward_functions as u64 {
        let mut attempt = 0;
        let gt = loop {
            let s = seed::stream_seed(cfg.reward_seed, Stream::Reward, &[r, attempt]);
            let gt = sample_reward(&cfg.domain, cfg.relevant_count, s)?;
            if attempt == MAX_REDRAWS || out.iter().all(|o| o.theta != gt.theta) {
                break gt;
            }
            attempt += 1;
        };
        out.push(gt);
    }
    Ok(out)
}

fn build_tasks(cfg: &ExperimentConfig) -> Result<Vec<Task>> {
    match &cfg.flights {
        None => Ok(sample_distinct_rewards(cfg)?
            .into_iter()
            .map(|gt| Task {
                gt,
                given: Vec::new(),
                sampled_mask: None,
            })
            .collect()),
        Some(file) => {
            let parser = cfg.mask_parser();
            let mut groups = file.groups();
            if cfg.reward_functions > 0 {
                groups.truncate(cfg.reward_functions);
            }
            groups
                .into_iter()
                .map(|(gt, rows)| {
                    let mut given = Vec::new();
                    let mut union: Option<RelevanceMask> = None;
                    for i in rows {
                        let records = row_to_records(&file.rows[i], parser.as_ref(), &cfg.domain)?;
                        if let Some(m) = records[0].mask.clone() {
                            union = Some(match union {
                                Some(u) => u.union(&m),
                                None => m,
                            });
                        }
                        given.extend(records);
                    }
                    Ok(Task {
                        gt,
                        given,
                        sampled_mask: union,
                    })
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub reward: usize,
    pub seed: u64,
    pub budget: usize,
    pub gt_best_prob: f64,
    pub n_train_records: usize,
    pub n_synth_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub budget: usize,
    pub mean: f64,
    pub stderr: f64,
    pub runs: usize,
    pub mean_train_records: f64,
    pub mean_synth_records: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub condition: Condition,
    pub runs: Vec<RunResult>,
    pub summary: Vec<BudgetSummary>,
}

impl EvalResult {
    pub fn mean_at(&self, budget: usize) -> Option<f64> {
        self.summary.iter().find(|s| s.budget == budget).map(|s| s.mean)
    }

    /// Per-run rows followed by one aggregate row per budget (`reward` and
    /// `seed` set to `all`, `stderr` over all runs at that budget).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "condition",
            "reward",
            "seed",
            "budget",
            "gt_best_prob",
            "stderr",
            "n_train_records",
            "n_synth_records",
        ])?;
        let cond = self.condition.as_str();
        for r in &self.runs {
            w.write_record([
                cond.to_string(),
                r.reward.to_string(),
                r.seed.to_string(),
                r.budget.to_string(),
                format!("{:.6}", r.gt_best_prob),
                String::new(),
                r.n_train_records.to_string(),
                r.n_synth_records.to_string(),
            ])?;
        }
        for s in &self.summary {
            w.write_record([
                cond.to_string(),
                "all".into(),
                "all".into(),
                s.budget.to_string(),
                format!("{:.6}", s.mean),
                format!("{:.6}", s.stderr),
                format!("{:.2}", s.mean_train_records),
                format!("{:.2}", s.mean_synth_records),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

fn summarise(runs: &[RunResult], budgets: &[usize]) -> Vec<BudgetSummary> {
    budgets
        .iter()
        .map(|&b| {
            let at: Vec<&RunResult> = runs.iter().filter(|r| r.budget == b).collect();
            let k = at.len() as f64;
            let mean = at.iter().map(|r| r.gt_best_prob).sum::<f64>() / k;
            let stderr = if at.len() > 1 {
                let var = at.iter().map(|r| (r.gt_best_prob - mean).powi(2)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            } else {
                0.0
            };
            BudgetSummary {
                budget: b,
                mean,
                stderr,
                runs: at.len(),
                mean_train_records: at.iter().map(|r| r.n_train_records as f64).sum::<f64>() / k,
                mean_synth_records: at.iter().map(|r| r.n_synth_records as f64).sum::<f64>() / k,
            }
        })
        .collect()
}

fn run_one(cfg: &ExperimentConfig, task: &Task, reward: usize, seed_value: u64, budget: usize) -> Result<RunResult> {
    let coords = [reward as u64];
    let data = DataConfig {
        data_seed: seed::stream_seed(seed_value, Stream::Data, &coords),
        oracle: OracleConfig {
            noise: cfg.noise,
            rng_seed: seed::stream_seed(seed_value, Stream::Noise, &coords),
        },
        augment_mode: cfg.augment_mode,
        given: task.given.clone(),
        sampled_mask: task.sampled_mask.clone(),
    };
    let dataset = build_training_set(&task.gt, &cfg.domain, cfg.condition, budget, &data)?;
    let train_cfg = TrainConfig {
        rng_seed: seed::stream_seed(seed_value, Stream::Init, &coords),
        ..cfg.train
    };
    let model = train(&dataset, &cfg.domain, &train_cfg)?;
    let eval_seed = seed::stream_seed(seed_value, Stream::Eval, &coords);
    let gt_best_prob = eval_gt_best_prob(&model, &task.gt, &cfg.domain, cfg.eval_pairs, eval_seed)?;
    Ok(RunResult {
        reward,
        seed: seed_value,
        budget,
        gt_best_prob,
        n_train_records: dataset.len(),
        n_synth_records: dataset.synthesized_count(),
    })
}

/// Trains a fresh model for every (reward, seed, budget) and evaluates it.
///
/// Runs execute in parallel; results are ordered by reward, seed, budget.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EvalResult> {
    cfg.validate()?;
    let tasks = build_tasks(cfg)?;
    let jobs: Vec<(usize, u64, usize)> = tasks
        .iter()
        .enumerate()
        .flat_map(|(r, _)| {
            cfg.seeds
                .iter()
                .flat_map(move |&s| cfg.budgets.iter().map(move |&b| (r, s, b)))
        })
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(r, s, b)| {
            run_one(cfg, &tasks[r], r, s, b).map_err(|e| Error::RunFailure {
                seed: s,
                budget: b,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarise(&runs, &cfg.budgets);
    Ok(EvalResult {
        condition: cfg.condition,
        runs,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_mushroom_domain;

    fn one_sparse() -> (DomainSpec, GroundTruthReward) {
        let d = make_mushroom_domain();
        let gt = sample_reward(&d, 1, 42).unwrap();
        (d, gt)
    }

    #[test]
    fn rlhf_training_set() {
        let (d, gt) = one_sparse();
        let ds = build_training_set(&gt, &d, Condition::Rlhf, 5, &DataConfig::default()).unwrap();
        assert_eq!(ds.len(), 5);
        assert!(ds.records.iter().all(|r| r.mask.is_none() && r.feature_labels.is_empty() && !r.synthesized));
        assert!(matches!(
            build_training_set(&gt, &d, Condition::Rlhf, 0, &DataConfig::default()),
            Err(Error::PreconditionViolation(_))
        ));
    }

    #[test]
    fn prag_fp_training_set_follows_count_law() {
        let (d, gt) = one_sparse();
        let ds = build_training_set(&gt, &d, Condition::PragFp, 5, &DataConfig::default()).unwrap();
        let raw: Vec<_> = ds.records.iter().filter(|r| !r.synthesized).collect();
        assert_eq!(raw.len(), 5);
        let expected: usize = raw
            .iter()
            .map(|r| {
                let m = r.mask.as_ref().unwrap();
                let k = (0..6).filter(|&j| !m.0[j] && r.a1.0[j] != r.a2.0[j]).count();
                (1usize << k) - 1
            })
            .sum();
        // duplicates across records can only lower the count
        assert!(ds.synthesized_count() <= expected);
        assert!(ds.len() >= 5);
    }

    #[test]
    fn raw_sets_are_prefix_consistent() {
        let (d, gt) = one_sparse();
        let cfg = DataConfig { data_seed: 3, ..Default::default() };
        for c in Condition::ALL {
            let small = build_training_set(&gt, &d, c, 4, &cfg).unwrap().raw();
            let big = build_training_set(&gt, &d, c, 9, &cfg).unwrap().raw();
            assert_eq!(small.records[..], big.records[..4]);
        }
    }

    #[test]
    fn eval_reference_models() {
        let (d, gt) = one_sparse();
        let zero = RewardModel::zeros(&d.features);
        assert_eq!(eval_gt_best_prob(&zero, &gt, &d, 200, 1).unwrap(), 0.5);

        // a model reproducing 100 * R
        let j = gt.relevant_set[0];
        let mut exact = RewardModel::zeros(&d.features);
        exact.predictors[j].weights = vec![-1.0, 0.0, 1.0];
        exact.combiner[j] = 100.0 * gt.theta[j];
        assert!(eval_gt_best_prob(&exact, &gt, &d, 200, 1).unwrap() >= 0.99);
        let mut anti = exact.clone();
        anti.combiner[j] = -anti.combiner[j];
        assert!(eval_gt_best_prob(&anti, &gt, &d, 200, 1).unwrap() <= 0.5);
        assert!(eval_gt_best_prob(&zero, &gt, &d, 0, 1).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::new(make_mushroom_domain(), Condition::Rlhf);
        cfg.validate().unwrap();
        cfg.budgets = vec![3, 3];
        assert!(cfg.validate().is_err());
        cfg.budgets = vec![1, 2];
        cfg.mask_source = MaskSource::Keyword;
        assert!(cfg.validate().is_err());
        cfg.mask_source = MaskSource::Oracle;
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn small_experiment_shape_and_determinism() {
        let mut cfg = ExperimentConfig::new(make_mushroom_domain(), Condition::PragFp);
        cfg.reward_functions = 1;
        cfg.seeds = vec![0, 1];
        cfg.budgets = vec![1, 2, 3];
        cfg.train.epochs = 50;
        cfg.eval_pairs = 20;
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.runs.len(), 6);
        assert_eq!(a.summary.len(), 3);
        let csv = a.to_csv_string();
        assert_eq!(csv.lines().count(), 1 + 6 + 3);
        assert!(csv.starts_with("condition,reward,seed,budget,gt_best_prob,stderr,n_train_records,n_synth_records\n"));
        assert_eq!(csv, run_experiment(&cfg).unwrap().to_csv_string());
    }
}
