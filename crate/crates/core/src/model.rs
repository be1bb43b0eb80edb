//! Linear reward model with per-feature predictors and a linear combiner.
//!
//! Each feature `j` has its own predictor producing a feature reward
//! `r_j(v) = w_j . enc_j(v)` (one-hot for discrete features, the raw scalar
//! for continuous ones). The action reward combines them:
//!
//! ```text
//! R(a) = sum_j c_j * r_j(a_j)
//! ```
//!
//! Preference probabilities follow Bradley-Terry, `P(a1 > a2) = sigmoid(R(a1) - R(a2))`.
//! The training objective mixes an example-level cross-entropy with a
//! feature-level cross-entropy on the predictor outputs:
//!
//! ```text
//! loss = (1 - beta) * rlhf_loss + beta * feat_loss
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{PreferenceDataset, PreferenceRecord};
use crate::domain::{Action, DomainLabel, DomainSpec, FeatureKind, FeatureSpace};
use crate::error::{invalid, Error, Result};
use crate::seed;

/// Encoded feature value: the hot index of a one-hot vector, or a scalar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Encoded {
    Hot(usize),
    Scalar(f64),
}

impl Encoded {
    #[inline]
    fn dot(self, w: &[f64]) -> f64 {
        match self {
            Encoded::Hot(i) => w[i],
            Encoded::Scalar(x) => w[0] * x,
        }
    }

    #[inline]
    fn add_scaled(self, grad: &mut [f64], coef: f64) {
        match self {
            Encoded::Hot(i) => grad[i] += coef,
            Encoded::Scalar(x) => grad[0] += coef * x,
        }
    }

    /// Dense form of the encoding.
    pub fn to_dense(self, width: usize) -> Vec<f64> {
        let mut v = vec![0.0; width];
        self.add_scaled(&mut v, 1.0);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Scheme {
    OneHot(Vec<f64>),
    Identity,
}

/// One-hot for discrete features, identity for continuous ones.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEncoder {
    schemes: Vec<Scheme>,
}

impl FeatureEncoder {
    pub fn new(space: &FeatureSpace) -> Self {
        let schemes = space
            .features
            .iter()
            .map(|f| match &f.kind {
                FeatureKind::Discrete { encodings, .. } => Scheme::OneHot(encodings.clone()),
                FeatureKind::Continuous { .. } => Scheme::Identity,
            })
            .collect();
        Self { schemes }
    }

    pub fn n(&self) -> usize {
        self.schemes.len()
    }

    pub fn width(&self, j: usize) -> usize {
        match &self.schemes[j] {
            Scheme::OneHot(e) => e.len(),
            Scheme::Identity => 1,
        }
    }

    pub fn encode(&self, j: usize, value: f64) -> Result<Encoded> {
        match self.schemes.get(j) {
            None => Err(invalid(format!("feature index {j} out of range"))),
            Some(Scheme::OneHot(enc)) => enc
                .iter()
                .position(|&e| e == value)
                .map(Encoded::Hot)
                .ok_or_else(|| invalid(format!("value {value} is not a declared encoding of feature {j}"))),
            Some(Scheme::Identity) => {
                if value.is_finite() {
                    Ok(Encoded::Scalar(value))
                } else {
                    Err(invalid(format!("non-finite value for feature {j}")))
                }
            }
        }
    }

    pub fn encode_action(&self, a: &Action) -> Result<Vec<Encoded>> {
        if a.len() != self.n() {
            return Err(invalid(format!(
                "action has {} coordinates, model has {} features",
                a.len(),
                self.n()
            )));
        }
        a.values().iter().enumerate().map(|(j, &v)| self.encode(j, v)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeaturePredictor {
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub rng_seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            learning_rate: 0.1,
            epochs: 2000,
            rng_seed: 0,
            init_scale: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate must be positive"));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(invalid("init_scale must be non-negative"));
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(invalid(format!("beta must lie in [0, 1], got {beta}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rlhf_component: f64,
    pub feat_component: f64,
    pub total: f64,
    pub pair_count: usize,
    pub feature_term_count: usize,
}

/// Gradient with the same shape as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub predictors: Vec<Vec<f64>>,
    pub combiner: Vec<f64>,
}

impl ModelGradient {
    pub fn flat(&self) -> Vec<f64> {
        self.predictors
            .iter()
            .flatten()
            .chain(&self.combiner)
            .copied()
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flat().iter().all(|&g| g == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    pub predictors: Vec<FeaturePredictor>,
    pub combiner: Vec<f64>,
    encoder: FeatureEncoder,
}

impl RewardModel {
    pub fn zeros(space: &FeatureSpace) -> Self {
        let encoder = FeatureEncoder::new(space);
        let predictors = (0..encoder.n())
            .map(|j| FeaturePredictor {
                weights: vec![0.0; encoder.width(j)],
            })
            .collect();
        Self {
            predictors,
            combiner: vec![0.0; encoder.n()],
            encoder,
        }
    }

    /// Uniform initialisation in `[-init_scale, init_scale]`, predictors first.
    pub fn init(space: &FeatureSpace, config: &TrainConfig) -> Self {
        let mut model = Self::zeros(space);
        let mut rng = seed::rng(seed::stream_seed(config.rng_seed, seed::Stream::Init, &[]));
        let s = config.init_scale;
        let mut draw = || if s > 0.0 { rng.random_range(-s..=s) } else { 0.0 };
        for p in &mut model.predictors {
            for w in &mut p.weights {
                *w = draw();
            }
        }
        for c in &mut model.combiner {
            *c = draw();
        }
        model
    }

    /// Builds a model from explicit parameters, checking shapes against `space`.
    pub fn from_parts(space: &FeatureSpace, predictors: Vec<Vec<f64>>, combiner: Vec<f64>) -> Result<Self> {
        let encoder = FeatureEncoder::new(space);
        if predictors.len() != encoder.n() || combiner.len() != encoder.n() {
            return Err(invalid("parameter count does not match the feature space"));
        }
        for (j, w) in predictors.iter().enumerate() {
            if w.len() != encoder.width(j) {
                return Err(invalid(format!(
                    "predictor {j} has width {}, expected {}",
                    w.len(),
                    encoder.width(j)
                )));
            }
        }
        let model = Self {
            predictors: predictors.into_iter().map(|weights| FeaturePredictor { weights }).collect(),
            combiner,
            encoder,
        };
        if !model.is_finite() {
            return Err(invalid("model parameters must be finite"));
        }
        Ok(model)
    }

    pub fn n(&self) -> usize {
        self.combiner.len()
    }

    pub fn encoder(&self) -> &FeatureEncoder {
        &self.encoder
    }

    pub fn is_finite(&self) -> bool {
        self.params_flat().iter().all(|p| p.is_finite())
    }

    pub fn param_count(&self) -> usize {
        self.predictors.iter().map(|p| p.weights.len()).sum::<usize>() + self.combiner.len()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.predictors
            .iter()
            .flat_map(|p| p.weights.iter())
            .chain(&self.combiner)
            .copied()
            .collect()
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter vector length");
        let mut it = params.iter().copied();
        for p in &mut self.predictors {
            for w in &mut p.weights {
                *w = it.next().unwrap();
            }
        }
        for c in &mut self.combiner {
            *c = it.next().unwrap();
        }
    }

    pub fn feature_reward(&self, j: usize, value: f64) -> Result<f64> {
        let e = self.encoder.encode(j, value)?;
        Ok(e.dot(&self.predictors[j].weights))
    }

    pub fn reward(&self, a: &Action) -> Result<f64> {
        let enc = self.encoder.encode_action(a)?;
        Ok(self.reward_encoded(&enc))
    }

    fn reward_encoded(&self, enc: &[Encoded]) -> f64 {
        enc.iter()
            .enumerate()
            .map(|(j, e)| self.combiner[j] * e.dot(&self.predictors[j].weights))
            .sum()
    }

    fn step(&mut self, grad: &ModelGradient, lr: f64) {
        for (p, g) in self.predictors.iter_mut().zip(&grad.predictors) {
            for (w, d) in p.weights.iter_mut().zip(g) {
                *w -= lr * d;
            }
        }
        for (c, d) in self.combiner.iter_mut().zip(&grad.combiner) {
            *c -= lr * d;
        }
    }

    fn zero_gradient(&self) -> ModelGradient {
        ModelGradient {
            predictors: self.predictors.iter().map(|p| vec![0.0; p.weights.len()]).collect(),
            combiner: vec![0.0; self.n()],
        }
    }

    pub fn checkpoint(&self, domain_label: DomainLabel, config: Option<TrainConfig>) -> Checkpoint {
        Checkpoint {
            combiner: self.combiner.clone(),
            predictors: self.predictors.iter().map(|p| p.weights.clone()).collect(),
            domain_label,
            config,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, domain: &DomainSpec) -> Result<Self> {
        if ckpt.domain_label != domain.label {
            return Err(invalid(format!(
                "checkpoint is for domain '{}', not '{}'",
                ckpt.domain_label, domain.label
            )));
        }
        Self::from_parts(&domain.features, ckpt.predictors.clone(), ckpt.combiner.clone())
    }
}

/// Serialized model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub combiner: Vec<f64>,
    pub predictors: Vec<Vec<f64>>,
    pub domain_label: DomainLabel,
    pub config: Option<TrainConfig>,
}

/// Largest `f64` strictly below one.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// `exp(r1) / (exp(r1) + exp(r2))`, evaluated as `1 / (1 + exp(r2 - r1))`.
///
/// Saturated values are pulled to the nearest representable probability
/// strictly inside `(0, 1)`.
pub fn bt_prob(r1: f64, r2: f64) -> Result<f64> {
    if !(r1.is_finite() && r2.is_finite()) {
        return Err(invalid("bt_prob needs finite rewards"));
    }
    Ok(sigmoid(r1 - r2).clamp(f64::MIN_POSITIVE, ONE_BELOW))
}

#[inline]
fn sigmoid(d: f64) -> f64 {
    1.0 / (1.0 + (-d).exp())
}

/// `-log sigmoid(d)` without overflow.
#[inline]
fn neg_log_sigmoid(d: f64) -> f64 {
    if d > 0.0 {
        (-d).exp().ln_1p()
    } else {
        -d + d.exp().ln_1p()
    }
}

/// Cross-entropy of `sigmoid(d)` against target probability `y`.
#[inline]
fn cross_entropy(d: f64, y: f64) -> f64 {
    let mut l = 0.0;
    if y > 0.0 {
        l += y * neg_log_sigmoid(d);
    }
    if y < 1.0 {
        l += (1.0 - y) * neg_log_sigmoid(-d);
    }
    l
}

/// A record pre-encoded for repeated loss/gradient evaluation.
#[derive(Debug, Clone)]
struct EncodedRecord {
    e1: Vec<Encoded>,
    e2: Vec<Encoded>,
    target: f64,
    /// (feature index, target); empty for synthesized records.
    feature_terms: Vec<(usize, f64)>,
}

fn encode_record(enc: &FeatureEncoder, r: &PreferenceRecord) -> Result<EncodedRecord> {
    let e1 = enc.encode_action(&r.a1)?;
    let e2 = enc.encode_action(&r.a2)?;
    let feature_terms = if r.synthesized {
        Vec::new()
    } else {
        r.feature_labels
            .iter()
            .filter_map(|f| f.label.target().map(|y| (f.feature_index, y)))
            .map(|(j, y)| {
                if j < enc.n() {
                    Ok((j, y))
                } else {
                    Err(invalid(format!("feature label index {j} out of range")))
                }
            })
            .collect::<Result<_>>()?
    };
    Ok(EncodedRecord {
        e1,
        e2,
        target: r.example_label.target(),
        feature_terms,
    })
}

fn encode_dataset(model: &RewardModel, dataset: &PreferenceDataset) -> Result<Vec<EncodedRecord>> {
    dataset
        .records
        .iter()
        .map(|r| encode_record(&model.encoder, r))
        .collect()
}

/// Loss components and (optionally) the gradient in one pass.
fn evaluate(model: &RewardModel, data: &[EncodedRecord], beta: f64, grad: Option<&mut ModelGradient>) -> LossBreakdown {
    let mut rlhf = 0.0;
    let mut feat = 0.0;
    let mut feature_term_count = 0;
    let mut grad = grad;
    let n = model.n();
    let mut diff = vec![0.0; n];
    for rec in data {
        for (j, dj) in diff.iter_mut().enumerate() {
            let w = &model.predictors[j].weights;
            *dj = rec.e1[j].dot(w) - rec.e2[j].dot(w);
        }
        let d: f64 = (0..n).map(|j| model.combiner[j] * diff[j]).sum();
        rlhf += cross_entropy(d, rec.target);
        if let Some(g) = grad.as_deref_mut() {
            let coef = (1.0 - beta) * (sigmoid(d) - rec.target);
            if coef != 0.0 {
                for (j, &dj) in diff.iter().enumerate() {
                    g.combiner[j] += coef * dj;
                    let cj = coef * model.combiner[j];
                    rec.e1[j].add_scaled(&mut g.predictors[j], cj);
                    rec.e2[j].add_scaled(&mut g.predictors[j], -cj);
                }
            }
        }
        for &(j, y) in &rec.feature_terms {
            feat += cross_entropy(diff[j], y);
            feature_term_count += 1;
            if let Some(g) = grad.as_deref_mut() {
                let coef = beta * (sigmoid(diff[j]) - y);
                if coef != 0.0 {
                    rec.e1[j].add_scaled(&mut g.predictors[j], coef);
                    rec.e2[j].add_scaled(&mut g.predictors[j], -coef);
                }
            }
        }
    }
    LossBreakdown {
        rlhf_component: rlhf,
        feat_component: feat,
        total: (1.0 - beta) * rlhf + beta * feat,
        pair_count: data.len(),
        feature_term_count,
    }
}

pub fn rlhf_loss(model: &RewardModel, dataset: &PreferenceDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(invalid("rlhf_loss needs a non-empty dataset"));
    }
    let data = encode_dataset(model, dataset)?;
    Ok(evaluate(model, &data, 0.0, None).rlhf_component)
}

pub fn feat_loss(model: &RewardModel, dataset: &PreferenceDataset) -> Result<f64> {
    let data = encode_dataset(model, dataset)?;
    Ok(evaluate(model, &data, 1.0, None).feat_component)
}

pub fn joint_loss(model: &RewardModel, dataset: &PreferenceDataset, beta: f64) -> Result<LossBreakdown> {
    check_beta(beta)?;
    let data = encode_dataset(model, dataset)?;
    Ok(evaluate(model, &data, beta, None))
}

/// Analytic gradient of the joint loss.
///
/// The combiner only sees the example-level terms; predictors see both.
pub fn gradient(model: &RewardModel, dataset: &PreferenceDataset, beta: f64) -> Result<ModelGradient> {
    check_beta(beta)?;
    let data = encode_dataset(model, dataset)?;
    let mut g = model.zero_gradient();
    evaluate(model, &data, beta, Some(&mut g));
    Ok(g)
}

/// Full-batch gradient descent on the joint loss from a seeded initialisation.
///
/// The loss is summed over records; each step moves by
/// `learning_rate / m` times its gradient for a dataset of `m` records, so the
/// same rate stays stable when augmentation multiplies the record count.
pub fn train(dataset: &PreferenceDataset, domain: &DomainSpec, config: &TrainConfig) -> Result<RewardModel> {
    train_from(RewardModel::init(&domain.features, config), dataset, config)
}

/// Like [`train`], starting from the given parameters.
pub fn train_from(mut model: RewardModel, dataset: &PreferenceDataset, config: &TrainConfig) -> Result<RewardModel> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(invalid("cannot train on an empty dataset"));
    }
    let data = encode_dataset(&model, dataset)?;
    let mut grad = model.zero_gradient();
    for epoch in 0..config.epochs {
        for g in grad.predictors.iter_mut().chain(std::iter::once(&mut grad.combiner)) {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
        let loss = evaluate(&model, &data, config.beta, Some(&mut grad));
        if !loss.total.is_finite() {
            return Err(Error::TrainingFailure { epoch });
        }
        model.step(&grad, config.learning_rate / data.len() as f64);
    }
    if !model.is_finite() || !evaluate(&model, &data, config.beta, None).total.is_finite() {
        return Err(Error::TrainingFailure { epoch: config.epochs });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ExamplePrefLabel, FeatureLabel, FeaturePrefLabel};
    use crate::domain::{make_mushroom_domain, FeatureSpec};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn continuous_space(n: usize) -> FeatureSpace {
        FeatureSpace::new(
            (0..n)
                .map(|j| FeatureSpec::continuous(&format!("f{j}"), -10.0, 10.0))
                .collect(),
        )
        .unwrap()
    }

    fn rec(a1: &[f64], a2: &[f64], label: ExamplePrefLabel) -> PreferenceRecord {
        PreferenceRecord::new(Action(a1.to_vec()), Action(a2.to_vec()), label)
    }

    #[test]
    fn feature_reward_examples() {
        let d = make_mushroom_domain();
        let zero = RewardModel::zeros(&d.features);
        assert_eq!(zero.feature_reward(2, 1.0).unwrap(), 0.0);

        let mut m = RewardModel::zeros(&d.features);
        m.predictors[0].weights = vec![0.3, -0.1, 0.8];
        assert_eq!(m.feature_reward(0, 1.0).unwrap(), 0.8);
        assert!(m.feature_reward(0, 0.5).is_err());

        let mut c = RewardModel::zeros(&continuous_space(1));
        c.predictors[0].weights = vec![2.0];
        assert_eq!(c.feature_reward(0, 0.25).unwrap(), 0.5);
    }

    #[test]
    fn reward_examples() {
        let s = continuous_space(2);
        let m = RewardModel::zeros(&s);
        assert_eq!(m.reward(&Action(vec![1.0, 2.0])).unwrap(), 0.0);
        let m = RewardModel::from_parts(&s, vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(m.reward(&Action(vec![0.5, 0.25])).unwrap(), 0.25);
        assert!(m.reward(&Action(vec![0.5])).is_err());
    }

    #[test]
    fn reward_matches_dense_reimplementation() {
        let d = make_mushroom_domain();
        let m = RewardModel::init(&d.features, &TrainConfig { init_scale: 1.5, rng_seed: 3, ..Default::default() });
        let a = Action(vec![1.0, -1.0, 0.0, 0.0, 1.0, -1.0]);
        let dense: f64 = (0..6)
            .map(|j| {
                let onehot = m.encoder().encode(j, a.0[j]).unwrap().to_dense(3);
                let fr: f64 = onehot.iter().zip(&m.predictors[j].weights).map(|(x, w)| x * w).sum();
                m.combiner[j] * fr
            })
            .sum();
        assert!((m.reward(&a).unwrap() - dense).abs() < 1e-12);
    }

    #[test]
    fn bt_prob_examples() {
        assert_eq!(bt_prob(0.0, 0.0).unwrap(), 0.5);
        assert!((bt_prob(3f64.ln(), 0.0).unwrap() - 0.75).abs() < 1e-15);
        let p = bt_prob(1000.0, 0.0).unwrap();
        assert!(p < 1.0 && p > 1.0 - 1e-12, "{p}");
        let q = bt_prob(-1000.0, 0.0).unwrap();
        assert!(q > 0.0 && q.is_finite());
        assert!(bt_prob(f64::NAN, 0.0).is_err());
        assert!(bt_prob(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn rlhf_loss_examples() {
        let s = continuous_space(1);
        let zero = RewardModel::zeros(&s);
        let one = PreferenceDataset::new(vec![rec(&[1.0], &[0.0], ExamplePrefLabel::PreferFirst)]);
        assert!((rlhf_loss(&zero, &one).unwrap() - LN_2).abs() < 1e-12);
        let many = PreferenceDataset::new((0..7).map(|i| rec(&[i as f64], &[0.0], ExamplePrefLabel::PreferSecond)).collect());
        assert!((rlhf_loss(&zero, &many).unwrap() - 7.0 * LN_2).abs() < 1e-12);
        let m = RewardModel::from_parts(&s, vec![vec![1.0]], vec![3f64.ln()]).unwrap();
        assert!((rlhf_loss(&m, &one).unwrap() - 0.287682072451781).abs() < 1e-12);
        assert!(rlhf_loss(&zero, &PreferenceDataset::default()).is_err());
    }

    #[test]
    fn tie_is_soft_half() {
        let s = continuous_space(1);
        let m = RewardModel::from_parts(&s, vec![vec![1.0]], vec![1.0]).unwrap();
        let ds = PreferenceDataset::new(vec![rec(&[2.0], &[0.0], ExamplePrefLabel::Tie)]);
        let p: f64 = bt_prob(2.0, 0.0).unwrap();
        let expected = -(0.5 * p.ln() + 0.5 * (1.0 - p).ln());
        assert!((rlhf_loss(&m, &ds).unwrap() - expected).abs() < 1e-12);
    }

    fn labeled(j: usize, label: FeatureLabel) -> FeaturePrefLabel {
        FeaturePrefLabel { feature_index: j, label }
    }

    #[test]
    fn feat_loss_examples() {
        let d = make_mushroom_domain();
        let zero = RewardModel::zeros(&d.features);
        let mut r = rec(&[1.0; 6], &[-1.0; 6], ExamplePrefLabel::PreferFirst);
        r.feature_labels = (0..6).map(|j| labeled(j, FeatureLabel::PreferFirst)).collect();
        let ds = PreferenceDataset::new(vec![r.clone()]);
        assert!((feat_loss(&zero, &ds).unwrap() - 6.0 * LN_2).abs() < 1e-12);

        let bare = PreferenceDataset::new(vec![rec(&[1.0; 6], &[-1.0; 6], ExamplePrefLabel::PreferFirst)]);
        assert_eq!(feat_loss(&zero, &bare).unwrap(), 0.0);

        // indifferent features and synthesized records contribute nothing
        let mut skip = r.clone();
        skip.feature_labels[0].label = FeatureLabel::None;
        let mut synth = r.clone();
        synth.synthesized = true;
        let ds = PreferenceDataset::new(vec![skip, synth]);
        assert!((feat_loss(&zero, &ds).unwrap() - 5.0 * LN_2).abs() < 1e-12);

        let s = continuous_space(1);
        let m = RewardModel::from_parts(&s, vec![vec![3f64.ln()]], vec![0.0]).unwrap();
        let mut r = rec(&[1.0], &[0.0], ExamplePrefLabel::PreferFirst);
        r.feature_labels = vec![labeled(0, FeatureLabel::PreferFirst)];
        let ds = PreferenceDataset::new(vec![r]);
        assert!((feat_loss(&m, &ds).unwrap() - 0.287682072451781).abs() < 1e-12);
    }

    #[test]
    fn joint_loss_weights() {
        let d = make_mushroom_domain();
        let zero = RewardModel::zeros(&d.features);
        let mut r = rec(&[1.0; 6], &[-1.0; 6], ExamplePrefLabel::PreferFirst);
        r.feature_labels = (0..6).map(|j| labeled(j, FeatureLabel::PreferFirst)).collect();
        let ds = PreferenceDataset::new(vec![r]);
        let l0 = joint_loss(&zero, &ds, 0.0).unwrap();
        assert_eq!(l0.total, l0.rlhf_component);
        let l1 = joint_loss(&zero, &ds, 1.0).unwrap();
        assert_eq!(l1.total, l1.feat_component);
        let lh = joint_loss(&zero, &ds, 0.5).unwrap();
        assert!((lh.total - 3.5 * LN_2).abs() < 1e-12);
        assert_eq!((lh.pair_count, lh.feature_term_count), (1, 6));
        assert!(joint_loss(&zero, &ds, 1.5).is_err());
        assert!(joint_loss(&zero, &ds, -0.1).is_err());
    }

    #[test]
    fn gradient_zero_cases() {
        let d = make_mushroom_domain();
        let m = RewardModel::init(&d.features, &TrainConfig { init_scale: 1.0, ..Default::default() });
        let ds = PreferenceDataset::new(vec![rec(&[1.0; 6], &[-1.0; 6], ExamplePrefLabel::PreferFirst)]);
        assert!(gradient(&m, &ds, 1.0).unwrap().is_zero());
        let same = PreferenceDataset::new(vec![rec(&[1.0; 6], &[1.0; 6], ExamplePrefLabel::Tie)]);
        assert!(gradient(&m, &same, 0.5).unwrap().is_zero());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d = make_mushroom_domain();
        let m = RewardModel::init(&d.features, &TrainConfig { init_scale: 1.0, rng_seed: 9, ..Default::default() });
        let mut r = rec(&[1.0, 0.0, -1.0, 1.0, 0.0, -1.0], &[-1.0, 1.0, 0.0, 0.0, 0.0, 1.0], ExamplePrefLabel::PreferFirst);
        r.feature_labels = vec![labeled(0, FeatureLabel::PreferFirst), labeled(2, FeatureLabel::PreferSecond)];
        let r2 = rec(&[0.0, 0.0, 1.0, -1.0, 1.0, 0.0], &[1.0, -1.0, 1.0, 0.0, 1.0, 0.0], ExamplePrefLabel::Tie);
        let ds = PreferenceDataset::new(vec![r, r2]);
        for beta in [0.0, 0.5, 1.0] {
            let g = gradient(&m, &ds, beta).unwrap().flat();
            let p0 = m.params_flat();
            let h = 1e-5;
            for i in 0..p0.len() {
                let mut mp = m.clone();
                let mut pp = p0.clone();
                pp[i] += h;
                mp.set_params_flat(&pp);
                let up = joint_loss(&mp, &ds, beta).unwrap().total;
                pp[i] -= 2.0 * h;
                mp.set_params_flat(&pp);
                let down = joint_loss(&mp, &ds, beta).unwrap().total;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-4 * fd.abs().max(1e-3), "beta {beta} param {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn training_fits_one_feature() {
        let s = continuous_space(1);
        let domain = DomainSpec::new(DomainLabel::Custom, s, vec![-1.0, 0.0, 1.0]).unwrap();
        let ds = PreferenceDataset::new(
            (0..10)
                .map(|i| rec(&[1.0 + i as f64 * 0.1], &[-0.5 - i as f64 * 0.1], ExamplePrefLabel::PreferFirst))
                .collect(),
        );
        let cfg = TrainConfig::default();
        let m = train(&ds, &domain, &cfg).unwrap();
        for r in &ds.records {
            let p = bt_prob(m.reward(&r.a1).unwrap(), m.reward(&r.a2).unwrap()).unwrap();
            assert!(p > 0.9, "{p}");
        }
        let start = RewardModel::init(&domain.features, &cfg);
        assert!(joint_loss(&start, &ds, cfg.beta).unwrap().total >= joint_loss(&m, &ds, cfg.beta).unwrap().total);
        // determinism
        let again = train(&ds, &domain, &cfg).unwrap();
        assert_eq!(m.params_flat(), again.params_flat());
        assert!(train(&PreferenceDataset::default(), &domain, &cfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let s = continuous_space(1);
        let domain = DomainSpec::new(DomainLabel::Custom, s, vec![0.0, 1.0]).unwrap();
        let ds = PreferenceDataset::new(vec![rec(&[10.0], &[-10.0], ExamplePrefLabel::Tie); 50]);
        let cfg = TrainConfig { learning_rate: 1e6, init_scale: 1.0, epochs: 200, ..Default::default() };
        assert!(matches!(train(&ds, &domain, &cfg), Err(Error::TrainingFailure { .. })));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let d = make_mushroom_domain();
        let m = RewardModel::init(&d.features, &TrainConfig { init_scale: 0.5, ..Default::default() });
        let ckpt = m.checkpoint(d.label, Some(TrainConfig::default()));
        let json = serde_json::to_string(&ckpt).unwrap();
        assert!(json.contains("\"domain_label\":\"mushroom\""));
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(RewardModel::from_checkpoint(&back, &d).unwrap(), m);
        let flight = crate::domain::make_flight_domain();
        assert!(RewardModel::from_checkpoint(&back, &flight).is_err());
    }

    proptest! {
        #[test]
        fn bt_complement_and_shift(r1 in -50.0f64..50.0, r2 in -50.0f64..50.0, c in -50.0f64..50.0) {
            let p = bt_prob(r1, r2).unwrap();
            prop_assert!((p + bt_prob(r2, r1).unwrap() - 1.0).abs() <= 1e-12);
            prop_assert!((bt_prob(r1 + c, r2 + c).unwrap() - p).abs() <= 1e-12);
        }

        #[test]
        fn losses_invariant_under_side_swap(
            seed in 0u64..1000,
            a1 in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0]), 6),
            a2 in prop::collection::vec(prop::sample::select(vec![-1.0, 0.0, 1.0]), 6),
            label in prop::sample::select(vec![ExamplePrefLabel::PreferFirst, ExamplePrefLabel::PreferSecond, ExamplePrefLabel::Tie]),
            flabels in prop::collection::vec(prop::sample::select(vec![FeatureLabel::PreferFirst, FeatureLabel::PreferSecond, FeatureLabel::None]), 6),
        ) {
            let d = make_mushroom_domain();
            let m = RewardModel::init(&d.features, &TrainConfig { init_scale: 2.0, rng_seed: seed, ..Default::default() });
            let mut r = rec(&a1, &a2, label);
            r.feature_labels = flabels.iter().enumerate().map(|(j, &l)| labeled(j, l)).collect();
            let fwd = PreferenceDataset::new(vec![r.clone()]);
            let back = PreferenceDataset::new(vec![r.swapped()]);
            let (lf, lb) = (joint_loss(&m, &fwd, 0.5).unwrap(), joint_loss(&m, &back, 0.5).unwrap());
            prop_assert!((lf.rlhf_component - lb.rlhf_component).abs() < 1e-12);
            prop_assert!((lf.feat_component - lb.feat_component).abs() < 1e-12);
            prop_assert!(lf.rlhf_component >= 0.0 && lf.feat_component >= 0.0);
        }

        #[test]
        fn losses_are_additive(seed in 0u64..1000, split in 0usize..=4) {
            let d = make_mushroom_domain();
            let m = RewardModel::init(&d.features, &TrainConfig { init_scale: 1.0, rng_seed: seed, ..Default::default() });
            let mut sampler = crate::domain::ContextSampler::new(2, seed);
            let gt = crate::domain::sample_reward(&d, 3, seed).unwrap();
            let mut oracle = crate::oracle::Oracle::new(gt, Default::default()).unwrap();
            let records: Vec<_> = (0..4).map(|_| {
                let c = sampler.sample(&d).unwrap();
                oracle.answer_query(&c.actions[0], &c.actions[1], crate::oracle::Condition::Fp).unwrap()
            }).collect();
            let all = PreferenceDataset::new(records.clone());
            let left = PreferenceDataset::new(records[..split].to_vec());
            let right = PreferenceDataset::new(records[split..].to_vec());
            let whole = joint_loss(&m, &all, 0.5).unwrap();
            let l = joint_loss(&m, &left, 0.5).unwrap();
            let r = joint_loss(&m, &right, 0.5).unwrap();
            prop_assert!((whole.rlhf_component - l.rlhf_component - r.rlhf_component).abs() < 1e-12);
            prop_assert!((whole.feat_component - l.feat_component - r.feat_component).abs() < 1e-12);
        }
    }
}
