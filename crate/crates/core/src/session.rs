//! Live elicitation sessions: queries, human responses, retraining and
//! snapshots. Transport-agnostic; the HTTP layer lives in `pragfeat-server`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::augment::{augment, AugmentMode};
use crate::dataset::{ExamplePrefLabel, FeatureLabel, FeaturePrefLabel, PreferenceDataset, PreferenceRecord};
use crate::domain::{sample_reward, Action, ContextSampler, DomainLabel, DomainSpec, FeatureKind, GroundTruthReward};
use crate::error::{Error, Result};
use crate::harness::{eval_gt_best_prob, DEFAULT_EVAL_PAIRS};
use crate::model::{train, Checkpoint, RewardModel, TrainConfig};
use crate::oracle::Condition;
use crate::parse::{parse_keywords, Lexicon};
use crate::seed::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    /// A hidden ground truth is sampled and the model is scored against it.
    #[default]
    Practice,
    Free,
}

impl std::str::FromStr for SessionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "practice" => Ok(Self::Practice),
            "free" => Ok(Self::Free),
            other => Err(Error::InvalidArgument(format!("unknown session mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub domain: DomainLabel,
    pub condition: Condition,
    #[serde(default)]
    pub mode: SessionMode,
    #[serde(default)]
    pub seed: u64,
    /// Sparsity of the practice ground truth; 1 when absent.
    #[serde(default)]
    pub relevant_count: Option<usize>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub augment_mode: AugmentMode,
}

impl SessionConfig {
    pub fn new(domain: DomainLabel, condition: Condition, mode: SessionMode, seed: u64) -> Self {
        Self {
            domain,
            condition,
            mode,
            seed,
            relevant_count: None,
            train: None,
            augment_mode: AugmentMode::SeenValues,
        }
    }

    fn train_config(&self) -> TrainConfig {
        let base = self.train.unwrap_or_default();
        TrainConfig {
            rng_seed: seed::stream_seed(self.seed, Stream::Init, &[]),
            ..base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    ExampleChoice,
    FeatureChoices,
    Description,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureChoice {
    First,
    Second,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCell {
    pub feature: String,
    pub value: String,
    pub encoded: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPayload {
    pub query_id: String,
    pub first: Vec<FeatureCell>,
    pub second: Vec<FeatureCell>,
    pub required: Vec<AnswerKind>,
    pub optional: Vec<AnswerKind>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResponsePayload {
    pub query_id: String,
    #[serde(default)]
    pub example_choice: Option<Choice>,
    #[serde(default)]
    pub feature_choices: Option<Vec<FeatureChoice>>,
    #[serde(default)]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueReward {
    pub value: String,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRewards {
    pub feature: String,
    pub values: Vec<ValueReward>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSnapshot {
    pub combiner: Vec<f64>,
    pub feature_rewards: Vec<FeatureRewards>,
    pub gt_best_probability: Option<f64>,
    pub raw_records: usize,
    pub synthesized_records: usize,
    pub responses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub query: QueryPayload,
    pub response: ResponsePayload,
}

/// Everything needed to inspect or replay a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionExport {
    pub config: SessionConfig,
    pub responses: Vec<ResponsePayload>,
    /// Augmented training data in the JSONL record format.
    pub dataset: String,
    pub checkpoint: Checkpoint,
}

impl SessionExport {
    /// Retrains a model from the exported dataset alone.
    pub fn retrain(&self) -> Result<RewardModel> {
        let domain = DomainSpec::builtin(self.config.domain)?;
        let data = PreferenceDataset::from_jsonl(&self.dataset)?;
        if data.is_empty() {
            return Ok(RewardModel::init(&domain.features, &self.config.train_config()));
        }
        train(&data, &domain, &self.config.train_config())
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub struct Session {
    pub id: String,
    pub config: SessionConfig,
    pub domain: DomainSpec,
    pub gt: Option<GroundTruthReward>,
    pub raw: PreferenceDataset,
    pub dataset: PreferenceDataset,
    pub model: RewardModel,
    pub history: Vec<HistoryEntry>,
    pub created_ms: u64,
    pub updated_ms: u64,
    lexicon: Lexicon,
    sampler: ContextSampler,
    pending: Option<(QueryPayload, Action, Action)>,
    issued: usize,
}

impl Session {
    pub fn new(id: String, config: SessionConfig) -> Result<Self> {
        let domain = DomainSpec::builtin(config.domain)?;
        let train_cfg = config.train_config();
        train_cfg.validate()?;
        let gt = match config.mode {
            SessionMode::Practice => Some(sample_reward(
                &domain,
                config.relevant_count.unwrap_or(1),
                seed::stream_seed(config.seed, Stream::Reward, &[]),
            )?),
            SessionMode::Free => None,
        };
        let now = now_ms();
        Ok(Self {
            id,
            model: RewardModel::init(&domain.features, &train_cfg),
            lexicon: Lexicon::default_for(&domain),
            sampler: ContextSampler::new(2, seed::stream_seed(config.seed, Stream::Query, &[])),
            domain,
            gt,
            config,
            raw: PreferenceDataset::default(),
            dataset: PreferenceDataset::default(),
            history: Vec::new(),
            created_ms: now,
            updated_ms: now,
            pending: None,
            issued: 0,
        })
    }

    fn answer_kinds(&self) -> (Vec<AnswerKind>, Vec<AnswerKind>) {
        use AnswerKind::*;
        match self.config.condition {
            Condition::Rlhf => (vec![ExampleChoice], vec![]),
            Condition::Fp => (vec![ExampleChoice, FeatureChoices], vec![]),
            Condition::PragRlhf => (vec![ExampleChoice, Description], vec![]),
            Condition::PragFp => (vec![ExampleChoice, Description], vec![FeatureChoices]),
        }
    }

    fn render(&self, a: &Action) -> Vec<FeatureCell> {
        self.domain
            .features
            .features
            .iter()
            .zip(a.values())
            .map(|(spec, &v)| FeatureCell {
                feature: spec.name.clone(),
                value: spec.value_name(v),
                encoded: v,
            })
            .collect()
    }

    /// The outstanding query, sampling a new one if none is pending.
    pub fn next_query(&mut self) -> Result<QueryPayload> {
        if let Some((q, _, _)) = &self.pending {
            return Ok(q.clone());
        }
        let ctx = self.sampler.sample(&self.domain)?;
        let [a1, a2]: [Action; 2] = ctx
            .actions
            .try_into()
            .map_err(|_| Error::PreconditionViolation("expected a pair".into()))?;
        self.issued += 1;
        let (required, optional) = self.answer_kinds();
        let q = QueryPayload {
            query_id: format!("q{}", self.issued),
            first: self.render(&a1),
            second: self.render(&a2),
            required,
            optional,
        };
        self.pending = Some((q.clone(), a1, a2));
        Ok(q)
    }

    fn build_record(&self, resp: &ResponsePayload, a1: &Action, a2: &Action) -> Result<PreferenceRecord> {
        let n = self.domain.n();
        let cond = self.config.condition;
        let mut missing = Vec::new();
        if resp.example_choice.is_none() {
            missing.push("example_choice".to_string());
        }
        if cond == Condition::Fp && resp.feature_choices.is_none() {
            missing.push("feature_choices".to_string());
        }
        if cond.is_pragmatic() && resp.description.as_deref().is_none_or(|d| d.trim().is_empty()) {
            missing.push("description".to_string());
        }
        if let Some(fc) = &resp.feature_choices {
            if fc.len() != n {
                missing.push(format!("feature_choices (expected {n} entries, got {})", fc.len()));
            }
        }
        if !missing.is_empty() {
            return Err(Error::Validation { missing });
        }

        let label = match resp.example_choice.expect("validated") {
            Choice::First => ExamplePrefLabel::PreferFirst,
            Choice::Second => ExamplePrefLabel::PreferSecond,
        };
        let mut record = PreferenceRecord::new(a1.clone(), a2.clone(), label);
        if cond.is_pragmatic() {
            let text = resp.description.clone().expect("validated");
            record.mask = Some(parse_keywords(&text, &self.domain, &self.lexicon).mask);
            record.utterance = Some(text);
        }
        if cond.uses_feature_labels() {
            if let Some(fc) = &resp.feature_choices {
                record.feature_labels = fc
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| record.mask.as_ref().is_none_or(|m| m.is_relevant(*j)))
                    .filter_map(|(j, c)| {
                        let label = match c {
                            FeatureChoice::First => FeatureLabel::PreferFirst,
                            FeatureChoice::Second => FeatureLabel::PreferSecond,
                            FeatureChoice::Skip => return None,
                        };
                        Some(FeaturePrefLabel { feature_index: j, label })
                    })
                    .collect();
            }
        }
        Ok(record)
    }

    /// Records the answer to the pending query and retrains from scratch.
    /// Nothing changes if the response is rejected or training fails.
    pub fn submit(&mut self, resp: ResponsePayload) -> Result<ModelSnapshot> {
        let Some((query, a1, a2)) = self.pending.clone() else {
            return Err(Error::Conflict(format!("no outstanding query; '{}' is stale", resp.query_id)));
        };
        if resp.query_id != query.query_id {
            return Err(Error::Conflict(format!(
                "query '{}' is not the outstanding query '{}'",
                resp.query_id, query.query_id
            )));
        }
        let record = self.build_record(&resp, &a1, &a2)?;
        let mut raw = self.raw.clone();
        raw.push(record);
        let dataset = if self.config.condition.is_pragmatic() {
            augment(&raw, self.config.augment_mode, &self.domain.features)?
        } else {
            raw.clone()
        };
        let model = train(&dataset, &self.domain, &self.config.train_config())?;

        self.raw = raw;
        self.dataset = dataset;
        self.model = model;
        self.history.push(HistoryEntry { query, response: resp });
        self.pending = None;
        self.updated_ms = now_ms();
        self.snapshot()
    }

    pub fn snapshot(&self) -> Result<ModelSnapshot> {
        let feature_rewards = self
            .domain
            .features
            .features
            .iter()
            .enumerate()
            .map(|(j, spec)| {
                let points: Vec<f64> = match &spec.kind {
                    FeatureKind::Discrete { encodings, .. } => encodings.clone(),
                    FeatureKind::Continuous { lower, upper } => vec![*lower, *upper],
                };
                let values = points
                    .into_iter()
                    .map(|v| {
                        Ok(ValueReward {
                            value: spec.value_name(v),
                            reward: self.model.feature_reward(j, v)?,
                        })
                    })
                    .collect::<Result<_>>()?;
                Ok(FeatureRewards {
                    feature: spec.name.clone(),
                    values,
                })
            })
            .collect::<Result<_>>()?;
        let gt_best_probability = self
            .gt
            .as_ref()
            .map(|gt| {
                eval_gt_best_prob(
                    &self.model,
                    gt,
                    &self.domain,
                    DEFAULT_EVAL_PAIRS,
                    seed::stream_seed(self.config.seed, Stream::Eval, &[]),
                )
            })
            .transpose()?;
        Ok(ModelSnapshot {
            combiner: self.model.combiner.clone(),
            feature_rewards,
            gt_best_probability,
            raw_records: self.dataset.raw_count(),
            synthesized_records: self.dataset.synthesized_count(),
            responses: self.history.len(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.model.checkpoint(self.domain.label, Some(self.config.train_config()))
    }

    pub fn export(&self) -> SessionExport {
        SessionExport {
            config: self.config.clone(),
            responses: self.history.iter().map(|h| h.response.clone()).collect(),
            dataset: self.dataset.to_jsonl(),
            checkpoint: self.checkpoint(),
        }
    }
}

/// In-memory session registry. Each session sits behind its own mutex, so
/// different sessions proceed concurrently.
#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create(&self, config: SessionConfig) -> Result<String> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(id.clone(), config)?;
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("no session '{id}'")))
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn with<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        let s = self.get(id)?;
        let mut guard = s.lock().expect("session poisoned");
        f(&mut guard)
    }

    pub fn next_query(&self, id: &str) -> Result<QueryPayload> {
        self.with(id, Session::next_query)
    }

    pub fn submit(&self, id: &str, resp: ResponsePayload) -> Result<ModelSnapshot> {
        self.with(id, |s| s.submit(resp))
    }

    pub fn snapshot(&self, id: &str) -> Result<ModelSnapshot> {
        self.with(id, |s| s.snapshot())
    }

    pub fn export(&self, id: &str) -> Result<SessionExport> {
        self.with(id, |s| Ok(s.export()))
    }

    /// Feeds an export's responses, in order, into a fresh session built
    /// from the same config. Query ids are rebound to the new session's.
    pub fn replay(&self, export: &SessionExport) -> Result<String> {
        let id = self.create(export.config.clone())?;
        self.with(&id, |s| {
            for resp in &export.responses {
                let q = s.next_query()?;
                s.submit(ResponsePayload {
                    query_id: q.query_id,
                    ..resp.clone()
                })?;
            }
            Ok(())
        })?;
        Ok(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{oracle_example_pref, oracle_feature_pref};

    fn actions(q: &QueryPayload) -> (Action, Action) {
        (
            Action(q.first.iter().map(|c| c.encoded).collect()),
            Action(q.second.iter().map(|c| c.encoded).collect()),
        )
    }

    /// A truthful answer from the session's own ground truth.
    fn oracle_answer(s: &Session, q: &QueryPayload) -> ResponsePayload {
        let gt = s.gt.as_ref().unwrap();
        let (a1, a2) = actions(q);
        let choice = match oracle_example_pref(gt, &a1, &a2, Default::default()).unwrap() {
            ExamplePrefLabel::PreferSecond => Choice::Second,
            _ => Choice::First,
        };
        let feature_choices = (0..a1.len())
            .map(|j| match oracle_feature_pref(gt, &a1, &a2, j).unwrap().label {
                FeatureLabel::PreferFirst => FeatureChoice::First,
                FeatureLabel::PreferSecond => FeatureChoice::Second,
                FeatureLabel::None => FeatureChoice::Skip,
            })
            .collect();
        let description = gt
            .relevant_set
            .iter()
            .map(|&j| s.domain.features.features[j].name.clone())
            .collect::<Vec<_>>()
            .join(" and ");
        ResponsePayload {
            query_id: q.query_id.clone(),
            example_choice: Some(choice),
            feature_choices: Some(feature_choices),
            description: Some(format!("the {description} mattered")),
        }
    }

    fn session(cond: Condition, mode: SessionMode) -> Session {
        Session::new("t".into(), SessionConfig::new(DomainLabel::Mushroom, cond, mode, 7)).unwrap()
    }

    #[test]
    fn query_is_idempotent_until_answered() {
        let mut s = session(Condition::Rlhf, SessionMode::Practice);
        let q1 = s.next_query().unwrap();
        assert_eq!(q1, s.next_query().unwrap());
        assert_eq!(q1.first.len(), 6);
        assert_eq!(q1.first[0].feature, "texture");
        assert_ne!(q1.first, q1.second);
        assert_eq!(q1.required, vec![AnswerKind::ExampleChoice]);
        let resp = oracle_answer(&s, &q1);
        let snap = s.submit(resp).unwrap();
        assert_eq!((snap.raw_records, snap.synthesized_records), (1, 0));
        assert_ne!(s.next_query().unwrap().query_id, q1.query_id);
    }

    #[test]
    fn stale_and_malformed_responses() {
        let mut s = session(Condition::Fp, SessionMode::Free);
        let q = s.next_query().unwrap();
        let err = s
            .submit(ResponsePayload { query_id: "q99".into(), example_choice: Some(Choice::First), ..Default::default() })
            .unwrap_err();
        assert!(matches!(err, Error::Conflict(_)));
        let err = s.submit(ResponsePayload { query_id: q.query_id.clone(), ..Default::default() }).unwrap_err();
        match err {
            Error::Validation { missing } => assert_eq!(missing, vec!["example_choice", "feature_choices"]),
            other => panic!("{other}"),
        }
        assert!(s.history.is_empty() && s.raw.is_empty());
        // still answerable afterwards
        let ok = ResponsePayload {
            query_id: q.query_id,
            example_choice: Some(Choice::First),
            feature_choices: Some(vec![FeatureChoice::Skip; 6]),
            description: None,
        };
        s.submit(ok).unwrap();
        assert!(matches!(
            s.submit(ResponsePayload { query_id: "q1".into(), example_choice: Some(Choice::First), ..Default::default() }),
            Err(Error::Conflict(_))
        ));
    }

    #[test]
    fn prag_fp_description_drives_mask_and_augmentation() {
        let mut s = session(Condition::PragFp, SessionMode::Free);
        let q = s.next_query().unwrap();
        let missing = s.submit(ResponsePayload {
            query_id: q.query_id.clone(),
            example_choice: Some(Choice::First),
            ..Default::default()
        });
        assert!(matches!(missing, Err(Error::Validation { missing }) if missing == vec!["description"]));
        let snap = s
            .submit(ResponsePayload {
                query_id: q.query_id.clone(),
                example_choice: Some(Choice::First),
                feature_choices: Some(vec![FeatureChoice::First; 6]),
                description: Some("I only cared about the color".into()),
            })
            .unwrap();
        let rec = &s.raw.records[0];
        assert_eq!(rec.mask.as_ref().unwrap().relevant(), vec![1]);
        assert_eq!(rec.feature_labels, vec![FeaturePrefLabel { feature_index: 1, label: FeatureLabel::PreferFirst }]);
        let (a1, a2) = actions(&q);
        let k = (0..6).filter(|&j| j != 1 && a1.0[j] != a2.0[j]).count();
        assert_eq!(snap.synthesized_records, (1 << k) - 1);
        assert_eq!(snap.raw_records, 1);
    }

    #[test]
    fn fresh_snapshot_is_uninformed() {
        let s = session(Condition::PragFp, SessionMode::Practice);
        let snap = s.snapshot().unwrap();
        assert!(snap.combiner.iter().all(|c| c.abs() <= 0.01));
        assert!((snap.gt_best_probability.unwrap() - 0.5).abs() < 0.01);
        assert_eq!(snap.feature_rewards[5].values.len(), 3);
        assert!(session(Condition::Rlhf, SessionMode::Free).snapshot().unwrap().gt_best_probability.is_none());
    }

    #[test]
    fn practice_session_learns() {
        let mut s = session(Condition::PragFp, SessionMode::Practice);
        for _ in 0..10 {
            let q = s.next_query().unwrap();
            let r = oracle_answer(&s, &q);
            s.submit(r).unwrap();
        }
        let snap = s.snapshot().unwrap();
        assert_eq!(snap.responses, 10);
        assert!(snap.gt_best_probability.unwrap() > 0.5);
    }

    #[test]
    fn store_isolation_export_and_replay() {
        let store = SessionStore::new();
        let cfg = SessionConfig::new(DomainLabel::Mushroom, Condition::PragFp, SessionMode::Practice, 11);
        let a = store.create(cfg.clone()).unwrap();
        let b = store.create(cfg).unwrap();
        assert_ne!(a, b);
        let before_b = store.snapshot(&b).unwrap();
        for _ in 0..4 {
            let q = store.next_query(&a).unwrap();
            let r = {
                let s = store.get(&a).unwrap();
                let g = s.lock().unwrap();
                oracle_answer(&g, &q)
            };
            store.submit(&a, r).unwrap();
        }
        assert_eq!(store.snapshot(&b).unwrap(), before_b);

        let export = store.export(&a).unwrap();
        assert_eq!(export.responses.len(), 4);
        let data = PreferenceDataset::from_jsonl(&export.dataset).unwrap();
        assert_eq!(data.raw_count(), 4);

        let c = store.replay(&export).unwrap();
        assert_eq!(store.export(&c).unwrap().checkpoint, export.checkpoint);
        let retrained = export.retrain().unwrap();
        assert_eq!(retrained.checkpoint(DomainLabel::Mushroom, export.checkpoint.config), export.checkpoint);

        let json = serde_json::to_string(&export).unwrap();
        assert_eq!(serde_json::from_str::<SessionExport>(&json).unwrap(), export);
        assert!(matches!(store.snapshot("nope"), Err(Error::NotFound(_))));
    }

    #[test]
    fn flight_free_session() {
        let mut s = Session::new(
            "f".into(),
            SessionConfig::new(DomainLabel::Flight, Condition::Rlhf, SessionMode::Free, 1),
        )
        .unwrap();
        assert!(s.gt.is_none());
        let q = s.next_query().unwrap();
        assert_eq!(q.first.len(), 8);
        assert!(Session::new("x".into(), SessionConfig::new(DomainLabel::Custom, Condition::Rlhf, SessionMode::Free, 1)).is_err());
    }
}
