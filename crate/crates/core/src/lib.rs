//! Reward learning from example-level and feature-level preferences.
//!
//! The crate covers the whole loop: domains and simulated users, pragmatic
//! augmentation of preference data, a linear reward model trained with a
//! joint Bradley-Terry objective, natural-language relevance parsing, the
//! experiment harness and the in-memory elicitation service.

pub mod augment;
pub mod dataset;
pub mod domain;
pub mod error;
pub mod flights;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod parse;
pub mod seed;
pub mod session;

pub use augment::{augment, feat_combos, mask_irrelevant, AugmentMode, Combo};
pub use dataset::{
    ExamplePrefLabel, FeatureLabel, FeaturePrefLabel, PreferenceDataset, PreferenceRecord, RelevanceMask,
};
pub use domain::{
    make_flight_domain, make_mushroom_domain, sample_context, sample_reward, true_reward, Action, Context,
    ContextSampler, DomainLabel, DomainSpec, FeatureKind, FeatureSpace, FeatureSpec, GroundTruthReward,
};
pub use error::{Error, Result};
pub use model::{
    bt_prob, feat_loss, gradient, joint_loss, rlhf_loss, train, Checkpoint, LossBreakdown, ModelGradient,
    RewardModel, TrainConfig,
};
pub use oracle::{
    answer_query, oracle_example_pref, oracle_feature_pref, oracle_relevance_mask, Condition, Noise, Oracle,
    OracleConfig,
};
pub use flights::{convert_triples_to_pairs, FlightRecordFile, FlightRow, IngestionReport};
pub use harness::{
    build_training_set, eval_gt_best_prob, run_experiment, BudgetSummary, DataConfig, EvalResult, ExperimentConfig,
    MaskSource, RunResult,
};
pub use parse::{
    parse_keywords, parse_via_lm, Lexicon, LmClientConfig, MaskParser, ParseResult, ParseSource,
};
pub use session::{
    AnswerKind, Choice, FeatureChoice, ModelSnapshot, QueryPayload, ResponsePayload, Session, SessionConfig,
    SessionExport, SessionMode, SessionStore,
};
