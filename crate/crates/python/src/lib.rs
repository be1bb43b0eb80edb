//! Python bindings. Structured values cross the boundary as JSON strings.

use pragfeat_core as pf;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(err)
}

#[pyclass(frozen, module = "pragfeat")]
struct Domain {
    inner: pf::DomainSpec,
}

#[pymethods]
impl Domain {
    /// `"mushroom"` or `"flight"`.
    #[new]
    fn new(label: &str) -> PyResult<Self> {
        let label: pf::DomainLabel = label.parse().map_err(err)?;
        Ok(Self { inner: pf::DomainSpec::builtin(label).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(Self { inner: pf::DomainSpec::from_json(s).map_err(err)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.features.features.iter().map(|f| f.name.clone()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Domain({}, n={})", self.inner.label, self.inner.n())
    }
}

#[pyfunction]
fn sample_reward(domain: &Domain, relevant_count: usize, seed: u64) -> PyResult<Vec<f64>> {
    Ok(pf::sample_reward(&domain.inner, relevant_count, seed).map_err(err)?.theta)
}

#[pyfunction]
#[pyo3(signature = (domain, seed, size = 2))]
fn sample_context(domain: &Domain, seed: u64, size: usize) -> PyResult<Vec<Vec<f64>>> {
    let mut sampler = pf::ContextSampler::new(size, seed);
    let ctx = sampler.sample(&domain.inner).map_err(err)?;
    Ok(ctx.actions.into_iter().map(|a| a.0).collect())
}

#[pyfunction]
fn true_reward(theta: Vec<f64>, action: Vec<f64>) -> PyResult<f64> {
    pf::true_reward(&pf::GroundTruthReward::new(theta), &pf::Action(action)).map_err(err)
}

#[pyfunction]
fn bt_prob(r1: f64, r2: f64) -> PyResult<f64> {
    pf::bt_prob(r1, r2).map_err(err)
}

/// Augments a JSONL dataset and returns the augmented JSONL.
#[pyfunction]
#[pyo3(signature = (dataset, domain, mode = "seen"))]
fn augment(dataset: &str, domain: &Domain, mode: &str) -> PyResult<String> {
    let mode: pf::AugmentMode = mode.parse().map_err(err)?;
    let data = pf::PreferenceDataset::from_jsonl(dataset).map_err(err)?;
    data.validate(&domain.inner.features).map_err(err)?;
    Ok(pf::augment(&data, mode, &domain.inner.features).map_err(err)?.to_jsonl())
}

#[pyfunction]
fn parse_keywords(utterance: &str, domain: &Domain) -> Vec<bool> {
    let lexicon = pf::Lexicon::default_for(&domain.inner);
    pf::parse_keywords(utterance, &domain.inner, &lexicon).mask.0
}

#[pyclass(frozen, module = "pragfeat")]
struct RewardModel {
    inner: pf::RewardModel,
    domain: pf::DomainSpec,
    config: Option<pf::TrainConfig>,
}

#[pymethods]
impl RewardModel {
    #[staticmethod]
    fn from_checkpoint(checkpoint: &str, domain: &Domain) -> PyResult<Self> {
        let ckpt: pf::Checkpoint = serde_json::from_str(checkpoint).map_err(err)?;
        let inner = pf::RewardModel::from_checkpoint(&ckpt, &domain.inner).map_err(err)?;
        Ok(Self { inner, domain: domain.inner.clone(), config: ckpt.config })
    }

    fn reward(&self, action: Vec<f64>) -> PyResult<f64> {
        self.inner.reward(&pf::Action(action)).map_err(err)
    }

    fn feature_reward(&self, feature: usize, value: f64) -> PyResult<f64> {
        self.inner.feature_reward(feature, value).map_err(err)
    }

    #[getter]
    fn combiner(&self) -> Vec<f64> {
        self.inner.combiner.clone()
    }

    /// Mean probability of preferring the true best action over held-out pairs.
    #[pyo3(signature = (theta, pairs = 200, seed = 0))]
    fn gt_best_prob(&self, theta: Vec<f64>, pairs: usize, seed: u64) -> PyResult<f64> {
        let gt = pf::GroundTruthReward::new(theta);
        pf::eval_gt_best_prob(&self.inner, &gt, &self.domain, pairs, seed).map_err(err)
    }

    fn checkpoint(&self) -> PyResult<String> {
        to_json(&self.inner.checkpoint(self.domain.label, self.config))
    }
}

#[pyfunction]
#[pyo3(signature = (dataset, domain, beta = 0.5, learning_rate = 0.1, epochs = 2000, seed = 0, init_scale = 0.01))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    dataset: &str,
    domain: &Domain,
    beta: f64,
    learning_rate: f64,
    epochs: usize,
    seed: u64,
    init_scale: f64,
) -> PyResult<RewardModel> {
    let data = pf::PreferenceDataset::from_jsonl(dataset).map_err(err)?;
    let config = pf::TrainConfig { beta, learning_rate, epochs, rng_seed: seed, init_scale };
    let d = domain.inner.clone();
    let inner = py.detach(|| pf::train(&data, &d, &config)).map_err(err)?;
    Ok(RewardModel { inner, domain: d, config: Some(config) })
}

/// Runs a simulated learning-curve experiment and returns the CSV text.
#[pyfunction]
#[pyo3(signature = (
    domain, condition, budgets, seeds, relevant_count = 1, reward_functions = 2, eval_pairs = 200, beta = 0.5,
    epochs = 2000, mask_source = "oracle"
))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    domain: &Domain,
    condition: &str,
    budgets: Vec<usize>,
    seeds: Vec<u64>,
    relevant_count: usize,
    reward_functions: usize,
    eval_pairs: usize,
    beta: f64,
    epochs: usize,
    mask_source: &str,
) -> PyResult<String> {
    let mut cfg = pf::ExperimentConfig::new(domain.inner.clone(), condition.parse().map_err(err)?);
    cfg.budgets = budgets;
    cfg.seeds = seeds;
    cfg.relevant_count = relevant_count;
    cfg.reward_functions = reward_functions;
    cfg.eval_pairs = eval_pairs;
    cfg.train.beta = beta;
    cfg.train.epochs = epochs;
    cfg.mask_source = mask_source.parse().map_err(err)?;
    cfg.validate().map_err(err)?;
    let result = py.detach(|| pf::run_experiment(&cfg)).map_err(err)?;
    Ok(result.to_csv_string())
}

#[pyclass(frozen, module = "pragfeat")]
struct SessionStore {
    inner: pf::SessionStore,
}

#[pymethods]
impl SessionStore {
    #[new]
    fn new() -> Self {
        Self { inner: pf::SessionStore::new() }
    }

    /// `config` is the JSON body accepted by `POST /sessions`.
    fn create(&self, config: &str) -> PyResult<String> {
        let cfg: pf::SessionConfig = serde_json::from_str(config).map_err(err)?;
        self.inner.create(cfg).map_err(err)
    }

    fn next_query(&self, id: &str) -> PyResult<String> {
        to_json(&self.inner.next_query(id).map_err(err)?)
    }

    fn submit(&self, py: Python<'_>, id: &str, response: &str) -> PyResult<String> {
        let resp: pf::ResponsePayload = serde_json::from_str(response).map_err(err)?;
        let snap = py.detach(|| self.inner.submit(id, resp)).map_err(err)?;
        to_json(&snap)
    }

    fn snapshot(&self, id: &str) -> PyResult<String> {
        to_json(&self.inner.snapshot(id).map_err(err)?)
    }

    fn export(&self, id: &str) -> PyResult<String> {
        to_json(&self.inner.export(id).map_err(err)?)
    }

    fn replay(&self, py: Python<'_>, export: &str) -> PyResult<String> {
        let export: pf::SessionExport = serde_json::from_str(export).map_err(err)?;
        py.detach(|| self.inner.replay(&export)).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

#[pymodule]
fn pragfeat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Domain>()?;
    m.add_class::<RewardModel>()?;
    m.add_class::<SessionStore>()?;
    m.add_function(wrap_pyfunction!(sample_reward, m)?)?;
    m.add_function(wrap_pyfunction!(sample_context, m)?)?;
    m.add_function(wrap_pyfunction!(true_reward, m)?)?;
    m.add_function(wrap_pyfunction!(bt_prob, m)?)?;
    m.add_function(wrap_pyfunction!(augment, m)?)?;
    m.add_function(wrap_pyfunction!(parse_keywords, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
