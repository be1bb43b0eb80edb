//! Experiment settings from a TOML/JSON file merged with command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use pragfeat::{
    make_flight_domain, make_mushroom_domain, AugmentMode, Condition, DomainLabel, DomainSpec, ExperimentConfig,
    FlightRecordFile, Lexicon, LmClientConfig, MaskSource, Noise,
};
use serde::Deserialize;

/// Every field is optional in both places; flags win over the file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExperimentArgs {
    /// mushroom | flight
    #[arg(long)]
    pub domain: Option<String>,
    /// rlhf | fp | prag-rlhf | prag-fp
    #[arg(long)]
    pub condition: Option<String>,
    #[arg(long)]
    pub relevant_count: Option<usize>,
    /// Inclusive range `1..20` or a comma list `1,2,5`
    #[arg(long)]
    pub budgets: Option<String>,
    /// A count `5` (seeds 0..5) or a comma list `0,3,7`
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub eval_pairs: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// oracle | keyword | lm
    #[arg(long)]
    pub mask_source: Option<String>,
    /// seen | any
    #[arg(long)]
    pub augment_mode: Option<String>,
    /// Number of sampled ground truths (flight: number of groups, 0 = all)
    #[arg(long)]
    pub reward_functions: Option<usize>,
    #[arg(long)]
    pub reward_seed: Option<u64>,
    /// Boltzmann temperature for noisy oracle answers
    #[arg(long)]
    pub noise_temperature: Option<f64>,
    /// Flight choices JSONL
    #[arg(long)]
    pub flights: Option<PathBuf>,
    /// Lexicon JSON for keyword masks
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// LM parsing endpoint for `--mask-source lm`
    #[arg(long)]
    pub lm_endpoint: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($flags:ident, $file:ident; $($f:ident),*) => {
        ExperimentArgs { $($f: $flags.$f.or($file.$f)),* }
    };
}

impl ExperimentArgs {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            Some("toml") => toml::from_str(&text)?,
            _ => bail!("config file must end in .toml or .json"),
        };
        Ok(parsed)
    }

    pub fn over(self, file: ExperimentArgs) -> ExperimentArgs {
        let flags = self;
        merge_fields!(flags, file; domain, condition, relevant_count, budgets, seeds, eval_pairs, beta, lr,
            epochs, init_scale, mask_source, augment_mode, reward_functions, reward_seed, noise_temperature,
            flights, lexicon, lm_endpoint, out)
    }

    pub fn build(&self) -> anyhow::Result<ExperimentConfig> {
        let label: DomainLabel = self.domain.as_deref().unwrap_or("mushroom").parse()?;
        let domain = domain_for(label)?;
        let condition: Condition = self.condition.as_deref().unwrap_or("prag-fp").parse()?;
        let mut cfg = ExperimentConfig::new(domain, condition);
        if let Some(k) = self.relevant_count {
            cfg.relevant_count = k;
        }
        if let Some(b) = &self.budgets {
            cfg.budgets = parse_budgets(b)?;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        if let Some(e) = self.eval_pairs {
            cfg.eval_pairs = e;
        }
        if let Some(b) = self.beta {
            cfg.train.beta = b;
        }
        if let Some(lr) = self.lr {
            cfg.train.learning_rate = lr;
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(s) = self.init_scale {
            cfg.train.init_scale = s;
        }
        if let Some(m) = &self.augment_mode {
            cfg.augment_mode = m.parse::<AugmentMode>()?;
        }
        if let Some(r) = self.reward_seed {
            cfg.reward_seed = r;
        }
        if let Some(t) = self.noise_temperature {
            cfg.noise = Noise::Boltzmann { temperature: t };
        }
        if let Some(path) = &self.flights {
            cfg.flights = Some(FlightRecordFile::load(path)?);
            cfg.reward_functions = 0;
        }
        if let Some(r) = self.reward_functions {
            cfg.reward_functions = r;
        }
        if let Some(m) = &self.mask_source {
            cfg.mask_source = m.parse::<MaskSource>()?;
        } else if cfg.flights.is_none() {
            cfg.mask_source = MaskSource::Oracle;
        }
        if let Some(path) = &self.lexicon {
            let lex = Lexicon::load(path)?;
            lex.validate(&cfg.domain)?;
            cfg.lexicon = Some(lex);
        }
        if let Some(url) = &self.lm_endpoint {
            cfg.lm = Some(LmClientConfig::new(url.clone()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn domain_for(label: DomainLabel) -> anyhow::Result<DomainSpec> {
    match label {
        DomainLabel::Mushroom => Ok(make_mushroom_domain()),
        DomainLabel::Flight => Ok(make_flight_domain()),
        DomainLabel::Custom => bail!("custom domains are not available from the command line"),
    }
}

pub fn parse_budgets(s: &str) -> anyhow::Result<Vec<usize>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let lo: usize = a.trim().parse().context("budget range start")?;
        let hi: usize = b.trim_start_matches('=').trim().parse().context("budget range end")?;
        if lo > hi {
            bail!("empty budget range {s}");
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad budget '{p}'")))
        .collect()
}

pub fn parse_seeds(s: &str) -> anyhow::Result<Vec<u64>> {
    let s = s.trim();
    if s.contains(',') {
        return s
            .split(',')
            .map(|p| p.trim().parse::<u64>().with_context(|| format!("bad seed '{p}'")))
            .collect();
    }
    let n: u64 = s.parse().with_context(|| format!("bad seed count '{s}'"))?;
    Ok((0..n).collect())
}
