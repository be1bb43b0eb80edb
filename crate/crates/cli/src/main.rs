mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use pragfeat::{
    augment, convert_triples_to_pairs, parse_keywords, parse_via_lm, run_experiment, AugmentMode, DomainLabel,
    FlightRecordFile, Lexicon, LmClientConfig, MaskParser, PreferenceDataset,
};

use crate::config::{domain_for, ExperimentArgs};

#[derive(Parser)]
#[command(name = "pragfeat", version, about = "Reward learning from pragmatic feature preferences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Simulated learning-curve experiments
    Experiment {
        #[command(subcommand)]
        action: ExperimentAction,
    },
    /// Pragmatically augment a preference dataset (JSONL)
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// seen | any
        #[arg(long, default_value = "seen")]
        mode: String,
        #[arg(long, default_value = "mushroom")]
        domain: String,
    },
    /// Print the relevance mask for a description
    Parse {
        #[arg(long, default_value = "flight")]
        domain: String,
        #[arg(long)]
        utterance: String,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Use the LM service at this URL instead of keywords
        #[arg(long)]
        lm_endpoint: Option<String>,
    },
    /// Convert three-option flight choices into pairwise records
    IngestFlights {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// keyword | lm | none
        #[arg(long, default_value = "keyword")]
        mask_source: String,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        lm_endpoint: Option<String>,
    },
    /// Run the elicitation HTTP service
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Subcommand)]
enum ExperimentAction {
    Run {
        /// TOML or JSON file with the same keys as the flags
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: ExperimentArgs,
    },
}

fn lexicon_or_default(path: Option<&PathBuf>, domain: &pragfeat::DomainSpec) -> anyhow::Result<Lexicon> {
    match path {
        Some(p) => {
            let lex = Lexicon::load(p)?;
            lex.validate(domain)?;
            Ok(lex)
        }
        None => Ok(Lexicon::default_for(domain)),
    }
}

fn experiment(config: Option<PathBuf>, args: ExperimentArgs) -> anyhow::Result<()> {
    let merged = match config {
        Some(path) => args.over(ExperimentArgs::load(&path)?),
        None => args,
    };
    let cfg = merged.build()?;
    let result = run_experiment(&cfg)?;
    match &merged.out {
        Some(path) => {
            let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            result.write_csv(BufWriter::new(f))?;
        }
        None => result.write_csv(std::io::stdout().lock())?,
    }
    for s in &result.summary {
        eprintln!(
            "{} budget {:>3}: gt_best_prob {:.4} +/- {:.4} ({} runs)",
            result.condition, s.budget, s.mean, s.stderr, s.runs
        );
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Experiment {
            action: ExperimentAction::Run { config, args },
        } => experiment(config, args),
        Command::Augment {
            input,
            out,
            mode,
            domain,
        } => {
            let domain = domain_for(domain.parse::<DomainLabel>()?)?;
            let mode: AugmentMode = mode.parse()?;
            let data = PreferenceDataset::read_jsonl(BufReader::new(File::open(&input)?))?;
            data.validate(&domain.features)?;
            let out_data = augment(&data, mode, &domain.features)?;
            out_data.write_jsonl(BufWriter::new(File::create(&out)?))?;
            eprintln!(
                "{} records in, {} out ({} synthesized)",
                data.len(),
                out_data.len(),
                out_data.synthesized_count() - data.synthesized_count()
            );
            Ok(())
        }
        Command::Parse {
            domain,
            utterance,
            lexicon,
            lm_endpoint,
        } => {
            let domain = domain_for(domain.parse::<DomainLabel>()?)?;
            let result = match lm_endpoint {
                Some(url) => parse_via_lm(&utterance, &domain, &LmClientConfig::new(url))?,
                None => parse_keywords(&utterance, &domain, &lexicon_or_default(lexicon.as_ref(), &domain)?),
            };
            let relevant: Vec<&str> = result
                .mask
                .relevant()
                .into_iter()
                .map(|j| domain.features.features[j].name.as_str())
                .collect();
            let mask: Vec<u8> = result.mask.0.iter().map(|&b| b as u8).collect();
            println!(
                "{}",
                serde_json::json!({ "mask": mask, "relevant": relevant, "source": result.source })
            );
            Ok(())
        }
        Command::IngestFlights {
            input,
            out,
            mask_source,
            lexicon,
            lm_endpoint,
        } => {
            let domain = pragfeat::make_flight_domain();
            let parser = match mask_source.as_str() {
                "keyword" => Some(MaskParser::Keyword(lexicon_or_default(lexicon.as_ref(), &domain)?)),
                "lm" => Some(MaskParser::Lm(LmClientConfig::new(
                    lm_endpoint.context("--mask-source lm needs --lm-endpoint")?,
                ))),
                "none" => None,
                other => anyhow::bail!("unknown mask source '{other}' (keyword | lm | none)"),
            };
            let file = FlightRecordFile::load(&input)?;
            let (data, report) = convert_triples_to_pairs(&file, parser.as_ref())?;
            let mut w = BufWriter::new(File::create(&out)?);
            data.write_jsonl(&mut w)?;
            w.flush()?;
            eprintln!("{}", serde_json::to_string(&report)?);
            Ok(())
        }
        Command::Serve { port, host } => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let addr: SocketAddr = format!("{host}:{port}").parse()?;
            tokio::runtime::Runtime::new()?.block_on(pragfeat_server::serve(addr))?;
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
