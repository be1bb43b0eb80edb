//! Turning preference descriptions into relevance masks.
//!
//! Features mentioned in a description are taken as relevant and everything
//! else as irrelevant. Two parsers are provided: a deterministic keyword
//! lexicon, and a client for an external language-model service.
//!
//! Lexicon phrases are matched on word tokens (maximal alphanumeric runs of
//! the lowercased text). A plain phrase such as `"number of stops"` matches
//! when its words occur consecutively, each utterance token starting with the
//! phrase word. A windowed phrase such as `"stop ~ long"` matches when all
//! its words occur within [`WINDOW`] tokens of each other.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dataset::RelevanceMask;
use crate::domain::{DomainLabel, DomainSpec, FeatureKind};
use crate::error::{invalid, Error, Result};

/// Maximum token distance between the words of a windowed phrase.
pub const WINDOW: usize = 3;

/// Trigger phrases per feature name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lexicon {
    pub triggers: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn from_json(s: &str) -> Result<Self> {
        let mut lex: Self = serde_json::from_str(s)?;
        for phrases in lex.triggers.values_mut() {
            for p in phrases.iter_mut() {
                *p = p.to_lowercase();
            }
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self, domain: &DomainSpec) -> Result<()> {
        for f in &domain.features.features {
            let phrases = self
                .triggers
                .get(&f.name)
                .ok_or_else(|| invalid(format!("lexicon has no phrases for feature '{}'", f.name)))?;
            if phrases.is_empty() {
                return Err(invalid(format!("lexicon has no phrases for feature '{}'", f.name)));
            }
            if phrases.iter().any(|p| tokenize(p).is_empty()) {
                return Err(invalid(format!("empty phrase for feature '{}'", f.name)));
            }
        }
        Ok(())
    }

    /// The shipped lexicon for a built-in domain.
    pub fn default_for(domain: &DomainSpec) -> Self {
        match domain.label {
            DomainLabel::Flight => flight_lexicon(),
            _ => names_lexicon(domain),
        }
    }
}

fn lexicon_from(entries: &[(&str, &[&str])]) -> Lexicon {
    Lexicon {
        triggers: entries
            .iter()
            .map(|(f, ps)| (f.to_string(), ps.iter().map(|p| p.to_string()).collect()))
            .collect(),
    }
}

fn flight_lexicon() -> Lexicon {
    lexicon_from(&[
        (
            "arrival-time-before-meeting",
            &["arriv", "meeting", "on time", "early", "late", "time"],
        ),
        ("american", &["american"]),
        ("delta", &["delta"]),
        ("jetblue", &["jetblue", "jet blue"]),
        ("southwest", &["southwest", "south west"]),
        (
            "longest-stop",
            &["layover", "stop ~ long", "stop ~ length", "stop ~ short", "stop ~ duration"],
        ),
        (
            "number-of-stops",
            &[
                "nonstop",
                "non stop",
                "direct",
                "stop ~ number",
                "stop ~ few",
                "stop ~ more",
                "stop ~ less",
                "stop ~ many",
                "stop ~ least",
                "stop ~ most",
            ],
        ),
        (
            "price",
            &["price", "cheap", "expensive", "cost", "afford", "budget", "money", "dollar"],
        ),
    ])
}

/// Feature names plus the names of their discrete values.
fn names_lexicon(domain: &DomainSpec) -> Lexicon {
    let mut triggers = BTreeMap::new();
    for f in &domain.features.features {
        let mut phrases = vec![f.name.replace(['-', '_'], " ")];
        if let FeatureKind::Discrete { values, .. } = &f.kind {
            phrases.extend(values.iter().map(|v| v.to_lowercase()));
        }
        match f.name.as_str() {
            "color" => phrases.push("colour".into()),
            "smell" => phrases.extend(["odor", "odour", "scent", "stink"].map(String::from)),
            "weight" => phrases.push("heav".into()),
            "height" => phrases.push("tall".into()),
            _ => {}
        }
        phrases.dedup();
        triggers.insert(f.name.clone(), phrases);
    }
    Lexicon { triggers }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseSource {
    Keyword,
    Lm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseResult {
    pub mask: RelevanceMask,
    pub source: ParseSource,
    pub matched_phrases: Vec<Vec<String>>,
}

fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect()
}

fn phrase_matches(phrase: &str, tokens: &[String]) -> bool {
    if phrase.contains('~') {
        let words: Vec<String> = phrase.split('~').flat_map(tokenize).collect();
        if words.is_empty() {
            return false;
        }
        (0..tokens.len()).any(|start| {
            let window = &tokens[start..tokens.len().min(start + WINDOW + 1)];
            words.iter().all(|w| window.iter().any(|t| t.starts_with(w.as_str())))
        })
    } else {
        let words = tokenize(phrase);
        if words.is_empty() || words.len() > tokens.len() {
            return false;
        }
        tokens
            .windows(words.len())
            .any(|win| win.iter().zip(&words).all(|(t, w)| t.starts_with(w.as_str())))
    }
}

pub fn parse_keywords(utterance: &str, domain: &DomainSpec, lexicon: &Lexicon) -> ParseResult {
    let tokens = tokenize(utterance);
    let matched_phrases: Vec<Vec<String>> = domain
        .features
        .features
        .iter()
        .map(|f| {
            lexicon
                .triggers
                .get(&f.name)
                .map(|phrases| {
                    phrases
                        .iter()
                        .filter(|p| phrase_matches(p, &tokens))
                        .cloned()
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();
    ParseResult {
        mask: RelevanceMask(matched_phrases.iter().map(|m: &Vec<String>| !m.is_empty()).collect()),
        source: ParseSource::Keyword,
        matched_phrases,
    }
}

pub const DEFAULT_PROMPT_TEMPLATE: &str = "You are given the features of an item: {feature_list}.\n\
A person described their preference as: \"{utterance}\".\n\
Reply with JSON of the form {\"mask\": [...]} holding one entry per feature, in order, \
1 if the description mentions that feature as mattering and 0 otherwise.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmClientConfig {
    pub endpoint: String,
    #[serde(default = "default_template")]
    pub prompt_template: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_template() -> String {
    DEFAULT_PROMPT_TEMPLATE.to_string()
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_retries() -> usize {
    2
}

impl LmClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            prompt_template: default_template(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for placeholder in ["{utterance}", "{feature_list}"] {
            if !self.prompt_template.contains(placeholder) {
                return Err(invalid(format!("prompt template lacks {placeholder}")));
            }
        }
        if self.endpoint.is_empty() {
            return Err(invalid("endpoint must be set"));
        }
        Ok(())
    }

    pub fn render_prompt(&self, utterance: &str, domain: &DomainSpec) -> String {
        let features: Vec<&str> = domain.features.features.iter().map(|f| f.name.as_str()).collect();
        self.prompt_template
            .replace("{feature_list}", &features.join(", "))
            .replace("{utterance}", utterance)
    }
}

#[derive(Deserialize)]
struct LmReply {
    mask: Vec<serde_json::Value>,
}

fn decode_reply(body: &str, n: usize) -> Result<RelevanceMask> {
    let protocol = |detail: String| Error::ParseProtocol {
        detail,
        raw: body.to_string(),
    };
    let reply: LmReply = serde_json::from_str(body).map_err(|e| protocol(format!("bad JSON: {e}")))?;
    if reply.mask.len() != n {
        return Err(protocol(format!("mask has {} entries, expected {n}", reply.mask.len())));
    }
    reply
        .mask
        .iter()
        .map(|v| match v.as_u64() {
            Some(0) => Ok(false),
            Some(1) => Ok(true),
            _ => Err(protocol(format!("mask entry {v} is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()
        .map(RelevanceMask)
}

/// Asks the language-model service for a mask, retrying transport failures.
pub fn parse_via_lm(utterance: &str, domain: &DomainSpec, client: &LmClientConfig) -> Result<ParseResult> {
    client.validate()?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(client.timeout_ms)))
        .http_status_as_error(false)
        .build()
        .into();
    let body = serde_json::json!({ "prompt": client.render_prompt(utterance, domain) });
    let attempts = client.max_retries + 1;
    let mut last_error = String::new();
    for _ in 0..attempts {
        match agent.post(&client.endpoint).send_json(&body) {
            Ok(mut resp) => {
                let status = resp.status();
                match resp.body_mut().read_to_string() {
                    Ok(text) if status.is_success() => {
                        let mask = decode_reply(&text, domain.n())?;
                        return Ok(ParseResult {
                            matched_phrases: vec![Vec::new(); mask.len()],
                            mask,
                            source: ParseSource::Lm,
                        });
                    }
                    Ok(text) => last_error = format!("HTTP {status}: {text}"),
                    Err(e) => last_error = e.to_string(),
                }
            }
            Err(e) => last_error = e.to_string(),
        }
    }
    Err(Error::ServiceUnavailable {
        attempts,
        detail: last_error,
    })
}

/// Where masks for described comparisons come from.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskParser {
    Keyword(Lexicon),
    Lm(LmClientConfig),
}

impl MaskParser {
    pub fn parse(&self, utterance: &str, domain: &DomainSpec) -> Result<RelevanceMask> {
        match self {
            MaskParser::Keyword(lex) => Ok(parse_keywords(utterance, domain, lex).mask),
            MaskParser::Lm(cfg) => Ok(parse_via_lm(utterance, domain, cfg)?.mask),
        }
    }
}
