//! Ingestion of three-option flight choices with free-text descriptions.
//!
//! Input rows are JSONL:
//!
//! ```text
//! {"options": [[8 reals], [8 reals], [8 reals]], "best": 0, "utterance": "...", "theta": [8 reals]}
//! ```
//!
//! Continuous coordinates are min-max normalised to `[0, 1]` across the whole
//! file; airline coordinates must already be `0` or `1`.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{ExamplePrefLabel, PreferenceDataset, PreferenceRecord};
use crate::domain::{make_flight_domain, Action, DomainSpec, FeatureKind, GroundTruthReward};
use crate::error::{Error, Result};
use crate::parse::MaskParser;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightRow {
    pub options: Vec<Vec<f64>>,
    pub best: usize,
    pub utterance: String,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlightRecordFile {
    pub rows: Vec<FlightRow>,
    /// 1-based source line of each row.
    pub lines: Vec<usize>,
}

impl FlightRecordFile {
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let domain = make_flight_domain();
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |detail: String| Error::Ingestion { line: i + 1, detail };
            let row: FlightRow = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            validate_row(&row, &domain).map_err(err)?;
            rows.push(row);
            lines.push(i + 1);
        }
        let mut file = Self { rows, lines };
        file.normalise(&domain);
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_jsonl(std::io::BufReader::new(f))
    }

    fn normalise(&mut self, domain: &DomainSpec) {
        for (j, spec) in domain.features.features.iter().enumerate() {
            if !matches!(spec.kind, FeatureKind::Continuous { .. }) {
                continue;
            }
            let values = self.rows.iter().flat_map(|r| r.options.iter().map(move |o| o[j]));
            let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let span = hi - lo;
            for row in &mut self.rows {
                for o in &mut row.options {
                    o[j] = if span > 0.0 { (o[j] - lo) / span } else { 0.0 };
                }
            }
        }
    }

    /// Rows grouped by identical `theta`, in order of first appearance.
    pub fn groups(&self) -> Vec<(GroundTruthReward, Vec<usize>)> {
        let mut groups: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
        for (i, row) in self.rows.iter().enumerate() {
            match groups.iter_mut().find(|(t, _)| *t == row.theta) {
                Some((_, idx)) => idx.push(i),
                None => groups.push((row.theta.clone(), vec![i])),
            }
        }
        groups
            .into_iter()
            .map(|(t, idx)| (GroundTruthReward::new(t), idx))
            .collect()
    }
}

fn validate_row(row: &FlightRow, domain: &DomainSpec) -> std::result::Result<(), String> {
    let n = domain.n();
    if row.options.len() != 3 {
        return Err(format!("expected 3 options, got {}", row.options.len()));
    }
    if row.best > 2 {
        return Err(format!("best must be 0, 1 or 2, got {}", row.best));
    }
    if row.theta.len() != n || row.theta.iter().any(|t| !t.is_finite()) {
        return Err(format!("theta must hold {n} finite reals"));
    }
    for (k, o) in row.options.iter().enumerate() {
        if o.len() != n {
            return Err(format!("option {k} has {} features, expected {n}", o.len()));
        }
        for (j, (&v, spec)) in o.iter().zip(&domain.features.features).enumerate() {
            let ok = match &spec.kind {
                FeatureKind::Discrete { .. } => spec.accepts(v),
                FeatureKind::Continuous { .. } => v.is_finite(),
            };
            if !ok {
                return Err(format!("option {k} feature {j} ({}) has invalid value {v}", spec.name));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestionReport {
    pub rows: usize,
    pub records: usize,
    /// Source lines whose options contain duplicates.
    pub duplicate_option_lines: Vec<usize>,
}

/// The two comparisons a three-option row implies: best over each other option.
pub fn row_to_records(row: &FlightRow, mask_parser: Option<&MaskParser>, domain: &DomainSpec) -> Result<Vec<PreferenceRecord>> {
    let mask = mask_parser.map(|p| p.parse(&row.utterance, domain)).transpose()?;
    Ok((0..3)
        .filter(|&k| k != row.best)
        .map(|k| {
            let mut r = PreferenceRecord::new(
                Action(row.options[row.best].clone()),
                Action(row.options[k].clone()),
                ExamplePrefLabel::PreferFirst,
            );
            r.utterance = Some(row.utterance.clone());
            r.mask = mask.clone();
            r
        })
        .collect())
}

pub fn convert_triples_to_pairs(
    file: &FlightRecordFile,
    mask_parser: Option<&MaskParser>,
) -> Result<(PreferenceDataset, IngestionReport)> {
    let domain = make_flight_domain();
    let mut dataset = PreferenceDataset::default();
    let mut report = IngestionReport {
        rows: file.rows.len(),
        ..Default::default()
    };
    for (row, &line) in file.rows.iter().zip(&file.lines) {
        let o = &row.options;
        if o[0] == o[1] || o[0] == o[2] || o[1] == o[2] {
            report.duplicate_option_lines.push(line);
        }
        for r in row_to_records(row, mask_parser, &domain).map_err(|e| Error::Ingestion {
            line,
            detail: e.to_string(),
        })? {
            dataset.push(r);
        }
    }
    report.records = dataset.len();
    Ok((dataset, report))
}
