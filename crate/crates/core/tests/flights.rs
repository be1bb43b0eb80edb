use std::path::PathBuf;

use pragfeat::{
    convert_triples_to_pairs, make_flight_domain, run_experiment, AugmentMode, Condition, Error, ExperimentConfig,
    FlightRecordFile, Lexicon, MaskParser, MaskSource,
};

fn fixture() -> FlightRecordFile {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/flights.jsonl");
    FlightRecordFile::load(&path).unwrap()
}

#[test]
fn fixture_ingests_into_pairs() {
    let file = fixture();
    assert_eq!(file.rows.len(), 12);
    assert_eq!(file.groups().len(), 3);
    for row in &file.rows {
        for o in &row.options {
            assert!(o.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
    let d = make_flight_domain();
    let parser = MaskParser::Keyword(Lexicon::default_for(&d));
    let (ds, report) = convert_triples_to_pairs(&file, Some(&parser)).unwrap();
    assert_eq!(ds.len(), 24);
    assert_eq!(report.rows, 12);
    assert!(report.duplicate_option_lines.is_empty());
    ds.validate(&d.features).unwrap();
    // the first group only talks about price and stops
    for r in &ds.records[..8] {
        let m = r.mask.as_ref().unwrap().relevant();
        assert!(m.iter().all(|j| [6, 7].contains(j)), "{:?} -> {m:?}", r.utterance);
        assert!(!m.is_empty());
    }
}

fn flight_config(condition: Condition) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(make_flight_domain(), condition);
    cfg.flights = Some(fixture());
    cfg.reward_functions = 0;
    cfg.seeds = vec![0, 1];
    cfg.budgets = vec![2, 8, 12];
    cfg.eval_pairs = 50;
    cfg.train.epochs = 200;
    cfg
}

#[test]
fn keyword_masked_flight_experiment_runs() {
    for condition in Condition::ALL {
        let cfg = flight_config(condition);
        assert_eq!(cfg.mask_source, MaskSource::Keyword);
        let out = run_experiment(&cfg).unwrap();
        // 3 groups x 2 seeds x 3 budgets
        assert_eq!(out.runs.len(), 18);
        for s in &out.summary {
            assert!((0.0..=1.0).contains(&s.mean));
        }
        if condition.is_pragmatic() {
            assert!(out.runs.iter().any(|r| r.n_synth_records > 0));
        } else {
            assert!(out.runs.iter().all(|r| r.n_synth_records == 0));
        }
    }
}

#[test]
fn oracle_masks_work_with_flight_groups() {
    let mut cfg = flight_config(Condition::PragFp);
    cfg.mask_source = MaskSource::Oracle;
    cfg.reward_functions = 2;
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.runs.len(), 12);
}

#[test]
fn any_value_mode_rejects_continuous_flights() {
    let mut cfg = flight_config(Condition::PragFp);
    cfg.augment_mode = AugmentMode::AnyValue;
    match run_experiment(&cfg).unwrap_err() {
        Error::RunFailure { source, .. } => assert!(matches!(*source, Error::UnsupportedMode(_))),
        other => panic!("unexpected {other}"),
    }
}
