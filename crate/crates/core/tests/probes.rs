use std::sync::Arc;

use biasprobe_core::oracle::{MockModel, Oracle, OracleConfig, ScriptedModel, ValueCache};
use biasprobe_core::probes::{
    detect_barrier, round_number_peaks, run_anchoring, run_battery, run_framing, run_grading, run_priming,
    run_representativeness, run_sweep, summarize, BatteryOptions, Bias, CellStatus, FramingPair, GradingConfig,
    PeakConfig, ProbeBattery, SweepSpec,
};
use biasprobe_core::report::{export, load_series};
use biasprobe_core::{bindings, Bindings, Error, OptionSet, PromptTemplate, TargetSpec};

fn data(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn oracle(backend: impl biasprobe_core::oracle::Backend + 'static) -> Oracle {
    Oracle::new(OracleConfig::default(), Arc::new(backend), Arc::new(ValueCache::in_memory())).unwrap()
}

#[test]
fn barrier_on_loss_sweeps() {
    let a = load_series(data("loss_sweep_a.csv")).unwrap();
    let b = load_series(data("loss_sweep_b.csv")).unwrap();
    assert_eq!(a.len(), 51);
    assert_eq!(b.len(), 52);
    assert_eq!(detect_barrier(&a, 0.5, 3).unwrap(), Some(1));
    assert_eq!(detect_barrier(&b, 0.5, 3).unwrap(), Some(11));
    // A single-sample window stops at the early dip.
    assert_eq!(detect_barrier(&b, 0.5, 1).unwrap(), Some(8));
}

#[test]
fn round_number_peaks_on_loss_sweep() {
    let b = load_series(data("loss_sweep_b.csv")).unwrap();
    let report = round_number_peaks(&b, PeakConfig::default()).unwrap();
    for x in [10, 20, 30, 40, 50] {
        assert!(report.peaks.contains(&x), "{x} missing from {:?}", report.peaks);
    }
    assert!(!report.peaks.contains(&11));
    assert!(!report.peaks.contains(&0), "endpoints have no full window");
    assert_eq!(report.peak_rate_multiples, 1.0);
    assert!(report.peak_rate_others < 0.5);
}

#[test]
fn framing_pair_flips() {
    let scripted: ScriptedModel = serde_json::from_value(serde_json::json!({
        "candidates": [
            {"token": "A", "logit": 0.0, "cues": {"loss": 2.0}},
            {"token": "B", "logit": 0.0, "cues": {"profit": 2.0}}
        ]
    }))
    .unwrap();
    let pair = FramingPair {
        frame_a: PromptTemplate::parse("Pick [[A or B]] if B makes a profit 70% of the time").unwrap(),
        frame_b: PromptTemplate::parse("Pick [[A or B]] if B makes a loss 30% of the time").unwrap(),
        bindings: Bindings::new(),
        options: OptionSet::from_tokens(["A", "B"]).unwrap(),
        focus_option: "B".into(),
    };
    let r = run_framing(&pair, &oracle(scripted)).unwrap();
    assert!(r.flipped);
    assert_eq!(r.dist_a.argmax(), Some("B"));
    assert_eq!(r.dist_b.argmax(), Some("A"));
    assert!((r.magnitude - (r.dist_a.get("B").unwrap() - r.dist_b.get("B").unwrap()).abs()).abs() < 1e-12);
}

#[test]
fn anchoring_ranks_the_anchor() {
    let t = PromptTemplate::parse("Q: [[Guess]] [[the count,]] [[someone said 750.]] [[Options]]").unwrap();
    let b = Bindings::new();
    let backend = MockModel::logistic(-2.0, vec![0.1, 0.2, 1.5, 2.0]).bind(&t, &b, "C").unwrap();
    // BoundMock only knows "C", so the option set must pick it.
    let opts = OptionSet::from_tokens(["C"]).unwrap();
    let r = run_anchoring(&t, &b, 2, &opts, None, &oracle(backend)).unwrap();
    assert_eq!(r.target_token, "C");
    assert_eq!(r.anchor_rank, 2);
    assert!(r.anchor_share > 0.0 && r.anchor_share < 1.0);
    assert!(matches!(
        run_anchoring(&t, &b, 9, &opts, None, &oracle(ScriptedModel::fixed([("C", 1.0)]))),
        Err(Error::InvalidProbe(_))
    ));
}

#[test]
fn priming_reports_stimulus() {
    let t = PromptTemplate::parse("Q: [[A fruit]] [[bright red]] [[market.]] [[B) Apple]]").unwrap();
    let b = Bindings::new();
    let backend = MockModel::logistic(-3.0, vec![0.2, 1.5, 0.1, 2.5]).bind(&t, &b, "B").unwrap();
    let r = run_priming(&t, &b, 1, &OptionSet::from_tokens(["B"]).unwrap(), &oracle(backend)).unwrap();
    assert_eq!(r.stimulus_rank, 2);
    assert!(r.stimulus_phi > 0.0);
    assert!((r.distribution.total() - 1.0).abs() < 1e-9);
}

#[test]
fn representativeness_match_is_case_insensitive() {
    let scripted: ScriptedModel = serde_json::from_value(serde_json::json!({
        "candidates": [{"token": "He"}],
        "replies": [{"contains": "Mahesh", "text": "He is most likely a Fields medalist."}]
    }))
    .unwrap();
    let o = oracle(scripted);
    let r = run_representativeness("Mahesh likes maths. Is he a cop or a Fields medalist?", "cop", &o).unwrap();
    assert!(!r.matched);
    let r = run_representativeness("Mahesh?", "FIELDS", &o).unwrap();
    assert!(r.matched);
}

#[test]
fn grading_histogram() {
    let scripted: ScriptedModel = serde_json::from_value(serde_json::json!({
        "candidates": [{"token": "6"}],
        "replies": [
            {"contains": "first", "text": "65"},
            {"contains": "second", "text": "Grade: 65/100"},
            {"contains": "third", "text": "72"},
            {"contains": "fourth", "text": "sixty"}
        ]
    }))
    .unwrap();
    let items: Vec<String> = ["first", "second", "third", "fourth"].map(String::from).to_vec();
    let h = run_grading(&items, &oracle(scripted), &GradingConfig::default()).unwrap();
    assert_eq!(h.mode, Some(65));
    assert_eq!(h.parsed, 3);
    assert_eq!(h.unparsed, vec![3]);
    assert!((h.multiple_of_5_mass - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn sweep_runs_and_detects_round_numbers() {
    let scripted: ScriptedModel = serde_json::from_value(serde_json::json!({
        "candidates": [
            {"token": "B", "logit": 3.0, "percent_slope": -0.2, "round_bonus": 1.5},
            {"token": "A", "logit": 0.0}
        ]
    }))
    .unwrap();
    let spec = SweepSpec {
        template: PromptTemplate::parse("Stock B makes a loss {i}% of the time.").unwrap(),
        variable: "i".into(),
        start: 0,
        end: 50,
        step: 1,
        target: TargetSpec::new("B"),
        bindings: Bindings::new(),
    };
    let series = run_sweep(&spec, &oracle(scripted)).unwrap();
    assert_eq!(series.len(), 51);
    let peaks = round_number_peaks(&series, PeakConfig::default()).unwrap();
    assert_eq!(peaks.peaks, vec![10, 20, 30, 40]);
    assert!(detect_barrier(&series, 0.5, 3).unwrap().is_some());

    let offline = Oracle::new(
        OracleConfig::default(),
        Arc::new(ScriptedModel::fixed([("B", 1.0)])),
        Arc::new(ValueCache::in_memory()),
    )
    .unwrap()
    .offline(true);
    match run_sweep(&spec, &offline) {
        Err(Error::SweepInterrupted { partial, resume_at, .. }) => {
            assert!(partial.is_empty());
            assert_eq!(resume_at, 0);
        }
        other => panic!("expected interruption, got {other:?}"),
    }
}

#[test]
fn sweep_template_variables_are_checked() {
    let spec = SweepSpec {
        template: PromptTemplate::parse("loss {j}%").unwrap(),
        variable: "i".into(),
        start: 0,
        end: 10,
        step: 1,
        target: TargetSpec::new("B"),
        bindings: bindings([("j", "1")]),
    };
    assert!(matches!(spec.validate(), Err(Error::InvalidSweep(_))));
}

#[test]
fn battery_round_trips_through_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pos.txt"), "Pick [[A or B]], B makes a profit 70% of the time\n").unwrap();
    std::fs::write(dir.path().join("neg.txt"), "Pick [[A or B]], B makes a loss 30% of the time\n").unwrap();
    std::fs::write(dir.path().join("loss.txt"), "B makes a loss {i}% of the time\n").unwrap();
    std::fs::write(
        dir.path().join("battery.json"),
        r#"{"probes": [
            {"kind": "framing", "template_file": "pos.txt", "contrast_template_file": "neg.txt",
             "options": ["A", "B"], "focus": "B", "models": ["m1", "m2"]},
            {"kind": "sweep", "template_file": "loss.txt", "range": "0:30", "target": "B"},
            {"kind": "representativeness", "template_file": "pos.txt", "expected_substring": "zzz"}
        ]}"#,
    )
    .unwrap();
    let scripted: ScriptedModel = serde_json::from_value(serde_json::json!({
        "candidates": [
            {"token": "A", "logit": 0.0, "cues": {"loss": 2.0}},
            {"token": "B", "logit": 0.0, "cues": {"profit": 5.0}, "percent_slope": -0.05, "round_bonus": 1.0}
        ]
    }))
    .unwrap();
    let battery = ProbeBattery::load(dir.path().join("battery.json")).unwrap();
    let mut streamed = 0;
    let report = run_battery(&battery, &oracle(scripted), &BatteryOptions::default(), |_| {
        streamed += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(streamed, 4);
    assert_eq!(report.summary.get(Bias::Framing, "m1"), Some(CellStatus::Present));
    assert_eq!(report.summary.get(Bias::Framing, "m2"), Some(CellStatus::Present));
    assert_eq!(report.summary.get(Bias::RoundNumber, "gpt-4o"), Some(CellStatus::Present));
    assert_eq!(report.summary.get(Bias::Representativeness, "gpt-4o"), Some(CellStatus::Present));

    let path = dir.path().join("results.jsonl");
    let mut buf = Vec::new();
    export::write_results(&report.results, export::Format::Jsonl, &mut buf).unwrap();
    std::fs::write(&path, &buf).unwrap();
    let reloaded = export::load_results(&path).unwrap();
    assert_eq!(reloaded, report.results);
    assert_eq!(summarize(&reloaded), report.summary);
    let table = report.summary.to_table();
    assert!(table.contains("Framing effect"));
    assert!(table.contains('✓'));
}

#[test]
fn battery_rejects_bad_ordinals() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.txt"), "[[a]] [[b]]").unwrap();
    std::fs::write(
        dir.path().join("battery.json"),
        r#"{"probes": [{"kind": "anchoring", "template_file": "t.txt", "options": ["A"], "anchor_ordinal": 5}]}"#,
    )
    .unwrap();
    assert!(matches!(
        ProbeBattery::load(dir.path().join("battery.json")),
        Err(Error::InvalidProbe(_))
    ));
}
