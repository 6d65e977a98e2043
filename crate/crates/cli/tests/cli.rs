//! End-to-end checks of the `lobregime` binary.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lobregime::feed::{MessageReader, ParseMode, Side};
use lobregime::model::{read_model, write_model, ModelDocument};
use lobregime::regime::{weighted_least_squares, RegressionData, SwitchingParams};
use lobregime::series::{read_series, write_series, LiquidityObservation};

use support::naive::NaiveExtractor;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_lobregime")
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to launch lobregime")
}

fn assert_code(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn fixture_feed() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data/feed_500.txt")
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/extract_500_bid.golden")
}

/// Extract on the bundled 500-message fixture must reproduce the checked-in
/// golden series byte for byte, and the golden's rows must equal an
/// independent naive replay. Regenerate with `REGEN_FIXTURES=1`.
#[test]
fn extract_matches_the_golden_series_and_its_naive_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("series.txt");
    let feed = fixture_feed().canonicalize().unwrap();
    let output = run(
        dir.path(),
        &[
            "extract",
            "--input",
            feed.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--side",
            "bid",
            "--transform",
            "log1p",
        ],
    );
    assert_code(&output, 0);
    let produced = fs::read_to_string(&out).unwrap();

    // Provenance: rows must match the naive reference extractor.
    let feed_text = fs::read_to_string(&feed).unwrap();
    let msgs: Vec<_> = MessageReader::new(feed_text.as_bytes(), ParseMode::Strict)
        .collect::<Result<_, _>>()
        .unwrap();
    let mut reference = NaiveExtractor::new(Side::Bid, 4, true);
    let mut expected_rows = Vec::new();
    for msg in &msgs {
        if let Some(row) = reference.push(msg) {
            expected_rows.push(row);
        }
    }
    let parsed = read_series(produced.as_bytes()).unwrap();
    assert_eq!(parsed.observations.len(), expected_rows.len());
    for (obs, (ts, liq, lag, dbam)) in parsed.observations.iter().zip(&expected_rows) {
        assert_eq!(
            (obs.ts_ns, obs.liq, obs.liq_lag, obs.dbam),
            (*ts, *liq, *lag, *dbam)
        );
    }

    let golden = golden_path();
    if std::env::var_os("REGEN_FIXTURES").is_some() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &produced).unwrap();
        return;
    }
    let checked_in = fs::read_to_string(&golden).expect("golden missing; REGEN_FIXTURES=1");
    assert_eq!(produced, checked_in, "extract output drifted from the golden file");

    // Replay determinism: a second run is byte-identical.
    let out2 = dir.path().join("series2.txt");
    let output = run(
        dir.path(),
        &[
            "extract",
            "--input",
            feed.to_str().unwrap(),
            "--out",
            out2.to_str().unwrap(),
            "--side",
            "bid",
            "--transform",
            "log1p",
        ],
    );
    assert_code(&output, 0);
    assert_eq!(fs::read_to_string(&out2).unwrap(), produced);
}

#[test]
fn extract_on_an_empty_feed_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.txt"), "# header only\n").unwrap();
    let output = run(
        dir.path(),
        &["extract", "--input", "empty.txt", "--out", "series.txt", "--side", "bid"],
    );
    assert_code(&output, 2);
    assert!(String::from_utf8_lossy(&output.stderr).contains("no observations"));
}

#[test]
fn extract_both_sides_shares_the_event_span() {
    // First two-sided event and last event both move the midpoint, so both
    // series open and close on the same timestamps.
    let feed = "\
1,100,B,U,N,9000,100,1
2,200,A,U,N,9002,80,1
3,300,B,U,N,9001,50,1
4,400,A,U,C,9002,120,1
5,500,B,U,D,9001,0,1
";
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("feed.txt"), feed).unwrap();
    let output = run(
        dir.path(),
        &["extract", "--input", "feed.txt", "--out", "series.txt", "--side", "both"],
    );
    assert_code(&output, 0);
    let bid = read_series(fs::read_to_string(dir.path().join("series.bid.txt")).unwrap().as_bytes()).unwrap();
    let ask = read_series(fs::read_to_string(dir.path().join("series.ask.txt")).unwrap().as_bytes()).unwrap();
    assert_eq!(bid.header_value("side"), Some("bid"));
    assert_eq!(ask.header_value("side"), Some("ask"));
    assert!(!bid.observations.is_empty() && !ask.observations.is_empty());
    assert_eq!(bid.observations[0].ts_ns, ask.observations[0].ts_ns);
    assert_eq!(
        bid.observations.last().unwrap().ts_ns,
        ask.observations.last().unwrap().ts_ns
    );
}

fn two_state_spec() -> ModelDocument {
    let params = SwitchingParams::new(
        vec![0.05, -0.40],
        vec![0.95, 0.35],
        vec![0.40, 1.10],
        vec![0.10, 0.75],
        vec![0.97, 0.03, 0.08, 0.92],
        vec![0.5, 0.5],
    )
    .unwrap();
    ModelDocument::new(params)
        .with_meta("t", 20_000)
        .with_meta("seed", 11)
        .with_meta("dbam_model", "iid_ticks:0.5")
}

fn write_spec(dir: &Path, doc: &ModelDocument) -> PathBuf {
    let path = dir.join("spec.txt");
    let mut buf = Vec::new();
    write_model(&mut buf, doc).unwrap();
    fs::write(&path, buf).unwrap();
    path
}

#[test]
fn simulate_then_fit_recovers_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let spec = two_state_spec();
    write_spec(dir.path(), &spec);

    let output = run(dir.path(), &["simulate", "--spec", "spec.txt", "--out", "sim.txt"]);
    assert_code(&output, 0);
    assert!(dir.path().join("sim.states").exists());

    let output = run(
        dir.path(),
        &[
            "fit", "--input", "sim.txt", "--out", "model.txt", "--k", "2", "--seed", "5",
            "--restarts", "4",
        ],
    );
    assert_code(&output, 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("state"), "summary missing: {stdout}");

    let doc = read_model(fs::read_to_string(dir.path().join("model.txt")).unwrap().as_bytes()).unwrap();
    let fitted = &doc.params;
    // Truth is already sigma-ascending, so it is its own canonical form.
    let truth = &spec.params;
    for j in 0..2 {
        assert!((fitted.alpha[j] - truth.alpha[j]).abs() < 0.05, "alpha[{j}]");
        assert!((fitted.beta_lag[j] - truth.beta_lag[j]).abs() < 0.05, "beta_lag[{j}]");
        assert!((fitted.beta_dbam[j] - truth.beta_dbam[j]).abs() < 0.05, "beta_dbam[{j}]");
        assert!((fitted.sigma[j] - truth.sigma[j]).abs() < 0.02, "sigma[{j}]");
    }
    assert_eq!(doc.meta_value("converged"), Some("true"));

    // Refit with the same seed: byte-identical model file.
    let output = run(
        dir.path(),
        &[
            "fit", "--input", "sim.txt", "--out", "model2.txt", "--k", "2", "--seed", "5",
            "--restarts", "4",
        ],
    );
    assert_code(&output, 0);
    assert_eq!(
        fs::read(dir.path().join("model.txt")).unwrap(),
        fs::read(dir.path().join("model2.txt")).unwrap()
    );
}

#[test]
fn single_state_fit_is_ols() {
    let dir = tempfile::tempdir().unwrap();
    let params = SwitchingParams::new(
        vec![0.2],
        vec![0.6],
        vec![0.9],
        vec![0.4],
        vec![1.0],
        vec![1.0],
    )
    .unwrap();
    let doc = ModelDocument::new(params)
        .with_meta("t", 2_000)
        .with_meta("seed", 3)
        .with_meta("dbam_model", "iid_ticks:0.5");
    write_spec(dir.path(), &doc);
    assert_code(&run(dir.path(), &["simulate", "--spec", "spec.txt", "--out", "sim.txt"]), 0);
    assert_code(
        &run(dir.path(), &["fit", "--input", "sim.txt", "--out", "model.txt", "--k", "1"]),
        0,
    );

    let series = read_series(fs::read_to_string(dir.path().join("sim.txt")).unwrap().as_bytes()).unwrap();
    let data = RegressionData::from_observations(&series.observations).unwrap();
    let ols = weighted_least_squares(&data, &vec![1.0; data.len()]).unwrap();
    let fitted = read_model(fs::read_to_string(dir.path().join("model.txt")).unwrap().as_bytes())
        .unwrap()
        .params;
    assert!((fitted.alpha[0] - ols.alpha).abs() < 1e-8);
    assert!((fitted.beta_lag[0] - ols.beta_lag).abs() < 1e-8);
    assert!((fitted.beta_dbam[0] - ols.beta_dbam).abs() < 1e-8);
    assert!((fitted.sigma[0] - ols.sigma).abs() < 1e-8);
}

#[test]
fn unconverged_fit_exits_3_but_still_writes_the_model() {
    let dir = tempfile::tempdir().unwrap();
    write_spec(dir.path(), &two_state_spec());
    assert_code(&run(dir.path(), &["simulate", "--spec", "spec.txt", "--out", "sim.txt"]), 0);
    let output = run(
        dir.path(),
        &[
            "fit", "--input", "sim.txt", "--out", "model.txt", "--k", "2", "--max-iter", "2",
            "--tol", "1e-16", "--restarts", "2",
        ],
    );
    assert_code(&output, 3);
    assert!(String::from_utf8_lossy(&output.stderr).contains("best-effort"));
    let doc = read_model(fs::read_to_string(dir.path().join("model.txt")).unwrap().as_bytes()).unwrap();
    assert_eq!(doc.meta_value("converged"), Some("false"));
}

#[test]
fn fit_rejects_a_series_that_is_too_short() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<LiquidityObservation> = (0..60)
        .map(|i| LiquidityObservation {
            ts_ns: i,
            side: Side::Bid,
            liq: (i % 7) as f64,
            liq_lag: ((i + 6) % 7) as f64,
            dbam: 0.0,
        })
        .collect();
    let mut buf = Vec::new();
    write_series(&mut buf, &[("transform".into(), "raw".into())], &rows).unwrap();
    fs::write(dir.path().join("short.txt"), buf).unwrap();
    let output = run(dir.path(), &["fit", "--input", "short.txt", "--out", "m.txt", "--k", "2"]);
    assert_code(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("at least"));
}

/// Two states with uniform transitions: the observation alone pins the
/// filtered probability near 0 or 1, so fires are fully scripted.
fn pulse_model(dir: &Path) -> PathBuf {
    let params = SwitchingParams::new(
        vec![0.0, 10.0],
        vec![0.0, 0.0],
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![0.5, 0.5, 0.5, 0.5],
        vec![0.5, 0.5],
    )
    .unwrap();
    let doc = ModelDocument::new(params).with_meta("transform", "raw");
    let path = dir.join("model.txt");
    let mut buf = Vec::new();
    write_model(&mut buf, &doc).unwrap();
    fs::write(&path, buf).unwrap();
    path
}

fn pulse_series(dir: &Path, rows: &[(i64, f64)]) -> PathBuf {
    let observations: Vec<LiquidityObservation> = rows
        .iter()
        .map(|&(ts_ns, y)| LiquidityObservation {
            ts_ns,
            side: Side::Bid,
            liq: y,
            liq_lag: 0.0,
            dbam: 0.0,
        })
        .collect();
    let path = dir.join("series.txt");
    let mut buf = Vec::new();
    write_series(&mut buf, &[("transform".into(), "raw".into())], &observations).unwrap();
    fs::write(&path, buf).unwrap();
    path
}

#[test]
fn detect_counts_scripted_fires_and_report_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    pulse_model(dir.path());
    let ms = 1_000_000i64;
    // Fires at 1 ms and 5 ms; windows [1, 11) and [5, 15) union to 14 ms
    // over a 1 s span.
    pulse_series(
        dir.path(),
        &[(0, 0.0), (ms, 10.0), (2 * ms, 0.0), (5 * ms, 10.0), (1000 * ms, 0.0)],
    );
    let output = run(
        dir.path(),
        &[
            "detect", "--input", "series.txt", "--model", "model.txt", "--events", "events.txt",
            "--report", "report.txt",
        ],
    );
    assert_code(&output, 0);

    let events = fs::read_to_string(dir.path().join("events.txt")).unwrap();
    let fire_rows: Vec<&str> = events.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(fire_rows.len(), 5);
    let fires: Vec<u8> = fire_rows
        .iter()
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(fires, vec![0, 1, 0, 1, 0]);
    // Decisions: inside a window at 1, 2 and 5 ms; outside at 0 and 1000 ms.
    let decisions: Vec<&str> = fire_rows.iter().map(|l| l.split(',').nth(3).unwrap()).collect();
    assert_eq!(decisions, vec!["P", "D", "D", "D", "P"]);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["fires"], 2);
    assert!((report["fires_per_sec"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((report["duration_raw_pct"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((report["duration_merged_pct"].as_f64().unwrap() - 1.4).abs() < 1e-12);

    // The standalone report command reproduces detect's numbers exactly.
    let output = run(dir.path(), &["report", "--events", "events.txt", "--out", "replay.txt"]);
    assert_code(&output, 0);
    assert_eq!(
        fs::read(dir.path().join("report.json")).unwrap(),
        fs::read(dir.path().join("replay.json")).unwrap()
    );
}

#[test]
fn detect_with_an_unreachable_threshold_fires_zero_times() {
    let dir = tempfile::tempdir().unwrap();
    pulse_model(dir.path());
    let ms = 1_000_000i64;
    pulse_series(dir.path(), &[(0, 0.0), (ms, 0.0), (1000 * ms, 0.0)]);
    let output = run(
        dir.path(),
        &[
            "detect", "--input", "series.txt", "--model", "model.txt", "--events", "events.txt",
            "--report", "report.txt", "--threshold", "0.999",
        ],
    );
    assert_code(&output, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["fires"], 0);
    assert_eq!(report["duration_raw_pct"].as_f64().unwrap(), 0.0);
    assert_eq!(report["duration_merged_pct"].as_f64().unwrap(), 0.0);
}

#[test]
fn detect_rejects_a_transform_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = pulse_model(dir.path());
    // Rewrite the model claiming a log1p fit.
    let text = fs::read_to_string(&model_path).unwrap().replace("transform=raw", "transform=log1p");
    fs::write(&model_path, text).unwrap();
    pulse_series(dir.path(), &[(0, 0.0), (1, 10.0)]);
    let output = run(
        dir.path(),
        &[
            "detect", "--input", "series.txt", "--model", "model.txt", "--events", "e.txt",
            "--report", "r.txt",
        ],
    );
    assert_code(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("transform mismatch"));
}

#[test]
fn simulate_with_zero_sigma_is_constant_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let params = SwitchingParams::new(
        vec![0.0],
        vec![1.0],
        vec![0.0],
        vec![0.0],
        vec![1.0],
        vec![1.0],
    )
    .unwrap();
    let doc = ModelDocument::new(params)
        .with_meta("t", 500)
        .with_meta("seed", 7)
        .with_meta("y0", 3.25)
        .with_meta("dbam_model", "zeros");
    write_spec(dir.path(), &doc);
    assert_code(&run(dir.path(), &["simulate", "--spec", "spec.txt", "--out", "a.txt"]), 0);
    assert_code(&run(dir.path(), &["simulate", "--spec", "spec.txt", "--out", "b.txt"]), 0);

    let a = fs::read_to_string(dir.path().join("a.txt")).unwrap();
    let b = fs::read_to_string(dir.path().join("b.txt")).unwrap();
    assert_eq!(a, b, "same seed must give identical files");
    assert_eq!(
        fs::read(dir.path().join("a.states")).unwrap(),
        fs::read(dir.path().join("b.states")).unwrap()
    );
    let series = read_series(a.as_bytes()).unwrap();
    assert_eq!(series.observations.len(), 500);
    assert!(series.observations.iter().all(|o| o.liq == 3.25));
}

#[test]
fn config_file_applies_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let feed = fixture_feed().canonicalize().unwrap();
    fs::write(dir.path().join("run.cfg"), "side=ask\ntransform=raw\n").unwrap();

    // Config alone: ask side.
    let output = run(
        dir.path(),
        &[
            "extract", "--config", "run.cfg", "--input", feed.to_str().unwrap(), "--out",
            "cfg.txt",
        ],
    );
    assert_code(&output, 0);
    let series = read_series(fs::read_to_string(dir.path().join("cfg.txt")).unwrap().as_bytes()).unwrap();
    assert_eq!(series.header_value("side"), Some("ask"));
    assert_eq!(series.header_value("transform"), Some("raw"));

    // Flag overrides the file.
    let output = run(
        dir.path(),
        &[
            "extract", "--config", "run.cfg", "--input", feed.to_str().unwrap(), "--out",
            "flag.txt", "--side", "bid",
        ],
    );
    assert_code(&output, 0);
    let series = read_series(fs::read_to_string(dir.path().join("flag.txt")).unwrap().as_bytes()).unwrap();
    assert_eq!(series.header_value("side"), Some("bid"));

    // Unknown config keys are rejected.
    fs::write(dir.path().join("bad.cfg"), "sid=ask\n").unwrap();
    let output = run(
        dir.path(),
        &[
            "extract", "--config", "bad.cfg", "--input", feed.to_str().unwrap(), "--out",
            "x.txt",
        ],
    );
    assert_code(&output, 1);
    assert!(String::from_utf8_lossy(&output.stderr).contains("unknown config key"));
}
