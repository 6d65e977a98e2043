use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use lobregime::model::read_model;
use lobregime::series::read_series;
use lobregime::signal::{format_event_line, Detector, SignalConfig};

use crate::commands::{json_sibling, render_report, report_json};
use crate::config::RunConfig;

pub fn run(
    input: &Path,
    model_path: &Path,
    events_path: &Path,
    report_path: &Path,
    cfg: &RunConfig,
) -> Result<i32> {
    let series = read_series(BufReader::new(
        File::open(input).with_context(|| format!("opening {}", input.display()))?,
    ))?;
    let model = read_model(BufReader::new(
        File::open(model_path).with_context(|| format!("opening {}", model_path.display()))?,
    ))?;
    if let (Some(m), Some(s)) = (model.transform(), series.transform()) {
        if m != s {
            bail!("transform mismatch: model was fitted on {m} data, series carries {s}");
        }
    }
    if series.observations.is_empty() {
        eprintln!("no observations in {}", input.display());
        return Ok(2);
    }

    let k = model.params.num_states();
    let config = SignalConfig {
        state_index: cfg.state_index.unwrap_or(k),
        threshold: cfg.threshold,
        delay_ns: cfg.delay_ns(),
    };
    let mut detector = Detector::new(&model.params, config)?;

    let mut events = BufWriter::new(
        File::create(events_path).with_context(|| format!("creating {}", events_path.display()))?,
    );
    for (key, value) in cfg.echo_pairs("detect") {
        writeln!(events, "# {key}={value}")?;
    }
    writeln!(events, "# k={k}")?;
    writeln!(events, "# state_index={}", config.state_index)?;
    writeln!(events, "# threshold={}", config.threshold)?;
    writeln!(events, "# delay_ns={}", config.delay_ns)?;
    if let Some(transform) = model.meta_value("transform") {
        writeln!(events, "# transform={transform}")?;
    }
    for obs in &series.observations {
        let before = detector.fires();
        let decision = detector.on_observation(obs.ts_ns, obs.liq, obs.liq_lag, obs.dbam)?;
        let fired = detector.fires() > before;
        writeln!(
            events,
            "{}",
            format_event_line(obs.ts_ns, detector.target_prob(), fired, decision, detector.window_end_ns())
        )?;
    }

    let report = detector.report()?;
    std::fs::write(report_path, render_report(&report, config.threshold, config.delay_ns, config.state_index))
        .with_context(|| format!("creating {}", report_path.display()))?;
    std::fs::write(json_sibling(report_path), report_json(&report))?;
    println!(
        "fires {} | fires/sec {:.6} | duration raw {:.4}% merged {:.4}% | events -> {}",
        report.fires,
        report.fires_per_sec,
        report.duration_raw_pct,
        report.duration_merged_pct,
        events_path.display()
    );
    Ok(0)
}
