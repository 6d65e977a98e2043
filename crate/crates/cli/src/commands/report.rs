use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use lobregime::signal::{duration_percent, SignalReport};

use crate::commands::{json_sibling, render_report, report_json};

/// Rebuild a [`SignalReport`] from an events file written by `detect`.
pub fn run(events_path: &Path, out: Option<&Path>) -> Result<i32> {
    let text = fs::read_to_string(events_path)
        .with_context(|| format!("reading {}", events_path.display()))?;

    let mut delay_ns: Option<i64> = None;
    let mut threshold: Option<f64> = None;
    let mut state_index: Option<usize> = None;
    let mut fire_ts: Vec<i64> = Vec::new();
    let mut first_ts: Option<i64> = None;
    let mut last_ts: Option<i64> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.trim().split_once('=') {
                match key {
                    "delay_ns" => delay_ns = Some(value.parse().context("bad delay_ns header")?),
                    "threshold" => threshold = value.parse().ok(),
                    "state_index" => state_index = value.parse().ok(),
                    _ => {}
                }
            }
            continue;
        }
        let mut fields = line.split(',');
        let ts: i64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .with_context(|| format!("{}:{}: bad ts_ns", events_path.display(), idx + 1))?;
        let fire = fields.nth(1).map(|f| f == "1").unwrap_or(false);
        first_ts.get_or_insert(ts);
        last_ts = Some(ts);
        if fire {
            fire_ts.push(ts);
        }
    }

    let (Some(first), Some(last)) = (first_ts, last_ts) else {
        eprintln!("no events in {}", events_path.display());
        return Ok(2);
    };
    let delay_ns = delay_ns.context("events file is missing the delay_ns header")?;

    // Union of [ts, ts+delay) windows clipped to the observed span.
    let mut busy = 0i64;
    let mut covered_until = i64::MIN;
    for &ts in &fire_ts {
        let end = (ts + delay_ns).min(last);
        let start = ts.max(covered_until);
        if end > start {
            busy += end - start;
        }
        covered_until = covered_until.max(ts + delay_ns);
    }

    let span = last - first;
    let fires_per_sec = if span > 0 {
        fire_ts.len() as f64 / (span as f64 / 1e9)
    } else {
        0.0
    };
    let report = SignalReport {
        fires: fire_ts.len() as u64,
        fires_per_sec,
        duration_raw_pct: duration_percent(fires_per_sec, delay_ns),
        duration_merged_pct: if span > 0 { busy as f64 / span as f64 * 100.0 } else { 0.0 },
    };

    let body = render_report(
        &report,
        threshold.unwrap_or(f64::NAN),
        delay_ns,
        state_index.unwrap_or(0),
    );
    match out {
        Some(path) => {
            fs::write(path, &body).with_context(|| format!("creating {}", path.display()))?;
            fs::write(json_sibling(path), report_json(&report))?;
            println!("report -> {}", path.display());
        }
        None => print!("{body}"),
    }
    Ok(0)
}
