pub mod detect;
pub mod extract;
pub mod fit;
pub mod report;
pub mod simulate;

use std::path::{Path, PathBuf};

use lobregime::signal::SignalReport;

/// Key:value report body shared by `detect` and `report`.
pub(crate) fn render_report(
    report: &SignalReport,
    threshold: f64,
    delay_ns: i64,
    state_index: usize,
) -> String {
    format!(
        "fires: {}\nfires_per_sec: {}\nduration_raw_pct: {}\nduration_merged_pct: {}\n\
         threshold: {}\ndelay_ms: {}\nstate_index: {}\n",
        report.fires,
        report.fires_per_sec,
        report.duration_raw_pct,
        report.duration_merged_pct,
        threshold,
        delay_ns / 1_000_000,
        state_index
    )
}

/// Machine-readable variant carrying exactly the four report fields.
pub(crate) fn report_json(report: &SignalReport) -> String {
    serde_json::json!({
        "fires": report.fires,
        "fires_per_sec": report.fires_per_sec,
        "duration_raw_pct": report.duration_raw_pct,
        "duration_merged_pct": report.duration_merged_pct,
    })
    .to_string()
}

/// Sibling path for the JSON report variant.
pub(crate) fn json_sibling(path: &Path) -> PathBuf {
    let sibling = path.with_extension("json");
    if sibling == path {
        PathBuf::from(format!("{}.json", path.display()))
    } else {
        sibling
    }
}
