//! Market-time band-liquidity series.
//!
//! Observations are event-indexed: one row per message that changed the
//! chosen side's band liquidity or the bid-ask midpoint. Clock time only
//! enters through the nanosecond timestamp carried on each row.

use std::io::{self, BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::book::{BookError, OrderBook};
use crate::feed::{MarketMessage, Side};
use crate::POINTS_PER_HALF_TICK;

/// Default liquidity band: one index point, i.e. four ticks.
pub const DEFAULT_BAND_TICKS: i64 = 4;

/// Scaling applied to raw band liquidity before estimation.
///
/// Raw contract counts run in the hundreds to thousands; a
/// variance-stabilizing transform keeps the regression on an O(1) scale,
/// so `Log1p` is the default.
/// `ZScore` standardizes by the batch mean and population standard deviation
/// and is therefore only available in batch extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transform {
    Raw,
    #[default]
    Log1p,
    ZScore,
}

impl Transform {
    pub fn name(self) -> &'static str {
        match self {
            Transform::Raw => "raw",
            Transform::Log1p => "log1p",
            Transform::ZScore => "zscore",
        }
    }

    fn apply(self, raw: f64) -> f64 {
        match self {
            Transform::Raw => raw,
            Transform::Log1p => raw.ln_1p(),
            // Standardization happens in a second pass over the whole batch.
            Transform::ZScore => raw,
        }
    }
}

impl FromStr for Transform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Transform::Raw),
            "log1p" => Ok(Transform::Log1p),
            "zscore" => Ok(Transform::ZScore),
            other => Err(format!("unknown transform {other:?} (expected raw, log1p or zscore)")),
        }
    }
}

impl std::fmt::Display for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One market-time sample: transformed band liquidity, its lag, and the
/// midpoint change since the previous sample in index points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiquidityObservation {
    pub ts_ns: i64,
    pub side: Side,
    pub liq: f64,
    pub liq_lag: f64,
    /// Midpoint change in points; always a multiple of 0.125.
    pub dbam: f64,
}

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error(transparent)]
    Book(#[from] BookError),
    #[error("zscore transform needs the whole batch; use batch extraction")]
    TransformUnavailable,
    #[error("series i/o: {0}")]
    Io(#[from] io::Error),
    #[error("series file line {line}: {reason}")]
    BadSeriesFile { line: u64, reason: String },
}

#[derive(Debug, Clone, Copy)]
struct EventState {
    liq_raw: i64,
    mid_halfticks: i64,
    liq: f64,
}

/// Streaming extractor: feed messages in, get an observation out whenever
/// the side's band liquidity or the midpoint moves.
///
/// The first qualifying event only seeds the lag and is not emitted.
pub struct SeriesExtractor {
    book: OrderBook,
    side: Side,
    transform: Transform,
    band_ticks: i64,
    prev: Option<EventState>,
    crossed_events: u64,
}

impl SeriesExtractor {
    pub fn new(
        side: Side,
        transform: Transform,
        band_ticks: i64,
        strict: bool,
    ) -> Result<Self, SeriesError> {
        if transform == Transform::ZScore {
            return Err(SeriesError::TransformUnavailable);
        }
        Ok(Self::new_unchecked(side, transform, band_ticks, strict))
    }

    fn new_unchecked(side: Side, transform: Transform, band_ticks: i64, strict: bool) -> Self {
        SeriesExtractor {
            book: if strict { OrderBook::strict() } else { OrderBook::lenient() },
            side,
            transform,
            band_ticks,
            prev: None,
            crossed_events: 0,
        }
    }

    pub fn book(&self) -> &OrderBook {
        &self.book
    }

    /// Observations emitted while the lenient book was crossed.
    pub fn crossed_events(&self) -> u64 {
        self.crossed_events
    }

    pub fn push(&mut self, msg: &MarketMessage) -> Result<Option<LiquidityObservation>, SeriesError> {
        self.book.apply(msg)?;
        if self.book.best_bid().is_none() || self.book.best_ask().is_none() {
            return Ok(None);
        }
        let mid_halfticks = self.book.midpoint_halfticks()?;
        let liq_raw = self.book.band_liquidity(self.side, self.band_ticks)?;
        let prev = match self.prev {
            None => {
                // Seed the lag; market time starts at the next change.
                self.prev = Some(EventState {
                    liq_raw,
                    mid_halfticks,
                    liq: self.transform.apply(liq_raw as f64),
                });
                return Ok(None);
            }
            Some(prev) => prev,
        };
        if liq_raw == prev.liq_raw && mid_halfticks == prev.mid_halfticks {
            return Ok(None);
        }
        let liq = self.transform.apply(liq_raw as f64);
        let obs = LiquidityObservation {
            ts_ns: msg.ts_ns,
            side: self.side,
            liq,
            liq_lag: prev.liq,
            dbam: (mid_halfticks - prev.mid_halfticks) as f64 * POINTS_PER_HALF_TICK,
        };
        if self.book.is_crossed() {
            self.crossed_events += 1;
        }
        self.prev = Some(EventState { liq_raw, mid_halfticks, liq });
        Ok(Some(obs))
    }
}

/// Batch extraction over an in-memory message sequence.
///
/// Messages must be in non-decreasing `ts_ns` order. For `ZScore` this runs
/// a raw pass first and standardizes by the batch mean and population
/// standard deviation of raw band liquidity across all events (including the
/// seeded first event, which feeds the first emitted lag). A constant raw
/// series standardizes to zeros.
pub fn extract_series(
    messages: &[MarketMessage],
    side: Side,
    transform: Transform,
    band_ticks: i64,
    strict: bool,
) -> Result<Vec<LiquidityObservation>, SeriesError> {
    let stream_transform = if transform == Transform::ZScore {
        Transform::Raw
    } else {
        transform
    };
    let mut extractor = SeriesExtractor::new_unchecked(side, stream_transform, band_ticks, strict);
    let mut observations = Vec::new();
    for msg in messages {
        if let Some(obs) = extractor.push(msg)? {
            observations.push(obs);
        }
    }
    if transform == Transform::ZScore {
        zscore_observations(&mut observations);
    }
    Ok(observations)
}

/// Second pass of the `ZScore` transform: standardize raw observations in
/// place by the batch mean and population standard deviation over all
/// events (the seeded first event is represented by the first row's lag).
pub fn zscore_observations(observations: &mut [LiquidityObservation]) {
    if observations.is_empty() {
        return;
    }
    // Raw event values: the seeded first event plus every emitted value.
    let n = (observations.len() + 1) as f64;
    let sum: f64 = observations[0].liq_lag + observations.iter().map(|o| o.liq).sum::<f64>();
    let mean = sum / n;
    let ss: f64 = (observations[0].liq_lag - mean).powi(2)
        + observations.iter().map(|o| (o.liq - mean).powi(2)).sum::<f64>();
    let sd = (ss / n).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    for obs in observations {
        obs.liq = (obs.liq - mean) / scale;
        obs.liq_lag = (obs.liq_lag - mean) / scale;
    }
}

/// Series-file metadata recorded in the `#` header.
#[derive(Debug, Clone)]
pub struct SeriesMeta {
    pub side: Side,
    pub transform: Transform,
    pub band_ticks: i64,
}

impl SeriesMeta {
    pub fn header_pairs(&self) -> Vec<(String, String)> {
        vec![
            ("side".to_string(), self.side.to_string()),
            ("transform".to_string(), self.transform.to_string()),
            ("band_ticks".to_string(), self.band_ticks.to_string()),
        ]
    }
}

/// Parsed series file: header key=value pairs plus the observation rows.
#[derive(Debug)]
pub struct SeriesFile {
    pub header: Vec<(String, String)>,
    pub observations: Vec<LiquidityObservation>,
}

impl SeriesFile {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn transform(&self) -> Option<Transform> {
        self.header_value("transform").and_then(|v| v.parse().ok())
    }
}

/// Write observations as `ts_ns,liq,liq_lag,dbam` rows under a `#` header
/// of `key=value` pairs (see [`SeriesMeta::header_pairs`] for the standard
/// ones).
///
/// Floats use Rust's shortest round-trip formatting, so a write/read cycle
/// reproduces every value bit for bit.
pub fn write_series<W: Write>(
    mut out: W,
    header: &[(String, String)],
    observations: &[LiquidityObservation],
) -> io::Result<()> {
    for (key, value) in header {
        writeln!(out, "# {key}={value}")?;
    }
    for obs in observations {
        writeln!(out, "{},{},{},{}", obs.ts_ns, obs.liq, obs.liq_lag, obs.dbam)?;
    }
    Ok(())
}

/// Read a series file written by [`write_series`].
///
/// The `side` header entry is optional (synthetic series omit a meaningful
/// side); rows default to the bid side when absent.
pub fn read_series<R: BufRead>(input: R) -> Result<SeriesFile, SeriesError> {
    let mut header = Vec::new();
    let mut observations = Vec::new();
    let mut side = Side::Bid;
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx as u64 + 1;
        let line = line?;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.trim().split_once('=') {
                if key == "side" {
                    side = match value {
                        "bid" => Side::Bid,
                        "ask" => Side::Ask,
                        other => {
                            return Err(SeriesError::BadSeriesFile {
                                line: line_no,
                                reason: format!("unknown side {other:?}"),
                            })
                        }
                    };
                }
                header.push((key.to_string(), value.to_string()));
            }
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |name: &str| {
            fields.next().ok_or_else(|| SeriesError::BadSeriesFile {
                line: line_no,
                reason: format!("missing {name} column"),
            })
        };
        let ts_ns: i64 = parse_field(next("ts_ns")?, "ts_ns", line_no)?;
        let liq: f64 = parse_field(next("liq")?, "liq", line_no)?;
        let liq_lag: f64 = parse_field(next("liq_lag")?, "liq_lag", line_no)?;
        let dbam: f64 = parse_field(next("dbam")?, "dbam", line_no)?;
        for value in [liq, liq_lag, dbam] {
            if !value.is_finite() {
                return Err(SeriesError::BadSeriesFile {
                    line: line_no,
                    reason: "non-finite value".to_string(),
                });
            }
        }
        observations.push(LiquidityObservation { ts_ns, side, liq, liq_lag, dbam });
    }
    Ok(SeriesFile { header, observations })
}

fn parse_field<T: FromStr>(raw: &str, name: &str, line: u64) -> Result<T, SeriesError> {
    raw.parse().map_err(|_| SeriesError::BadSeriesFile {
        line,
        reason: format!("cannot parse {name} value {raw:?}"),
    })
}
