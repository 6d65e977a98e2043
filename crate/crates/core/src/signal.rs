//! Online delay signal.
//!
//! A detector runs the Hamilton filter observation by observation and
//! watches the filtered probability of one target state (by default the
//! canonical highest-variance state). A *fire* is a rising edge: the
//! probability moving from `<= threshold` to `> threshold`. Each fire opens
//! a delay window of `delay_ns`; any observation arriving inside an open
//! window gets a `Delay` decision. Staying above the threshold does not
//! re-trigger.
//!
//! Reported duration comes in two flavours: `raw` multiplies the firing rate
//! by the window length (the headline arithmetic), `merged` measures the
//! union of the windows, which is what a delayed order stream would actually
//! experience when windows overlap.

use thiserror::Error;

use crate::regime::{OnlineFilter, RegimeError, SwitchingParams};

/// Nanoseconds in a second.
const NS_PER_SEC: f64 = 1e9;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error(transparent)]
    Regime(#[from] RegimeError),
    #[error("timestamp regression: {ts_prev} -> {ts_now}")]
    TimestampRegression { ts_prev: i64, ts_now: i64 },
    #[error("no observations consumed")]
    EmptyStream,
    #[error("invalid signal config: {0}")]
    InvalidConfig(String),
}

/// Detector settings. `state_index` is 1-based to match reports; it defaults
/// to K, the canonical maximum-variance state.
#[derive(Debug, Clone, Copy)]
pub struct SignalConfig {
    pub state_index: usize,
    pub threshold: f64,
    pub delay_ns: i64,
}

pub const DEFAULT_THRESHOLD: f64 = 0.2;
pub const DEFAULT_DELAY_NS: i64 = 10_000_000;

impl SignalConfig {
    /// Defaults for a K-state model: watch state K with a 0.2 threshold and
    /// a 10 ms delay.
    pub fn for_states(k: usize) -> Self {
        SignalConfig {
            state_index: k,
            threshold: DEFAULT_THRESHOLD,
            delay_ns: DEFAULT_DELAY_NS,
        }
    }

    pub fn validate(&self, k: usize) -> Result<(), SignalError> {
        if self.state_index < 1 || self.state_index > k {
            return Err(SignalError::InvalidConfig(format!(
                "state_index {} outside 1..={k}",
                self.state_index
            )));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(SignalError::InvalidConfig(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        if self.delay_ns <= 0 {
            return Err(SignalError::InvalidConfig("delay_ns must be positive".into()));
        }
        Ok(())
    }
}

/// Verdict for one observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Pass,
    Delay { until_ns: i64 },
}

/// Firing-rate and duration summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalReport {
    pub fires: u64,
    /// Rising edges divided by the wall-clock span in seconds.
    pub fires_per_sec: f64,
    /// `fires_per_sec * delay * 100`.
    pub duration_raw_pct: f64,
    /// Union of the delay windows, clipped to the span, as a percentage.
    pub duration_merged_pct: f64,
}

/// Share of a second consumed when the signal fires `fires_per_sec` times
/// and each fire costs `delay_ns`, in percent.
pub fn duration_percent(fires_per_sec: f64, delay_ns: i64) -> f64 {
    // Grouped so the canonical 10 ms delay yields an exact multiplier of 1.
    fires_per_sec * ((delay_ns as f64 * 100.0) / NS_PER_SEC)
}

/// Count rising edges of a probability path over a threshold, with the
/// pre-stream state treated as below.
pub fn count_rising_edges<I: IntoIterator<Item = f64>>(probs: I, threshold: f64) -> u64 {
    let mut above = false;
    let mut fires = 0;
    for p in probs {
        let now = p > threshold;
        if now && !above {
            fires += 1;
        }
        above = now;
    }
    fires
}

/// Streaming delay-signal detector over one side's observation stream.
pub struct Detector<'p> {
    filter: OnlineFilter<'p>,
    config: SignalConfig,
    target: usize,
    above: bool,
    fires: u64,
    window_end_ns: i64,
    merged_busy_ns: i64,
    first_ts_ns: Option<i64>,
    last_ts_ns: i64,
}

impl<'p> Detector<'p> {
    pub fn new(params: &'p SwitchingParams, config: SignalConfig) -> Result<Self, SignalError> {
        config.validate(params.num_states())?;
        Ok(Detector {
            filter: OnlineFilter::new(params)?,
            config,
            target: config.state_index - 1,
            above: false,
            fires: 0,
            window_end_ns: i64::MIN,
            merged_busy_ns: 0,
            first_ts_ns: None,
            last_ts_ns: i64::MIN,
        })
    }

    /// Consume one observation and decide whether it may pass.
    ///
    /// Timestamps must be non-decreasing. The decision is `Delay` exactly
    /// when the observation's timestamp falls inside the latest window.
    pub fn on_observation(
        &mut self,
        ts_ns: i64,
        y: f64,
        y_lag: f64,
        dbam: f64,
    ) -> Result<Decision, SignalError> {
        if self.first_ts_ns.is_some() {
            if ts_ns < self.last_ts_ns {
                return Err(SignalError::TimestampRegression {
                    ts_prev: self.last_ts_ns,
                    ts_now: ts_ns,
                });
            }
        } else {
            self.first_ts_ns = Some(ts_ns);
        }
        self.last_ts_ns = ts_ns;

        self.filter.step(y, y_lag, dbam)?;
        let prob = self.filter.prob()[self.target];
        let now_above = prob > self.config.threshold;
        if now_above && !self.above {
            self.fires += 1;
            let new_end = ts_ns + self.config.delay_ns;
            // Window ends are monotone, so the union grows by the part of
            // the new window beyond the previous end.
            if self.fires > 1 && ts_ns < self.window_end_ns {
                self.merged_busy_ns += new_end - self.window_end_ns;
            } else {
                self.merged_busy_ns += self.config.delay_ns;
            }
            self.window_end_ns = new_end;
        }
        self.above = now_above;

        if ts_ns < self.window_end_ns {
            Ok(Decision::Delay { until_ns: self.window_end_ns })
        } else {
            Ok(Decision::Pass)
        }
    }

    /// Filtered probability of the target state after the last observation.
    pub fn target_prob(&self) -> f64 {
        if self.filter.steps() == 0 {
            0.0
        } else {
            self.filter.prob()[self.target]
        }
    }

    pub fn fires(&self) -> u64 {
        self.fires
    }

    /// End of the latest delay window, if any fire has happened.
    pub fn window_end_ns(&self) -> Option<i64> {
        (self.fires > 0).then_some(self.window_end_ns)
    }

    pub fn config(&self) -> &SignalConfig {
        &self.config
    }

    /// Summarize the run. Wall-clock span is last minus first observation
    /// timestamp; a single-instant stream reports zero rates.
    pub fn report(&self) -> Result<SignalReport, SignalError> {
        let first = self.first_ts_ns.ok_or(SignalError::EmptyStream)?;
        let span_ns = self.last_ts_ns - first;
        let fires_per_sec = if span_ns > 0 {
            self.fires as f64 / (span_ns as f64 / NS_PER_SEC)
        } else {
            0.0
        };
        let busy_ns = if self.fires == 0 {
            0
        } else {
            // Only the final window can extend beyond the last observation.
            self.merged_busy_ns - (self.window_end_ns - self.last_ts_ns).max(0)
        };
        let duration_merged_pct = if span_ns > 0 {
            busy_ns as f64 / span_ns as f64 * 100.0
        } else {
            0.0
        };
        Ok(SignalReport {
            fires: self.fires,
            fires_per_sec,
            duration_raw_pct: duration_percent(fires_per_sec, self.config.delay_ns),
            duration_merged_pct,
        })
    }
}

/// Render one event row: `ts_ns,prob,fire,decision,window_end_ns`.
pub fn format_event_line(
    ts_ns: i64,
    prob: f64,
    fired: bool,
    decision: Decision,
    window_end_ns: Option<i64>,
) -> String {
    let (code, end) = match decision {
        Decision::Pass => ('P', window_end_ns.unwrap_or(0)),
        Decision::Delay { until_ns } => ('D', until_ns),
    };
    format!("{ts_ns},{prob},{},{code},{end}", u8::from(fired))
}
