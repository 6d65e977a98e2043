//! Streaming toolkit for detecting unstable-liquidity regimes in a futures
//! limit orderbook.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! 1. [`feed`] — parse the normalized nanosecond market-message format.
//! 2. [`book`] / [`series`] — replay messages into a 10-level book and emit
//!    per-side band-liquidity observations in market time.
//! 3. [`regime`] — fit K-state Markov-switching Gaussian regressions via the
//!    Hamilton filter, Kim smoother and EM; states are canonically labeled by
//!    ascending residual scale so the last state is always the
//!    highest-variance one.
//! 4. [`signal`] — run the filter online and raise a short delay window
//!    whenever the filtered probability of the high-variance state crosses a
//!    threshold.
//!
//! [`synth`] provides the data generator and brute-force oracles used to
//! validate the estimation stack end to end.

pub mod book;
pub mod feed;
pub mod model;
pub mod regime;
pub mod series;
pub mod signal;
pub mod synth;

/// Tick size of the instrument: one index point is four ticks.
pub const TICKS_PER_POINT: i64 = 4;

/// Midpoints are carried in half-ticks so they stay exact integers.
pub const HALF_TICKS_PER_POINT: i64 = 2 * TICKS_PER_POINT;

/// Size of one half-tick in index points.
pub const POINTS_PER_HALF_TICK: f64 = 1.0 / HALF_TICKS_PER_POINT as f64;
