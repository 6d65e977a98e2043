//! Reference book built only from the documented update semantics: plain
//! `(price, qty)` vectors indexed by level, bests found by scanning, band
//! sums by filtering. No ordering assumptions, no incremental state.

use lobregime::feed::{BookAction, MarketMessage, MessageKind, Side};

#[derive(Debug, Default, Clone)]
pub struct NaiveBook {
    bids: Vec<(i64, i64)>,
    asks: Vec<(i64, i64)>,
}

impl NaiveBook {
    pub fn new() -> Self {
        Self::default()
    }

    fn ladder_mut(&mut self, side: Side) -> &mut Vec<(i64, i64)> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    pub fn ladder(&self, side: Side) -> &[(i64, i64)] {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    pub fn apply(&mut self, msg: &MarketMessage) {
        let (action, level) = match msg.kind {
            MessageKind::Trade { .. } => return,
            MessageKind::BookUpdate { action, level } => (action, level),
        };
        let idx = (level - 1) as usize;
        let ladder = self.ladder_mut(msg.side);
        match action {
            BookAction::New => {
                ladder.insert(idx, (msg.price_ticks, msg.qty));
                while ladder.len() > 10 {
                    ladder.pop();
                }
            }
            BookAction::Change => ladder[idx].1 = msg.qty,
            BookAction::Delete => {
                ladder.remove(idx);
            }
        }
    }

    pub fn best_bid(&self) -> Option<i64> {
        self.bids.iter().map(|&(p, _)| p).max()
    }

    pub fn best_ask(&self) -> Option<i64> {
        self.asks.iter().map(|&(p, _)| p).min()
    }

    pub fn midpoint_halfticks(&self) -> Option<i64> {
        Some(self.best_bid()? + self.best_ask()?)
    }

    pub fn band_liquidity(&self, side: Side, band_ticks: i64) -> Option<i64> {
        let mid = self.midpoint_halfticks()?;
        let total = match side {
            Side::Bid => self
                .bids
                .iter()
                .filter(|&&(p, _)| 2 * p >= mid - 2 * band_ticks)
                .map(|&(_, q)| q)
                .sum(),
            Side::Ask => self
                .asks
                .iter()
                .filter(|&&(p, _)| 2 * p <= mid + 2 * band_ticks)
                .map(|&(_, q)| q)
                .sum(),
        };
        Some(total)
    }
}

/// Reference series extraction: one row per message after which the side's
/// band liquidity or the midpoint differs from the previous event, the first
/// event seeding the lag.
pub struct NaiveExtractor {
    book: NaiveBook,
    side: Side,
    band_ticks: i64,
    log1p: bool,
    prev: Option<(i64, i64)>,
}

impl NaiveExtractor {
    pub fn new(side: Side, band_ticks: i64, log1p: bool) -> Self {
        NaiveExtractor {
            book: NaiveBook::new(),
            side,
            band_ticks,
            log1p,
            prev: None,
        }
    }

    fn value(&self, raw: i64) -> f64 {
        if self.log1p {
            (raw as f64).ln_1p()
        } else {
            raw as f64
        }
    }

    /// Returns `(ts_ns, liq, liq_lag, dbam)` when the message is an event.
    pub fn push(&mut self, msg: &MarketMessage) -> Option<(i64, f64, f64, f64)> {
        self.book.apply(msg);
        let mid = self.book.midpoint_halfticks()?;
        let liq = self.book.band_liquidity(self.side, self.band_ticks)?;
        match self.prev {
            None => {
                self.prev = Some((liq, mid));
                None
            }
            Some((prev_liq, prev_mid)) => {
                if liq == prev_liq && mid == prev_mid {
                    return None;
                }
                let row = (
                    msg.ts_ns,
                    self.value(liq),
                    self.value(prev_liq),
                    (mid - prev_mid) as f64 * 0.125,
                );
                self.prev = Some((liq, mid));
                Some(row)
            }
        }
    }
}
