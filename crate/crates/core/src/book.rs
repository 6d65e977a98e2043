//! 10-level orderbook reconstruction from the normalized feed.
//!
//! Book updates are level-relative: `New` inserts at the stated level and
//! shifts deeper levels down (level 11 falls off), `Change` replaces the
//! quantity resting at a level, `Delete` removes the level and shifts deeper
//! levels up. Trades never mutate the ladder; aggregated depth feeds encode
//! fill effects as subsequent level updates, so applying them twice would
//! corrupt depth.

use thiserror::Error;

use crate::feed::{BookAction, MarketMessage, MessageKind, Side, MAX_DEPTH};

/// One resting price level. Zero-quantity levels are never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PriceLevel {
    pub price_ticks: i64,
    pub qty: i64,
}

#[derive(Debug, Error)]
pub enum BookError {
    /// Change/Delete addressed a level that does not exist, or New would
    /// leave a gap in the ladder.
    #[error("{side} level {level} does not exist (depth {depth})")]
    MissingLevel { side: Side, level: u8, depth: usize },
    /// Strict mode only: the update would put the best bid at or above the
    /// best ask.
    #[error("update would cross the book: bid {best_bid} >= ask {best_ask}")]
    CrossedBook { best_bid: i64, best_ask: i64 },
    /// A New insert whose price breaks the strict per-side price ordering.
    #[error("{side} insert at level {level} breaks price ordering")]
    DisorderedLevel { side: Side, level: u8 },
    #[error("{side} side of the book is empty")]
    EmptySide { side: Side },
}

/// Price/quantity ladder, up to [`MAX_DEPTH`] levels per side.
///
/// Bids are held strictly descending by price, asks strictly ascending. In
/// strict mode an update that would cross the book is rejected; in lenient
/// mode it is applied and [`OrderBook::is_crossed`] reports the condition,
/// since transient crossed states occur in real feeds.
#[derive(Debug, Clone)]
pub struct OrderBook {
    bids: Vec<PriceLevel>,
    asks: Vec<PriceLevel>,
    ts_ns: i64,
    strict: bool,
}

impl Default for OrderBook {
    fn default() -> Self {
        Self::strict()
    }
}

impl OrderBook {
    pub fn strict() -> Self {
        Self::with_strictness(true)
    }

    pub fn lenient() -> Self {
        Self::with_strictness(false)
    }

    fn with_strictness(strict: bool) -> Self {
        OrderBook {
            bids: Vec::with_capacity(MAX_DEPTH as usize),
            asks: Vec::with_capacity(MAX_DEPTH as usize),
            ts_ns: 0,
            strict,
        }
    }

    /// Build a book directly from `(price_ticks, qty)` ladders, validating
    /// all book invariants. Intended for tests and fixtures.
    pub fn from_levels(bids: &[(i64, i64)], asks: &[(i64, i64)]) -> Result<Self, BookError> {
        let mut book = OrderBook::strict();
        for (i, &(price_ticks, qty)) in bids.iter().enumerate() {
            if i > 0 && price_ticks >= book.bids[i - 1].price_ticks {
                return Err(BookError::DisorderedLevel {
                    side: Side::Bid,
                    level: (i + 1) as u8,
                });
            }
            book.bids.push(PriceLevel { price_ticks, qty });
        }
        for (i, &(price_ticks, qty)) in asks.iter().enumerate() {
            if i > 0 && price_ticks <= book.asks[i - 1].price_ticks {
                return Err(BookError::DisorderedLevel {
                    side: Side::Ask,
                    level: (i + 1) as u8,
                });
            }
            book.asks.push(PriceLevel { price_ticks, qty });
        }
        book.bids.truncate(MAX_DEPTH as usize);
        book.asks.truncate(MAX_DEPTH as usize);
        if let (Some(b), Some(a)) = (book.best_bid(), book.best_ask()) {
            if b.price_ticks >= a.price_ticks {
                return Err(BookError::CrossedBook {
                    best_bid: b.price_ticks,
                    best_ask: a.price_ticks,
                });
            }
        }
        Ok(book)
    }

    pub fn ts_ns(&self) -> i64 {
        self.ts_ns
    }

    pub fn levels(&self, side: Side) -> &[PriceLevel] {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    pub fn best_bid(&self) -> Option<&PriceLevel> {
        self.bids.first()
    }

    pub fn best_ask(&self) -> Option<&PriceLevel> {
        self.asks.first()
    }

    pub fn is_crossed(&self) -> bool {
        match (self.best_bid(), self.best_ask()) {
            (Some(b), Some(a)) => b.price_ticks >= a.price_ticks,
            _ => false,
        }
    }

    /// Apply one validated message. Returns whether the ladder mutated.
    ///
    /// Trades advance the book timestamp but never touch the ladder. A
    /// `Change` carrying the same quantity that already rests at the level
    /// reports `false`.
    pub fn apply(&mut self, msg: &MarketMessage) -> Result<bool, BookError> {
        let changed = match msg.kind {
            MessageKind::Trade { .. } => false,
            MessageKind::BookUpdate { action, level } => {
                self.apply_update(msg.side, action, level, msg.price_ticks, msg.qty)?
            }
        };
        self.ts_ns = msg.ts_ns;
        Ok(changed)
    }

    fn apply_update(
        &mut self,
        side: Side,
        action: BookAction,
        level: u8,
        price_ticks: i64,
        qty: i64,
    ) -> Result<bool, BookError> {
        let idx = (level - 1) as usize;
        match action {
            BookAction::New => {
                let depth = self.levels(side).len();
                if idx > depth {
                    return Err(BookError::MissingLevel { side, level, depth });
                }
                self.check_insert(side, idx, price_ticks, level)?;
                let ladder = self.side_mut(side);
                ladder.insert(idx, PriceLevel { price_ticks, qty });
                ladder.truncate(MAX_DEPTH as usize);
                Ok(true)
            }
            BookAction::Change => {
                let ladder = self.side_mut(side);
                let depth = ladder.len();
                let slot = ladder
                    .get_mut(idx)
                    .ok_or(BookError::MissingLevel { side, level, depth })?;
                // The resting price is authoritative; a Change only replaces
                // the quantity at the addressed level.
                let changed = slot.qty != qty;
                slot.qty = qty;
                Ok(changed)
            }
            BookAction::Delete => {
                let ladder = self.side_mut(side);
                let depth = ladder.len();
                if idx >= depth {
                    return Err(BookError::MissingLevel { side, level, depth });
                }
                ladder.remove(idx);
                Ok(true)
            }
        }
    }

    fn side_mut(&mut self, side: Side) -> &mut Vec<PriceLevel> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    fn check_insert(
        &self,
        side: Side,
        idx: usize,
        price_ticks: i64,
        level: u8,
    ) -> Result<(), BookError> {
        let ladder = self.levels(side);
        // Strict per-side ordering: the new price must sit strictly between
        // its prospective neighbours (the displaced level moves one deeper).
        let ordered = match side {
            Side::Bid => {
                (idx == 0 || price_ticks < ladder[idx - 1].price_ticks)
                    && (idx >= ladder.len() || price_ticks > ladder[idx].price_ticks)
            }
            Side::Ask => {
                (idx == 0 || price_ticks > ladder[idx - 1].price_ticks)
                    && (idx >= ladder.len() || price_ticks < ladder[idx].price_ticks)
            }
        };
        if !ordered {
            return Err(BookError::DisorderedLevel { side, level });
        }
        // Only an insert at the inside can cross the opposing side.
        if self.strict && idx == 0 {
            let crossing = match side {
                Side::Bid => self.best_ask().map(|a| (price_ticks, a.price_ticks)),
                Side::Ask => self.best_bid().map(|b| (b.price_ticks, price_ticks)),
            };
            if let Some((best_bid, best_ask)) = crossing {
                if best_bid >= best_ask {
                    return Err(BookError::CrossedBook { best_bid, best_ask });
                }
            }
        }
        Ok(())
    }

    /// Bid-ask midpoint in half-ticks: `best_bid + best_ask` in ticks. Exact
    /// integer arithmetic; one half-tick is 0.125 index points.
    pub fn midpoint_halfticks(&self) -> Result<i64, BookError> {
        let bid = self.best_bid().ok_or(BookError::EmptySide { side: Side::Bid })?;
        let ask = self.best_ask().ok_or(BookError::EmptySide { side: Side::Ask })?;
        Ok(bid.price_ticks + ask.price_ticks)
    }

    /// Contracts resting on `side` within `band_ticks` of the midpoint.
    ///
    /// The comparison is done in half-ticks so the band edge is exact: bid
    /// levels with `price >= midpoint - band` count, ask levels with
    /// `price <= midpoint + band`.
    pub fn band_liquidity(&self, side: Side, band_ticks: i64) -> Result<i64, BookError> {
        assert!(band_ticks >= 1, "band_ticks must be at least 1");
        let mid_ht = self.midpoint_halfticks()?;
        let band_ht = 2 * band_ticks;
        let total = match side {
            Side::Bid => self
                .bids
                .iter()
                .take_while(|l| 2 * l.price_ticks >= mid_ht - band_ht)
                .map(|l| l.qty)
                .sum(),
            Side::Ask => self
                .asks
                .iter()
                .take_while(|l| 2 * l.price_ticks <= mid_ht + band_ht)
                .map(|l| l.qty)
                .sum(),
        };
        Ok(total)
    }

    /// Check every structural invariant; used by fuzz and replay tests.
    pub fn validate(&self) -> Result<(), String> {
        for (side, ladder) in [(Side::Bid, &self.bids), (Side::Ask, &self.asks)] {
            if ladder.len() > MAX_DEPTH as usize {
                return Err(format!("{side} depth {} exceeds {MAX_DEPTH}", ladder.len()));
            }
            for level in ladder {
                if level.price_ticks <= 0 {
                    return Err(format!("{side} level with non-positive price"));
                }
            }
            for pair in ladder.windows(2) {
                let ok = match side {
                    Side::Bid => pair[0].price_ticks > pair[1].price_ticks,
                    Side::Ask => pair[0].price_ticks < pair[1].price_ticks,
                };
                if !ok {
                    return Err(format!("{side} ladder out of order"));
                }
            }
        }
        if self.strict && self.is_crossed() {
            return Err("book is crossed".to_string());
        }
        Ok(())
    }
}
