//! Seeded generator of random, always-valid feed messages. It tracks a
//! shadow ladder so Change/Delete always address existing levels, New never
//! crosses or disorders a side, and timestamps never regress.

use lobregime::feed::{Aggressor, BookAction, MarketMessage, MessageKind, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::naive::NaiveBook;

const REF_BID: i64 = 9000;
const REF_ASK: i64 = 9002;

pub struct FeedGenerator {
    rng: ChaCha8Rng,
    shadow: NaiveBook,
    seq: u64,
    ts_ns: i64,
}

impl FeedGenerator {
    pub fn new(seed: u64) -> Self {
        FeedGenerator {
            rng: ChaCha8Rng::seed_from_u64(seed),
            shadow: NaiveBook::new(),
            seq: 0,
            // 2016-11-09 00:00:00 UTC, matching the documented examples.
            ts_ns: 1_478_649_600_000_000_000,
        }
    }

    pub fn take(&mut self, n: usize) -> Vec<MarketMessage> {
        (0..n).map(|_| self.next_message()).collect()
    }

    pub fn next_message(&mut self) -> MarketMessage {
        self.seq += 1;
        // Mostly small gaps, occasional ties and bursts.
        let gap = match self.rng.gen_range(0..10) {
            0 => 0,
            1..=5 => self.rng.gen_range(1..1_000),
            6..=8 => self.rng.gen_range(1_000..100_000),
            _ => self.rng.gen_range(100_000..50_000_000),
        };
        self.ts_ns += gap;

        let side = if self.rng.gen_bool(0.5) { Side::Bid } else { Side::Ask };
        let roll = self.rng.gen_range(0..100);
        let depth = self.shadow.ladder(side).len();
        let msg = if roll < 20 {
            self.trade(side)
        } else if roll < 55 && depth > 0 {
            self.change(side)
        } else if roll < 70 && depth > 1 {
            self.delete(side)
        } else {
            self.insert(side).unwrap_or_else(|| {
                if depth > 0 {
                    self.change(side)
                } else {
                    self.trade(side)
                }
            })
        };
        self.shadow.apply(&msg);
        msg
    }

    fn header(&self, side: Side, price_ticks: i64, qty: i64, kind: MessageKind) -> MarketMessage {
        MarketMessage {
            seq: self.seq,
            ts_ns: self.ts_ns,
            side,
            price_ticks,
            qty,
            kind,
        }
    }

    fn trade(&mut self, side: Side) -> MarketMessage {
        let price = match side {
            Side::Bid => self.shadow.best_bid().unwrap_or(REF_BID),
            Side::Ask => self.shadow.best_ask().unwrap_or(REF_ASK),
        };
        let aggressor = if self.rng.gen_bool(0.5) { Aggressor::Buy } else { Aggressor::Sell };
        let qty = self.rng.gen_range(1..=50);
        self.header(side, price, qty, MessageKind::Trade { aggressor })
    }

    fn change(&mut self, side: Side) -> MarketMessage {
        let ladder = self.shadow.ladder(side);
        let idx = self.rng.gen_range(0..ladder.len());
        let price = ladder[idx].0;
        let qty = self.rng.gen_range(1..=500);
        self.header(
            side,
            price,
            qty,
            MessageKind::BookUpdate { action: BookAction::Change, level: (idx + 1) as u8 },
        )
    }

    fn delete(&mut self, side: Side) -> MarketMessage {
        let ladder = self.shadow.ladder(side);
        let idx = self.rng.gen_range(0..ladder.len());
        let price = ladder[idx].0;
        self.header(
            side,
            price,
            0,
            MessageKind::BookUpdate { action: BookAction::Delete, level: (idx + 1) as u8 },
        )
    }

    /// Insert at a random feasible level, or `None` when no level has room
    /// for a strictly-between price that keeps the book uncrossed.
    fn insert(&mut self, side: Side) -> Option<MarketMessage> {
        let ladder = self.shadow.ladder(side).to_vec();
        let depth = ladder.len();
        let max_level = depth.min(9) + 1;
        let start = self.rng.gen_range(0..max_level);
        for offset in 0..max_level {
            let idx = (start + offset) % max_level;
            let (lo, hi) = match side {
                Side::Bid => {
                    let hi = if idx == 0 {
                        self.shadow.best_ask().map(|a| a - 1).unwrap_or(REF_BID + 3)
                    } else {
                        ladder[idx - 1].0 - 1
                    };
                    let lo = if idx < depth { ladder[idx].0 + 1 } else { (hi - 4).max(1) };
                    (lo, hi)
                }
                Side::Ask => {
                    let lo = if idx == 0 {
                        self.shadow.best_bid().map(|b| b + 1).unwrap_or(REF_ASK - 3)
                    } else {
                        ladder[idx - 1].0 + 1
                    };
                    let hi = if idx < depth { ladder[idx].0 - 1 } else { lo + 4 };
                    (lo, hi)
                }
            };
            if lo > hi || hi < 1 {
                continue;
            }
            let price = self.rng.gen_range(lo.max(1)..=hi);
            let qty = self.rng.gen_range(1..=500);
            return Some(self.header(
                side,
                price,
                qty,
                MessageKind::BookUpdate { action: BookAction::New, level: (idx + 1) as u8 },
            ));
        }
        None
    }
}
