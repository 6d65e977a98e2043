//! Normalized market-message feed: one comma-delimited record per line.
//!
//! Columns: `seq,ts_ns,side,kind,action,price_ticks,qty,level[,aggressor]`
//! with `side` in `B|A`, `kind` in `U|T` (book update / trade), `action` in
//! `N|C|D` for updates and empty for trades, `level` in `1..=10` for updates
//! and empty for trades, and `aggressor` in `B|S` for trades. The trailing
//! aggressor column may be omitted entirely on book updates. Lines starting
//! with `#` are headers and are skipped.

use std::fmt;
use std::io::BufRead;

use thiserror::Error;

/// Maximum book depth carried by the feed.
pub const MAX_DEPTH: u8 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn code(self) -> char {
        match self {
            Side::Bid => 'B',
            Side::Ask => 'A',
        }
    }

    /// The other side of the book.
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Bid => write!(f, "bid"),
            Side::Ask => write!(f, "ask"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BookAction {
    New,
    Change,
    Delete,
}

impl BookAction {
    fn code(self) -> char {
        match self {
            BookAction::New => 'N',
            BookAction::Change => 'C',
            BookAction::Delete => 'D',
        }
    }
}

/// Which side initiated a trade. Carried by the feed, unused by the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggressor {
    Buy,
    Sell,
}

impl Aggressor {
    fn code(self) -> char {
        match self {
            Aggressor::Buy => 'B',
            Aggressor::Sell => 'S',
        }
    }
}

/// Kind-specific payload: book updates address a depth level, trades carry
/// the aggressor tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    BookUpdate { action: BookAction, level: u8 },
    Trade { aggressor: Aggressor },
}

/// One validated feed event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarketMessage {
    pub seq: u64,
    /// Nanoseconds since the Unix epoch.
    pub ts_ns: i64,
    pub side: Side,
    /// Integer price in ticks; always positive.
    pub price_ticks: i64,
    /// Contracts; non-negative, and positive for New/Change updates.
    pub qty: i64,
    pub kind: MessageKind,
}

impl MarketMessage {
    pub fn is_trade(&self) -> bool {
        matches!(self.kind, MessageKind::Trade { .. })
    }
}

#[derive(Debug, Error)]
pub enum FeedError {
    /// Wrong field count or an unparseable field.
    #[error("line {line}: malformed record ({field}): {reason}")]
    MalformedRecord {
        line: u64,
        field: &'static str,
        reason: String,
    },
    /// A field parsed but violates its range or cross-field rules.
    #[error("line {line}: invalid {field}: {reason}")]
    DomainError {
        line: u64,
        field: &'static str,
        reason: String,
    },
    #[error("timestamp regression at seq {seq}: {ts_prev} -> {ts_now}")]
    TimestampRegression { seq: u64, ts_prev: i64, ts_now: i64 },
    #[error("feed i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(line: u64, field: &'static str, reason: impl Into<String>) -> FeedError {
    FeedError::MalformedRecord {
        line,
        field,
        reason: reason.into(),
    }
}

fn domain(line: u64, field: &'static str, reason: impl Into<String>) -> FeedError {
    FeedError::DomainError {
        line,
        field,
        reason: reason.into(),
    }
}

fn parse_int<T: std::str::FromStr>(
    raw: &str,
    field: &'static str,
    line: u64,
) -> Result<T, FeedError> {
    raw.parse::<T>()
        .map_err(|_| malformed(line, field, format!("cannot parse {raw:?} as integer")))
}

/// Parse one record. `line_no` is carried into errors for diagnostics.
pub fn parse_line(line: &str, line_no: u64) -> Result<MarketMessage, FeedError> {
    let fields: Vec<&str> = line.split(',').collect();
    // The aggressor column may be omitted when empty.
    if fields.len() != 8 && fields.len() != 9 {
        return Err(malformed(
            line_no,
            "record",
            format!("expected 8 or 9 fields, found {}", fields.len()),
        ));
    }

    let seq: u64 = parse_int(fields[0], "seq", line_no)?;
    let ts_ns: i64 = parse_int(fields[1], "ts_ns", line_no)?;

    let side = match fields[2] {
        "B" => Side::Bid,
        "A" => Side::Ask,
        other => return Err(malformed(line_no, "side", format!("expected B or A, found {other:?}"))),
    };

    let price_ticks: i64 = parse_int(fields[5], "price_ticks", line_no)?;
    if price_ticks <= 0 {
        return Err(domain(line_no, "price_ticks", format!("must be positive, found {price_ticks}")));
    }

    let qty: i64 = parse_int(fields[6], "qty", line_no)?;
    if qty < 0 {
        return Err(domain(line_no, "qty", format!("must be non-negative, found {qty}")));
    }

    let action_raw = fields[3];
    let aggressor_raw = if fields.len() == 9 { fields[8] } else { "" };

    let kind = match action_raw {
        "U" => {
            let action = match fields[4] {
                "N" => BookAction::New,
                "C" => BookAction::Change,
                "D" => BookAction::Delete,
                other => {
                    return Err(malformed(line_no, "action", format!("expected N, C or D, found {other:?}")))
                }
            };
            if qty == 0 && matches!(action, BookAction::New | BookAction::Change) {
                return Err(domain(line_no, "qty", "must be positive for New/Change"));
            }
            let level: u8 = parse_int(fields[7], "level", line_no)?;
            if level == 0 || level > MAX_DEPTH {
                return Err(domain(line_no, "level", format!("must be in 1..={MAX_DEPTH}, found {level}")));
            }
            if !aggressor_raw.is_empty() {
                return Err(domain(line_no, "aggressor", "must be empty on book updates"));
            }
            MessageKind::BookUpdate { action, level }
        }
        "T" => {
            if !fields[4].is_empty() {
                return Err(domain(line_no, "action", "must be empty on trades"));
            }
            if !fields[7].is_empty() {
                return Err(domain(line_no, "level", "must be empty on trades"));
            }
            let aggressor = match aggressor_raw {
                "B" => Aggressor::Buy,
                "S" => Aggressor::Sell,
                "" => return Err(domain(line_no, "aggressor", "trades must carry an aggressor")),
                other => {
                    return Err(malformed(line_no, "aggressor", format!("expected B or S, found {other:?}")))
                }
            };
            MessageKind::Trade { aggressor }
        }
        other => return Err(malformed(line_no, "kind", format!("expected U or T, found {other:?}"))),
    };

    Ok(MarketMessage {
        seq,
        ts_ns,
        side,
        price_ticks,
        qty,
        kind,
    })
}

/// Render a message in the feed format; inverse of [`parse_line`].
pub fn format_line(msg: &MarketMessage) -> String {
    match msg.kind {
        MessageKind::BookUpdate { action, level } => format!(
            "{},{},{},U,{},{},{},{}",
            msg.seq,
            msg.ts_ns,
            msg.side.code(),
            action.code(),
            msg.price_ticks,
            msg.qty,
            level
        ),
        MessageKind::Trade { aggressor } => format!(
            "{},{},{},T,,{},{},,{}",
            msg.seq,
            msg.ts_ns,
            msg.side.code(),
            msg.price_ticks,
            msg.qty,
            aggressor.code()
        ),
    }
}

/// Error handling for the streaming reader: strict aborts on the first bad
/// record or timestamp regression, lenient skips and counts them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

/// Streaming reader over newline-delimited records.
///
/// Yields messages in file order and verifies `ts_ns` is non-decreasing
/// (ties allowed). Comment (`#`) and blank lines are ignored. In strict mode
/// the iterator fuses after the first error.
pub struct MessageReader<R> {
    input: R,
    mode: ParseMode,
    line_no: u64,
    buf: String,
    prev_ts: Option<i64>,
    skipped: u64,
    done: bool,
}

impl<R: BufRead> MessageReader<R> {
    pub fn new(input: R, mode: ParseMode) -> Self {
        MessageReader {
            input,
            mode,
            line_no: 0,
            buf: String::new(),
            prev_ts: None,
            skipped: 0,
            done: false,
        }
    }

    /// Records skipped so far in lenient mode.
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    fn read_next(&mut self) -> Result<Option<MarketMessage>, FeedError> {
        loop {
            self.buf.clear();
            if self.input.read_line(&mut self.buf)? == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let line = self.buf.trim_end_matches(['\n', '\r']);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let msg = match parse_line(line, self.line_no) {
                Ok(msg) => msg,
                Err(err) => {
                    if self.mode == ParseMode::Lenient {
                        self.skipped += 1;
                        continue;
                    }
                    return Err(err);
                }
            };
            if let Some(prev) = self.prev_ts {
                if msg.ts_ns < prev {
                    if self.mode == ParseMode::Lenient {
                        self.skipped += 1;
                        continue;
                    }
                    return Err(FeedError::TimestampRegression {
                        seq: msg.seq,
                        ts_prev: prev,
                        ts_now: msg.ts_ns,
                    });
                }
            }
            self.prev_ts = Some(msg.ts_ns);
            return Ok(Some(msg));
        }
    }
}

impl<R: BufRead> Iterator for MessageReader<R> {
    type Item = Result<MarketMessage, FeedError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_next() {
            Ok(Some(msg)) => Some(Ok(msg)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(err) => {
                self.done = true;
                Some(Err(err))
            }
        }
    }
}
