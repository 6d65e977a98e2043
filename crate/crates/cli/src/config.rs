//! Run configuration: defaults, optional flat `key=value` config file, and
//! command-line overrides, applied in that order.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use lobregime::feed::Side;
use lobregime::regime::FitConfig;
use lobregime::series::Transform;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideChoice {
    Bid,
    Ask,
    Both,
}

impl SideChoice {
    pub fn sides(self) -> Vec<Side> {
        match self {
            SideChoice::Bid => vec![Side::Bid],
            SideChoice::Ask => vec![Side::Ask],
            SideChoice::Both => vec![Side::Bid, Side::Ask],
        }
    }
}

impl FromStr for SideChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bid" => Ok(SideChoice::Bid),
            "ask" => Ok(SideChoice::Ask),
            "both" => Ok(SideChoice::Both),
            other => Err(format!("unknown side {other:?} (expected bid, ask or both)")),
        }
    }
}

impl fmt::Display for SideChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SideChoice::Bid => "bid",
            SideChoice::Ask => "ask",
            SideChoice::Both => "both",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub side: SideChoice,
    pub transform: Transform,
    pub band_ticks: i64,
    pub k: usize,
    pub threshold: f64,
    pub delay_ms: u64,
    pub seed: u64,
    pub strict: bool,
    pub state_index: Option<usize>,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub sigma_floor: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitConfig::default();
        RunConfig {
            side: SideChoice::Both,
            transform: Transform::Log1p,
            band_ticks: lobregime::series::DEFAULT_BAND_TICKS,
            k: 4,
            threshold: lobregime::signal::DEFAULT_THRESHOLD,
            delay_ms: (lobregime::signal::DEFAULT_DELAY_NS / 1_000_000) as u64,
            seed: fit.seed,
            strict: true,
            state_index: None,
            restarts: fit.restarts,
            max_iter: fit.max_iter,
            tol: fit.tol,
            sigma_floor: fit.sigma_floor,
        }
    }
}

impl RunConfig {
    /// Load settings from a flat `key=value` file. Unknown keys are errors.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key=value", path.display(), idx + 1))?;
            let (key, value) = (key.trim(), value.trim());
            self.apply_pair(key, value)
                .with_context(|| format!("{}:{}: bad value for {key}", path.display(), idx + 1))?;
        }
        Ok(())
    }

    fn apply_pair(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "side" => self.side = value.parse().map_err(anyhow::Error::msg)?,
            "transform" => self.transform = value.parse().map_err(anyhow::Error::msg)?,
            "band_ticks" => self.band_ticks = value.parse()?,
            "k" => self.k = value.parse()?,
            "threshold" => self.threshold = value.parse()?,
            "delay_ms" => self.delay_ms = value.parse()?,
            "seed" => self.seed = value.parse()?,
            "strict" => self.strict = value.parse()?,
            "state_index" => self.state_index = Some(value.parse()?),
            "restarts" => self.restarts = value.parse()?,
            "max_iter" => self.max_iter = value.parse()?,
            "tol" => self.tol = value.parse()?,
            "sigma_floor" => self.sigma_floor = value.parse()?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            restarts: self.restarts,
            seed: self.seed,
            sigma_floor: self.sigma_floor,
            label_rule: Default::default(),
        }
    }

    pub fn delay_ns(&self) -> i64 {
        self.delay_ms as i64 * 1_000_000
    }

    /// Header pairs echoed into every output file.
    pub fn echo_pairs(&self, command: &str) -> Vec<(String, String)> {
        vec![
            ("tool".into(), format!("lobregime {}", env!("CARGO_PKG_VERSION"))),
            ("command".into(), command.into()),
        ]
    }
}
