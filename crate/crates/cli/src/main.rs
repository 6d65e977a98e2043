//! `lobregime` — replay a normalized orderbook feed, fit Markov-switching
//! liquidity regimes, and run the high-variance-regime delay signal.
//!
//! Exit codes: 0 success; 1 usage, i/o or data errors; 2 no observations;
//! 3 fit did not converge (best-effort model still written); 4 a state
//! starved during fitting.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "lobregime", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Flat key=value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a feed file into per-side band-liquidity series.
    Extract {
        #[command(flatten)]
        common: CommonArgs,
        /// Feed file in the normalized message format.
        #[arg(long)]
        input: PathBuf,
        /// Output series path; with --side both, `.bid`/`.ask` is inserted
        /// before the extension.
        #[arg(long)]
        out: PathBuf,
        /// bid, ask or both.
        #[arg(long)]
        side: Option<config::SideChoice>,
        /// raw, log1p or zscore.
        #[arg(long)]
        transform: Option<lobregime::series::Transform>,
        #[arg(long)]
        band_ticks: Option<i64>,
        /// Abort on the first malformed record or timestamp regression.
        #[arg(long, conflicts_with = "lenient")]
        strict: bool,
        /// Skip and count bad records instead of aborting.
        #[arg(long)]
        lenient: bool,
    },
    /// Fit a K-state Markov-switching regression to a series file.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        input: PathBuf,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        sigma_floor: Option<f64>,
    },
    /// Run the delay-signal detector over a series with a fitted model.
    Detect {
        #[command(flatten)]
        common: CommonArgs,
        /// Series file (must carry the same transform the model was fit on).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Per-observation event stream output.
        #[arg(long)]
        events: PathBuf,
        /// Key:value report output; a `.json` sibling is written as well.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        delay_ms: Option<u64>,
        /// 1-based state to watch; defaults to K, the max-variance state.
        #[arg(long)]
        state_index: Option<usize>,
    },
    /// Draw a synthetic series (plus state path) from a simulation spec.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Spec file: a model document with t / seed / y0 / dbam_model keys.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// State-path output; defaults to `<out>.states`.
        #[arg(long)]
        states: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        t: Option<usize>,
    },
    /// Recompute a signal report from an events file.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        events: PathBuf,
        /// Optional key:value output path (stdout otherwise); a `.json`
        /// sibling is written when set.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(common: &CommonArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Extract {
            common,
            input,
            out,
            side,
            transform,
            band_ticks,
            strict,
            lenient,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(side) = side {
                cfg.side = side;
            }
            if let Some(transform) = transform {
                cfg.transform = transform;
            }
            if let Some(band_ticks) = band_ticks {
                cfg.band_ticks = band_ticks;
            }
            if strict {
                cfg.strict = true;
            }
            if lenient {
                cfg.strict = false;
            }
            commands::extract::run(&input, &out, &cfg)
        }
        Command::Fit {
            common,
            input,
            out,
            k,
            seed,
            restarts,
            max_iter,
            tol,
            sigma_floor,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(k) = k {
                cfg.k = k;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(restarts) = restarts {
                cfg.restarts = restarts;
            }
            if let Some(max_iter) = max_iter {
                cfg.max_iter = max_iter;
            }
            if let Some(tol) = tol {
                cfg.tol = tol;
            }
            if let Some(sigma_floor) = sigma_floor {
                cfg.sigma_floor = sigma_floor;
            }
            commands::fit::run(&input, &out, &cfg)
        }
        Command::Detect {
            common,
            input,
            model,
            events,
            report,
            threshold,
            delay_ms,
            state_index,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(threshold) = threshold {
                cfg.threshold = threshold;
            }
            if let Some(delay_ms) = delay_ms {
                cfg.delay_ms = delay_ms;
            }
            if state_index.is_some() {
                cfg.state_index = state_index;
            }
            commands::detect::run(&input, &model, &events, &report, &cfg)
        }
        Command::Simulate { common, spec, out, states, seed, t } => {
            let cfg = load_config(&common)?;
            commands::simulate::run(&spec, &out, states.as_deref(), seed, t, &cfg)
        }
        Command::Report { common, events, out } => {
            let _ = load_config(&common)?;
            commands::report::run(&events, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
