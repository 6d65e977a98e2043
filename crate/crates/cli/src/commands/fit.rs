use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{Context, Result};
use lobregime::model::{format_f64, write_model, ModelDocument};
use lobregime::regime::{fit, FitDiagnostics, RegimeError, RegressionData, SwitchingParams};
use lobregime::series::read_series;

use crate::config::RunConfig;

pub fn run(input: &Path, out: &Path, cfg: &RunConfig) -> Result<i32> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let series = read_series(BufReader::new(file))?;
    if series.observations.is_empty() {
        eprintln!("no observations in {}", input.display());
        return Ok(2);
    }
    let data = RegressionData::from_observations(&series.observations)?;
    let (params, diagnostics) = match fit(&data, cfg.k, &cfg.fit_config()) {
        Ok(result) => result,
        Err(err @ RegimeError::StateStarvation { .. }) => {
            eprintln!("error: {err}");
            return Ok(4);
        }
        Err(err) => return Err(err.into()),
    };

    let mut doc = ModelDocument::new(params.clone());
    // Echo the data provenance recorded in the series header.
    for key in ["transform", "band_ticks", "side"] {
        if let Some(value) = series.header_value(key) {
            doc = doc.with_meta(key, value);
        }
    }
    for (key, value) in cfg.echo_pairs("fit") {
        doc = doc.with_meta(&key, value);
    }
    doc = doc
        .with_meta("seed", cfg.seed)
        .with_meta("restarts", cfg.restarts)
        .with_meta("max_iter", cfg.max_iter)
        .with_meta("tol", format_f64(cfg.tol))
        .with_meta("sigma_floor", format_f64(cfg.sigma_floor))
        .with_meta("loglik", format_f64(diagnostics.loglik))
        .with_meta("converged", diagnostics.converged)
        .with_meta("best_restart", diagnostics.best_restart)
        .with_meta("restart_logliks", join(diagnostics.restarts.iter().map(|r| format_f64(r.loglik))))
        .with_meta("restart_iterations", join(diagnostics.restarts.iter().map(|r| r.iterations.to_string())))
        .with_meta(
            "restart_converged",
            join(diagnostics.restarts.iter().map(|r| u8::from(r.converged).to_string())),
        );
    let writer =
        BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    write_model(writer, &doc)?;

    print_summary(&params, &diagnostics);
    println!("model -> {}", out.display());
    if !diagnostics.converged {
        eprintln!(
            "warning: no restart met tol={} within {} iterations; best-effort model written",
            cfg.tol, cfg.max_iter
        );
        return Ok(3);
    }
    Ok(0)
}

fn join(parts: impl Iterator<Item = String>) -> String {
    parts.collect::<Vec<_>>().join(",")
}

fn print_summary(params: &SwitchingParams, diagnostics: &FitDiagnostics) {
    println!(
        "{:>5}  {:>10}  {:>10}  {:>10}  {:>10}",
        "state", "alpha", "beta_lag", "beta_dbam", "sigma"
    );
    for j in 0..params.num_states() {
        println!(
            "{:>5}  {:>10.4}  {:>10.4}  {:>10.4}  {:>10.4}",
            j + 1,
            params.alpha[j],
            params.beta_lag[j],
            params.beta_dbam[j],
            params.sigma[j]
        );
    }
    let best = &diagnostics.restarts[diagnostics.best_restart];
    println!(
        "log-likelihood {:.4}; best of {} restarts converged={} after {} iterations",
        diagnostics.loglik,
        diagnostics.restarts.len(),
        best.converged,
        best.iterations
    );
}
