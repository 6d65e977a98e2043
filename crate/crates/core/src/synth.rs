//! Ground-truth simulation and brute-force oracles.
//!
//! [`simulate`] runs the switching regression generatively so estimation can
//! be checked against known parameters. [`brute_force_loglik`] and
//! [`brute_force_smoothed`] enumerate every state path on small instances;
//! they share nothing with the filter/smoother implementations beyond the
//! density formula, which makes them independent cross-checks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::regime::{state_mean, RegimeError, RegressionData, SwitchingParams};

const LN_2PI: f64 = 1.837_877_066_409_345_6;

/// Path-enumeration budget: instances with more than this many state paths
/// are refused.
pub const MAX_PATHS: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{states}^{t} state paths exceed the enumeration budget")]
    InstanceTooLarge { states: usize, t: usize },
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Regime(#[from] RegimeError),
}

/// Generator for the exogenous midpoint-change regressor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DbamModel {
    Zeros,
    /// Half-tick move of +-0.125 points with probability `p_move / 2` each,
    /// otherwise zero.
    IidTicks { p_move: f64 },
}

impl Default for DbamModel {
    fn default() -> Self {
        DbamModel::IidTicks { p_move: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct SimSpec {
    pub params: SwitchingParams,
    pub t: usize,
    pub dbam_model: DbamModel,
    pub y0: f64,
    pub seed: u64,
}

impl SimSpec {
    fn validate(&self) -> Result<(), SynthError> {
        self.params.validate()?;
        if self.t < 2 {
            return Err(SynthError::InvalidSpec(format!("t must be at least 2, found {}", self.t)));
        }
        if let DbamModel::IidTicks { p_move } = self.dbam_model {
            if !(0.0..=1.0).contains(&p_move) {
                return Err(SynthError::InvalidSpec(format!("p_move {p_move} outside [0, 1]")));
            }
        }
        if !self.y0.is_finite() {
            return Err(SynthError::InvalidSpec("y0 must be finite".into()));
        }
        Ok(())
    }
}

fn sample_index<R: Rng>(rng: &mut R, dist: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// Draw a state path and observations from the switching regression.
/// Fully reproducible per seed.
pub fn simulate(spec: &SimSpec) -> Result<(Vec<usize>, RegressionData), SynthError> {
    spec.validate()?;
    let p = &spec.params;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut states = Vec::with_capacity(spec.t);
    let mut y = Vec::with_capacity(spec.t);
    let mut y_lag = Vec::with_capacity(spec.t);
    let mut dbam = Vec::with_capacity(spec.t);
    let mut prev_y = spec.y0;
    let mut prev_state: Option<usize> = None;
    for _ in 0..spec.t {
        let state = match prev_state {
            None => sample_index(&mut rng, &p.init_dist),
            Some(s) => sample_index(&mut rng, p.trans_row(s)),
        };
        let db = match spec.dbam_model {
            DbamModel::Zeros => 0.0,
            DbamModel::IidTicks { p_move } => {
                let u: f64 = rng.gen();
                if u < p_move / 2.0 {
                    0.125
                } else if u < p_move {
                    -0.125
                } else {
                    0.0
                }
            }
        };
        let z: f64 = StandardNormal.sample(&mut rng);
        let cur = state_mean(p, state, prev_y, db) + p.sigma[state] * z;
        states.push(state);
        y.push(cur);
        y_lag.push(prev_y);
        dbam.push(db);
        prev_y = cur;
        prev_state = Some(state);
    }
    Ok((states, RegressionData::new(y, y_lag, dbam)?))
}

fn check_budget(k: usize, t: usize) -> Result<(), SynthError> {
    if (k as f64).powi(t as i32) > MAX_PATHS {
        return Err(SynthError::InstanceTooLarge { states: k, t });
    }
    Ok(())
}

/// Per-observation, per-state Gaussian log densities.
fn log_density_table(p: &SwitchingParams, d: &RegressionData) -> Vec<f64> {
    let k = p.num_states();
    let mut table = vec![0.0; d.len() * k];
    for t in 0..d.len() {
        for j in 0..k {
            let z = (d.y()[t] - state_mean(p, j, d.y_lag()[t], d.dbam()[t])) / p.sigma[j];
            table[t * k + j] = -0.5 * z * z - p.sigma[j].ln() - 0.5 * LN_2PI;
        }
    }
    table
}

/// Walk every state path in odometer order, calling back with the path's
/// total log probability (prior plus densities).
fn for_each_path(
    p: &SwitchingParams,
    dens: &[f64],
    t_len: usize,
    mut visit: impl FnMut(&[usize], f64),
) {
    let k = p.num_states();
    let mut path = vec![0usize; t_len];
    loop {
        let mut lp = p.init_dist[path[0]].ln() + dens[path[0]];
        for t in 1..t_len {
            lp += p.trans[path[t - 1] * k + path[t]].ln() + dens[t * k + path[t]];
        }
        visit(&path, lp);
        // Advance the odometer.
        let mut pos = t_len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < k {
                break;
            }
            path[pos] = 0;
        }
    }
}

/// Log-likelihood by summation over all `K^T` state paths.
pub fn brute_force_loglik(p: &SwitchingParams, d: &RegressionData) -> Result<f64, SynthError> {
    let k = p.num_states();
    let t_len = d.len();
    check_budget(k, t_len)?;
    let dens = log_density_table(p, d);
    let mut log_probs = Vec::new();
    for_each_path(p, &dens, t_len, |_, lp| log_probs.push(lp));
    Ok(log_sum_exp(&log_probs))
}

/// Posterior state marginals `P(s_t = j | all data)` by path enumeration;
/// returned as a row-major `T x K` matrix.
pub fn brute_force_smoothed(p: &SwitchingParams, d: &RegressionData) -> Result<Vec<f64>, SynthError> {
    let k = p.num_states();
    let t_len = d.len();
    check_budget(k, t_len)?;
    let dens = log_density_table(p, d);
    let mut log_probs = Vec::new();
    for_each_path(p, &dens, t_len, |_, lp| log_probs.push(lp));
    let total = log_sum_exp(&log_probs);
    let mut marginals = vec![0.0; t_len * k];
    let mut idx = 0;
    for_each_path(p, &dens, t_len, |path, lp| {
        let w = (lp - total).exp();
        for (t, &s) in path.iter().enumerate() {
            marginals[t * k + s] += w;
        }
        debug_assert_eq!(log_probs[idx], lp);
        idx += 1;
    });
    Ok(marginals)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
