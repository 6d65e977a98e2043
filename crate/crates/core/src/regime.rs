//! K-state Markov-switching Gaussian regression.
//!
//! The observation model draws each sample from one of K regressions of
//! liquidity on its lag and the latest midpoint change,
//!
//! ```text
//! y_t = alpha_j + beta_lag_j * y_{t-1} + beta_dbam_j * dbam_t + eps_j,
//! eps_j ~ N(0, sigma_j),   P(s_t = j | s_{t-1} = i) = trans[i][j],
//! ```
//!
//! with the active regression chosen by a hidden Markov chain. Estimation is
//! EM: the Hamilton filter runs forward producing predicted/filtered state
//! probabilities and the log-likelihood, the Kim smoother runs backward
//! producing full-sample posteriors, and the M-step solves one weighted
//! least-squares problem per state. Densities are combined with per-step
//! normalization (plus a log-domain rescue for degenerate steps) so runs of
//! 10^7 observations never underflow.
//!
//! States carry no intrinsic order, so fitted models are relabeled by
//! ascending `sigma` (ties broken by `alpha`); the last state is always the
//! highest-variance one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::series::LiquidityObservation;

const LN_2PI: f64 = 1.837_877_066_409_345_6;

/// Row-sum / simplex tolerance enforced on parameters.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RegimeError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    /// A filter step's total likelihood underflowed to zero even after the
    /// log-domain rescue.
    #[error("numerical degeneracy at observation {t}")]
    NumericalDegeneracy { t: usize },
    /// A state's posterior weight is too small to identify its three
    /// regression coefficients.
    #[error("state {state} starved: effective weight {weight:.3} < {needed:.3}")]
    StateStarvation { state: usize, weight: f64, needed: f64 },
}

/// Full parameter set of a K-state switching regression.
///
/// `trans` is row-major with `trans[i * k + j] = P(s_t = j | s_{t-1} = i)`.
/// States are indexed `0..K` in this API; reports print them 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingParams {
    pub alpha: Vec<f64>,
    pub beta_lag: Vec<f64>,
    pub beta_dbam: Vec<f64>,
    pub sigma: Vec<f64>,
    pub trans: Vec<f64>,
    pub init_dist: Vec<f64>,
}

impl SwitchingParams {
    pub fn new(
        alpha: Vec<f64>,
        beta_lag: Vec<f64>,
        beta_dbam: Vec<f64>,
        sigma: Vec<f64>,
        trans: Vec<f64>,
        init_dist: Vec<f64>,
    ) -> Result<Self, RegimeError> {
        let params = SwitchingParams { alpha, beta_lag, beta_dbam, sigma, trans, init_dist };
        params.validate()?;
        Ok(params)
    }

    pub fn num_states(&self) -> usize {
        self.alpha.len()
    }

    pub fn trans_row(&self, i: usize) -> &[f64] {
        let k = self.num_states();
        &self.trans[i * k..(i + 1) * k]
    }

    pub fn validate(&self) -> Result<(), RegimeError> {
        let k = self.num_states();
        if k == 0 {
            return Err(RegimeError::InvalidParams("need at least one state".into()));
        }
        for (name, v) in [
            ("alpha", &self.alpha),
            ("beta_lag", &self.beta_lag),
            ("beta_dbam", &self.beta_dbam),
            ("sigma", &self.sigma),
        ] {
            if v.len() != k {
                return Err(RegimeError::InvalidParams(format!(
                    "{name} has {} entries, expected {k}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(RegimeError::InvalidParams(format!("{name} has a non-finite entry")));
            }
        }
        // Zero scales are allowed so simulation specs can describe a
        // noise-free recursion; filtering and fitting require positive
        // scales and check separately.
        if self.sigma.iter().any(|&s| s < 0.0) {
            return Err(RegimeError::InvalidParams("sigma entries must be non-negative".into()));
        }
        if self.trans.len() != k * k {
            return Err(RegimeError::InvalidParams(format!(
                "trans has {} entries, expected {}",
                self.trans.len(),
                k * k
            )));
        }
        for i in 0..k {
            check_simplex(self.trans_row(i), &format!("trans row {i}"))?;
        }
        if self.init_dist.len() != k {
            return Err(RegimeError::InvalidParams("init_dist length mismatch".into()));
        }
        check_simplex(&self.init_dist, "init_dist")?;
        Ok(())
    }
}

fn check_simplex(row: &[f64], what: &str) -> Result<(), RegimeError> {
    if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
        return Err(RegimeError::InvalidParams(format!("{what} has entries outside [0, 1]")));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(RegimeError::InvalidParams(format!("{what} sums to {sum}, expected 1")));
    }
    Ok(())
}

/// Regression mean of state `j` (0-based) at the given regressors.
pub fn state_mean(p: &SwitchingParams, j: usize, y_lag: f64, dbam: f64) -> f64 {
    p.alpha[j] + p.beta_lag[j] * y_lag + p.beta_dbam[j] * dbam
}

/// Estimation sample: `y` regressed on `[1, y_lag, dbam]`.
#[derive(Debug, Clone)]
pub struct RegressionData {
    y: Vec<f64>,
    y_lag: Vec<f64>,
    dbam: Vec<f64>,
}

impl RegressionData {
    pub fn new(y: Vec<f64>, y_lag: Vec<f64>, dbam: Vec<f64>) -> Result<Self, RegimeError> {
        if y.len() != y_lag.len() || y.len() != dbam.len() {
            return Err(RegimeError::InvalidData("column lengths differ".into()));
        }
        if y.len() < 2 {
            return Err(RegimeError::InvalidData(format!(
                "need at least 2 observations, found {}",
                y.len()
            )));
        }
        for col in [&y, &y_lag, &dbam] {
            if col.iter().any(|x| !x.is_finite()) {
                return Err(RegimeError::InvalidData("non-finite value".into()));
            }
        }
        Ok(RegressionData { y, y_lag, dbam })
    }

    pub fn from_observations(obs: &[LiquidityObservation]) -> Result<Self, RegimeError> {
        Self::new(
            obs.iter().map(|o| o.liq).collect(),
            obs.iter().map(|o| o.liq_lag).collect(),
            obs.iter().map(|o| o.dbam).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn y_lag(&self) -> &[f64] {
        &self.y_lag
    }

    pub fn dbam(&self) -> &[f64] {
        &self.dbam
    }
}

/// Forward-pass output: `predicted[t]` conditions on data through `t-1`,
/// `filtered[t]` on data through `t`. Both are `T x K` row-major simplices.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub k: usize,
    pub predicted: Vec<f64>,
    pub filtered: Vec<f64>,
    pub loglik: f64,
}

impl FilterResult {
    pub fn len(&self) -> usize {
        self.filtered.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.filtered.is_empty()
    }

    pub fn predicted_row(&self, t: usize) -> &[f64] {
        &self.predicted[t * self.k..(t + 1) * self.k]
    }

    pub fn filtered_row(&self, t: usize) -> &[f64] {
        &self.filtered[t * self.k..(t + 1) * self.k]
    }
}

/// Backward-pass output: full-sample state posteriors and the pairwise
/// joint posteriors `P(s_t = i, s_{t+1} = j | all data)`.
#[derive(Debug, Clone)]
pub struct SmoothResult {
    pub k: usize,
    pub smoothed: Vec<f64>,
    /// `(T-1) x K x K`, indexed `[t * k * k + i * k + j]`.
    pub pairwise: Vec<f64>,
}

impl SmoothResult {
    pub fn len(&self) -> usize {
        self.smoothed.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.smoothed.is_empty()
    }

    pub fn smoothed_row(&self, t: usize) -> &[f64] {
        &self.smoothed[t * self.k..(t + 1) * self.k]
    }

    pub fn pairwise_slice(&self, t: usize) -> &[f64] {
        let kk = self.k * self.k;
        &self.pairwise[t * kk..(t + 1) * kk]
    }
}

fn require_positive_sigma(p: &SwitchingParams) -> Result<(), RegimeError> {
    if p.sigma.iter().any(|&s| s <= 0.0) {
        return Err(RegimeError::InvalidParams(
            "sigma entries must be positive for filtering".into(),
        ));
    }
    Ok(())
}

/// Per-state density terms precomputed once per parameter set.
struct EmissionCache {
    inv_sigma: Vec<f64>,
    /// `-(ln sigma + 0.5 ln 2pi)` per state.
    log_norm: Vec<f64>,
}

impl EmissionCache {
    fn new(p: &SwitchingParams) -> Self {
        EmissionCache {
            inv_sigma: p.sigma.iter().map(|s| 1.0 / s).collect(),
            log_norm: p.sigma.iter().map(|s| -(s.ln() + 0.5 * LN_2PI)).collect(),
        }
    }

    #[inline]
    fn log_densities(&self, p: &SwitchingParams, y: f64, y_lag: f64, dbam: f64, out: &mut [f64]) {
        for (j, slot) in out.iter_mut().enumerate() {
            let z = (y - (p.alpha[j] + p.beta_lag[j] * y_lag + p.beta_dbam[j] * dbam))
                * self.inv_sigma[j];
            *slot = self.log_norm[j] - 0.5 * z * z;
        }
    }
}

/// `out[j] = sum_i filtered[i] * trans[i][j]`.
#[inline]
fn predict_into(trans: &[f64], k: usize, filtered: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for i in 0..k {
        let w = filtered[i];
        let row = &trans[i * k..(i + 1) * k];
        for j in 0..k {
            out[j] += w * row[j];
        }
    }
}

/// Combine a predicted distribution with per-state log densities; writes the
/// filtered distribution into `out` and returns the loglik increment.
///
/// The fast path rescales by the max log density; if the step still
/// underflows (predicted mass disjoint from density mass) it retries fully
/// in the log domain before reporting degeneracy.
fn correct_step(predicted: &[f64], log_dens: &[f64], out: &mut [f64], t: usize) -> Result<f64, RegimeError> {
    let mut max_ld = f64::NEG_INFINITY;
    for &ld in log_dens {
        if ld > max_ld {
            max_ld = ld;
        }
    }
    let mut total = 0.0;
    for ((slot, &p), &ld) in out.iter_mut().zip(predicted).zip(log_dens) {
        let w = p * (ld - max_ld).exp();
        *slot = w;
        total += w;
    }
    if total >= f64::MIN_POSITIVE && total.is_finite() {
        let inv = 1.0 / total;
        for w in out.iter_mut() {
            *w *= inv;
        }
        return Ok(max_ld + total.ln());
    }
    // Log-domain rescue.
    let mut max_lw = f64::NEG_INFINITY;
    for ((slot, &p), &ld) in out.iter_mut().zip(predicted).zip(log_dens) {
        let lw = p.ln() + ld;
        *slot = lw;
        if lw > max_lw {
            max_lw = lw;
        }
    }
    if !max_lw.is_finite() {
        return Err(RegimeError::NumericalDegeneracy { t });
    }
    let mut total = 0.0;
    for slot in out.iter_mut() {
        let w = (*slot - max_lw).exp();
        *slot = w;
        total += w;
    }
    let inv = 1.0 / total;
    for w in out.iter_mut() {
        *w *= inv;
    }
    Ok(max_lw + total.ln())
}

/// Run the Hamilton filter over the whole sample.
///
/// `predicted[0]` is the initial distribution; later rows are one-step
/// chain predictions from the previous filtered row. The log-likelihood is
/// accumulated from the per-step normalizers.
pub fn hamilton_filter(p: &SwitchingParams, d: &RegressionData) -> Result<FilterResult, RegimeError> {
    require_positive_sigma(p)?;
    let k = p.num_states();
    let t_len = d.len();
    let emission = EmissionCache::new(p);
    let mut predicted = vec![0.0; t_len * k];
    let mut filtered = vec![0.0; t_len * k];
    let mut log_dens = vec![0.0; k];
    let mut loglik = 0.0;
    for t in 0..t_len {
        let pred_row = &mut predicted[t * k..(t + 1) * k];
        if t == 0 {
            pred_row.copy_from_slice(&p.init_dist);
        } else {
            let (prev, curr) = filtered.split_at_mut(t * k);
            let _ = curr;
            predict_into(&p.trans, k, &prev[(t - 1) * k..], pred_row);
        }
        emission.log_densities(p, d.y[t], d.y_lag[t], d.dbam[t], &mut log_dens);
        let filt_row = &mut filtered[t * k..(t + 1) * k];
        loglik += correct_step(pred_row, &log_dens, filt_row, t)?;
    }
    Ok(FilterResult { k, predicted, filtered, loglik })
}

/// One mid-stream filter update: predict from `prob` through the transition
/// matrix, then correct with the observation. Returns the new filtered
/// distribution and the loglik increment.
///
/// The first observation of a series conditions on `init_dist` instead of a
/// chain prediction; [`OnlineFilter`] handles that seam and reproduces
/// [`hamilton_filter`] exactly when folded over the same data.
pub fn filter_step(
    p: &SwitchingParams,
    prob: &[f64],
    y: f64,
    y_lag: f64,
    dbam: f64,
) -> Result<(Vec<f64>, f64), RegimeError> {
    require_positive_sigma(p)?;
    let k = p.num_states();
    assert_eq!(prob.len(), k, "prob length must match the state count");
    let emission = EmissionCache::new(p);
    let mut pred = vec![0.0; k];
    let mut dens = vec![0.0; k];
    let mut out = vec![0.0; k];
    predict_into(&p.trans, k, prob, &mut pred);
    emission.log_densities(p, y, y_lag, dbam, &mut dens);
    let increment = correct_step(&pred, &dens, &mut out, 0)?;
    Ok((out, increment))
}

/// Streaming form of the Hamilton filter: feed observations one at a time.
pub struct OnlineFilter<'p> {
    params: &'p SwitchingParams,
    emission: EmissionCache,
    prob: Vec<f64>,
    pred: Vec<f64>,
    dens: Vec<f64>,
    steps: usize,
    loglik: f64,
}

impl<'p> OnlineFilter<'p> {
    pub fn new(params: &'p SwitchingParams) -> Result<Self, RegimeError> {
        require_positive_sigma(params)?;
        let k = params.num_states();
        Ok(OnlineFilter {
            params,
            emission: EmissionCache::new(params),
            prob: vec![0.0; k],
            pred: vec![0.0; k],
            dens: vec![0.0; k],
            steps: 0,
            loglik: 0.0,
        })
    }

    /// Consume one observation; returns the loglik increment.
    pub fn step(&mut self, y: f64, y_lag: f64, dbam: f64) -> Result<f64, RegimeError> {
        let k = self.params.num_states();
        if self.steps == 0 {
            self.pred.copy_from_slice(&self.params.init_dist);
        } else {
            predict_into(&self.params.trans, k, &self.prob, &mut self.pred);
        }
        self.emission.log_densities(self.params, y, y_lag, dbam, &mut self.dens);
        let increment = correct_step(&self.pred, &self.dens, &mut self.prob, self.steps)?;
        self.steps += 1;
        self.loglik += increment;
        Ok(increment)
    }

    /// Current filtered distribution (after the last step).
    pub fn prob(&self) -> &[f64] {
        &self.prob
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Kim smoother: backward recursion over a filter result.
///
/// `smoothed[T-1]` equals the last filtered row; earlier rows reweight by
/// `sum_j trans[i][j] * smoothed[t+1][j] / predicted[t+1][j]`. Zero predicted
/// entries are floored at the smallest positive normal, which maps the
/// accompanying zero posteriors to zero instead of 0/0.
pub fn kim_smoother(p: &SwitchingParams, f: &FilterResult) -> Result<SmoothResult, RegimeError> {
    let k = f.k;
    let t_len = f.len();
    if t_len == 0 {
        return Err(RegimeError::InvalidData("empty filter result".into()));
    }
    let mut smoothed = vec![0.0; t_len * k];
    let mut pairwise = vec![0.0; t_len.saturating_sub(1) * k * k];
    smoothed[(t_len - 1) * k..].copy_from_slice(f.filtered_row(t_len - 1));
    let mut ratio = vec![0.0; k];
    for t in (0..t_len - 1).rev() {
        for j in 0..k {
            let pred = f.predicted[(t + 1) * k + j].max(f64::MIN_POSITIVE);
            ratio[j] = smoothed[(t + 1) * k + j] / pred;
        }
        let filt = f.filtered_row(t);
        let pair = &mut pairwise[t * k * k..(t + 1) * k * k];
        for i in 0..k {
            let row = p.trans_row(i);
            let mut acc = 0.0;
            for j in 0..k {
                let flow = row[j] * ratio[j];
                pair[i * k + j] = filt[i] * flow;
                acc += flow;
            }
            smoothed[t * k + i] = filt[i] * acc;
        }
    }
    Ok(SmoothResult { k, smoothed, pairwise })
}

/// Per-state weighted regression result.
#[derive(Debug, Clone, Copy)]
pub struct WlsFit {
    pub alpha: f64,
    pub beta_lag: f64,
    pub beta_dbam: f64,
    /// Weighted residual scale, not floored.
    pub sigma: f64,
    /// Total weight that went into the fit.
    pub weight: f64,
}

/// Weighted least squares of `y` on `[1, y_lag, dbam]`.
///
/// A collinear or absent regressor (e.g. `dbam` identically zero) gets a
/// zero coefficient rather than failing the solve.
#[allow(clippy::needless_range_loop)]
pub fn weighted_least_squares(d: &RegressionData, weights: &[f64]) -> Result<WlsFit, RegimeError> {
    if weights.len() != d.len() {
        return Err(RegimeError::InvalidData("weights length mismatch".into()));
    }
    let mut s = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    let mut weight = 0.0;
    for t in 0..d.len() {
        let w = weights[t];
        if w == 0.0 {
            continue;
        }
        let x = [1.0, d.y_lag[t], d.dbam[t]];
        let y = d.y[t];
        weight += w;
        for r in 0..3 {
            let wxr = w * x[r];
            for c in r..3 {
                s[r][c] += wxr * x[c];
            }
            b[r] += wxr * y;
        }
    }
    for r in 0..3 {
        for c in 0..r {
            s[r][c] = s[c][r];
        }
    }
    let coef = solve_dropping(s, b);
    let mut rss = 0.0;
    for t in 0..d.len() {
        let w = weights[t];
        if w == 0.0 {
            continue;
        }
        let e = d.y[t] - (coef[0] + coef[1] * d.y_lag[t] + coef[2] * d.dbam[t]);
        rss += w * e * e;
    }
    let sigma = if weight > 0.0 { (rss / weight).sqrt() } else { 0.0 };
    Ok(WlsFit {
        alpha: coef[0],
        beta_lag: coef[1],
        beta_dbam: coef[2],
        sigma,
        weight,
    })
}

/// 3x3 symmetric solve by Gaussian elimination with partial pivoting.
/// Near-zero pivots drop the corresponding coefficient to zero.
#[allow(clippy::needless_range_loop)]
fn solve_dropping(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    const N: usize = 3;
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let tol = scale * 1e-12;
    let mut cols = [0usize, 1, 2];
    let mut x = [0.0f64; 3];
    let mut dropped = [false; 3];
    for step in 0..N {
        // Pick the remaining row with the largest pivot in its own column.
        let mut best = step;
        for r in step..N {
            if a[r][cols[r]].abs() > a[best][cols[best]].abs() {
                best = r;
            }
        }
        a.swap(step, best);
        b.swap(step, best);
        cols.swap(step, best);
        let pivot = a[step][cols[step]];
        if pivot.abs() <= tol {
            dropped[cols[step]] = true;
            continue;
        }
        for r in (step + 1)..N {
            let factor = a[r][cols[step]] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in 0..N {
                a[r][c] -= factor * a[step][c];
            }
            b[r] -= factor * b[step];
        }
    }
    for step in (0..N).rev() {
        let col = cols[step];
        if dropped[col] {
            x[col] = 0.0;
            continue;
        }
        let mut rhs = b[step];
        for c in 0..N {
            if c != col {
                rhs -= a[step][c] * x[c];
            }
        }
        x[col] = rhs / a[step][col];
    }
    x
}

/// One EM update. Returns the new parameters and the log-likelihood of the
/// *input* parameters (the E-step's value), so a sequence of calls yields a
/// non-decreasing log-likelihood trace.
pub fn em_step(
    p: &SwitchingParams,
    d: &RegressionData,
    sigma_floor: f64,
) -> Result<(SwitchingParams, f64), RegimeError> {
    let k = p.num_states();
    let t_len = d.len();
    let filter = hamilton_filter(p, d)?;
    let smooth = kim_smoother(p, &filter)?;

    let needed = 3.0 * k as f64;
    let mut weights = vec![0.0; t_len];
    let mut alpha = vec![0.0; k];
    let mut beta_lag = vec![0.0; k];
    let mut beta_dbam = vec![0.0; k];
    let mut sigma = vec![0.0; k];
    for j in 0..k {
        for (t, w) in weights.iter_mut().enumerate() {
            *w = smooth.smoothed[t * k + j];
        }
        let total: f64 = weights.iter().sum();
        if total < needed {
            return Err(RegimeError::StateStarvation { state: j, weight: total, needed });
        }
        let fit = weighted_least_squares(d, &weights)?;
        alpha[j] = fit.alpha;
        beta_lag[j] = fit.beta_lag;
        beta_dbam[j] = fit.beta_dbam;
        sigma[j] = fit.sigma.max(sigma_floor);
    }

    // Expected transition counts -> row-normalized transition matrix.
    let mut trans = vec![0.0; k * k];
    let kk = k * k;
    for t in 0..t_len - 1 {
        let pair = &smooth.pairwise[t * kk..(t + 1) * kk];
        for (acc, &x) in trans.iter_mut().zip(pair) {
            *acc += x;
        }
    }
    for i in 0..k {
        let row = &mut trans[i * k..(i + 1) * k];
        let row_sum: f64 = row.iter().sum();
        if row_sum <= 0.0 {
            return Err(RegimeError::StateStarvation { state: i, weight: row_sum, needed });
        }
        for x in row.iter_mut() {
            *x /= row_sum;
        }
    }

    let mut init_dist = smooth.smoothed_row(0).to_vec();
    let init_sum: f64 = init_dist.iter().sum();
    for x in init_dist.iter_mut() {
        *x /= init_sum;
    }

    let next = SwitchingParams::new(alpha, beta_lag, beta_dbam, sigma, trans, init_dist)?;
    Ok((next, filter.loglik))
}

/// How states are ordered after fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelRule {
    /// Ascending residual scale, ties broken by ascending intercept; the
    /// last state is the highest-variance one.
    #[default]
    SigmaAscending,
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Relative loglik change declaring convergence.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
    pub sigma_floor: f64,
    pub label_rule: LabelRule,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iter: 500,
            tol: 1e-8,
            restarts: 8,
            seed: 0,
            sigma_floor: 1e-6,
            label_rule: LabelRule::SigmaAscending,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), RegimeError> {
        if self.max_iter < 1 {
            return Err(RegimeError::InvalidParams("max_iter must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(RegimeError::InvalidParams("tol must be positive".into()));
        }
        if self.restarts < 1 {
            return Err(RegimeError::InvalidParams("restarts must be at least 1".into()));
        }
        if self.sigma_floor.is_nan() || self.sigma_floor <= 0.0 {
            return Err(RegimeError::InvalidParams("sigma_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one EM chain.
#[derive(Debug, Clone)]
pub struct RestartReport {
    pub restart: usize,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Present when the chain aborted (e.g. state starvation).
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FitDiagnostics {
    pub restarts: Vec<RestartReport>,
    pub best_restart: usize,
    /// Whether the returned (best) chain met the tolerance.
    pub converged: bool,
    pub loglik: f64,
}

/// Fit a K-state model by multi-start EM and return canonically labeled
/// parameters.
///
/// Restarts run as independent seeded chains (evaluated in parallel); the
/// highest final log-likelihood wins, with the restart index as a
/// deterministic tie-break, so results do not depend on scheduling. A fit
/// where no chain converged still returns its best parameters with
/// `converged = false` in the diagnostics.
pub fn fit(
    d: &RegressionData,
    k: usize,
    cfg: &FitConfig,
) -> Result<(SwitchingParams, FitDiagnostics), RegimeError> {
    cfg.validate()?;
    if k < 1 {
        return Err(RegimeError::InvalidParams("k must be at least 1".into()));
    }
    if d.len() < 50 * k {
        return Err(RegimeError::InvalidData(format!(
            "need at least {} observations for k = {k}, found {}",
            50 * k,
            d.len()
        )));
    }

    let mut results: Vec<(RestartReport, Result<SwitchingParams, RegimeError>)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(d, k, cfg, r))
        .collect();

    let mut best: Option<usize> = None;
    for (idx, (report, params)) in results.iter().enumerate() {
        if params.is_err() {
            continue;
        }
        let better = match best {
            None => true,
            Some(cur) => report.loglik > results[cur].0.loglik,
        };
        if better {
            best = Some(idx);
        }
    }
    let best = match best {
        Some(idx) => idx,
        // Every restart failed; surface the first failure as-is.
        None => return Err(results.swap_remove(0).1.unwrap_err()),
    };

    let reports: Vec<RestartReport> = results.iter().map(|(r, _)| r.clone()).collect();
    let diagnostics = FitDiagnostics {
        best_restart: best,
        converged: reports[best].converged,
        loglik: reports[best].loglik,
        restarts: reports,
    };
    let fitted = results.swap_remove(best).1.expect("best restart has parameters");
    let canonical = match cfg.label_rule {
        LabelRule::SigmaAscending => canonicalize(&fitted).0,
    };
    Ok((canonical, diagnostics))
}

fn run_restart(
    d: &RegressionData,
    k: usize,
    cfg: &FitConfig,
    restart: usize,
) -> (RestartReport, Result<SwitchingParams, RegimeError>) {
    let mut report = RestartReport {
        restart,
        loglik: f64::NEG_INFINITY,
        iterations: 0,
        converged: false,
        error: None,
    };
    let mut params = match initial_params(d, k, cfg, restart) {
        Ok(p) => p,
        Err(err) => {
            report.error = Some(err.to_string());
            return (report, Err(err));
        }
    };
    let mut prev_ll = f64::NEG_INFINITY;
    for iter in 0..cfg.max_iter {
        let (next, ll) = match em_step(&params, d, cfg.sigma_floor) {
            Ok(out) => out,
            Err(err) => {
                report.error = Some(err.to_string());
                return (report, Err(err));
            }
        };
        params = next;
        report.iterations = iter + 1;
        if prev_ll.is_finite() && (ll - prev_ll).abs() / (1.0 + prev_ll.abs()) < cfg.tol {
            report.converged = true;
            break;
        }
        prev_ll = ll;
    }
    match hamilton_filter(&params, d) {
        Ok(f) => {
            report.loglik = f.loglik;
            (report, Ok(params))
        }
        Err(err) => {
            report.error = Some(err.to_string());
            (report, Err(err))
        }
    }
}

/// Quantile-sliced initialization: rank observations by the magnitude of
/// their whole-sample OLS residual, fit one OLS per slice, and (for restarts
/// past the first) jitter the slice estimates.
fn initial_params(
    d: &RegressionData,
    k: usize,
    cfg: &FitConfig,
    restart: usize,
) -> Result<SwitchingParams, RegimeError> {
    let t_len = d.len();
    let ones = vec![1.0; t_len];
    let base = weighted_least_squares(d, &ones)?;
    let mut order: Vec<u32> = (0..t_len as u32).collect();
    let abs_resid: Vec<f64> = (0..t_len)
        .map(|t| {
            (d.y[t] - (base.alpha + base.beta_lag * d.y_lag[t] + base.beta_dbam * d.dbam[t])).abs()
        })
        .collect();
    order.sort_by(|&a, &b| abs_resid[a as usize].total_cmp(&abs_resid[b as usize]));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64 + 1);
    let jitter_scale = if restart == 0 { 0.0 } else { 0.05 };
    let resid_sd = base.sigma.max(cfg.sigma_floor);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    let mut alpha = vec![0.0; k];
    let mut beta_lag = vec![0.0; k];
    let mut beta_dbam = vec![0.0; k];
    let mut sigma = vec![0.0; k];
    let mut weights = vec![0.0; t_len];
    for j in 0..k {
        let lo = j * t_len / k;
        let hi = (j + 1) * t_len / k;
        weights.fill(0.0);
        for &t in &order[lo..hi] {
            weights[t as usize] = 1.0;
        }
        let slice = weighted_least_squares(d, &weights)?;
        alpha[j] = slice.alpha + jitter_scale * resid_sd * normal();
        beta_lag[j] = slice.beta_lag + jitter_scale * normal();
        beta_dbam[j] = slice.beta_dbam + jitter_scale * normal();
        let jittered = slice.sigma * (1.0 + 5.0 * jitter_scale * normal()).abs();
        sigma[j] = jittered.max(cfg.sigma_floor);
    }

    let trans = diagonal_transition(k, 0.95);
    let init_dist = stationary_distribution(&trans, k).unwrap_or_else(|| vec![1.0 / k as f64; k]);
    SwitchingParams::new(alpha, beta_lag, beta_dbam, sigma, trans, init_dist)
}

/// Row-stochastic matrix with `diag` on the diagonal and the remainder
/// spread uniformly off-diagonal.
pub fn diagonal_transition(k: usize, diag: f64) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    let off = (1.0 - diag) / (k - 1) as f64;
    let mut trans = vec![off; k * k];
    for i in 0..k {
        trans[i * k + i] = diag;
    }
    trans
}

/// Stationary distribution of a row-stochastic matrix, or `None` when the
/// chain is reducible enough to make it non-unique.
pub fn stationary_distribution(trans: &[f64], k: usize) -> Option<Vec<f64>> {
    assert_eq!(trans.len(), k * k);
    // Solve (P^T - I) pi = 0 with the last equation replaced by sum = 1.
    let mut a = vec![0.0; k * k];
    let mut b = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            a[i * k + j] = trans[j * k + i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for j in 0..k {
        a[(k - 1) * k + j] = 1.0;
    }
    b[k - 1] = 1.0;
    solve_linear(&mut a, &mut b, k)?;
    let mut total = 0.0;
    for x in b.iter_mut() {
        *x = x.max(0.0);
        total += *x;
    }
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    for x in b.iter_mut() {
        *x /= total;
    }
    Some(b)
}

/// In-place Gaussian elimination with partial pivoting; `None` on a
/// (near-)singular system.
#[allow(clippy::needless_range_loop)]
fn solve_linear(a: &mut [f64], b: &mut [f64], n: usize) -> Option<()> {
    let scale = a.iter().fold(0.0f64, |m, &v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let mut pivot_row = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[pivot_row * n + col].abs() {
                pivot_row = r;
            }
        }
        if a[pivot_row * n + col].abs() <= scale * 1e-13 {
            return None;
        }
        if pivot_row != col {
            for c in 0..n {
                a.swap(col * n + c, pivot_row * n + c);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for r in col + 1..n {
            let factor = a[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= factor * a[col * n + c];
            }
            b[r] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut rhs = b[col];
        for c in col + 1..n {
            rhs -= a[col * n + c] * b[c];
        }
        b[col] = rhs / a[col * n + col];
    }
    Some(())
}

/// Permutation that sorts states by ascending `sigma`, ties broken by
/// ascending `alpha`; `perm[new] = old`.
pub fn canonical_permutation(p: &SwitchingParams) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.num_states()).collect();
    order.sort_by(|&a, &b| {
        p.sigma[a]
            .total_cmp(&p.sigma[b])
            .then(p.alpha[a].total_cmp(&p.alpha[b]))
    });
    order
}

/// Relabel states into canonical order. Returns the relabeled parameters
/// and the permutation applied (`perm[new] = old`), which can be used to
/// permute probability matrices via [`permute_prob_columns`].
pub fn canonicalize(p: &SwitchingParams) -> (SwitchingParams, Vec<usize>) {
    let perm = canonical_permutation(p);
    (apply_permutation(p, &perm), perm)
}

/// Apply a state permutation (`perm[new] = old`) to a parameter set.
pub fn apply_permutation(p: &SwitchingParams, perm: &[usize]) -> SwitchingParams {
    let k = p.num_states();
    assert_eq!(perm.len(), k);
    let pick = |v: &[f64]| -> Vec<f64> { perm.iter().map(|&old| v[old]).collect() };
    let mut trans = vec![0.0; k * k];
    for (new_i, &old_i) in perm.iter().enumerate() {
        for (new_j, &old_j) in perm.iter().enumerate() {
            trans[new_i * k + new_j] = p.trans[old_i * k + old_j];
        }
    }
    SwitchingParams {
        alpha: pick(&p.alpha),
        beta_lag: pick(&p.beta_lag),
        beta_dbam: pick(&p.beta_dbam),
        sigma: pick(&p.sigma),
        trans,
        init_dist: pick(&p.init_dist),
    }
}

/// Reorder the columns of a row-major `T x K` probability matrix to match a
/// state permutation (`perm[new] = old`).
pub fn permute_prob_columns(mat: &mut [f64], k: usize, perm: &[usize]) {
    assert_eq!(perm.len(), k);
    let mut buf = vec![0.0; k];
    for row in mat.chunks_exact_mut(k) {
        buf.copy_from_slice(row);
        for (new, &old) in perm.iter().enumerate() {
            row[new] = buf[old];
        }
    }
}
