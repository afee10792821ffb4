//! Deterministic equivalents: the coupled system for t_i(-rho), t~_j(-rho)
//! and the closed-form first-order approximation V_n(rho) of the normalized
//! log-determinant statistic.
//!
//! The solver is a damped fixed-point iteration on the N-vector t; t~ is
//! recovered from t after convergence and both are checked against the
//! coupled system.

use ndarray::Array1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::profile::VarianceProfile;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Solved deterministic-equivalent vectors at z = -rho.
#[derive(Debug, Clone, Serialize)]
pub struct DeterministicEquivalent {
    pub rho: f64,
    /// t_i(-rho), length N.
    pub t: Vec<f64>,
    /// t~_j(-rho), length n.
    pub t_tilde: Vec<f64>,
    /// Max absolute fixed-point residual at convergence.
    pub residual: f64,
    pub iterations: usize,
}

impl DeterministicEquivalent {
    pub fn n_rows(&self) -> usize {
        self.t.len()
    }

    pub fn n_cols(&self) -> usize {
        self.t_tilde.len()
    }

    /// (1/N) sum_i t_i, the deterministic Stieltjes-transform value at -rho.
    pub fn m_n(&self) -> f64 {
        self.t.iter().sum::<f64>() / self.t.len() as f64
    }

    /// Deviation from the trace identity sum t - sum t~ = (N - n)/rho.
    pub fn trace_identity_gap(&self) -> f64 {
        let sum_t: f64 = self.t.iter().sum();
        let sum_tt: f64 = self.t_tilde.iter().sum();
        let expected = (self.t.len() as f64 - self.t_tilde.len() as f64) / self.rho;
        (sum_t - sum_tt - expected).abs()
    }
}

/// Column denominators 1 + (1/n) sum_l sigma^2_lj t_l for the current t.
fn column_denominators(profile: &VarianceProfile, t: &Array1<f64>, out: &mut Array1<f64>) {
    let s = profile.sigma_sq();
    let n = profile.n_cols() as f64;
    for j in 0..profile.n_cols() {
        let mut acc = 0.0;
        for i in 0..profile.n_rows() {
            acc += s[[i, j]] * t[i];
        }
        out[j] = 1.0 + acc / n;
    }
}

/// One application of the fixed-point map: rhs_i(t).
fn apply_map(profile: &VarianceProfile, rho: f64, denom: &Array1<f64>, out: &mut Array1<f64>) {
    let s = profile.sigma_sq();
    let n = profile.n_cols() as f64;
    for i in 0..profile.n_rows() {
        let mut acc = 0.0;
        for j in 0..profile.n_cols() {
            acc += s[[i, j]] / denom[j];
        }
        out[i] = 1.0 / (rho + acc / n);
    }
}

/// Solve the deterministic-equivalent system at z = -rho.
pub fn solve(
    profile: &VarianceProfile,
    rho: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DeterministicEquivalent> {
    let init = Array1::from_elem(profile.n_rows(), 1.0 / rho);
    solve_with_init(profile, rho, tol, max_iter, &init)
}

/// Solve with an explicit starting vector (used to warm-start the chain of
/// solves along the bias quadrature nodes).
pub fn solve_with_init(
    profile: &VarianceProfile,
    rho: f64,
    tol: f64,
    max_iter: usize,
    init: &Array1<f64>,
) -> Result<DeterministicEquivalent> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Validation(format!("rho must be finite and > 0, got {rho}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Validation(format!("tol must be > 0, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Validation("max_iter must be >= 1".into()));
    }
    if init.len() != profile.n_rows() {
        return Err(Error::Dimension(format!(
            "init length {} != N = {}",
            init.len(),
            profile.n_rows()
        )));
    }

    let mut t = init.clone();
    let mut denom = Array1::zeros(profile.n_cols());
    let mut rhs = Array1::zeros(profile.n_rows());
    let mut alpha = 1.0;
    let mut prev_residual = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    for iter in 1..=max_iter {
        iterations = iter;
        column_denominators(profile, &t, &mut denom);
        apply_map(profile, rho, &denom, &mut rhs);
        residual = t
            .iter()
            .zip(rhs.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if residual <= tol {
            t.assign(&rhs);
            break;
        }
        if residual > prev_residual {
            alpha *= 0.5;
        }
        prev_residual = residual;
        for i in 0..t.len() {
            t[i] = (1.0 - alpha) * t[i] + alpha * rhs[i];
        }
    }
    if residual > tol {
        return Err(Error::NonConvergence { residual, iterations });
    }

    // t~_j = 1/(rho (1 + (1/n) Tr D_j T))
    column_denominators(profile, &t, &mut denom);
    let t_tilde: Vec<f64> = denom.iter().map(|&d| 1.0 / (rho * d)).collect();

    Ok(DeterministicEquivalent {
        rho,
        t: t.to_vec(),
        t_tilde,
        residual,
        iterations,
    })
}

/// Max componentwise residual of a solution when substituted back into the
/// defining system (used by tests and by callers that want a cheap recheck).
pub fn residual_of(profile: &VarianceProfile, rho: f64, t: &[f64]) -> f64 {
    let t = Array1::from_vec(t.to_vec());
    let mut denom = Array1::zeros(profile.n_cols());
    let mut rhs = Array1::zeros(profile.n_rows());
    column_denominators(profile, &t, &mut denom);
    apply_map(profile, rho, &denom, &mut rhs);
    t.iter()
        .zip(rhs.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max)
}

/// Closed-form first-order approximation V_n(rho) of E I_n(rho).
pub fn v_n(de: &DeterministicEquivalent, profile: &VarianceProfile) -> Result<f64> {
    let (big_n, n) = (profile.n_rows(), profile.n_cols());
    if de.n_rows() != big_n || de.n_cols() != n {
        return Err(Error::Dimension(format!(
            "solution is {}x{}, profile is {}x{}",
            de.n_rows(),
            de.n_cols(),
            big_n,
            n
        )));
    }
    let s = profile.sigma_sq();
    let t = Array1::from_vec(de.t.clone());
    let mut denom = Array1::zeros(n);
    column_denominators(profile, &t, &mut denom);

    let term1: f64 = -de.t.iter().map(|&ti| ti.ln()).sum::<f64>() / big_n as f64;
    let term2: f64 = denom.iter().map(|&d| d.ln()).sum::<f64>() / big_n as f64;
    let mut cross = 0.0;
    for i in 0..big_n {
        for j in 0..n {
            cross += s[[i, j]] * de.t[i] / denom[j];
        }
    }
    let term3 = cross / (big_n as f64 * n as f64);
    let v = term1 + term2 - term3;
    if !v.is_finite() {
        return Err(Error::Validation(format!("V_n is not finite: {v}")));
    }
    Ok(v)
}

/// The quadratic-root value of every t_i for the constant profile sigma^2 = 1
/// with N = n at rho = 1: the positive root of t^2 + t - 1 = 0.
pub fn marchenko_pastur_t() -> f64 {
    (5.0f64.sqrt() - 1.0) / 2.0
}
