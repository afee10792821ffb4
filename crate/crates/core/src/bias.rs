//! CLT bias B_n(rho) = integral over omega in [rho, inf) of beta_n(omega),
//! where beta_n is the normalized sum of the w-vector solving the linear
//! system (I - A_n(omega)) w = p(omega).
//!
//! The integrand is linear in kappa, so it is evaluated once at kappa = 1 and
//! scaled. Each quadrature node needs a deterministic-equivalent solve at
//! shift omega; the solves are warm-started along the node chain.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::detequiv::{self, DeterministicEquivalent};
use crate::error::{Error, Result};
use crate::fluctuation;
use crate::linalg::Lu;
use crate::profile::VarianceProfile;
use crate::quad::PanelRule;

/// Quadrature configuration for the semi-infinite bias integral.
#[derive(Debug, Clone, Serialize)]
pub struct QuadratureConfig {
    /// Truncation point Omega; defaults to max(100 rho, 100).
    pub omega_max: Option<f64>,
    /// Gauss-Legendre order per panel.
    pub gl_order: usize,
    /// Panel count of the coarsest pass; doubled on each refinement.
    pub initial_panels: usize,
    /// Stop refining once the integral changes by less than this.
    pub tol: f64,
    pub max_refine: usize,
    /// Solver settings for the per-node deterministic-equivalent solves.
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            omega_max: None,
            gl_order: 8,
            initial_panels: 8,
            tol: 1e-9,
            max_refine: 6,
            solver_tol: 1e-12,
            solver_max_iter: 10_000,
        }
    }
}

/// The integrated bias with its per-node integrand samples.
#[derive(Debug, Clone, Serialize)]
pub struct BiasResult {
    pub rho: f64,
    /// Quadrature abscissae omega >= rho (final refinement pass).
    pub nodes: Vec<f64>,
    /// beta_n(omega) at the nodes, at the requested kappa.
    pub beta: Vec<f64>,
    /// Integral of beta_n over [rho, Omega].
    pub b_n: f64,
    /// K'/(2 Omega^2) with K' fitted from the |beta| <= K'/omega^3 decay.
    pub tail_bound: f64,
    pub kappa_used: f64,
}

/// The p-vector of the bias system at shift omega (`de_omega.rho` is omega).
pub fn p_vector(
    de_omega: &DeterministicEquivalent,
    profile: &VarianceProfile,
    kappa: f64,
) -> Result<Array1<f64>> {
    let (big_n, n) = (profile.n_rows(), profile.n_cols());
    if de_omega.n_rows() != big_n || de_omega.n_cols() != n {
        return Err(Error::Dimension(format!(
            "solution is {}x{}, profile is {}x{}",
            de_omega.n_rows(),
            de_omega.n_cols(),
            big_n,
            n
        )));
    }
    let omega = de_omega.rho;
    let s = profile.sigma_sq();
    let nf = n as f64;
    let t = &de_omega.t;
    let tt = &de_omega.t_tilde;

    // row traces (1/n) Tr D~_i^2 T~^2 = (1/n) sum_j sigma^4_ij t~_j^2
    let mut row_trace = vec![0.0; big_n];
    for i in 0..big_n {
        let mut acc = 0.0;
        for j in 0..n {
            let s2 = s[[i, j]];
            acc += s2 * s2 * tt[j] * tt[j];
        }
        row_trace[i] = acc / nf;
    }

    let mut p = Array1::zeros(n);
    for l in 0..n {
        let mut sum1 = 0.0; // (1/n) sum_i sigma^2_il t_i^3 * row_trace_i
        let mut sum2 = 0.0; // (1/n) Tr D_l^2 T^2
        for i in 0..big_n {
            let s2 = s[[i, l]];
            sum1 += s2 * t[i].powi(3) * row_trace[i];
            sum2 += s2 * s2 * t[i] * t[i];
        }
        sum1 /= nf;
        sum2 /= nf;
        p[l] = kappa * omega * omega * tt[l] * tt[l] * (omega * sum1 - tt[l] * sum2);
    }
    Ok(p)
}

/// Solve (I - A_omega) w = p and verify the residual.
pub fn solve_w(a_omega: &Array2<f64>, p: &Array1<f64>) -> Result<Array1<f64>> {
    if a_omega.nrows() != p.len() {
        return Err(Error::Dimension(format!(
            "matrix is {}x{}, p has length {}",
            a_omega.nrows(),
            a_omega.ncols(),
            p.len()
        )));
    }
    let i_minus_a = Array2::eye(a_omega.nrows()) - a_omega;
    let lu = Lu::factor(&i_minus_a)?;
    let w = lu.solve(p);
    let p_norm = p.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let resid = {
        let r = i_minus_a.dot(&w) - p;
        r.iter().map(|v| v.abs()).fold(0.0f64, f64::max)
    };
    if resid > 1e-10 * p_norm.max(1e-300) {
        return Err(Error::Singular(format!(
            "bias system residual {resid:.3e} exceeds 1e-10 * ||p||"
        )));
    }
    Ok(w)
}

/// beta_n(omega) at kappa = 1, returning also the solved t for warm starts.
fn beta_unit_at(
    profile: &VarianceProfile,
    omega: f64,
    quad: &QuadratureConfig,
    warm: Option<&Array1<f64>>,
) -> Result<(f64, Array1<f64>)> {
    let de = match warm {
        Some(t0) => {
            detequiv::solve_with_init(profile, omega, quad.solver_tol, quad.solver_max_iter, t0)
        }
        None => detequiv::solve(profile, omega, quad.solver_tol, quad.solver_max_iter),
    }
    .map_err(|e| match e {
        Error::NonConvergence { residual, iterations } => Error::Singular(format!(
            "node omega = {omega}: solver stalled at residual {residual:.3e} after {iterations} iterations"
        )),
        other => other,
    })?;
    let a = fluctuation::variance_matrix(&de, profile)?;
    let p = p_vector(&de, profile, 1.0)?;
    let w = solve_w(&a, &p)?;
    let beta = w.sum() / w.len() as f64;
    Ok((beta, Array1::from_vec(de.t)))
}

/// Integrate beta_n over [rho, Omega] with adaptive panel refinement and an
/// analytic tail bound; exact zero for kappa = 0.
pub fn bias_integral(
    profile: &VarianceProfile,
    rho: f64,
    kappa: f64,
    quad: &QuadratureConfig,
) -> Result<BiasResult> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Validation(format!("rho must be finite and > 0, got {rho}")));
    }
    if kappa == 0.0 {
        return Ok(BiasResult {
            rho,
            nodes: Vec::new(),
            beta: Vec::new(),
            b_n: 0.0,
            tail_bound: 0.0,
            kappa_used: 0.0,
        });
    }

    let omega_max = quad.omega_max.unwrap_or_else(|| (100.0 * rho).max(100.0));
    if omega_max <= rho {
        return Err(Error::Validation(format!(
            "omega_max = {omega_max} must exceed rho = {rho}"
        )));
    }
    let rule = PanelRule::new(quad.gl_order);
    let ratio = omega_max / rho;

    let mut panels = quad.initial_panels.max(1);
    let mut prev_integral = f64::NAN;
    let mut nodes = Vec::new();
    let mut beta_unit = Vec::new();
    let mut integral = 0.0;
    for refine in 0..=quad.max_refine {
        nodes.clear();
        beta_unit.clear();
        integral = 0.0;
        let mut warm: Option<Array1<f64>> = None;
        // geometric panels resolve the 1/omega^3 decay with few nodes
        for k in 0..panels {
            let a = rho * ratio.powf(k as f64 / panels as f64);
            let b = rho * ratio.powf((k + 1) as f64 / panels as f64);
            for (omega, weight) in rule.mapped(a, b) {
                let (beta, t) = beta_unit_at(profile, omega, quad, warm.as_ref())?;
                warm = Some(t);
                nodes.push(omega);
                beta_unit.push(beta);
                integral += weight * beta;
            }
        }
        if refine > 0 && (integral - prev_integral).abs() <= quad.tol {
            break;
        }
        prev_integral = integral;
        panels *= 2;
    }

    // fit K' in |beta| <= K'/omega^3 from the sampled nodes, with a safety
    // factor of 2, then bound the truncated tail by K'/(2 Omega^2)
    let k_prime = 2.0
        * nodes
            .iter()
            .zip(beta_unit.iter())
            .map(|(&omega, &b)| b.abs() * omega.powi(3))
            .fold(0.0f64, f64::max)
        * kappa.abs();
    let tail_bound = k_prime / (2.0 * omega_max * omega_max);

    Ok(BiasResult {
        rho,
        beta: beta_unit.iter().map(|&b| kappa * b).collect(),
        nodes,
        b_n: kappa * integral,
        tail_bound,
        kappa_used: kappa,
    })
}

/// Fitted decay constant K' such that |beta| <= K'/omega^3 on the sampled
/// nodes (no safety factor), for stability diagnostics.
pub fn fit_k_prime(nodes: &[f64], beta: &[f64]) -> f64 {
    nodes
        .iter()
        .zip(beta.iter())
        .map(|(&omega, &b)| b.abs() * omega.powi(3))
        .fold(0.0f64, f64::max)
}
