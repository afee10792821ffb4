//! Limiting variance-profile machinery: the tau/tau~ functional equations on
//! a midpoint grid, the kernel K_inf, its Fredholm determinant (by matrix
//! factorization and by the alternating series), and the separable closed
//! form for Theta^2_inf.
//!
//! All [0,1] integrals use the composite midpoint rule on grid_m uniform
//! cells so that the finite-n variance matrix and the discretized kernel stay
//! structurally identical.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{small_det, Lu};

/// A limiting variance profile sampled on the midpoint grid, together with
/// the solved tau/tau~ vectors at a given rho.
#[derive(Debug, Clone, Serialize)]
pub struct LimitProfile {
    /// sigma^2(u_k, v_l) on the midpoint grid, grid_m x grid_m.
    #[serde(skip)]
    pub sigma_sq: Array2<f64>,
    /// Aspect ratio limit c = lim N/n.
    pub c: f64,
    pub grid_m: usize,
    pub rho: f64,
    /// tau(u_k, -rho).
    pub tau: Vec<f64>,
    /// tau~(v_l, -rho).
    pub tau_tilde: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Discretized kernel K_inf with its trace and Fredholm determinant.
#[derive(Debug, Clone, Serialize)]
pub struct KernelDiscretization {
    /// K_inf(x_k, y_l) on the midpoint grid.
    #[serde(skip)]
    pub values: Array2<f64>,
    /// Tr K_inf by the midpoint rule.
    pub trace: f64,
    /// det(1 - K_inf) via det(I - K/m).
    pub fredholm_det: f64,
}

/// Midpoint grid u_k = (k + 1/2)/m.
pub fn midpoint_grid(m: usize) -> Vec<f64> {
    (0..m).map(|k| (k as f64 + 0.5) / m as f64).collect()
}

/// Sample a sigma^2 function on the midpoint grid, validating positivity.
pub fn sample_sigma_sq<F: Fn(f64, f64) -> f64>(f: F, grid_m: usize) -> Result<Array2<f64>> {
    if grid_m < 2 {
        return Err(Error::Validation(format!("grid_m must be >= 2, got {grid_m}")));
    }
    let grid = midpoint_grid(grid_m);
    let mut s = Array2::zeros((grid_m, grid_m));
    for (k, &u) in grid.iter().enumerate() {
        for (l, &v) in grid.iter().enumerate() {
            let val = f(u, v);
            if !val.is_finite() || val <= 0.0 {
                return Err(Error::Validation(format!(
                    "sigma^2({u}, {v}) = {val} must be finite and > 0"
                )));
            }
            s[[k, l]] = val;
        }
    }
    Ok(s)
}

/// Solve the discretized functional equation for tau at z = -rho:
/// tau(u) = 1/(rho + int sigma^2(u,v)/(1 + c int sigma^2(x,v) tau(x) dx) dv),
/// then recover tau~ from the coupled relation.
pub fn solve_tau<F: Fn(f64, f64) -> f64>(
    sigma_sq_fn: F,
    c: f64,
    grid_m: usize,
    rho: f64,
    tol: f64,
    max_iter: usize,
) -> Result<LimitProfile> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Validation(format!("c must be finite and > 0, got {c}")));
    }
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Validation(format!("rho must be finite and > 0, got {rho}")));
    }
    let s = sample_sigma_sq(sigma_sq_fn, grid_m)?;
    let m = grid_m;
    let mf = m as f64;

    let mut tau = Array1::from_elem(m, 1.0 / rho);
    let mut denom = Array1::zeros(m);
    let mut rhs = Array1::zeros(m);
    let mut alpha = 1.0;
    let mut prev_residual = f64::INFINITY;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    for iter in 1..=max_iter {
        iterations = iter;
        for l in 0..m {
            let mut acc = 0.0;
            for x in 0..m {
                acc += s[[x, l]] * tau[x];
            }
            denom[l] = 1.0 + c * acc / mf;
        }
        for k in 0..m {
            let mut acc = 0.0;
            for l in 0..m {
                acc += s[[k, l]] / denom[l];
            }
            rhs[k] = 1.0 / (rho + acc / mf);
        }
        residual = tau
            .iter()
            .zip(rhs.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if residual <= tol {
            tau.assign(&rhs);
            break;
        }
        if residual > prev_residual {
            alpha *= 0.5;
        }
        prev_residual = residual;
        for k in 0..m {
            tau[k] = (1.0 - alpha) * tau[k] + alpha * rhs[k];
        }
    }
    if residual > tol {
        return Err(Error::NonConvergence { residual, iterations });
    }

    for l in 0..m {
        let mut acc = 0.0;
        for x in 0..m {
            acc += s[[x, l]] * tau[x];
        }
        denom[l] = 1.0 + c * acc / mf;
    }
    let tau_tilde: Vec<f64> = denom.iter().map(|&d| 1.0 / (rho * d)).collect();

    Ok(LimitProfile {
        sigma_sq: s,
        c,
        grid_m,
        rho,
        tau: tau.to_vec(),
        tau_tilde,
        residual,
        iterations,
    })
}

/// The kernel K_inf on the grid:
/// K(x,y) = c int sigma^2(u,x) sigma^2(u,y) tau^2(u) du
///          / (1 + c int sigma^2(u,x) tau(u) du)^2.
pub fn kernel_matrix(lp: &LimitProfile) -> Result<KernelDiscretization> {
    let m = lp.grid_m;
    let mf = m as f64;
    let s = &lp.sigma_sq;

    // C[u][x] = sigma^2(u, x) tau(u)
    let mut cmat = Array2::zeros((m, m));
    for u in 0..m {
        for x in 0..m {
            cmat[[u, x]] = s[[u, x]] * lp.tau[u];
        }
    }
    let gram = cmat.t().dot(&cmat); // (C^T C)_{xy} = sum_u s_ux s_uy tau_u^2

    let mut values = Array2::zeros((m, m));
    for x in 0..m {
        let int_s_tau: f64 = (0..m).map(|u| s[[u, x]] * lp.tau[u]).sum::<f64>() / mf;
        let denom = (1.0 + lp.c * int_s_tau).powi(2);
        for y in 0..m {
            values[[x, y]] = lp.c * gram[[x, y]] / (mf * denom);
        }
    }

    let trace = (0..m).map(|k| values[[k, k]]).sum::<f64>() / mf;
    let i_minus = Array2::eye(m) - &values / mf;
    let lu = Lu::factor(&i_minus)?;
    let fredholm_det = lu.det();

    Ok(KernelDiscretization {
        values,
        trace,
        fredholm_det,
    })
}

/// Partial sum of the Fredholm series at lambda = 1 up to order k_max, using
/// the grid quadrature for the k-fold integrals of the k x k determinants.
pub fn fredholm_det_series(kd: &KernelDiscretization, k_max: usize) -> Result<f64> {
    if k_max < 1 {
        return Err(Error::Validation("k_max must be >= 1".into()));
    }
    let m = kd.values.nrows();
    // sum over ordered index tuples reduces to k! * (sum over combinations);
    // tuples with a repeated index contribute a zero determinant
    let mut cost: f64 = 0.0;
    for k in 1..=k_max.min(m) {
        cost += binomial(m, k) * (k * k * k) as f64;
    }
    if cost > 5e8 {
        return Err(Error::CostCap(format!(
            "Fredholm series cost {cost:.3e} exceeds the 5e8 cap (grid_m = {m}, k_max = {k_max})"
        )));
    }

    let mut total = 1.0;
    let mut sign = -1.0;
    for k in 1..=k_max.min(m) {
        let mut sum_k = 0.0;
        let mut indices: Vec<usize> = (0..k).collect();
        loop {
            let mut minor = Array2::zeros((k, k));
            for a in 0..k {
                for b in 0..k {
                    minor[[a, b]] = kd.values[[indices[a], indices[b]]];
                }
            }
            sum_k += small_det(&mut minor);
            if !next_combination(&mut indices, m) {
                break;
            }
        }
        total += sign * sum_k / (m as f64).powi(k as i32);
        sign = -sign;
    }
    Ok(total)
}

/// Advance a strictly increasing index tuple to the next combination from
/// {0, ..., m-1}; returns false once exhausted.
fn next_combination(indices: &mut [usize], m: usize) -> bool {
    let k = indices.len();
    for slot in (0..k).rev() {
        if indices[slot] < m - (k - slot) {
            indices[slot] += 1;
            for s in slot + 1..k {
                indices[s] = indices[s - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Hadamard remainder bound for truncating the Fredholm series after k_max:
/// sum over k > k_max of k^{k/2} M^k / k!, with M the sup of |K| on the grid.
pub fn hadamard_remainder(kd: &KernelDiscretization, k_max: usize) -> f64 {
    let m_sup = kd.values.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let mut total = 0.0;
    let mut log_factorial: f64 = (1..=k_max as u64).map(|i| (i as f64).ln()).sum();
    for k in (k_max + 1)..=(k_max + 60) {
        log_factorial += (k as f64).ln();
        let log_term = 0.5 * k as f64 * (k as f64).ln() + k as f64 * m_sup.max(1e-300).ln()
            - log_factorial;
        total += log_term.exp();
        if log_term < -700.0 {
            break;
        }
    }
    total
}

/// Theta^2_inf = -log det(1 - K_inf) + kappa Tr K_inf.
pub fn theta_sq_limit(kd: &KernelDiscretization, kappa: f64) -> Result<f64> {
    if kd.fredholm_det <= 0.0 {
        return Err(Error::Singular(format!(
            "Fredholm determinant {} is not positive",
            kd.fredholm_det
        )));
    }
    Ok(-kd.fredholm_det.ln() + kappa * kd.trace)
}

/// Closed-form Theta^2_inf for separable sigma^2(x,y) = d(x) d~(y):
/// -log(1 - rho^2 gamma gamma~) + kappa rho^2 gamma gamma~.
pub fn theta_sq_separable<F, G>(
    d: F,
    d_tilde: G,
    c: f64,
    rho: f64,
    kappa: f64,
    grid_m: usize,
    tol: f64,
    max_iter: usize,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    let lp = solve_tau(|x, y| d(x) * d_tilde(y), c, grid_m, rho, tol, max_iter)?;
    let grid = midpoint_grid(grid_m);
    let mf = grid_m as f64;
    let gamma = lp.c
        * grid
            .iter()
            .enumerate()
            .map(|(k, &u)| d(u).powi(2) * lp.tau[k].powi(2))
            .sum::<f64>()
        / mf;
    let gamma_tilde = grid
        .iter()
        .enumerate()
        .map(|(k, &v)| d_tilde(v).powi(2) * lp.tau_tilde[k].powi(2))
        .sum::<f64>()
        / mf;
    let x = rho * rho * gamma * gamma_tilde;
    if 1.0 - x <= 0.0 {
        return Err(Error::Singular(format!(
            "1 - rho^2 gamma gamma~ = {} is not positive",
            1.0 - x
        )));
    }
    Ok(-(1.0 - x).ln() + kappa * x)
}
