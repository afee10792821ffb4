//! Monte Carlo validation: sample random matrices Y with a given variance
//! profile and entry law, evaluate I_n(rho) = (1/N) log det(YY* + rho I),
//! and compare the empirical fluctuations against the deterministic
//! references (V_n, Theta^2_n, B_n).
//!
//! Every trial draws from its own RNG stream keyed by (seed, trial_index),
//! so serial and parallel runs produce identical per-trial values, and the
//! diagnostics reduction is pairwise in trial-index order.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fluctuation::EntryDistribution;
use crate::linalg::Cholesky;
use crate::profile::VarianceProfile;

/// A reproducible simulation setup.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub profile: VarianceProfile,
    pub rho: f64,
    pub dist: EntryDistribution,
    pub trials: usize,
    pub seed: u64,
}

/// Deterministic reference values the experiment is validated against.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct References {
    pub theta_sq: f64,
    pub v_n: f64,
    pub b_n: f64,
}

/// Empirical CLT diagnostics for a batch of trials.
#[derive(Debug, Clone, Serialize)]
pub struct CltDiagnostics {
    pub mean_i: f64,
    /// Empirical variance of N (I_k - mean).
    pub var_scaled: f64,
    pub theta_sq_ref: f64,
    pub v_n_ref: f64,
    pub b_n_ref: f64,
    /// N (I_k - mean) / Theta_n, in trial order.
    pub standardized_samples: Vec<f64>,
    /// Kolmogorov-Smirnov distance to the standard normal.
    pub ks_stat: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

fn draw_entry<R: Rng>(dist: &EntryDistribution, rng: &mut R) -> Result<Complex64> {
    match dist {
        EntryDistribution::ComplexGaussianCircular => {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Ok(Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2)
        }
        EntryDistribution::Qpsk => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let idx: u8 = rng.random_range(0..4);
            let (re, im) = match idx {
                0 => (s, s),
                1 => (s, -s),
                2 => (-s, s),
                _ => (-s, -s),
            };
            Ok(Complex64::new(re, im))
        }
        EntryDistribution::ComplexUniformDisk => {
            // radius sqrt(2) gives E|X|^2 = 1
            let u: f64 = rng.random();
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let r = (2.0 * u).sqrt();
            Ok(Complex64::new(r * phi.cos(), r * phi.sin()))
        }
        EntryDistribution::Custom { .. } => Err(Error::Validation(
            "custom distributions declare a kappa but carry no sampler".into(),
        )),
    }
}

fn trial_rng(seed: u64, trial_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index as u64 + 1);
    rng
}

/// Draw the N x n matrix Y for one trial: Y_ij = sigma_ij/sqrt(n) X_ij.
pub fn sample_matrix(cfg: &ExperimentConfig, trial_index: usize) -> Result<Array2<Complex64>> {
    let (big_n, n) = (cfg.profile.n_rows(), cfg.profile.n_cols());
    let s = cfg.profile.sigma_sq();
    let scale = 1.0 / (n as f64).sqrt();
    let mut rng = trial_rng(cfg.seed, trial_index);
    let mut y = Array2::zeros((big_n, n));
    for i in 0..big_n {
        for j in 0..n {
            let x = draw_entry(&cfg.dist, &mut rng)?;
            y[[i, j]] = x * (s[[i, j]].sqrt() * scale);
        }
    }
    Ok(y)
}

/// YY* + rho I as a dense Hermitian matrix.
fn shifted_gram(y: &Array2<Complex64>, rho: f64) -> Array2<Complex64> {
    let big_n = y.nrows();
    let mut g = Array2::zeros((big_n, big_n));
    for i in 0..big_n {
        let row_i = y.row(i);
        for k in 0..=i {
            let row_k = y.row(k);
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..y.ncols() {
                acc += row_i[j] * row_k[j].conj();
            }
            g[[i, k]] = acc;
            g[[k, i]] = acc.conj();
        }
        g[[i, i]] += rho;
    }
    g
}

/// log det(YY* + rho I) through a Hermitian positive definite factorization.
pub fn log_det_shifted(y: &Array2<Complex64>, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Validation(format!("rho must be > 0, got {rho}")));
    }
    let chol = Cholesky::factor(shifted_gram(y, rho))?;
    Ok(chol.log_det())
}

/// The statistic I_n(rho) = log det(YY* + rho I)/N.
pub fn mutual_information(y: &Array2<Complex64>, rho: f64) -> Result<f64> {
    Ok(log_det_shifted(y, rho)? / y.nrows() as f64)
}

/// Empirical Stieltjes transform (1/N) Tr (YY* + rho I)^-1.
pub fn empirical_stieltjes(y: &Array2<Complex64>, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Validation(format!("rho must be > 0, got {rho}")));
    }
    let chol = Cholesky::factor(shifted_gram(y, rho))?;
    Ok(chol.trace_inverse() / y.nrows() as f64)
}

/// Pairwise summation in index order; associative reduction whose result
/// does not depend on chunking.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Standard normal CDF via an erfc rational approximation (abs error < 2e-7,
/// plenty for Kolmogorov-Smirnov distances at Monte Carlo scale).
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398
                                    + t * (1.48851587
                                        + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Kolmogorov-Smirnov distance of a sample to the standard normal.
pub fn ks_statistic(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = std_normal_cdf(x);
        d = d.max((cdf - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - cdf).abs());
    }
    d
}

/// Build the diagnostics from precomputed per-trial I_n values. Exposed so a
/// stored per-trial dump can be re-reduced to the identical report.
pub fn diagnostics_from_samples(
    samples: &[f64],
    n_rows: usize,
    refs: &References,
) -> Result<CltDiagnostics> {
    if samples.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 trials, got {}",
            samples.len()
        )));
    }
    let k = samples.len() as f64;
    let big_n = n_rows as f64;
    let mean_i = pairwise_sum(samples) / k;
    let scaled_sq: Vec<f64> = samples
        .iter()
        .map(|&x| (big_n * (x - mean_i)).powi(2))
        .collect();
    let var_scaled = pairwise_sum(&scaled_sq) / (k - 1.0);
    let theta = refs.theta_sq.sqrt();
    let standardized: Vec<f64> = samples.iter().map(|&x| big_n * (x - mean_i) / theta).collect();
    let ks = ks_statistic(&standardized);
    let m2 = pairwise_sum(&standardized.iter().map(|&x| x * x).collect::<Vec<_>>()) / k;
    let m3 = pairwise_sum(&standardized.iter().map(|&x| x * x * x).collect::<Vec<_>>()) / k;
    let m4 = pairwise_sum(&standardized.iter().map(|&x| x * x * x * x).collect::<Vec<_>>()) / k;
    Ok(CltDiagnostics {
        mean_i,
        var_scaled,
        theta_sq_ref: refs.theta_sq,
        v_n_ref: refs.v_n,
        b_n_ref: refs.b_n,
        standardized_samples: standardized,
        ks_stat: ks,
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
    })
}

/// Per-trial values of I_n(rho), in trial order; parallel over trials.
pub fn sample_statistics(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let y = sample_matrix(cfg, trial)?;
            mutual_information(&y, cfg.rho)
        })
        .collect()
}

/// Run the experiment and reduce it against the references.
pub fn run_experiment(cfg: &ExperimentConfig, refs: &References) -> Result<CltDiagnostics> {
    if cfg.trials < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 trials, got {}",
            cfg.trials
        )));
    }
    let samples = sample_statistics(cfg)?;
    diagnostics_from_samples(&samples, cfg.profile.n_rows(), refs)
}
