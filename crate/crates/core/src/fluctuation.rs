//! CLT variance: the n x n variance matrix A_n, the fluctuation variance
//! Theta^2_n = -log det(I - A_n) + kappa Tr A_n, and the spectral-radius
//! certificate built from the u/v vectors.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::detequiv::DeterministicEquivalent;
use crate::error::{Error, Result};
use crate::linalg::Lu;
use crate::profile::VarianceProfile;

/// Law of the i.i.d. matrix entries X_ij. All builtin kinds satisfy
/// E X = 0, E X^2 = 0, E |X|^2 = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EntryDistribution {
    /// Standard circular complex Gaussian; kappa = 0.
    ComplexGaussianCircular,
    /// Uniform on the unit-modulus 4-PSK constellation; kappa = -1.
    Qpsk,
    /// Uniform on the disk of radius sqrt(2) (unit second moment); kappa = -2/3.
    ComplexUniformDisk,
    /// Caller-supplied law, described only by its declared fourth cumulant.
    Custom { kappa: Option<f64> },
}

impl EntryDistribution {
    /// Fourth cumulant kappa = E|X_11|^4 - 2.
    pub fn kappa(&self) -> Result<f64> {
        match self {
            EntryDistribution::ComplexGaussianCircular => Ok(0.0),
            // |X| = 1 a.s. so E|X|^4 = 1
            EntryDistribution::Qpsk => Ok(-1.0),
            // E|X|^4 = R^4/3 with R^2 = 2
            EntryDistribution::ComplexUniformDisk => Ok(4.0 / 3.0 - 2.0),
            EntryDistribution::Custom { kappa: Some(k) } => {
                if *k < -1.0 {
                    Err(Error::Validation(format!("kappa must be >= -1, got {k}")))
                } else {
                    Ok(*k)
                }
            }
            EntryDistribution::Custom { kappa: None } => Err(Error::Validation(
                "custom distribution without a declared kappa".into(),
            )),
        }
    }
}

/// Variance and diagnostics for the CLT of the log-determinant statistic.
#[derive(Debug, Clone, Serialize)]
pub struct FluctuationReport {
    pub theta_sq: f64,
    /// -log det(I - A_n).
    pub v_term: f64,
    /// Tr A_n.
    pub w_term: f64,
    /// 1 - min(v_l)/max(u_l), an upper bound on r(A_n).
    pub spectral_radius_bound: f64,
    pub kappa_used: f64,
}

/// The variance matrix A_n at z = -rho:
/// a_{l,m} = (1/n) [(1/n) Tr D_l D_m T^2] / (1 + (1/n) Tr D_l T)^2.
pub fn variance_matrix(
    de: &DeterministicEquivalent,
    profile: &VarianceProfile,
) -> Result<Array2<f64>> {
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
    let nf = n as f64;

    // C[i][l] = sigma^2_il t_i, so (C^T C)_{lm} = Tr D_l D_m T^2
    let mut c = Array2::zeros((big_n, n));
    for i in 0..big_n {
        for l in 0..n {
            c[[i, l]] = s[[i, l]] * de.t[i];
        }
    }
    let gram = c.t().dot(&c);

    let mut a = Array2::zeros((n, n));
    for l in 0..n {
        let tr_dl_t: f64 = (0..big_n).map(|i| s[[i, l]] * de.t[i]).sum::<f64>() / nf;
        let denom = (1.0 + tr_dl_t).powi(2);
        for m in 0..n {
            a[[l, m]] = gram[[l, m]] / (nf * nf * denom);
        }
    }
    Ok(a)
}

/// Theta^2 from a precomputed variance matrix. log det(I - A) goes through an
/// LU factorization; an eigenvalue product is avoided.
pub fn theta_sq(a: &Array2<f64>, kappa: f64) -> Result<FluctuationTerms> {
    if kappa < -1.0 {
        return Err(Error::Validation(format!("kappa must be >= -1, got {kappa}")));
    }
    let n = a.nrows();
    let i_minus_a = Array2::eye(n) - a;
    let lu = Lu::factor(&i_minus_a).map_err(|_| {
        Error::Singular("I - A_n is numerically singular (spectral radius >= 1?)".into())
    })?;
    let (log_abs, sign) = lu.log_abs_det();
    if sign <= 0.0 {
        return Err(Error::Singular(
            "det(I - A_n) <= 0: spectral radius of A_n is >= 1".into(),
        ));
    }
    let v_term = -log_abs;
    let w_term = (0..n).map(|l| a[[l, l]]).sum::<f64>();
    let theta = v_term + kappa * w_term;
    if theta <= 0.0 {
        return Err(Error::DegenerateVariance { theta_sq: theta });
    }
    Ok(FluctuationTerms {
        theta_sq: theta,
        v_term,
        w_term,
    })
}

/// The determinant and trace parts of Theta^2, without the certificate.
#[derive(Debug, Clone, Copy)]
pub struct FluctuationTerms {
    pub theta_sq: f64,
    pub v_term: f64,
    pub w_term: f64,
}

/// The u/v spectral-radius bound: v_l from the trace formula, u solved from
/// (I - A) u = v, bound = 1 - min(v_l)/max(u_l). Lies in (0, 1) for valid
/// profiles.
pub fn spectral_radius_certificate(
    a: &Array2<f64>,
    de: &DeterministicEquivalent,
    profile: &VarianceProfile,
) -> Result<f64> {
    let (big_n, n) = (profile.n_rows(), profile.n_cols());
    if a.nrows() != n || de.n_rows() != big_n {
        return Err(Error::Dimension("certificate inputs do not match".into()));
    }
    let s = profile.sigma_sq();
    let nf = n as f64;
    let mut v = Array1::zeros(n);
    for l in 0..n {
        let tr_dl_t: f64 = (0..big_n).map(|i| s[[i, l]] * de.t[i]).sum::<f64>() / nf;
        let tr_dl_t2: f64 = (0..big_n)
            .map(|i| s[[i, l]] * de.t[i] * de.t[i])
            .sum::<f64>()
            / nf;
        v[l] = tr_dl_t2 / (1.0 + tr_dl_t).powi(2);
    }
    let i_minus_a = Array2::eye(n) - a;
    let lu = Lu::factor(&i_minus_a)?;
    let u = lu.solve(&v);
    let min_v = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_u = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(min_v > 0.0) || !(max_u > 0.0) {
        return Err(Error::Singular(
            "u/v certificate produced non-positive components".into(),
        ));
    }
    let bound = 1.0 - min_v / max_u;
    if !(bound > 0.0 && bound < 1.0) {
        return Err(Error::Singular(format!(
            "spectral radius bound {bound} outside (0, 1)"
        )));
    }
    Ok(bound)
}

/// Full fluctuation report for a solved deterministic equivalent.
pub fn report(
    de: &DeterministicEquivalent,
    profile: &VarianceProfile,
    kappa: f64,
) -> Result<FluctuationReport> {
    let a = variance_matrix(de, profile)?;
    let bound = spectral_radius_certificate(&a, de, profile)?;
    let terms = theta_sq(&a, kappa)?;
    Ok(FluctuationReport {
        theta_sq: terms.theta_sq,
        v_term: terms.v_term,
        w_term: terms.w_term,
        spectral_radius_bound: bound,
        kappa_used: kappa,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detequiv::{marchenko_pastur_t, solve};
    use approx::assert_abs_diff_eq;

    fn mp_setup(n: usize) -> (VarianceProfile, DeterministicEquivalent) {
        let p = VarianceProfile::constant(n, n, 1.0).unwrap();
        let de = solve(&p, 1.0, 1e-14, 10_000).unwrap();
        (p, de)
    }

    #[test]
    fn kappa_values() {
        assert_eq!(EntryDistribution::ComplexGaussianCircular.kappa().unwrap(), 0.0);
        assert_eq!(EntryDistribution::Qpsk.kappa().unwrap(), -1.0);
        assert_abs_diff_eq!(
            EntryDistribution::ComplexUniformDisk.kappa().unwrap(),
            -2.0 / 3.0,
            epsilon = 1e-15
        );
        assert_eq!(
            EntryDistribution::Custom { kappa: Some(0.5) }.kappa().unwrap(),
            0.5
        );
        assert!(EntryDistribution::Custom { kappa: None }.kappa().is_err());
        assert!(EntryDistribution::Custom { kappa: Some(-1.5) }.kappa().is_err());
    }

    #[test]
    fn constant_profile_matrix_entries() {
        // all entries (1/n) t^2/(1+t)^2 = t^4/n using 1/(1+t) = t
        let (p, de) = mp_setup(6);
        let a = variance_matrix(&de, &p).unwrap();
        let t = marchenko_pastur_t();
        let expected = t.powi(4) / 6.0;
        for &v in a.iter() {
            assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn near_zero_profile_matrix_vanishes() {
        let p = VarianceProfile::constant(4, 4, 1e-6).unwrap();
        let de = solve(&p, 1.0, 1e-14, 10_000).unwrap();
        let a = variance_matrix(&de, &p).unwrap();
        for &v in a.iter() {
            assert!(v >= 0.0 && v < 1e-11); // O(sigma^4)
        }
    }

    #[test]
    fn matrix_against_loop_oracle() {
        let p = VarianceProfile::from_csv_str("1,2\n2,1").unwrap();
        let de = solve(&p, 1.0, 1e-13, 10_000).unwrap();
        let a = variance_matrix(&de, &p).unwrap();
        let s = p.sigma_sq();
        let n = 2.0;
        for l in 0..2 {
            for m in 0..2 {
                // straightforward re-evaluation of the defining formula
                let num: f64 = (0..2)
                    .map(|i| s[[i, l]] * s[[i, m]] * de.t[i] * de.t[i])
                    .sum::<f64>()
                    / n;
                let den: f64 =
                    (1.0 + (0..2).map(|i| s[[i, l]] * de.t[i]).sum::<f64>() / n).powi(2);
                assert_abs_diff_eq!(a[[l, m]], num / (n * den), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn theta_sq_constant_anchor() {
        let (p, de) = mp_setup(8);
        let a = variance_matrix(&de, &p).unwrap();
        let t4 = marchenko_pastur_t().powi(4);
        // A is rank one with eigenvalue t^4
        let terms = theta_sq(&a, 0.0).unwrap();
        assert_abs_diff_eq!(terms.theta_sq, -(1.0 - t4).ln(), epsilon = 1e-11);
        let terms = theta_sq(&a, -1.0).unwrap();
        assert_abs_diff_eq!(terms.theta_sq, -(1.0 - t4).ln() - t4, epsilon = 1e-11);
    }

    #[test]
    fn zero_matrix_is_degenerate() {
        let a = Array2::zeros((3, 3));
        match theta_sq(&a, 0.0) {
            Err(Error::DegenerateVariance { theta_sq }) => assert_eq!(theta_sq, 0.0),
            other => panic!("expected DegenerateVariance, got {other:?}"),
        }
    }

    #[test]
    fn certificate_constant_profile() {
        // rank-one A: u = v/(1 - t^4), bound = t^4
        let (p, de) = mp_setup(5);
        let a = variance_matrix(&de, &p).unwrap();
        let bound = spectral_radius_certificate(&a, &de, &p).unwrap();
        assert_abs_diff_eq!(bound, marchenko_pastur_t().powi(4), epsilon = 1e-11);
    }

    #[test]
    fn certificate_near_zero_profile() {
        let p = VarianceProfile::constant(4, 4, 1e-4).unwrap();
        let de = solve(&p, 1.0, 1e-14, 10_000).unwrap();
        let a = variance_matrix(&de, &p).unwrap();
        let bound = spectral_radius_certificate(&a, &de, &p).unwrap();
        assert!(bound < 1e-7);
    }

    #[test]
    fn certificate_dominates_eigenvalue() {
        let p = VarianceProfile::from_csv_str("1,2\n2,1").unwrap();
        let de = solve(&p, 1.0, 1e-13, 10_000).unwrap();
        let a = variance_matrix(&de, &p).unwrap();
        let bound = spectral_radius_certificate(&a, &de, &p).unwrap();
        let r = crate::linalg::spectral_radius_nonnegative(&a, 1e-13, 10_000);
        assert!(r <= bound + 1e-12, "r = {r}, bound = {bound}");
        assert!(bound < 1.0);
    }

    #[test]
    fn log_det_power_series_cross_check() {
        // -log det(I - A) = sum_k Tr(A^k)/k when r(A) < 1
        let p = VarianceProfile::from_csv_str("0.5,1\n1,0.5\n0.2,0.8").unwrap();
        let de = solve(&p, 1.0, 1e-13, 10_000).unwrap();
        let a = variance_matrix(&de, &p).unwrap();
        let r = crate::linalg::spectral_radius_nonnegative(&a, 1e-13, 10_000);
        assert!(r <= 0.5, "test wants a small spectral radius, got {r}");
        let terms = theta_sq(&a, 0.0).unwrap();
        let mut series = 0.0;
        let mut pow = a.clone();
        for k in 1..=20 {
            let tr: f64 = (0..a.nrows()).map(|i| pow[[i, i]]).sum();
            series += tr / k as f64;
            pow = pow.dot(&a);
        }
        assert_abs_diff_eq!(terms.v_term, series, epsilon = 1e-8);
    }

    #[test]
    fn separable_rank_one_exactness() {
        let p = VarianceProfile::separable(&[0.5, 1.0, 1.5, 2.0], &[1.0, 1.2, 0.8]).unwrap();
        let de = solve(&p, 1.0, 1e-13, 10_000).unwrap();
        let a = variance_matrix(&de, &p).unwrap();
        let terms = theta_sq(&a, 0.0).unwrap();
        let trace: f64 = (0..a.nrows()).map(|i| a[[i, i]]).sum();
        assert_abs_diff_eq!(terms.v_term, -(1.0 - trace).ln(), epsilon = 1e-10);
    }

    #[test]
    fn kappa_affine_slope_is_trace() {
        let p = VarianceProfile::from_csv_str("1,0.5\n2,1").unwrap();
        let de = solve(&p, 1.0, 1e-13, 10_000).unwrap();
        let a = variance_matrix(&de, &p).unwrap();
        let t0 = theta_sq(&a, 0.0).unwrap();
        let t1 = theta_sq(&a, 1.0).unwrap();
        let tm = theta_sq(&a, -0.5).unwrap();
        assert_abs_diff_eq!(t1.theta_sq - t0.theta_sq, t0.w_term, epsilon = 1e-14);
        assert_abs_diff_eq!(t0.theta_sq - tm.theta_sq, 0.5 * t0.w_term, epsilon = 1e-14);
    }

    #[test]
    fn report_serializes() {
        let (p, de) = mp_setup(4);
        let r = report(&de, &p, 0.0).unwrap();
        assert_abs_diff_eq!(r.theta_sq, r.v_term + r.kappa_used * r.w_term, epsilon = 0.0);
        assert!(r.spectral_radius_bound < 1.0);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("theta_sq"));
    }
}
