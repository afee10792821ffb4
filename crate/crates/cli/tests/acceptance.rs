//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmt_clt::bias::{self, QuadratureConfig};
use rmt_clt::detequiv::{self, marchenko_pastur_t};
use rmt_clt::fluctuation::{self, EntryDistribution};
use rmt_clt::limiting;
use rmt_clt::linalg::spectral_radius_nonnegative;
use rmt_clt::montecarlo::{run_experiment, ExperimentConfig, References};
use rmt_clt::VarianceProfile;

fn check(name: &str, body: impl FnOnce() -> Result<(), String>) {
    match body() {
        Ok(()) => println!("[PASS] {name}"),
        Err(msg) => {
            println!("[FAIL] {name}: {msg}");
            panic!("{name}: {msg}");
        }
    }
}

/// Random profile with N, n in [8, 128] and sigma^2 entries in (0, 4].
fn random_profile(rng: &mut ChaCha8Rng, max_dim: usize) -> VarianceProfile {
    let n_rows = rng.random_range(8..=max_dim);
    let n_cols = rng.random_range(8..=max_dim);
    let mut s = Array2::zeros((n_rows, n_cols));
    for v in s.iter_mut() {
        *v = 4.0 * rng.random::<f64>().max(1e-6);
    }
    VarianceProfile::from_sigma_sq(s).unwrap()
}

#[test]
fn criterion_01_fixed_point_residual_and_bounds() {
    check("criterion 01: fixed-point residuals and a-priori bounds", || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cases: Vec<(VarianceProfile, f64)> = (0..50)
            .map(|_| {
                let p = random_profile(&mut rng, 128);
                let rho = 10f64.powf(rng.random_range(-1.0..1.0));
                (p, rho)
            })
            .collect();
        let start = Instant::now();
        for (p, rho) in &cases {
            let de = detequiv::solve(p, *rho, 1e-12, 10_000)
                .map_err(|e| format!("solve failed: {e}"))?;
            if de.residual > 1e-12 {
                return Err(format!("residual {} > 1e-12", de.residual));
            }
            let lower_t = 1.0 / (rho + p.sigma_sq_max());
            for &ti in &de.t {
                if !(ti >= lower_t - 1e-12 && ti <= 1.0 / rho + 1e-12) {
                    return Err(format!("t = {ti} outside [{lower_t}, {}]", 1.0 / rho));
                }
            }
            let lower_tt = 1.0 / (rho + p.aspect_ratio() * p.sigma_sq_max());
            for &tj in &de.t_tilde {
                if !(tj >= lower_tt - 1e-12 && tj <= 1.0 / rho + 1e-12) {
                    return Err(format!("t~ = {tj} outside [{lower_tt}, {}]", 1.0 / rho));
                }
            }
        }
        let elapsed = start.elapsed();
        if elapsed.as_secs_f64() >= 5.0 {
            return Err(format!("50 solves took {elapsed:?}, budget is 5 s"));
        }
        Ok(())
    });
}

#[test]
fn criterion_02_square_constant_profile_anchors() {
    check("criterion 02: square constant-profile closed-form anchors", || {
        let t_exact = marchenko_pastur_t();
        let v_exact = 2.0 * (1.0 + t_exact).ln() - t_exact / (1.0 + t_exact);
        let theta_exact = -(1.0 - t_exact.powi(4)).ln();

        let p = VarianceProfile::constant(50, 50, 1.0).unwrap();
        let de = detequiv::solve(&p, 1.0, 1e-14, 10_000).map_err(|e| e.to_string())?;
        for &ti in de.t.iter().chain(de.t_tilde.iter()) {
            if (ti - t_exact).abs() > 1e-9 {
                return Err(format!("t = {ti}, expected {t_exact}"));
            }
        }
        let v = detequiv::v_n(&de, &p).map_err(|e| e.to_string())?;
        if (v - v_exact).abs() > 1e-9 {
            return Err(format!("V_n = {v}, expected {v_exact}"));
        }
        let rep = fluctuation::report(&de, &p, 0.0).map_err(|e| e.to_string())?;
        if (rep.theta_sq - theta_exact).abs() > 1e-9 {
            return Err(format!("Theta^2 = {}, expected {theta_exact}", rep.theta_sq));
        }
        Ok(())
    });
}

#[test]
fn criterion_03_trace_identity() {
    check("criterion 03: trace identity sum t - sum t~ = (N - n)/rho", || {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p = random_profile(&mut rng, 128);
            let rho = 10f64.powf(rng.random_range(-1.0..1.0));
            let de = detequiv::solve(&p, rho, 1e-13, 10_000).map_err(|e| e.to_string())?;
            let gap = de.trace_identity_gap();
            if gap > 1e-10 {
                return Err(format!(
                    "gap {gap} > 1e-10 at N = {}, n = {}, rho = {rho}",
                    p.n_rows(),
                    p.n_cols()
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_04_spectral_radius_certificate() {
    check("criterion 04: eigen-oracle r(A) < certificate bound < 1", || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let profiles: Vec<VarianceProfile> = (0..10).map(|_| random_profile(&mut rng, 64)).collect();
        for p in &profiles {
            for &rho in &[0.1, 1.0, 10.0] {
                let de = detequiv::solve(p, rho, 1e-13, 10_000).map_err(|e| e.to_string())?;
                let a = fluctuation::variance_matrix(&de, p).map_err(|e| e.to_string())?;
                let r = spectral_radius_nonnegative(&a, 1e-12, 100_000);
                let bound =
                    fluctuation::spectral_radius_certificate(&a, &de, p).map_err(|e| e.to_string())?;
                if !(r < bound && bound < 1.0) {
                    return Err(format!("rho = {rho}: r(A) = {r}, bound = {bound}"));
                }
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_05_separable_limit_consistency() {
    check("criterion 05: separable Theta^2_n approaches the closed-form limit", || {
        let d = |x: f64| 1.0 + 0.5 * x;
        let dt = |y: f64| 2.0 - y;
        for &kappa in &[0.0, -1.0] {
            let theta_inf =
                limiting::theta_sq_separable(d, dt, 1.0, 1.0, kappa, 2048, 1e-13, 50_000)
                    .map_err(|e| e.to_string())?;
            let mut gaps = Vec::new();
            for &n in &[32usize, 64, 128, 256] {
                let dv: Vec<f64> = (1..=n).map(|i| d(i as f64 / n as f64)).collect();
                let dtv: Vec<f64> = (1..=n).map(|j| dt(j as f64 / n as f64)).collect();
                let p = VarianceProfile::separable(&dv, &dtv).unwrap();
                let de = detequiv::solve(&p, 1.0, 1e-13, 10_000).map_err(|e| e.to_string())?;
                let rep = fluctuation::report(&de, &p, kappa).map_err(|e| e.to_string())?;
                gaps.push((rep.theta_sq - theta_inf).abs());
            }
            if !gaps.windows(2).all(|w| w[1] < w[0]) {
                return Err(format!("kappa = {kappa}: gaps not strictly decreasing: {gaps:?}"));
            }
            if gaps[3] > 0.01 {
                return Err(format!("kappa = {kappa}: gap at n = 256 is {} > 0.01", gaps[3]));
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_06_fredholm_series_vs_determinant() {
    check("criterion 06: Fredholm series agrees with the matrix determinant", || {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let start = Instant::now();
        for case in 0..10 {
            let (a, b, c, d, e) = (
                rng.random_range(0.5..1.5),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..0.3),
            );
            let f = move |x: f64, y: f64| {
                a + b * x
                    + c * y
                    + d * x * y
                    + e * (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin()
            };
            let c_ratio = rng.random_range(0.5..2.0);
            let rho = rng.random_range(0.5..2.0);
            let lp = limiting::solve_tau(f, c_ratio, 12, rho, 1e-13, 50_000)
                .map_err(|e| e.to_string())?;
            let kd = limiting::kernel_matrix(&lp).map_err(|e| e.to_string())?;
            let series = limiting::fredholm_det_series(&kd, 6).map_err(|e| e.to_string())?;
            let remainder = limiting::hadamard_remainder(&kd, 6);
            let gap = (series - kd.fredholm_det).abs();
            if gap > remainder {
                return Err(format!("case {case}: |series - det| = {gap} > remainder {remainder}"));
            }
            // the bound must be tight enough for the comparison to mean something
            if remainder > 0.1 {
                return Err(format!("case {case}: vacuous remainder bound {remainder}"));
            }
        }
        let elapsed = start.elapsed();
        if elapsed.as_secs_f64() >= 60.0 {
            return Err(format!("10 kernels took {elapsed:?}, budget is 60 s"));
        }
        Ok(())
    });
}

fn clt_experiment(dist: EntryDistribution, kappa: f64) -> Result<(f64, f64, f64), String> {
    let p = VarianceProfile::constant(200, 200, 1.0).unwrap();
    let de = detequiv::solve(&p, 1.0, 1e-13, 10_000).map_err(|e| e.to_string())?;
    let v_n = detequiv::v_n(&de, &p).map_err(|e| e.to_string())?;
    let rep = fluctuation::report(&de, &p, kappa).map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        profile: p,
        rho: 1.0,
        dist,
        trials: 4000,
        seed: 20260824,
    };
    let refs = References { theta_sq: rep.theta_sq, v_n, b_n: 0.0 };
    let diag = run_experiment(&cfg, &refs).map_err(|e| e.to_string())?;
    Ok((diag.var_scaled, rep.theta_sq, diag.ks_stat))
}

#[test]
fn criterion_07_clt_variance_gaussian() {
    check("criterion 07: Gaussian CLT variance and normality", || {
        let (var, theta_sq, ks) = clt_experiment(EntryDistribution::ComplexGaussianCircular, 0.0)?;
        let rel = (var / theta_sq - 1.0).abs();
        if rel > 0.10 {
            return Err(format!("var {var} vs Theta^2 {theta_sq}: off by {rel:.3}"));
        }
        if ks >= 0.03 {
            return Err(format!("KS statistic {ks} >= 0.03"));
        }
        Ok(())
    });
}

#[test]
fn criterion_08_clt_variance_qpsk() {
    check("criterion 08: QPSK fourth-cumulant correction detected", || {
        let (var, theta_sq, _) = clt_experiment(EntryDistribution::Qpsk, -1.0)?;
        let rel = (var / theta_sq - 1.0).abs();
        if rel > 0.15 {
            return Err(format!("var {var} vs Theta^2 {theta_sq}: off by {rel:.3}"));
        }
        // the kappa correction shrinks the constant-profile variance ~13x
        let (_, theta_gauss, _) = {
            let p = VarianceProfile::constant(200, 200, 1.0).unwrap();
            let de = detequiv::solve(&p, 1.0, 1e-13, 10_000).map_err(|e| e.to_string())?;
            let rep = fluctuation::report(&de, &p, 0.0).map_err(|e| e.to_string())?;
            (0.0, rep.theta_sq, 0.0)
        };
        let ratio = theta_gauss / theta_sq;
        if !(10.0 < ratio && ratio < 16.0) {
            return Err(format!("Theta^2 ratio {ratio} outside (10, 16)"));
        }
        if var >= theta_gauss {
            return Err(format!("QPSK var {var} not below Gaussian Theta^2 {theta_gauss}"));
        }
        Ok(())
    });
}

#[test]
fn criterion_09_bias_against_monte_carlo_mean() {
    check("criterion 09: bias matches the Monte Carlo mean shift", || {
        let n = 64usize;
        let p = VarianceProfile::constant(n, n, 1.0).unwrap();
        let de = detequiv::solve(&p, 1.0, 1e-13, 10_000).map_err(|e| e.to_string())?;
        let v_n = detequiv::v_n(&de, &p).map_err(|e| e.to_string())?;
        let quad = QuadratureConfig::default();
        let b_n = bias::bias_integral(&p, 1.0, -1.0, &quad)
            .map_err(|e| e.to_string())?
            .b_n;
        let trials = 100_000usize;
        for (dist, b_ref) in [
            (EntryDistribution::Qpsk, b_n),
            (EntryDistribution::ComplexGaussianCircular, 0.0),
        ] {
            let kappa = dist.kappa().unwrap();
            let rep = fluctuation::report(&de, &p, kappa).map_err(|e| e.to_string())?;
            let cfg = ExperimentConfig {
                profile: p.clone(),
                rho: 1.0,
                dist,
                trials,
                seed: 20260824,
            };
            let refs = References { theta_sq: rep.theta_sq, v_n, b_n: b_ref };
            let diag = run_experiment(&cfg, &refs).map_err(|e| e.to_string())?;
            let delta = n as f64 * (diag.mean_i - v_n) - b_ref;
            let se = (diag.var_scaled / trials as f64).sqrt();
            if delta.abs() > 3.0 * se {
                return Err(format!(
                    "{dist:?}: |N(mean - V_n) - B_n| = {} > 3 SE = {}",
                    delta.abs(),
                    3.0 * se
                ));
            }
        }
        Ok(())
    });
}

#[test]
fn criterion_10_bias_linearity_and_decay() {
    check("criterion 10: beta linear in kappa with stable 1/omega^3 decay", || {
        let d = [1.0, 1.5, 0.8, 1.2, 0.9, 1.1, 1.3, 0.7];
        let dt = [0.9, 1.4, 1.1, 0.6, 1.2, 1.0];
        let p = VarianceProfile::separable(&d, &dt).unwrap();
        let rho = 1.0;

        let quad = QuadratureConfig { omega_max: Some(100.0), ..QuadratureConfig::default() };
        let unit = bias::bias_integral(&p, rho, 1.0, &quad).map_err(|e| e.to_string())?;
        let scaled = bias::bias_integral(&p, rho, -0.7, &quad).map_err(|e| e.to_string())?;
        if unit.nodes != scaled.nodes {
            return Err("quadrature nodes differ across kappa".into());
        }
        for (b1, b2) in unit.beta.iter().zip(scaled.beta.iter()) {
            if (b2 - (-0.7) * b1).abs() > 1e-12 {
                return Err(format!("beta not linear in kappa: {b1} vs {b2}"));
            }
        }
        if (scaled.b_n - (-0.7) * unit.b_n).abs() > 1e-12 {
            return Err(format!("B_n not linear in kappa: {} vs {}", unit.b_n, scaled.b_n));
        }

        let quad2 = QuadratureConfig { omega_max: Some(200.0), ..QuadratureConfig::default() };
        let doubled = bias::bias_integral(&p, rho, 1.0, &quad2).map_err(|e| e.to_string())?;
        let k1 = bias::fit_k_prime(&unit.nodes, &unit.beta);
        let k2 = bias::fit_k_prime(&doubled.nodes, &doubled.beta);
        let drift = (k2 / k1 - 1.0).abs();
        if drift > 0.20 {
            return Err(format!("K' drifted by {drift:.3} when Omega doubled: {k1} vs {k2}"));
        }
        Ok(())
    });
}

#[test]
fn criterion_11_simulate_determinism() {
    check("criterion 11: identical simulate configs give byte-identical reports", || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let config_path = dir.path().join("sim.json");
        std::fs::write(
            &config_path,
            r#"{"profile": {"kind": "constant", "n_rows": 32, "n_cols": 32, "s2": 1.0},
                "rho": 1.0, "dist": {"kind": "qpsk"}, "trials": 300, "seed": 5}"#,
        )
        .map_err(|e| e.to_string())?;
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out_path = dir.path().join(format!("report{run}.json"));
            let status = Command::new(env!("CARGO_BIN_EXE_rmt-clt"))
                .args(["simulate", "--config"])
                .arg(&config_path)
                .arg("--output")
                .arg(&out_path)
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("simulate run {run} exited with {status}"));
            }
            outputs.push(std::fs::read(&out_path).map_err(|e| e.to_string())?);
        }
        if outputs[0] != outputs[1] {
            return Err("reports differ between identical runs".into());
        }
        Ok(())
    });
}
