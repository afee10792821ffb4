//! Command-line front end: solve the deterministic equivalent, evaluate the
//! CLT variance and bias, compute limiting quantities, and run Monte Carlo
//! experiments, all as JSON reports with reproducible configs.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rmt_clt::bias::{self, QuadratureConfig};
use rmt_clt::detequiv::{self, DEFAULT_MAX_ITER, DEFAULT_TOL};
use rmt_clt::fluctuation::{self, EntryDistribution};
use rmt_clt::limiting;
use rmt_clt::montecarlo::{self, ExperimentConfig, References};
use rmt_clt::{Error, ProfileDescriptor, Result, VarianceProfile};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "rmt-clt", version, about = "Log-determinant CLT toolkit for random Gram matrices with a variance profile")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fixed point for t, t~ and the first-order value V_n.
    Solve {
        /// Profile descriptor: inline JSON, a .json descriptor file, or a CSV matrix path.
        #[arg(long)]
        profile: String,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// CLT variance Theta^2_n with spectral-radius diagnostics.
    Variance {
        #[arg(long)]
        profile: String,
        #[arg(long)]
        rho: f64,
        /// Fourth cumulant of the entry law.
        #[arg(long, allow_negative_numbers = true)]
        kappa: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// CLT bias B_n(rho) by adaptive quadrature over [rho, Omega].
    Bias {
        #[arg(long)]
        profile: String,
        #[arg(long)]
        rho: f64,
        #[arg(long, allow_negative_numbers = true)]
        kappa: f64,
        /// Truncation point Omega; defaults to max(100 rho, 100).
        #[arg(long)]
        omega_max: Option<f64>,
        /// Optional CSV dump of the (omega, beta) quadrature nodes.
        #[arg(long)]
        nodes_csv: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Limiting (n -> infinity) variance via the kernel Fredholm determinant.
    Limit {
        /// Builtin sigma^2 function: "constant:S2", "separable:D,DT" with
        /// affine specs like "1+0.5x", "product", or "exp-decay".
        #[arg(long)]
        sigma2: String,
        /// Aspect ratio limit c = lim N/n.
        #[arg(long)]
        c: f64,
        #[arg(long)]
        rho: f64,
        /// Midpoint-grid size for the discretization.
        #[arg(long)]
        grid: usize,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        kappa: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment described by a JSON config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rebuild the diagnostics of a stored per-trial CSV dump.
    Report {
        /// Per-trial CSV written by `simulate` (trial_index, i_n).
        #[arg(long)]
        trials: PathBuf,
        /// The simulate config the dump was produced with.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Top-level report envelope shared by every subcommand.
#[derive(Serialize)]
struct Report<C: Serialize, R: Serialize> {
    version: &'static str,
    command: &'static str,
    config: C,
    result: R,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                std::process::exit(0);
            }
            emit_error_json("config", &err.to_string());
            std::process::exit(1);
        }
    };
    if let Err(err) = init_threads().and_then(|_| run(cli.command)) {
        let (code, kind) = classify(&err);
        emit_error_json(kind, &err.to_string());
        std::process::exit(code);
    }
}

/// RMT_CLT_THREADS caps the rayon worker count for this process.
fn init_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("RMT_CLT_THREADS") {
        let threads: usize = raw
            .parse()
            .map_err(|_| Error::Validation(format!("RMT_CLT_THREADS must be a positive integer, got {raw:?}")))?;
        if threads == 0 {
            return Err(Error::Validation("RMT_CLT_THREADS must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Validation(format!("thread pool setup failed: {e}")))?;
    }
    Ok(())
}

fn classify(err: &Error) -> (i32, &'static str) {
    match err {
        Error::Validation(_) | Error::Dimension(_) | Error::Parse(_) => (1, "config"),
        Error::NonConvergence { .. }
        | Error::Singular(_)
        | Error::DegenerateVariance { .. }
        | Error::CostCap(_) => (2, "numeric"),
        Error::Io(_) => (3, "io"),
    }
}

fn emit_error_json(kind: &str, message: &str) {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message } });
    eprintln!("{body}");
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Solve { profile, rho, output } => cmd_solve(&profile, rho, output.as_deref()),
        Command::Variance { profile, rho, kappa, output } => {
            cmd_variance(&profile, rho, kappa, output.as_deref())
        }
        Command::Bias { profile, rho, kappa, omega_max, nodes_csv, output } => {
            cmd_bias(&profile, rho, kappa, omega_max, nodes_csv.as_deref(), output.as_deref())
        }
        Command::Limit { sigma2, c, rho, grid, kappa, output } => {
            cmd_limit(&sigma2, c, rho, grid, kappa, output.as_deref())
        }
        Command::Simulate { config, output } => cmd_simulate(&config, output.as_deref()),
        Command::Report { trials, config, output } => {
            cmd_report(&trials, &config, output.as_deref())
        }
    }
}

/// Accepts inline descriptor JSON, a .json descriptor file, or a bare path
/// treated as a CSV matrix file.
fn resolve_profile(spec: &str) -> Result<(ProfileDescriptor, VarianceProfile)> {
    let descriptor = if spec.trim_start().starts_with('{') {
        serde_json::from_str(spec)
            .map_err(|e| Error::Parse(format!("profile descriptor: {e}")))?
    } else if Path::new(spec).extension().is_some_and(|ext| ext == "json") {
        let text = fs::read_to_string(spec)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("profile descriptor {spec}: {e}")))?
    } else {
        ProfileDescriptor::File { path: spec.to_string() }
    };
    let profile = descriptor.build()?;
    Ok((descriptor, profile))
}

fn emit<C: Serialize, R: Serialize>(report: &Report<C, R>, output: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Validation(format!("report serialization failed: {e}")))?;
    text.push('\n');
    match output {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct ProfileRhoConfig {
    profile: ProfileDescriptor,
    rho: f64,
}

#[derive(Serialize)]
struct SolveResult {
    equivalent: detequiv::DeterministicEquivalent,
    v_n: f64,
    m_n: f64,
    trace_identity_gap: f64,
}

fn cmd_solve(profile_spec: &str, rho: f64, output: Option<&Path>) -> Result<()> {
    let (descriptor, profile) = resolve_profile(profile_spec)?;
    let de = detequiv::solve(&profile, rho, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let v_n = detequiv::v_n(&de, &profile)?;
    let result = SolveResult {
        v_n,
        m_n: de.m_n(),
        trace_identity_gap: de.trace_identity_gap(),
        equivalent: de,
    };
    emit(
        &Report {
            version: VERSION,
            command: "solve",
            config: ProfileRhoConfig { profile: descriptor, rho },
            result,
        },
        output,
    )
}

#[derive(Serialize)]
struct ProfileRhoKappaConfig {
    profile: ProfileDescriptor,
    rho: f64,
    kappa: f64,
}

fn cmd_variance(profile_spec: &str, rho: f64, kappa: f64, output: Option<&Path>) -> Result<()> {
    let (descriptor, profile) = resolve_profile(profile_spec)?;
    let de = detequiv::solve(&profile, rho, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let result = fluctuation::report(&de, &profile, kappa)?;
    emit(
        &Report {
            version: VERSION,
            command: "variance",
            config: ProfileRhoKappaConfig { profile: descriptor, rho, kappa },
            result,
        },
        output,
    )
}

#[derive(Serialize)]
struct BiasConfig {
    profile: ProfileDescriptor,
    rho: f64,
    kappa: f64,
    quadrature: QuadratureConfig,
}

fn cmd_bias(
    profile_spec: &str,
    rho: f64,
    kappa: f64,
    omega_max: Option<f64>,
    nodes_csv: Option<&Path>,
    output: Option<&Path>,
) -> Result<()> {
    let (descriptor, profile) = resolve_profile(profile_spec)?;
    let quad = QuadratureConfig { omega_max, ..QuadratureConfig::default() };
    let result = bias::bias_integral(&profile, rho, kappa, &quad)?;
    if let Some(path) = nodes_csv {
        let mut text = String::from("omega,beta\n");
        for (omega, beta) in result.nodes.iter().zip(result.beta.iter()) {
            text.push_str(&format!("{omega},{beta}\n"));
        }
        fs::write(path, text)?;
    }
    emit(
        &Report {
            version: VERSION,
            command: "bias",
            config: BiasConfig { profile: descriptor, rho, kappa, quadrature: quad },
            result,
        },
        output,
    )
}

#[derive(Serialize)]
struct LimitConfig {
    sigma2: String,
    c: f64,
    rho: f64,
    grid: usize,
    kappa: f64,
}

#[derive(Serialize)]
struct LimitResult {
    profile: limiting::LimitProfile,
    kernel_trace: f64,
    fredholm_det: f64,
    theta_sq: f64,
    kappa_used: f64,
}

/// Affine one-variable spec "A" or "A+Bx", e.g. "1+0.5x".
fn parse_affine(spec: &str) -> Result<(f64, f64)> {
    let s = spec.trim();
    let bad = || Error::Parse(format!("expected \"A\" or \"A+Bx\", got {spec:?}"));
    match s.find('+') {
        None => Ok((s.parse().map_err(|_| bad())?, 0.0)),
        Some(idx) => {
            let a: f64 = s[..idx].trim().parse().map_err(|_| bad())?;
            let b_part = s[idx + 1..].trim();
            let b_str = b_part
                .strip_suffix('x')
                .ok_or_else(bad)?
                .trim()
                .trim_end_matches('*')
                .trim();
            let b: f64 = b_str.parse().map_err(|_| bad())?;
            Ok((a, b))
        }
    }
}

type Sigma2Fn = Box<dyn Fn(f64, f64) -> f64 + Sync>;

fn builtin_sigma2(name: &str) -> Result<Sigma2Fn> {
    if let Some(arg) = name.strip_prefix("constant:") {
        let s2: f64 = arg
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("constant level must be a number, got {arg:?}")))?;
        return Ok(Box::new(move |_, _| s2));
    }
    if let Some(args) = name.strip_prefix("separable:") {
        let (d_spec, dt_spec) = args
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("separable needs \"D,DT\", got {args:?}")))?;
        let (a, b) = parse_affine(d_spec)?;
        let (at, bt) = parse_affine(dt_spec)?;
        return Ok(Box::new(move |x, y| (a + b * x) * (at + bt * y)));
    }
    match name {
        "product" => Ok(Box::new(|x, y| x * y + 0.1)),
        "exp-decay" => Ok(Box::new(|x, y| (-(x - y).abs()).exp() + 0.1)),
        _ => Err(Error::Validation(format!(
            "unknown sigma2 function {name:?}; builtins are constant:S2, separable:D,DT, product, exp-decay"
        ))),
    }
}

fn cmd_limit(
    sigma2: &str,
    c: f64,
    rho: f64,
    grid: usize,
    kappa: f64,
    output: Option<&Path>,
) -> Result<()> {
    let f = builtin_sigma2(sigma2)?;
    let lp = limiting::solve_tau(&*f, c, grid, rho, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let kd = limiting::kernel_matrix(&lp)?;
    let theta_sq = limiting::theta_sq_limit(&kd, kappa)?;
    let result = LimitResult {
        profile: lp,
        kernel_trace: kd.trace,
        fredholm_det: kd.fredholm_det,
        theta_sq,
        kappa_used: kappa,
    };
    emit(
        &Report {
            version: VERSION,
            command: "limit",
            config: LimitConfig { sigma2: sigma2.to_string(), c, rho, grid, kappa },
            result,
        },
        output,
    )
}

/// JSON config for `simulate` and `report`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    profile: ProfileDescriptor,
    rho: f64,
    dist: EntryDistribution,
    trials: usize,
    seed: u64,
    /// Truncation for the bias reference integral.
    #[serde(default)]
    omega_max: Option<f64>,
    /// Optional per-trial CSV dump (trial_index, i_n).
    #[serde(default)]
    trials_csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct SimulateResult {
    references: References,
    diagnostics: montecarlo::CltDiagnostics,
}

fn load_simulate_config(path: &Path) -> Result<SimulateConfig> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("simulate config {}: {e}", path.display())))
}

/// References recomputed deterministically from the config, so `report` can
/// rebuild the identical result from a stored per-trial dump.
fn compute_references(cfg: &SimulateConfig, profile: &VarianceProfile) -> Result<References> {
    let kappa = cfg.dist.kappa()?;
    let de = detequiv::solve(profile, cfg.rho, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let v_n = detequiv::v_n(&de, profile)?;
    let fluct = fluctuation::report(&de, profile, kappa)?;
    let quad = QuadratureConfig { omega_max: cfg.omega_max, ..QuadratureConfig::default() };
    let b = bias::bias_integral(profile, cfg.rho, kappa, &quad)?;
    Ok(References { theta_sq: fluct.theta_sq, v_n, b_n: b.b_n })
}

fn cmd_simulate(config_path: &Path, output: Option<&Path>) -> Result<()> {
    let cfg = load_simulate_config(config_path)?;
    let profile = cfg.profile.build()?;
    let refs = compute_references(&cfg, &profile)?;
    let experiment = ExperimentConfig {
        profile: profile.clone(),
        rho: cfg.rho,
        dist: cfg.dist,
        trials: cfg.trials,
        seed: cfg.seed,
    };
    if cfg.trials < 2 {
        return Err(Error::Validation(format!("need at least 2 trials, got {}", cfg.trials)));
    }
    let samples = montecarlo::sample_statistics(&experiment)?;
    if let Some(path) = &cfg.trials_csv {
        let mut text = String::from("trial_index,i_n\n");
        for (idx, value) in samples.iter().enumerate() {
            text.push_str(&format!("{idx},{value}\n"));
        }
        fs::write(path, text)?;
    }
    let diagnostics = montecarlo::diagnostics_from_samples(&samples, profile.n_rows(), &refs)?;
    emit(
        &Report {
            version: VERSION,
            command: "simulate",
            config: cfg,
            result: SimulateResult { references: refs, diagnostics },
        },
        output,
    )
}

fn read_trials_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line_no == 0 {
            if line != "trial_index,i_n" {
                return Err(Error::Parse(format!(
                    "expected header \"trial_index,i_n\", got {line:?}"
                )));
            }
            continue;
        }
        let (idx_str, value_str) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected two fields", line_no + 1)))?;
        let idx: usize = idx_str
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad trial index {idx_str:?}", line_no + 1)))?;
        if idx != line_no - 1 {
            return Err(Error::Parse(format!(
                "line {}: trial index {idx} out of order",
                line_no + 1
            )));
        }
        let value: f64 = value_str
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad value {value_str:?}", line_no + 1)))?;
        samples.push(value);
    }
    Ok(samples)
}

fn cmd_report(trials_path: &Path, config_path: &Path, output: Option<&Path>) -> Result<()> {
    let cfg = load_simulate_config(config_path)?;
    let profile = cfg.profile.build()?;
    let samples = read_trials_csv(trials_path)?;
    if samples.len() != cfg.trials {
        return Err(Error::Validation(format!(
            "dump has {} trials but config says {}",
            samples.len(),
            cfg.trials
        )));
    }
    let refs = compute_references(&cfg, &profile)?;
    let diagnostics = montecarlo::diagnostics_from_samples(&samples, profile.n_rows(), &refs)?;
    emit(
        &Report {
            version: VERSION,
            command: "report",
            config: cfg,
            result: SimulateResult { references: refs, diagnostics },
        },
        output,
    )
}
