//! Command-line surface shared by the `heatlab` binary and the tests.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::davies::{
    ball_constants, cone_family, davies_constants, default_slopes, dirichlet_ball_bound, feasible_psi_distance,
    fit_window_profile, ln_gaussian_envelope, ray_envelope, stable_like_pipeline, verify_offdiag, BallProfile,
    StableLikeRun,
};
use crate::forms::FiniteDirichletForm;
use crate::models::{parse_model, torus};
use crate::nash_verify::{fit_nash_delta, nash_to_ondiag, ondiag_to_nash, FalsifierConfig};
use crate::profiles::{
    check_regular_class, phi_from_theta, theta_from_phi, theta_tilde, NashRate, ProfileFunction, ScalingFunction,
};
use crate::report::{
    emit_report, load_report, parse_profile, write_envelope_csv, write_gnuplot, write_profile_csv, write_rows_csv,
    ExitStatus, Format, GridSpec, ProfileRow, Report, RunConfig,
};
use crate::semigroup::{series_kernel, SpectralKernel};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "heatlab", version, about = "Heat kernel bounds checked exactly on finite Markov chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory for report.json and data files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// `csv` additionally writes the CSV tables into the output directory.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DirectionArg {
    NashToOndiag,
    OndiagToNash,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PipelineKind {
    StableLike,
    Ball,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate θ and θ̃ of a profile and check its regularity.
    Profile {
        #[arg(long)]
        phi: String,
        #[arg(long, default_value = "1e-3:1e3:64")]
        grid: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Spectral summary and Chapman–Kolmogorov check of a model.
    Model {
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Either direction of the Nash / on-diagonal equivalence.
    Verify {
        #[arg(long)]
        model: String,
        /// `from-phi:<profile>`, `tilde:<profile>`, `zero` or an increasing expression.
        #[arg(long)]
        theta: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 20000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = DirectionArg::NashToOndiag)]
        direction: DirectionArg,
        #[arg(long, default_value = "1e-2:10:64")]
        t_grid: String,
    },
    /// Off-diagonal certificate, intrinsic distance and envelopes for a pair.
    Envelope {
        #[arg(long)]
        model: String,
        /// Profile, or `fit` for `a t^{-exponent}` fitted to the diagonal.
        #[arg(long, default_value = "fit")]
        phi: String,
        #[arg(long, default_value_t = 0.5)]
        exponent: f64,
        /// Number, or `fit` for the smallest δ the falsifier accepts.
        #[arg(long, default_value = "fit")]
        delta: String,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long, default_value = "0.01:5:48")]
        t_grid: String,
        #[arg(long, default_value_t = 20000)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        x: usize,
        /// Defaults to a state farthest from `x` in hops.
        #[arg(long)]
        y: Option<usize>,
        /// Coordinate-ascent sweeps for the distance lower bound.
        #[arg(long, default_value_t = 200)]
        psi_budget: usize,
    },
    /// Explicit Davies constants for a profile.
    Constants {
        #[arg(long)]
        phi: String,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Stable-like envelope pipeline or Dirichlet ball uniformity.
    Pipeline {
        #[arg(value_enum)]
        kind: PipelineKind,
        #[arg(long, default_value_t = 1)]
        d: usize,
        /// Scaling exponent: `φ(r) = r^alpha`.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        c_bound: f64,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long)]
        t_grid: Option<String>,
        /// Distances from state 0 for the stable-like pairs.
        #[arg(long, default_value = "5,8,12,18,27,40,50", value_delimiter = ',')]
        distances: Vec<usize>,
        /// Ball radii for the ball pipeline.
        #[arg(long, default_value = "4,8,16,32", value_delimiter = ',')]
        radii: Vec<f64>,
    },
    /// Re-check the hash of a stored report.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

/// Parses arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ExitStatus::Parse.code() } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok((report, status)) => {
            if let Some(dir) = &cli.out {
                if let Err(e) = emit_report(&report, dir) {
                    eprintln!("error: {e}");
                    return ExitStatus::Io.code();
                }
            }
            println!("pass: {}  hash: {}", report.pass, report.hash);
            status.code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitStatus::from_error(&e).code()
        }
    }
}

fn grid(spec: &str) -> Result<GridSpec> {
    GridSpec::parse(spec)
}

fn base_config(cli: &Cli, command: &str, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(command, seed);
    cfg.out = cli.out.clone();
    cfg.format = match cli.format {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    };
    cfg
}

fn csv_dir(cfg: &RunConfig) -> Option<&Path> {
    cfg.out.as_deref().filter(|_| cfg.format == Format::Csv)
}

fn finish(cfg: RunConfig, pass: bool, results: serde_json::Value) -> Result<(Report, ExitStatus)> {
    let report = Report::new(cfg, pass, results)?;
    let status = report.status();
    Ok((report, status))
}

/// Runs a parsed command; the report is not yet written.
pub fn execute(cli: &Cli) -> Result<(Report, ExitStatus)> {
    match &cli.command {
        Command::Profile { phi, grid: g, seed } => {
            let cfg = base_config(cli, "profile", *seed).input("phi", phi).grid("grid", grid(g)?);
            run_profile(cfg)
        }
        Command::Model { model, seed } => run_model(base_config(cli, "model", *seed).input("model", model)),
        Command::Verify { model, theta, delta, budget, seed, direction, t_grid } => {
            let mut cfg = base_config(cli, "verify", *seed)
                .input("model", model)
                .input("delta", delta)
                .input("budget", budget)
                .input("direction", format!("{direction:?}"))
                .grid("t", grid(t_grid)?);
            if let Some(t) = theta {
                cfg = cfg.input("theta", t);
            }
            run_verify(cfg)
        }
        Command::Envelope { model, phi, exponent, delta, eps, s, t_grid, budget, seed, x, y, psi_budget } => {
            let mut cfg = base_config(cli, "envelope", *seed)
                .input("model", model)
                .input("phi", phi)
                .input("exponent", exponent)
                .input("delta", delta)
                .input("eps", eps)
                .input("s", s)
                .input("budget", budget)
                .input("x", x)
                .input("psi_budget", psi_budget)
                .grid("t", grid(t_grid)?);
            if let Some(y) = y {
                cfg = cfg.input("y", y);
            }
            run_envelope(cfg)
        }
        Command::Constants { phi, eps, s, seed } => {
            let cfg = base_config(cli, "constants", *seed).input("phi", phi).input("eps", eps).input("s", s);
            run_constants(cfg)
        }
        Command::Pipeline { kind, d, alpha, n, seed, c_bound, eps, s, t_grid, distances, radii } => {
            let default_grid = match kind {
                PipelineKind::StableLike => "0.01:50:48",
                PipelineKind::Ball => "0.01:200:48",
            };
            let cfg = base_config(cli, "pipeline", *seed)
                .input("kind", format!("{kind:?}"))
                .input("d", d)
                .input("alpha", alpha)
                .input("n", n)
                .input("c_bound", c_bound)
                .input("eps", eps)
                .input("s", s)
                .input("distances", format!("{distances:?}"))
                .input("radii", format!("{radii:?}"))
                .grid("t", grid(t_grid.as_deref().unwrap_or(default_grid))?);
            match kind {
                PipelineKind::StableLike => run_stable_like(cfg, distances),
                PipelineKind::Ball => run_ball(cfg, radii),
            }
        }
        Command::Report { input } => {
            let (report, ok) = load_report(input)?;
            println!("stored pass: {}  hash ok: {ok}", report.pass);
            let cfg = base_config(cli, "report", report.config.seed).input("input", input.display());
            let pass = ok && report.pass;
            finish(cfg, pass, json!({"hash_ok": ok, "stored_hash": report.hash, "stored_pass": report.pass}))
        }
    }
}

fn t_points(cfg: &RunConfig) -> Vec<f64> {
    cfg.grids.get("t").map(|g| g.points()).unwrap_or_default()
}

fn input<'a>(cfg: &'a RunConfig, key: &str) -> &'a str {
    cfg.inputs.get(key).map(String::as_str).unwrap_or("")
}

fn parse_num<T: std::str::FromStr>(cfg: &RunConfig, key: &str) -> Result<T> {
    input(cfg, key)
        .parse()
        .map_err(|_| Error::Parse { pos: 0, msg: format!("bad value for --{key}: '{}'", input(cfg, key)) })
}

pub fn run_profile(cfg: RunConfig) -> Result<(Report, ExitStatus)> {
    let phi = parse_profile(input(&cfg, "phi"))?;
    let points = cfg.grids["grid"].points();
    let rows: Vec<ProfileRow> = points
        .iter()
        .map(|&r| ProfileRow {
            r,
            phi: phi.checked_eval(r).unwrap_or(f64::NAN),
            theta: theta_from_phi(&phi, r).unwrap_or(f64::NAN),
            theta_tilde: theta_tilde(&phi, r),
        })
        .collect();
    let back = phi_from_theta(&NashRate::from_profile(phi.clone()))?.phi;
    let mut roundtrip = 0.0f64;
    for &t in &points {
        if let (Ok(a), Ok(b)) = (phi.checked_eval(t), back.checked_eval(t)) {
            roundtrip = roundtrip.max((b / a - 1.0).abs());
        }
    }
    let regularity = check_regular_class(&phi);
    println!("phi = {}  round-trip max rel error = {roundtrip:.3e}", phi.spec());
    if let Some(dir) = csv_dir(&cfg) {
        std::fs::create_dir_all(dir)?;
        write_profile_csv(&dir.join("profile.csv"), &rows)?;
    }
    let pass = roundtrip <= 1e-6;
    finish(cfg, pass, json!({"phi": phi.spec(), "roundtrip_max_rel_error": roundtrip, "regularity": regularity}))
}

/// Largest `|p(s+t) - p(s) M p(t)|` relative to the largest entry, over
/// seeded `(s, t)`.
pub fn chapman_kolmogorov_residual(form: &FiniteDirichletForm, seed: u64, samples: usize) -> Result<f64> {
    let kernel = SpectralKernel::new(form)?;
    let m = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(form.m()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let s = 10f64.powf(rng.random_range(-2.0..1.0));
        let t = 10f64.powf(rng.random_range(-2.0..1.0));
        let lhs = kernel.heat_kernel(s + t)?;
        let rhs = kernel.heat_kernel(s)? * &m * kernel.heat_kernel(t)?;
        let scale = lhs.amax().max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).amax() / scale);
    }
    Ok(worst)
}

pub fn run_model(cfg: RunConfig) -> Result<(Report, ExitStatus)> {
    let form = parse_model(input(&cfg, "model"))?;
    let kernel = SpectralKernel::new(&form)?;
    let ck = chapman_kolmogorov_residual(&form, cfg.seed, 4)?;
    let recon = kernel.reconstruction_error();
    let eig: Vec<f64> = kernel.eigenvalues().iter().take(8).cloned().collect();
    println!("states {}  components {}  reconstruction {recon:.3e}  CK residual {ck:.3e}", form.n(), form.components().len());
    let pass = recon <= 1e-10 && ck <= 1e-10;
    finish(
        cfg,
        pass,
        json!({
            "states": form.n(),
            "components": form.components().len(),
            "conservative": kernel.is_conservative(),
            "has_killing": form.has_killing(),
            "lowest_eigenvalues": eig,
            "reconstruction_error": recon,
            "chapman_kolmogorov_residual": ck,
        }),
    )
}

pub fn run_verify(cfg: RunConfig) -> Result<(Report, ExitStatus)> {
    let form = parse_model(input(&cfg, "model"))?;
    let delta: f64 = parse_num(&cfg, "delta")?;
    let budget: usize = parse_num(&cfg, "budget")?;
    let fcfg = FalsifierConfig::new(budget, cfg.seed);
    let t = t_points(&cfg);
    if input(&cfg, "direction") == "OndiagToNash" {
        let (theta, report) = ondiag_to_nash(&form, delta, &t, &fcfg)?;
        println!("θ̃ from the diagonal: worst relative margin {:.3e}", report.worst_margin);
        let pass = report.passed();
        return finish(cfg, pass, json!({"theta": theta.spec(), "check": report}));
    }
    let spec = cfg
        .inputs
        .get("theta")
        .ok_or_else(|| Error::InvalidArgument("--theta is required for nash-to-ondiag".into()))?;
    let theta = NashRate::parse(spec)?;
    match nash_to_ondiag(&form, &theta, delta, &t, &fcfg) {
        Ok(report) => {
            println!("on-diagonal worst log-margin {:.3e}", report.worst_margin);
            let pass = report.passed();
            finish(cfg, pass, json!({"theta": theta.spec(), "check": report}))
        }
        Err(Error::PremiseNotCertified(msg)) => {
            println!("premise refused: {msg}");
            let report = Report::new(cfg, false, json!({"theta": theta.spec(), "refused": msg}))?;
            Ok((report, ExitStatus::Premise))
        }
        Err(e) => Err(e),
    }
}

pub fn run_constants(cfg: RunConfig) -> Result<(Report, ExitStatus)> {
    let phi = parse_profile(input(&cfg, "phi"))?;
    let eps: f64 = parse_num(&cfg, "eps")?;
    let s: f64 = parse_num(&cfg, "s")?;
    let k = davies_constants(&phi, eps, s)?;
    println!("λ={}", k.lambda);
    println!("C_eps={:.6}", k.c_eps);
    println!("c_eps={}", k.small_c_eps);
    finish(cfg, true, json!({"phi": phi.spec(), "constants": k}))
}

fn farthest(form: &FiniteDirichletForm, x: usize) -> usize {
    let hops = form.hop_distances(x);
    let mut best = x;
    for (z, &h) in hops.iter().enumerate() {
        if h != usize::MAX && h > hops[best] {
            best = z;
        }
    }
    best
}

pub fn run_envelope(cfg: RunConfig) -> Result<(Report, ExitStatus)> {
    let form = parse_model(input(&cfg, "model"))?;
    let t = t_points(&cfg);
    let budget: usize = parse_num(&cfg, "budget")?;
    let fcfg = FalsifierConfig::new(budget, cfg.seed);
    let phi: ProfileFunction = match input(&cfg, "phi") {
        "fit" => fit_window_profile(&form, parse_num(&cfg, "exponent")?, &t)?,
        spec => parse_profile(spec)?,
    };
    let delta: f64 = match input(&cfg, "delta") {
        "fit" => fit_nash_delta(&form, &NashRate::from_profile(phi.clone()), &fcfg)?,
        _ => parse_num(&cfg, "delta")?,
    };
    let eps: f64 = parse_num(&cfg, "eps")?;
    let s: f64 = parse_num(&cfg, "s")?;
    let x: usize = parse_num(&cfg, "x")?;
    if x >= form.n() {
        return Err(Error::InvalidArgument(format!("x = {x} out of range")));
    }
    let y: usize = if cfg.inputs.contains_key("y") { parse_num(&cfg, "y")? } else { farthest(&form, x) };
    let dist = feasible_psi_distance(&form, x, y, parse_num(&cfg, "psi_budget")?, cfg.seed)?;
    let mut family = cone_family(&form, x, &default_slopes())?;
    if dist.d_hat.is_finite() {
        for k in [0.25, 0.5, 1.0, 2.0, 4.0] {
            family.push(dist.psi.iter().map(|v| k * v).collect());
        }
    }
    let cert = match verify_offdiag(&form, &phi, delta, eps, s, &family, &t, &fcfg) {
        Ok(c) => c,
        Err(Error::PremiseNotCertified(msg)) => {
            println!("premise refused: {msg}");
            let report = Report::new(cfg, false, json!({"phi": phi.spec(), "delta": delta, "refused": msg}))?;
            return Ok((report, ExitStatus::Premise));
        }
        Err(e) => return Err(e),
    };
    let kernel = SpectralKernel::new(&form)?;
    let mut pair_rows = Vec::with_capacity(t.len());
    let mut diag_rows = Vec::with_capacity(t.len());
    let (mut gauss_ok, mut ray_ok) = (true, true);
    for &tt in &t {
        let exact = series_kernel(&form, tt)?[(x, y)];
        let (ln_g, ln_r) = if dist.d_hat.is_finite() {
            (ln_gaussian_envelope(&cert, dist.d_hat, tt)?, ray_envelope(&cert, &form, &dist.psi, x, y, tt)?.ln_bound)
        } else {
            (f64::NEG_INFINITY, f64::NEG_INFINITY)
        };
        if exact > 0.0 {
            gauss_ok &= ln_g >= exact.ln() - 1e-9;
            ray_ok &= ln_r >= exact.ln() - 1e-9;
        }
        pair_rows.push(vec![tt, exact, ln_g.exp(), ln_r.exp()]);
        diag_rows.push(vec![tt, kernel.onediag_norm(tt)?, cert.ln_ondiag(tt)?.exp()]);
    }
    println!(
        "certificate worst log-margin {:.4}  d̂({x},{y}) = {:.6}  ray envelope {}  literal Gaussian {}",
        cert.worst_log_margin,
        dist.d_hat,
        if ray_ok { "PASS" } else { "FAIL" },
        if gauss_ok { "PASS" } else { "FAIL" }
    );
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir)?;
        write_gnuplot(&dir.join("diagonal.dat"), &["t", "ondiag_norm", "envelope"], &diag_rows)?;
        write_gnuplot(&dir.join("pair.dat"), &["t", "exact", "gaussian", "ray"], &pair_rows)?;
    }
    if let Some(dir) = csv_dir(&cfg) {
        write_envelope_csv(&dir.join("envelope.csv"), &cert.rows)?;
    }
    let pass = cert.passed() && ray_ok;
    finish(
        cfg,
        pass,
        json!({
            "certificate": cert,
            "pair": [x, y],
            "distance": dist,
            "ray_envelope_pass": ray_ok,
            "gaussian_literal_pass": gauss_ok,
        }),
    )
}

pub fn run_stable_like(cfg: RunConfig, distances: &[usize]) -> Result<(Report, ExitStatus)> {
    let run = StableLikeRun {
        n: parse_num(&cfg, "n")?,
        d: parse_num(&cfg, "d")?,
        phi: ScalingFunction::power(1.0, parse_num(&cfg, "alpha")?),
        c_bound: parse_num(&cfg, "c_bound")?,
        eps: parse_num(&cfg, "eps")?,
        seed: cfg.seed,
        t_grid: t_points(&cfg),
        pairs: distances.iter().map(|&y| (0, y)).collect(),
    };
    let rep = stable_like_pipeline(&run)?;
    println!(
        "c11 = {:.4}  spread = {:.3}  Duhamel domination {}  slopes {:.3} / {:.3}",
        rep.c11,
        rep.c11_spread,
        if rep.duhamel_ok { "holds" } else { "FAILS" },
        rep.ondiag_slope,
        rep.offdiag_slope
    );
    if let Some(dir) = csv_dir(&cfg) {
        std::fs::create_dir_all(dir)?;
        write_rows_csv(&dir.join("pipeline.csv"), &rep.rows)?;
    }
    let pass = rep.passed();
    finish(cfg, pass, json!({"stable_like": rep}))
}

/// `torus(n,1)` with `V(r) = 2r`, `φ(r) = r²`: `d₁ = d₂ = 1`, `C₁ = C₂ = C₃ = 1`,
/// `C_* = 1`, `β₁ = 2`.
pub fn torus_ball_profile() -> BallProfile {
    BallProfile::new(
        1.0,
        1.0,
        1.0,
        1.0,
        1.0,
        1.0,
        2.0,
        ScalingFunction::power(2.0, 1.0),
        ScalingFunction::power(1.0, 2.0),
    )
    .expect("valid constants")
}

pub fn run_ball(cfg: RunConfig, radii: &[f64]) -> Result<(Report, ExitStatus)> {
    let n: usize = parse_num(&cfg, "n")?;
    let form = torus(n, 1)?;
    let bp = torus_ball_profile();
    let t = t_points(&cfg);
    let r_grid = crate::profiles::geometric_grid(1.0, n as f64 / 2.0, 32);
    let k = match ball_constants(&form, &bp, parse_num(&cfg, "eps")?, parse_num(&cfg, "s")?, &r_grid, &t) {
        Ok(k) => k,
        Err(Error::PremiseNotCertified(msg)) => {
            println!("premise refused: {msg}");
            let report = Report::new(cfg, false, json!({"refused": msg}))?;
            return Ok((report, ExitStatus::Premise));
        }
        Err(e) => return Err(e),
    };
    let family = cone_family(&form, 0, &default_slopes())?;
    let mut reports = Vec::new();
    for &r in radii {
        let rep = dirichlet_ball_bound(&form, &bp, &k, 0, r, &family, &t)?;
        println!("R = {r}: {} states, worst log-margin {:.4}", rep.states, rep.worst_log_margin);
        reports.push(rep);
    }
    if let Some(dir) = csv_dir(&cfg) {
        std::fs::create_dir_all(dir)?;
        write_rows_csv(&dir.join("balls.csv"), &reports)?;
    }
    let pass = reports.iter().all(|r| r.passed());
    finish(cfg, pass, json!({"constants": k, "balls": reports}))
}
