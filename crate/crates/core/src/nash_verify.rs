//! Both directions of the Nash / on-diagonal equivalence, super-Poincaré
//! margins and Faber–Krahn ratios, with a seeded randomized falsifier
//! standing in for global minimization of the Nash margin.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forms::FiniteDirichletForm;
use crate::profiles::{phi_from_theta_on, NashRate, ProfileFunction};
use crate::semigroup::SpectralKernel;

/// Relative tolerance for theorem-backed inequalities.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    NashToOndiag,
    OndiagToNash,
    SuperPoincare,
    FaberKrahn,
    /// Plain falsifier run against a given rate.
    Nash,
}

/// Offending instance of a failed check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    /// Test function, normalized to `‖f‖₁ = 1` for Nash checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of one verification.
///
/// For Nash and super-Poincaré checks `worst_margin` is relative to the
/// larger side of the inequality; for `nash_to_ondiag` it is a log-margin;
/// for Faber–Krahn it is the infimum of `λ₁(D)/Θ(m(D))`.
#[derive(Debug, Clone, Serialize)]
pub struct NashCheckReport {
    pub direction: Direction,
    pub worst_margin: f64,
    pub tolerance: f64,
    pub witness: Option<Witness>,
    pub t_grid: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub constants: BTreeMap<String, f64>,
    pub premise: Option<String>,
}

impl NashCheckReport {
    fn new(direction: Direction) -> Self {
        NashCheckReport {
            direction,
            worst_margin: f64::INFINITY,
            tolerance: TOLERANCE,
            witness: None,
            t_grid: Vec::new(),
            r_grid: Vec::new(),
            constants: BTreeMap::new(),
            premise: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }
}

/// Falsifier budget and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FalsifierConfig {
    pub budget: usize,
    pub seed: u64,
    /// Number of worst samples refined by descent.
    pub starts: usize,
    /// Descent steps per start.
    pub iterations: usize,
}

impl FalsifierConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        FalsifierConfig { budget, seed, starts: 10, iterations: 200 }
    }

    pub fn premise_note(&self) -> String {
        format!("premise: falsifier-certified at budget {}, seed {}", self.budget, self.seed)
    }
}

/// Terms of the Nash inequality for `f` rescaled to `‖f‖₁ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NashTerms {
    /// `ε(f,f) + δ‖f‖₂²`.
    pub energy: f64,
    /// `θ(‖f‖₂²)`.
    pub rate: f64,
    /// `‖f‖₂²` after rescaling.
    pub r: f64,
    /// `‖f‖₁` before rescaling.
    pub l1_scale: f64,
    /// Rounding level of `θ(r)`: `64 ε_mach (r |θ′(r)| + |θ(r)|)`.
    pub noise: f64,
}

impl NashTerms {
    pub fn margin(&self) -> f64 {
        self.energy - self.rate
    }

    pub fn scale(&self) -> f64 {
        self.energy.abs().max(self.rate.abs())
    }

    /// Margin divided by the larger side; `0` when both sides vanish.
    pub fn relative(&self) -> f64 {
        let m = self.margin();
        if m.abs() <= self.noise {
            return 0.0;
        }
        let s = self.scale();
        if s == 0.0 || !s.is_finite() {
            return if m < 0.0 { f64::NEG_INFINITY } else { m.signum() };
        }
        m / s
    }
}

pub fn nash_terms(form: &FiniteDirichletForm, theta: &NashRate, delta: f64, f: &[f64]) -> Result<NashTerms> {
    if f.len() != form.n() {
        return Err(Error::LengthMismatch { expected: form.n(), got: f.len() });
    }
    let l1 = form.lp_norm(f, 1.0);
    if l1 == 0.0 {
        return Err(Error::InvalidArgument("Nash margin of the zero vector".into()));
    }
    let g: Vec<f64> = f.iter().map(|v| v / l1).collect();
    let r = form.inner(&g, &g);
    let energy = form.energy(&g, &g)? + delta * r;
    let rate = theta.try_eval(r)?;
    Ok(NashTerms { energy, rate, r, l1_scale: l1, noise: rate_noise(theta, r, rate) })
}

/// `ε(f,f) + δ‖f‖₂² − θ(‖f‖₂²)` after rescaling `f` to `‖f‖₁ = 1`.
pub fn nash_margin(form: &FiniteDirichletForm, theta: &NashRate, delta: f64, f: &[f64]) -> Result<f64> {
    Ok(nash_terms(form, theta, delta, f)?.margin())
}

/// Precomputed quadratic data shared by all falsifier samples.
struct Quadratic {
    k: DMatrix<f64>,
    c: DMatrix<f64>,
    killing: Vec<f64>,
    m: DVector<f64>,
    kernel: SpectralKernel,
    rate_max: f64,
}

impl Quadratic {
    fn new(form: &FiniteDirichletForm) -> Result<Self> {
        let n = form.n();
        // ε(f,f) = fᵀ K f
        let mut k = -form.conductances().clone();
        for x in 0..n {
            k[(x, x)] = form.degree(x) + form.killing()[x];
        }
        let rate_max = (0..n).map(|x| k[(x, x)] / form.m()[x]).fold(0.0, f64::max);
        Ok(Quadratic {
            k,
            c: form.conductances().clone(),
            killing: form.killing().to_vec(),
            m: DVector::from_column_slice(form.m()),
            kernel: SpectralKernel::new(form)?,
            rate_max,
        })
    }

    fn l1(&self, f: &DVector<f64>) -> f64 {
        f.iter().zip(self.m.iter()).map(|(v, w)| v.abs() * w).sum()
    }

    /// `(ε + δr, r)` for `f` already normalized.
    fn energy(&self, f: &DVector<f64>, delta: f64) -> (f64, f64) {
        // sum of squares rather than fᵀKf, which can round below zero
        let n = f.len();
        let mut e = 0.0;
        for x in 0..n {
            for y in (x + 1)..n {
                let w = self.c[(x, y)];
                if w != 0.0 {
                    e += w * (f[x] - f[y]).powi(2);
                }
            }
            e += self.killing[x] * f[x] * f[x];
        }
        let r: f64 = f.iter().zip(self.m.iter()).map(|(v, w)| v * v * w).sum();
        (e + delta * r, r)
    }
}

fn terms_of(q: &Quadratic, theta: &NashRate, delta: f64, f: &DVector<f64>) -> NashTerms {
    let (energy, r) = q.energy(f, delta);
    let rate = theta.try_eval(r).unwrap_or(f64::NAN);
    NashTerms { energy, rate, r, l1_scale: 1.0, noise: rate_noise(theta, r, rate) }
}

/// Evaluating `θ` at a rounded `r` (and rounding inside `θ`, e.g. in
/// `ln(r/φ(t))` near `r = φ(t)`) moves it by about this much.
fn rate_noise(theta: &NashRate, r: f64, rate: f64) -> f64 {
    let slope = theta.derivative(r);
    let slope = if slope.is_finite() { slope.abs() } else { 0.0 };
    let v = 64.0 * f64::EPSILON * (r * slope + rate.abs());
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// Relative margin used to rank samples; NaN rates rank as harmless.
fn rank(t: &NashTerms) -> f64 {
    let v = t.relative();
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn sample(q: &Quadratic, form: &FiniteDirichletForm, seed: u64, index: usize) -> DVector<f64> {
    let n = form.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut f = DVector::zeros(n);
    match index % 4 {
        0 => {
            // indicator of a hop ball
            let c = rng.random_range(0..n);
            let radius = if rng.random_bool(0.5) { 0 } else { rng.random_range(0..=3usize) };
            for (z, h) in form.hop_distances(c).into_iter().enumerate() {
                if h <= radius {
                    f[z] = 1.0;
                }
            }
        }
        1 => {
            // Gaussian bump
            let c = rng.random_range(0..n);
            let w = (rng.random_range(0.0..1.0) * (n as f64).max(2.0).ln()).exp() * 0.5;
            let hops = form.hop_distances(c);
            for z in 0..n {
                let d = match form.distance(c, z) {
                    Ok(d) => d,
                    Err(_) => hops[z] as f64,
                };
                f[z] = (-d * d / (2.0 * w * w)).exp();
            }
        }
        2 => {
            // random signs smoothed by the semigroup
            let signs: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let rate = q.rate_max.max(f64::MIN_POSITIVE);
            let t = (rng.random_range((1e-2f64).ln()..(1e3f64 * n as f64).ln())).exp() / rate;
            f = smooth(&q.kernel, &signs, t);
        }
        _ => {
            // mixture of eigenfunctions, biased toward the bottom of the spectrum
            let e = q.kernel.eigenvectors();
            let low = n.min(8);
            for k in 0..low {
                let a: f64 = rng.sample(StandardNormal);
                f += e.column(k) * a;
            }
            if rng.random_bool(0.3) {
                let k = rng.random_range(0..n);
                let a: f64 = rng.sample(StandardNormal);
                f += e.column(k) * a;
            }
        }
    }
    if q.l1(&f) == 0.0 {
        f[index % n] = 1.0;
    }
    let s = q.l1(&f);
    f / s
}

/// `P_t u` through the eigen expansion.
fn smooth(kernel: &SpectralKernel, u: &[f64], t: f64) -> DVector<f64> {
    let e = kernel.eigenvectors();
    let m = kernel.m();
    let n = u.len();
    let mut out = DVector::zeros(n);
    for k in 0..n {
        let coef: f64 = (0..n).map(|x| u[x] * e[(x, k)] * m[x]).sum();
        out += e.column(k) * (coef * (-kernel.eigenvalues()[k] * t).exp());
    }
    out
}

/// Projected gradient descent of the raw margin on `‖f‖₁ = 1`, keeping the
/// iterate with the smallest relative margin.
fn descend(
    q: &Quadratic,
    theta: &NashRate,
    delta: f64,
    start: DVector<f64>,
    iterations: usize,
) -> (DVector<f64>, NashTerms) {
    let mut f = start;
    let mut cur = terms_of(q, theta, delta, &f);
    let mut best = (f.clone(), cur);
    let mut step = 0.25 / (q.rate_max.max(1e-300) * q.m.max());
    for _ in 0..iterations {
        if !cur.rate.is_finite() {
            break;
        }
        let kf = &q.k * &f;
        let dtheta = theta.derivative(cur.r);
        if !dtheta.is_finite() {
            break;
        }
        let mf = f.component_mul(&q.m);
        let grad = kf * 2.0 + mf * (2.0 * (delta - dtheta));
        let mut accepted = false;
        for _ in 0..30 {
            let trial = &f - &grad * step;
            let l1 = q.l1(&trial);
            if l1 == 0.0 {
                step *= 0.5;
                continue;
            }
            let trial = trial / l1;
            let tt = terms_of(q, theta, delta, &trial);
            if tt.margin() < cur.margin() {
                f = trial;
                cur = tt;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if rank(&cur) < rank(&best.1) {
            best = (f.clone(), cur);
        }
        if !accepted {
            break;
        }
    }
    best
}

/// Indices and terms of the worst samples, ordered by relative margin.
fn sample_pass(
    q: &Quadratic,
    form: &FiniteDirichletForm,
    theta: &NashRate,
    delta: f64,
    cfg: &FalsifierConfig,
) -> Vec<(usize, NashTerms)> {
    let mut scored: Vec<(usize, NashTerms)> = (0..cfg.budget)
        .into_par_iter()
        .map(|i| {
            let f = sample(q, form, cfg.seed, i);
            (i, terms_of(q, theta, delta, &f))
        })
        .collect();
    scored.sort_by(|a, b| rank(&a.1).total_cmp(&rank(&b.1)).then(a.0.cmp(&b.0)));
    scored
}

/// Randomized search for `f` with `θ(‖f‖₂²) > ε(f,f) + δ‖f‖₂²`, `‖f‖₁ = 1`.
///
/// Deterministic in `(seed, budget)`: every sample draws from its own
/// ChaCha stream and results are merged by sample index.
pub fn falsify_nash(
    form: &FiniteDirichletForm,
    theta: &NashRate,
    delta: f64,
    cfg: &FalsifierConfig,
) -> Result<NashCheckReport> {
    if cfg.budget == 0 {
        return Err(Error::InvalidArgument("falsifier budget must be ≥ 1".into()));
    }
    let q = Quadratic::new(form)?;
    let scored = sample_pass(&q, form, theta, delta, cfg);
    let mut worst = (scored[0].0, sample(&q, form, cfg.seed, scored[0].0), scored[0].1);
    let refined: Vec<(usize, DVector<f64>, NashTerms)> = scored
        .iter()
        .take(cfg.starts)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|&(i, _)| {
            let (f, t) = descend(&q, theta, delta, sample(&q, form, cfg.seed, i), cfg.iterations);
            (i, f, t)
        })
        .collect();
    for cand in refined {
        if rank(&cand.2) < rank(&worst.2) {
            worst = cand;
        }
    }
    let mut report = NashCheckReport::new(Direction::Nash);
    report.worst_margin = rank(&worst.2);
    report.constants.insert("delta".into(), delta);
    report.constants.insert("budget".into(), cfg.budget as f64);
    report.constants.insert("seed".into(), cfg.seed as f64);
    if report.worst_margin < -TOLERANCE {
        report.witness = Some(Witness {
            vector: Some(worst.1.iter().cloned().collect()),
            t: None,
            lhs: worst.2.rate,
            rhs: worst.2.energy,
        });
    }
    Ok(report)
}

/// Smallest `(ε(f,f) + δ‖f‖₂²) / θ(‖f‖₂²)` found by the falsifier; the
/// largest `c` for which `c θ` survives the same search.
pub fn fit_nash_constant(
    form: &FiniteDirichletForm,
    shape: &NashRate,
    delta: f64,
    cfg: &FalsifierConfig,
) -> Result<f64> {
    let q = Quadratic::new(form)?;
    let ratio = |t: &NashTerms| if t.rate > 0.0 { t.energy / t.rate } else { f64::INFINITY };
    let mut scored: Vec<(usize, f64)> = (0..cfg.budget.max(1))
        .into_par_iter()
        .map(|i| (i, ratio(&terms_of(&q, shape, delta, &sample(&q, form, cfg.seed, i)))))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut best = scored[0].1;
    // the margin against `c θ` is descended with c frozen at the running best
    for &(i, _) in scored.iter().take(cfg.starts) {
        let scaled = shape.scaled(best);
        let (_, t) = descend(&q, &scaled, delta, sample(&q, form, cfg.seed, i), cfg.iterations);
        let r = if t.rate > 0.0 { t.energy / (t.rate / best) } else { f64::INFINITY };
        best = best.min(r);
    }
    if !(best > 0.0 && best.is_finite()) {
        return Err(Error::Invariant(format!("no positive Nash constant for {}: {best}", shape.spec())));
    }
    Ok(best)
}

/// Smallest `δ ≥ 0` found by the falsifier with
/// `θ(‖f‖₂²) ≤ ε(f,f) + δ‖f‖₂²`, inflated by `1 + 1e-6` (plus `1e-12`) so
/// that the returned value passes the same search with room to spare.
pub fn fit_nash_delta(form: &FiniteDirichletForm, theta: &NashRate, cfg: &FalsifierConfig) -> Result<f64> {
    let q = Quadratic::new(form)?;
    // with δ already in `energy`, the extra δ still needed by `f`
    let need = |t: &NashTerms| if t.r > 0.0 { ((t.rate - t.energy) / t.r).max(0.0) } else { 0.0 };
    let mut scored: Vec<(usize, f64)> = (0..cfg.budget.max(1))
        .into_par_iter()
        .map(|i| (i, need(&terms_of(&q, theta, 0.0, &sample(&q, form, cfg.seed, i)))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut best = scored[0].1;
    for &(i, _) in scored.iter().take(cfg.starts) {
        let (_, t) = descend(&q, theta, best, sample(&q, form, cfg.seed, i), cfg.iterations);
        best += need(&t);
    }
    if !best.is_finite() {
        return Err(Error::Invariant(format!("no finite δ for {}", theta.spec())));
    }
    Ok(best * (1.0 + 1e-6) + 1e-12)
}

fn check_grid(t_grid: &[f64], min: usize) -> Result<()> {
    if t_grid.len() < min {
        return Err(Error::InvalidArgument(format!("time grid needs ≥ {min} points, got {}", t_grid.len())));
    }
    if t_grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidArgument("time grid must be positive and finite".into()));
    }
    Ok(())
}

/// Nash rate `θ̃` from the empirical profile `φ_emp(t) = e^{-δt}‖P_t‖_{1→∞}`
/// with the supremum restricted to the grid, and the falsifier run against
/// it. A witness here contradicts a theorem.
pub fn ondiag_to_nash(
    form: &FiniteDirichletForm,
    delta: f64,
    t_grid: &[f64],
    cfg: &FalsifierConfig,
) -> Result<(NashRate, NashCheckReport)> {
    check_grid(t_grid, 16)?;
    let kernel = SpectralKernel::new(form)?;
    let mut phi = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        phi.push((-delta * t).exp() * kernel.onediag_norm(t)?);
    }
    let theta = NashRate::grid_tilde(t_grid, &phi)?;
    let mut report = falsify_nash(form, &theta, delta, cfg)?;
    report.direction = Direction::OndiagToNash;
    report.t_grid = t_grid.to_vec();
    Ok((theta, report))
}

/// Certifies the Nash premise with the falsifier, then checks
/// `‖P_t‖_{1→∞} ≤ φ(t) e^{δt}` on the grid for `φ = G⁻¹`,
/// `G(u) = ∫_u^∞ ds/θ(s)`.
pub fn nash_to_ondiag(
    form: &FiniteDirichletForm,
    theta: &NashRate,
    delta: f64,
    t_grid: &[f64],
    cfg: &FalsifierConfig,
) -> Result<NashCheckReport> {
    check_grid(t_grid, 1)?;
    let premise = falsify_nash(form, theta, delta, cfg)?;
    if let Some(w) = &premise.witness {
        return Err(Error::PremiseNotCertified(format!(
            "falsifier found θ(‖f‖²) = {} > {} = ε(f,f) + δ‖f‖² (relative margin {:.3e}, budget {}, seed {})",
            w.lhs, w.rhs, premise.worst_margin, cfg.budget, cfg.seed
        )));
    }
    let lo = t_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t_grid.iter().cloned().fold(0.0, f64::max);
    let phi = phi_from_theta_on(theta, 0.5 * lo, 2.0 * hi)?.phi;
    let kernel = SpectralKernel::new(form)?;
    let mut report = NashCheckReport::new(Direction::NashToOndiag);
    report.t_grid = t_grid.to_vec();
    report.premise = Some(cfg.premise_note());
    report.constants.insert("delta".into(), delta);
    report.constants.insert("premise_worst_margin".into(), premise.worst_margin);
    for &t in t_grid {
        let lhs = kernel.onediag_norm(t)?;
        let ln_rhs = phi.checked_eval(t)?.ln() + delta * t;
        let margin = ln_rhs - lhs.ln();
        if margin < report.worst_margin {
            report.worst_margin = margin;
            if margin < -TOLERANCE {
                report.witness = Some(Witness { vector: None, t: Some(t), lhs, rhs: ln_rhs.exp() });
            }
        }
    }
    Ok(report)
}

/// `r ε(u,u) + Ĉ β(r) ‖u‖₁² − ‖u‖₂²`.
pub fn super_poincare_margin<B: Fn(f64) -> f64>(
    form: &FiniteDirichletForm,
    u: &[f64],
    r: f64,
    beta: B,
    c_hat: f64,
) -> Result<f64> {
    let (lhs, rhs) = super_poincare_sides(form, u, r, &beta, c_hat)?;
    Ok(rhs - lhs)
}

fn super_poincare_sides<B: Fn(f64) -> f64>(
    form: &FiniteDirichletForm,
    u: &[f64],
    r: f64,
    beta: &B,
    c_hat: f64,
) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::Domain { what: "super-Poincaré parameter", value: r, lo: 0.0, hi: f64::INFINITY });
    }
    if u.len() != form.n() {
        return Err(Error::LengthMismatch { expected: form.n(), got: u.len() });
    }
    if u.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidArgument("super-Poincaré margin of the zero vector".into()));
    }
    let l1 = form.lp_norm(u, 1.0);
    let lhs = form.inner(u, u);
    let rhs = r * form.energy(u, u)? + c_hat * beta(r) * l1 * l1;
    Ok((lhs, rhs))
}

/// Super-Poincaré sweep over `r_grid` and seeded random functions supported
/// in `support`: indicators of sub-intervals of the support, random
/// nonnegative vectors and random signs.
pub fn super_poincare_sweep<B: Fn(f64) -> f64 + Sync>(
    form: &FiniteDirichletForm,
    support: &[usize],
    r_grid: &[f64],
    beta: B,
    c_hat: f64,
    samples: usize,
    seed: u64,
) -> Result<NashCheckReport> {
    if support.is_empty() || r_grid.is_empty() {
        return Err(Error::InvalidArgument("empty support or r-grid".into()));
    }
    let n = form.n();
    let vectors: Vec<Vec<f64>> = (0..samples.max(1))
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut u = vec![0.0; n];
            match i % 3 {
                0 => {
                    let a = rng.random_range(0..support.len());
                    let b = rng.random_range(a..support.len());
                    for &z in &support[a..=b] {
                        u[z] = 1.0;
                    }
                }
                1 => {
                    for &z in support {
                        u[z] = rng.random_range(0.0..1.0);
                    }
                }
                _ => {
                    for &z in support {
                        u[z] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    }
                }
            }
            u
        })
        .collect();
    let results: Vec<(f64, f64, usize, f64, f64)> = r_grid
        .par_iter()
        .map(|&r| {
            let mut worst = (f64::INFINITY, r, 0usize, 0.0, 0.0);
            for (i, u) in vectors.iter().enumerate() {
                if let Ok((lhs, rhs)) = super_poincare_sides(form, u, r, &beta, c_hat) {
                    let rel = (rhs - lhs) / lhs.max(rhs);
                    if rel < worst.0 {
                        worst = (rel, r, i, lhs, rhs);
                    }
                }
            }
            worst
        })
        .collect();
    let mut report = NashCheckReport::new(Direction::SuperPoincare);
    report.r_grid = r_grid.to_vec();
    report.constants.insert("c_hat".into(), c_hat);
    for (rel, r, i, lhs, rhs) in results {
        if rel < report.worst_margin {
            report.worst_margin = rel;
            if rel < -TOLERANCE {
                report.witness = Some(Witness { vector: Some(vectors[i].clone()), t: Some(r), lhs, rhs });
            }
        }
    }
    Ok(report)
}

/// One domain of a Faber–Krahn sweep.
#[derive(Debug, Clone, Serialize)]
pub struct FaberKrahnEntry {
    pub states: Vec<usize>,
    pub mass: f64,
    pub lambda1: f64,
    pub ratio: f64,
    /// `inf_k λ_k(D) / Θ(m(D)/k)`.
    pub ratio_higher: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FaberKrahnReport {
    pub entries: Vec<FaberKrahnEntry>,
    pub inf_ratio: f64,
    pub inf_ratio_higher: f64,
    pub check: NashCheckReport,
}

/// `Θ(v) = N(φ⁻¹(1/v))` where `N(t) = inf_{s ≤ t} M′(s)` is the
/// decreasing envelope of `M′ = -φ′/φ`, the infimum taken over a geometric
/// grid from the lower end of the profile's window.
pub fn faber_krahn_theta(phi: &ProfileFunction, v: f64) -> Result<f64> {
    let t = phi.inverse(1.0 / v)?;
    let lo = phi.window().0.min(t);
    let mut n = phi.m_prime(t);
    if t > lo {
        for s in crate::profiles::geometric_grid(lo, t, 256) {
            n = n.min(phi.m_prime(s));
        }
    }
    Ok(n)
}

/// `λ₁(D)/Θ(m(D))` and its higher-mode analogue for each domain. For a
/// disconnected `D` the smallest eigenvalue over components is used, which
/// is the bottom of the part form's spectrum.
pub fn faber_krahn_check(
    form: &FiniteDirichletForm,
    phi: &ProfileFunction,
    domains: &[Vec<usize>],
) -> Result<FaberKrahnReport> {
    if domains.is_empty() {
        return Err(Error::InvalidArgument("no domains".into()));
    }
    let entries: Vec<FaberKrahnEntry> = domains
        .par_iter()
        .map(|d| -> Result<FaberKrahnEntry> {
            let part = form.part_form(d)?;
            let spec = SpectralKernel::new(&part.form)?;
            let mass: f64 = d.iter().map(|&x| form.m()[x]).sum();
            let lambda1 = spec.eigenvalues()[0];
            let ratio = lambda1 / faber_krahn_theta(phi, mass)?;
            let mut ratio_higher = f64::INFINITY;
            for (k, mu) in spec.eigenvalues().iter().enumerate() {
                let th = faber_krahn_theta(phi, mass / (k + 1) as f64)?;
                ratio_higher = ratio_higher.min(mu / th);
            }
            Ok(FaberKrahnEntry { states: d.clone(), mass, lambda1, ratio, ratio_higher })
        })
        .collect::<Result<_>>()?;
    let inf_ratio = entries.iter().map(|e| e.ratio).fold(f64::INFINITY, f64::min);
    let inf_ratio_higher = entries.iter().map(|e| e.ratio_higher).fold(f64::INFINITY, f64::min);
    let mut check = NashCheckReport::new(Direction::FaberKrahn);
    check.worst_margin = inf_ratio;
    check.constants.insert("inf_ratio_higher".into(), inf_ratio_higher);
    if !(inf_ratio > 0.0) {
        let e = entries.iter().find(|e| !(e.ratio > 0.0)).expect("entry with nonpositive ratio");
        check.witness = Some(Witness { vector: None, t: None, lhs: e.lambda1, rhs: e.mass });
    }
    Ok(FaberKrahnReport { entries, inf_ratio, inf_ratio_higher, check })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn indicator_margin_on_two_states() {
        let f = models::two_state();
        let m = nash_margin(&f, &NashRate::power(1.0, 2.0), 0.0, &[1.0, 0.0]).unwrap();
        assert!(m.abs() < 1e-15);
        assert!(nash_margin(&f, &NashRate::zero(), 0.0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_rate_has_no_witness() {
        let f = models::cycle(16).unwrap();
        let r = falsify_nash(&f, &NashRate::zero(), 0.0, &FalsifierConfig::new(200, 1)).unwrap();
        assert!(r.passed());
        assert!(r.worst_margin >= 0.0);
    }

    #[test]
    fn linear_rate_above_spectrum_is_falsified() {
        let f = models::cycle(16).unwrap();
        // λ_max = 4
        let r = falsify_nash(&f, &NashRate::power(4.5, 1.0), 0.0, &FalsifierConfig::new(200, 1)).unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn falsifier_is_deterministic() {
        let f = models::path_killed(12).unwrap();
        let th = NashRate::power(3.0, 3.0);
        let a = falsify_nash(&f, &th, 0.0, &FalsifierConfig::new(300, 9)).unwrap();
        let b = falsify_nash(&f, &th, 0.0, &FalsifierConfig::new(300, 9)).unwrap();
        assert_eq!(a.worst_margin.to_bits(), b.worst_margin.to_bits());
    }

    #[test]
    fn super_poincare_indicator() {
        let f = models::cycle(8).unwrap();
        let mut u = vec![0.0; 8];
        u[0] = 1.0;
        let m = super_poincare_margin(&f, &u, 0.1, |_| 2.0, 1.0).unwrap();
        assert!((m - (0.1 * 2.0 + 2.0 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn faber_krahn_single_state() {
        let f = models::path(10).unwrap();
        let phi = ProfileFunction::parse("pow(-0.5)").unwrap();
        let r = faber_krahn_check(&f, &phi, &[vec![4]]).unwrap();
        assert!((r.entries[0].lambda1 - 2.0).abs() < 1e-12);
        // Θ(1) = 1/2
        assert!((r.inf_ratio - 4.0).abs() < 1e-9);
    }
}
