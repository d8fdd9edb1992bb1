//! Off-diagonal bounds by Davies' perturbation method: explicit constants,
//! grid certification against exact kernels, lower bounds on the intrinsic
//! distance, Dirichlet bounds on balls and the stable-like pipeline.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::forms::FiniteDirichletForm;
use crate::nash_verify::{falsify_nash, FalsifierConfig, TOLERANCE};
use crate::profiles::quad::integrate_from_zero;
use crate::profiles::{
    check_doubling, diagnostic_grid, geometric_grid, power_form_constant, product_constant, NashRate,
    ProfileFunction, ScalingFunction,
};
use crate::semigroup::{series_kernel, SpectralKernel};
use crate::{models, Error, Result};

/// Which admissibility class the perturbations are taken from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Admissibility {
    /// Jump-type forms: `(C₀, C, η) = (s, 5/(1-s), 2)`.
    Jump { s: f64 },
    /// `(C₀, C, η) = (1, 1, 1)`. Only an approximation on graphs: no finite
    /// chain is strongly local.
    StronglyLocal,
}

impl Admissibility {
    /// `(C₀, C, η)`.
    pub fn constants(&self) -> Result<(f64, f64, f64)> {
        match *self {
            Admissibility::Jump { s } => {
                if !(s > 0.0 && s < 1.0) {
                    return Err(Error::Domain { what: "admissibility s", value: s, lo: 0.0, hi: 1.0 });
                }
                Ok((s, 5.0 / (1.0 - s), 2.0))
            }
            Admissibility::StronglyLocal => Ok((1.0, 1.0, 1.0)),
        }
    }
}

fn lambda_condition(lambda: f64, eps: f64, c: f64, eta: f64) -> f64 {
    let p = 2f64.powf(eta);
    (lambda - 1.0) / lambda * (1.0 + c * p / (lambda - p)) - (1.0 + eps)
}

/// Smallest integer `λ > 2^η` with `(λ-1)/λ · (1 + C 2^η/(λ - 2^η)) < 1 + ε`.
pub fn davies_lambda(eps: f64, c: f64, eta: f64) -> Result<u64> {
    if !(eps > 0.0) {
        return Err(Error::Domain { what: "epsilon", value: eps, lo: 0.0, hi: f64::INFINITY });
    }
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::Domain { what: "admissibility C", value: c, lo: 1.0, hi: f64::INFINITY });
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Domain { what: "admissibility eta", value: eta, lo: 0.0, hi: f64::INFINITY });
    }
    let mut lambda = 2f64.powf(eta).floor() as u64 + 1;
    // the left side decreases to 1 + 0 < 1 + ε, so this terminates; jump
    // ahead by doubling first to keep tiny ε cheap
    if lambda_condition(lambda as f64, eps, c, eta) >= 0.0 {
        let mut hi = lambda * 2;
        while lambda_condition(hi as f64, eps, c, eta) >= 0.0 {
            lambda = hi;
            hi *= 2;
        }
        let mut lo = lambda;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if lambda_condition(mid as f64, eps, c, eta) < 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lambda = hi;
    }
    Ok(lambda)
}

/// Constants of the off-diagonal bound for a profile and slack `ε`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DaviesConstants {
    pub epsilon: f64,
    pub admissibility: Admissibility,
    /// `C₀`.
    pub c0: f64,
    /// Admissibility `C`.
    pub big_c: f64,
    /// Admissibility `η`.
    pub eta: f64,
    pub lambda: u64,
    /// Doubling constant of the profile on its diagnostic grid.
    pub c_d: f64,
    pub eta_d: f64,
    /// `C` in `φ(r)/φ(R) ≤ C (R/r)^{η_d}`.
    pub power_c: f64,
    /// `C_ε = C(λ)`.
    pub c_eps: f64,
    /// `c_ε = C₀ c(λ)`.
    pub small_c_eps: f64,
}

impl DaviesConstants {
    /// Copy with `C_ε` multiplied by `factor`; used for mutation tests.
    pub fn with_c_eps_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.c_eps *= factor;
        out
    }
}

/// Constants for jump admissibility with parameter `s`.
pub fn davies_constants(phi: &ProfileFunction, eps: f64, s: f64) -> Result<DaviesConstants> {
    davies_constants_for(phi, eps, Admissibility::Jump { s })
}

pub fn davies_constants_for(phi: &ProfileFunction, eps: f64, mode: Admissibility) -> Result<DaviesConstants> {
    let (c0, big_c, eta) = mode.constants()?;
    let grid = diagnostic_grid(phi);
    let doubling = check_doubling(phi, &grid)?;
    if !(doubling.eta_d > 0.0) {
        return Err(Error::DoublingFailure(format!(
            "doubling exponent of {} is {}, need > 0",
            phi.spec(),
            doubling.eta_d
        )));
    }
    let power_c = power_form_constant(phi, doubling.eta_d, &grid).max(1.0);
    let lambda = davies_lambda(eps, big_c, eta)?;
    let (c_eps, c_lambda) = product_constant(power_c, doubling.eta_d, lambda as f64)?;
    Ok(DaviesConstants {
        epsilon: eps,
        admissibility: mode,
        c0,
        big_c,
        eta,
        lambda,
        c_d: doubling.c_d,
        eta_d: doubling.eta_d,
        power_c,
        c_eps,
        small_c_eps: c0 * c_lambda,
    })
}

/// One `(t, x, y)` row of an envelope run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub t: f64,
    pub x: usize,
    pub y: usize,
    pub exact: f64,
    pub bound: f64,
    pub log_margin: f64,
}

/// Grid tuple where the bound is tightest (or violated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OffdiagWitness {
    pub t: f64,
    pub x: usize,
    pub y: usize,
    pub psi_index: usize,
    pub exact: f64,
    pub bound: f64,
}

/// A completed (or pending) off-diagonal verification.
#[derive(Debug, Clone, Serialize)]
pub struct DaviesCertificate {
    pub constants: DaviesConstants,
    #[serde(skip)]
    pub phi: ProfileFunction,
    pub phi_spec: String,
    pub delta: f64,
    pub t_grid: Vec<f64>,
    pub psi_count: usize,
    /// Number of `(t, x, y, ψ)` tuples checked.
    pub tuples: usize,
    pub worst_log_margin: f64,
    pub witness: Option<OffdiagWitness>,
    pub premise: Option<String>,
    /// Rows for `x = 0`, bound minimized over the family.
    #[serde(skip)]
    pub rows: Vec<EnvelopeRow>,
}

impl DaviesCertificate {
    pub fn new(phi: ProfileFunction, delta: f64, constants: DaviesConstants) -> Self {
        DaviesCertificate {
            constants,
            phi_spec: phi.spec(),
            phi,
            delta,
            t_grid: Vec::new(),
            psi_count: 0,
            tuples: 0,
            worst_log_margin: f64::INFINITY,
            witness: None,
            premise: None,
            rows: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.tuples > 0 && self.worst_log_margin >= -TOLERANCE
    }

    /// `ln(C_ε φ(c_ε t) e^{δt})`.
    pub fn ln_ondiag(&self, t: f64) -> Result<f64> {
        check_t(t)?;
        let k = &self.constants;
        Ok(k.c_eps.ln() + self.phi.checked_eval(k.small_c_eps * t)?.ln() + self.delta * t)
    }

    /// Log of the bound from `|ψ(y) - ψ(x)|` and `ln Λ(ψ)²`.
    pub fn ln_offdiag_bound(&self, dpsi_abs: f64, t: f64, ln_lambda_sq: f64) -> Result<f64> {
        let growth = (1.0 + self.constants.epsilon) * ln_lambda_sq.exp() * t;
        Ok(self.ln_ondiag(t)? - dpsi_abs + growth)
    }

    /// `C_ε φ(c_ε t) e^{δt} exp(-|ψ(y) - ψ(x)| + (1+ε) Λ² t)`.
    pub fn offdiag_bound(&self, psi: &[f64], t: f64, x: usize, y: usize, lambda_sq: f64) -> Result<f64> {
        let n = psi.len();
        if x >= n || y >= n {
            return Err(Error::InvalidArgument(format!("state out of range for ψ of length {n}")));
        }
        Ok(self.ln_offdiag_bound((psi[y] - psi[x]).abs(), t, lambda_sq.ln())?.exp())
    }
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what: "time", value: t, lo: 0.0, hi: f64::INFINITY })
    }
}

fn check_t_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    t_grid.iter().try_for_each(|&t| check_t(t))
}

/// Distance used to shape perturbations: coordinate distance when the form
/// has coordinates, hop distance otherwise (0 across components).
pub fn shape_distances(form: &FiniteDirichletForm, center: usize) -> Result<Vec<f64>> {
    let n = form.n();
    if center >= n {
        return Err(Error::InvalidArgument(format!("center {center} out of range for {n} states")));
    }
    if form.coords().is_some() {
        (0..n).map(|z| form.distance(center, z)).collect()
    } else {
        Ok(form
            .hop_distances(center)
            .into_iter()
            .map(|h| if h == usize::MAX { 0.0 } else { h as f64 })
            .collect())
    }
}

/// Cones `ψ_a(z) = a d(z, center)` for each slope.
pub fn cone_family(form: &FiniteDirichletForm, center: usize, slopes: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = shape_distances(form, center)?;
    Ok(slopes.iter().map(|a| d.iter().map(|v| a * v).collect()).collect())
}

/// Linear ramps `ψ_a(z) = a z_axis` along a coordinate axis.
pub fn axis_ramps(form: &FiniteDirichletForm, axis: usize, slopes: &[f64]) -> Result<Vec<Vec<f64>>> {
    let coords = form.coords().ok_or(Error::MissingCoords)?;
    if coords.first().is_none_or(|c| axis >= c.len()) {
        return Err(Error::InvalidArgument(format!("no coordinate axis {axis}")));
    }
    Ok(slopes.iter().map(|a| coords.iter().map(|c| a * c[axis]).collect()).collect())
}

/// The eight default slopes `2^k / 16`, `k = 0..8`.
pub fn default_slopes() -> Vec<f64> {
    (0..8).map(|k| 2f64.powi(k) / 16.0).collect()
}

#[derive(Clone, Copy)]
struct Best {
    margin: f64,
    index: (usize, usize, usize, usize),
    exact: f64,
    bound: f64,
}

impl Best {
    fn none() -> Self {
        Best { margin: f64::INFINITY, index: (usize::MAX, 0, 0, 0), exact: 0.0, bound: 0.0 }
    }

    fn better(self, other: Best) -> Best {
        match self.margin.total_cmp(&other.margin) {
            std::cmp::Ordering::Less => self,
            std::cmp::Ordering::Greater => other,
            std::cmp::Ordering::Equal => {
                if self.index <= other.index {
                    self
                } else {
                    other
                }
            }
        }
    }
}

/// Checks `p(t,x,y) ≤ bound` for every grid tuple and every `ψ` in the
/// family, with exact kernels. No premise gate; see [`verify_offdiag`].
pub fn certify_offdiag(
    form: &FiniteDirichletForm,
    mut cert: DaviesCertificate,
    psi_family: &[Vec<f64>],
    t_grid: &[f64],
) -> Result<DaviesCertificate> {
    check_t_grid(t_grid)?;
    if psi_family.is_empty() {
        return Err(Error::InvalidArgument("empty ψ family".into()));
    }
    let n = form.n();
    let ln_lsq: Vec<f64> = psi_family.iter().map(|p| form.ln_lambda_sq(p)).collect::<Result<_>>()?;
    let per_t: Vec<(Best, Vec<EnvelopeRow>)> = t_grid
        .par_iter()
        .enumerate()
        .map(|(ti, &t)| -> Result<(Best, Vec<EnvelopeRow>)> {
            let p = series_kernel(form, t)?;
            let mut best = Best::none();
            let mut rows = Vec::with_capacity(n);
            for x in 0..n {
                for y in 0..n {
                    let exact = p[(x, y)];
                    let mut min_ln_bound = f64::INFINITY;
                    for (k, psi) in psi_family.iter().enumerate() {
                        let ln_b = cert.ln_offdiag_bound((psi[y] - psi[x]).abs(), t, ln_lsq[k])?;
                        min_ln_bound = min_ln_bound.min(ln_b);
                        // the kernel is entrywise positive on connected
                        // forms; zero entries satisfy any bound
                        let margin = if exact > 0.0 { ln_b - exact.ln() } else { f64::INFINITY };
                        best = best.better(Best {
                            margin,
                            index: (ti, x, y, k),
                            exact,
                            bound: ln_b.exp(),
                        });
                    }
                    if x == 0 {
                        let log_margin = if exact > 0.0 { min_ln_bound - exact.ln() } else { f64::INFINITY };
                        rows.push(EnvelopeRow { t, x, y, exact, bound: min_ln_bound.exp(), log_margin });
                    }
                }
            }
            Ok((best, rows))
        })
        .collect::<Result<_>>()?;
    let mut best = Best::none();
    cert.rows.clear();
    for (b, rows) in per_t {
        best = best.better(b);
        cert.rows.extend(rows);
    }
    cert.t_grid = t_grid.to_vec();
    cert.psi_count = psi_family.len();
    cert.tuples = t_grid.len() * n * n * psi_family.len();
    cert.worst_log_margin = best.margin;
    let (ti, x, y, k) = best.index;
    cert.witness = (ti != usize::MAX).then(|| OffdiagWitness {
        t: t_grid[ti],
        x,
        y,
        psi_index: k,
        exact: best.exact,
        bound: best.bound,
    });
    Ok(cert)
}

/// Gates on the Nash premise for `θ` derived from `φ` and `δ`, computes the
/// constants and certifies the bound on the grid.
#[allow(clippy::too_many_arguments)]
pub fn verify_offdiag(
    form: &FiniteDirichletForm,
    phi: &ProfileFunction,
    delta: f64,
    eps: f64,
    s: f64,
    psi_family: &[Vec<f64>],
    t_grid: &[f64],
    cfg: &FalsifierConfig,
) -> Result<DaviesCertificate> {
    check_t_grid(t_grid)?;
    let theta = NashRate::from_profile(phi.clone());
    let premise = falsify_nash(form, &theta, delta, cfg)?;
    if let Some(w) = &premise.witness {
        return Err(Error::PremiseNotCertified(format!(
            "falsifier found θ(‖f‖²) = {} > {} = ε(f,f) + δ‖f‖² for θ from {} (budget {}, seed {})",
            w.lhs,
            w.rhs,
            phi.spec(),
            cfg.budget,
            cfg.seed
        )));
    }
    let constants = davies_constants(phi, eps, s)?;
    let mut cert = DaviesCertificate::new(phi.clone(), delta, constants);
    cert.premise = Some(cfg.premise_note());
    certify_offdiag(form, cert, psi_family, t_grid)
}

/// `φ(t) = a t^{-exponent}` with the smallest `a` dominating
/// `‖P_t‖_{1→∞}` on the grid.
pub fn fit_window_profile(form: &FiniteDirichletForm, exponent: f64, t_grid: &[f64]) -> Result<ProfileFunction> {
    check_t_grid(t_grid)?;
    if !(exponent > 0.0) {
        return Err(Error::Domain { what: "profile exponent", value: exponent, lo: 0.0, hi: f64::INFINITY });
    }
    let kernel = SpectralKernel::new(form)?;
    let mut a = 0.0f64;
    for &t in t_grid {
        a = a.max(kernel.onediag_norm(t)? * t.powf(exponent));
    }
    Ok(ProfileFunction::power(a, -exponent))
}

/// Lower bound on the intrinsic distance together with the feasible
/// perturbation realizing it.
#[derive(Debug, Clone, Serialize)]
pub struct PsiDistance {
    /// `ψ*(x) - ψ*(y)`, or `+∞` for a disconnected pair.
    pub d_hat: f64,
    pub psi: Vec<f64>,
    /// `Λ(ψ*)²`, re-verified `≤ 1 + 1e-12`.
    pub lambda_sq: f64,
    pub sweeps: usize,
    /// Component of `x` when `y` is unreachable.
    pub disconnected: Option<Vec<usize>>,
}

/// Per-state neighbor lists `(w, c[z][w])`.
fn neighbors(form: &FiniteDirichletForm) -> Vec<Vec<(usize, f64)>> {
    let c = form.conductances();
    let n = form.n();
    (0..n)
        .map(|z| (0..n).filter(|&w| w != z && c[(z, w)] > 0.0).map(|w| (w, c[(z, w)])).collect())
        .collect()
}

fn local_density(nb: &[Vec<(usize, f64)>], m: &[f64], psi: &[f64], z: usize) -> f64 {
    let (mut plus, mut minus) = (0.0, 0.0);
    for &(w, c) in &nb[z] {
        let d = psi[w] - psi[z];
        plus += c * d.exp_m1().powi(2);
        minus += c * (-d).exp_m1().powi(2);
    }
    plus.max(minus) / (2.0 * m[z])
}

fn feasible_at(nb: &[Vec<(usize, f64)>], m: &[f64], psi: &[f64], z: usize) -> bool {
    local_density(nb, m, psi, z) <= 1.0 && nb[z].iter().all(|&(w, _)| local_density(nb, m, psi, w) <= 1.0)
}

/// Largest `a` (by bisection) with `Λ(a ψ₀)² ≤ 1`.
fn scale_to_feasible(nb: &[Vec<(usize, f64)>], m: &[f64], shape: &[f64]) -> f64 {
    let ok = |a: f64| {
        let psi: Vec<f64> = shape.iter().map(|v| a * v).collect();
        (0..psi.len()).all(|z| local_density(nb, m, &psi, z) <= 1.0)
    };
    let mut hi = 1.0;
    while ok(hi) && hi < 1e6 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

const BARRIER_MAX_STATES: usize = 1024;

/// Sparse gradient and Hessian entries.
type Grad = Vec<(usize, f64)>;
type Hess = Vec<(usize, usize, f64)>;

/// Constraint `(z, σ)`: `(1/(2m(z))) Σ_w c[z][w] (e^{σ(ψ(w)-ψ(z))} - 1)²`
/// with its gradient and Hessian as `(index, index, value)` triples.
fn constraint_terms(
    nb: &[Vec<(usize, f64)>],
    m: &[f64],
    psi: &[f64],
    z: usize,
    sigma: f64,
) -> (f64, Grad, Hess) {
    let mut g = 0.0;
    let mut grad = vec![(z, 0.0)];
    let mut hess = Vec::with_capacity(4 * nb[z].len());
    for &(w, c) in &nb[z] {
        let a = c / (2.0 * m[z]);
        let e = (sigma * (psi[w] - psi[z])).exp();
        g += a * (e - 1.0).powi(2);
        let h1 = a * 2.0 * e * (e - 1.0) * sigma;
        let h2 = a * 2.0 * e * (2.0 * e - 1.0);
        grad.push((w, h1));
        grad[0].1 -= h1;
        hess.extend([(w, w, h2), (z, z, h2), (w, z, -h2), (z, w, -h2)]);
    }
    (g, grad, hess)
}

/// Log-barrier Newton iterations for `max ψ(x) - ψ(y)` subject to every
/// constraint `< 1`, with `ψ(y)` pinned and only the component of `x`
/// free. `start` must be strictly feasible; every accepted iterate is.
fn barrier_refine(nb: &[Vec<(usize, f64)>], m: &[f64], start: Vec<f64>, x: usize, y: usize, comp: &[usize]) -> Vec<f64> {
    let free: Vec<usize> = comp.iter().cloned().filter(|&z| z != y).collect();
    let mut slot = vec![usize::MAX; m.len()];
    for (i, &z) in free.iter().enumerate() {
        slot[z] = i;
    }
    let k = free.len();
    let constraints: Vec<(usize, f64)> = comp
        .iter()
        .filter(|&&z| !nb[z].is_empty())
        .flat_map(|&z| [(z, 1.0), (z, -1.0)])
        .collect();
    let objective = |psi: &[f64], t: f64| -> Option<f64> {
        let mut f = -t * (psi[x] - psi[y]);
        for &(z, s) in &constraints {
            let (g, _, _) = constraint_terms(nb, m, psi, z, s);
            if !(g < 1.0) {
                return None;
            }
            f -= (1.0 - g).ln();
        }
        Some(f)
    };
    let mut psi = start;
    if objective(&psi, 1.0).is_none() {
        return psi;
    }
    let mut t = 1.0;
    while (constraints.len() as f64) / t > 1e-9 {
        for _ in 0..50 {
            let mut grad = nalgebra::DVector::<f64>::zeros(k);
            let mut hess = DMatrix::<f64>::zeros(k, k);
            grad[slot[x]] -= t;
            for &(z, s) in &constraints {
                let (g, dg, hg) = constraint_terms(nb, m, &psi, z, s);
                let inv = 1.0 / (1.0 - g);
                for &(i, v) in &dg {
                    if slot[i] != usize::MAX {
                        grad[slot[i]] += v * inv;
                    }
                }
                for &(i, j, v) in &hg {
                    if slot[i] != usize::MAX && slot[j] != usize::MAX {
                        hess[(slot[i], slot[j])] += v * inv;
                    }
                }
                for &(i, a) in &dg {
                    for &(j, b) in &dg {
                        if slot[i] != usize::MAX && slot[j] != usize::MAX {
                            hess[(slot[i], slot[j])] += a * b * inv * inv;
                        }
                    }
                }
            }
            // the squared-exponential terms are not convex for large
            // negative increments; shift until the Hessian factors
            let scale = (0..k).map(|i| hess[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
            let mut tau = 0.0;
            let step = loop {
                let mut h = hess.clone();
                for i in 0..k {
                    h[(i, i)] += tau;
                }
                if let Some(ch) = h.cholesky() {
                    break Some(ch.solve(&(-&grad)));
                }
                tau = if tau == 0.0 { 1e-12 * scale } else { tau * 10.0 };
                if tau > 1e6 * scale {
                    break None;
                }
            };
            let Some(step) = step else { break };
            let decrement = -grad.dot(&step);
            if !(decrement > 1e-12) {
                break;
            }
            let f0 = objective(&psi, t).expect("feasible iterate");
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-12 {
                let mut cand = psi.clone();
                for (i, &z) in free.iter().enumerate() {
                    cand[z] += alpha * step[i];
                }
                if let Some(f1) = objective(&cand, t) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        psi = cand;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        t *= 4.0;
    }
    psi
}

/// Maximizes `ψ(x) - ψ(y)` over perturbations with every per-state density
/// of `Λ(ψ)²` at most 1: graph-distance ramps, a log-barrier Newton
/// refinement (components up to 1024 states), then `budget` sweeps of
/// seeded coordinate ascent. The result is feasible, hence a rigorous lower bound; it is not
/// claimed optimal.
pub fn feasible_psi_distance(
    form: &FiniteDirichletForm,
    x: usize,
    y: usize,
    budget: usize,
    seed: u64,
) -> Result<PsiDistance> {
    let n = form.n();
    if x >= n || y >= n {
        return Err(Error::InvalidArgument(format!("states ({x},{y}) out of range for {n} states")));
    }
    if x == y {
        return Ok(PsiDistance { d_hat: 0.0, psi: vec![0.0; n], lambda_sq: 0.0, sweeps: 0, disconnected: None });
    }
    let hx = form.hop_distances(x);
    let hy = form.hop_distances(y);
    if hx[y] == usize::MAX {
        let comp = (0..n).filter(|&z| hx[z] != usize::MAX).collect();
        return Ok(PsiDistance {
            d_hat: f64::INFINITY,
            psi: vec![0.0; n],
            lambda_sq: 0.0,
            sweeps: 0,
            disconnected: Some(comp),
        });
    }
    let nb = neighbors(form);
    let m = form.m();
    let dist = hx[y] as f64;
    let finite = |h: usize, cap: f64| if h == usize::MAX { cap } else { (h as f64).min(cap) };
    // ramp down from x, and the bisector ramp (distance to y minus distance to x)
    let ramp: Vec<f64> = (0..n).map(|z| dist - finite(hx[z], dist)).collect();
    let bisector: Vec<f64> = (0..n)
        .map(|z| 0.5 * (finite(hy[z], dist) - finite(hx[z], dist) + dist).clamp(0.0, dist))
        .collect();
    let mut psi = [ramp, bisector]
        .into_iter()
        .map(|shape| {
            let a = scale_to_feasible(&nb, m, &shape);
            shape.into_iter().map(|v| a * v).collect::<Vec<f64>>()
        })
        .max_by(|p, q| (p[x] - p[y]).total_cmp(&(q[x] - q[y])))
        .expect("two starts");
    let comp: Vec<usize> = (0..n).filter(|&z| hx[z] != usize::MAX).collect();
    if comp.len() <= BARRIER_MAX_STATES {
        let shrunk: Vec<f64> = psi.iter().map(|v| 0.9 * v).collect();
        let refined = barrier_refine(&nb, m, shrunk, x, y, &comp);
        if refined[x] - refined[y] > psi[x] - psi[y] {
            psi = refined;
        }
    }
    let mut order: Vec<usize> = (0..n).filter(|&z| z != y).collect();
    let mut sweeps = 0;
    for sweep in 0..budget {
        sweeps = sweep + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(sweep as u64);
        order.shuffle(&mut rng);
        let mut moved = 0.0;
        for &z in &order {
            let base = psi[z];
            let mut step = 1.0;
            psi[z] = base + step;
            if !feasible_at(&nb, m, &psi, z) {
                let (mut lo, mut hi) = (0.0, step);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    psi[z] = base + mid;
                    if feasible_at(&nb, m, &psi, z) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                step = lo;
            }
            psi[z] = base + step;
            moved += step;
        }
        if moved < 1e-13 {
            break;
        }
    }
    let lambda_sq = form.lambda_sq(&psi)?;
    if lambda_sq > 1.0 + 1e-12 {
        return Err(Error::Invariant(format!("ascent produced Λ(ψ)² = {lambda_sq} > 1")));
    }
    Ok(PsiDistance { d_hat: psi[x] - psi[y], psi, lambda_sq, sweeps, disconnected: None })
}

/// `ln(C_ε φ(c_ε t) e^{δt} exp(-d̂²/(4(1+ε)t)))`.
pub fn ln_gaussian_envelope(cert: &DaviesCertificate, d_hat: f64, t: f64) -> Result<f64> {
    if !(d_hat >= 0.0) {
        return Err(Error::Domain { what: "distance", value: d_hat, lo: 0.0, hi: f64::INFINITY });
    }
    Ok(cert.ln_ondiag(t)? - d_hat * d_hat / (4.0 * (1.0 + cert.constants.epsilon) * t))
}

/// `C_ε φ(c_ε t) e^{δt} exp(-d̂²/(4(1+ε)t))`.
pub fn gaussian_envelope(cert: &DaviesCertificate, d_hat: f64, t: f64) -> Result<f64> {
    Ok(ln_gaussian_envelope(cert, d_hat, t)?.exp())
}

/// Bound along the ray `λψ*`, minimized over `λ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RayEnvelope {
    pub ln_bound: f64,
    /// Minimizing ray parameter.
    pub scale: f64,
}

/// `min_{λ≥0} C_ε φ(c_ε t) e^{δt} exp(-λ|ψ*(y)-ψ*(x)| + (1+ε)Λ(λψ*)²t)`
/// with the exact `Λ(λψ*)²`, so the result is a valid bound whenever the
/// certificate is.
pub fn ray_envelope(
    cert: &DaviesCertificate,
    form: &FiniteDirichletForm,
    psi_star: &[f64],
    x: usize,
    y: usize,
    t: f64,
) -> Result<RayEnvelope> {
    let base = cert.ln_ondiag(t)?;
    if x >= psi_star.len() || y >= psi_star.len() {
        return Err(Error::InvalidArgument("state out of range for ψ*".into()));
    }
    let d = (psi_star[y] - psi_star[x]).abs();
    let eval = |lam: f64| -> Result<f64> {
        if lam == 0.0 {
            return Ok(base);
        }
        let scaled: Vec<f64> = psi_star.iter().map(|v| lam * v).collect();
        cert.ln_offdiag_bound(lam * d, t, form.ln_lambda_sq(&scaled)?)
    };
    let grid = geometric_grid(1e-4, 1e2, 301);
    let mut best = RayEnvelope { ln_bound: base, scale: 0.0 };
    let mut best_i = None;
    for (i, &lam) in grid.iter().enumerate() {
        let v = eval(lam)?;
        if v < best.ln_bound {
            best = RayEnvelope { ln_bound: v, scale: lam };
            best_i = Some(i);
        }
    }
    // golden-section refinement in ln λ around the best grid cell
    if let Some(i) = best_i {
        let (mut a, mut b) = (grid[i.saturating_sub(1)].ln(), grid[(i + 1).min(grid.len() - 1)].ln());
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - g * (b - a);
            let e = a + g * (b - a);
            if eval(c.exp())? < eval(e.exp())? {
                b = e;
            } else {
                a = c;
            }
        }
        let lam = (0.5 * (a + b)).exp();
        let v = eval(lam)?;
        if v < best.ln_bound {
            best = RayEnvelope { ln_bound: v, scale: lam };
        }
    }
    Ok(best)
}

/// Volume and scaling data for ball bounds: `V(r)` with the two-sided
/// doubling constants `(d₁, d₂, C₁, C₂)`, the comparison constant `C₃`
/// and the lower scaling `(C_*, β₁)` of `φ`.
#[derive(Debug, Clone, Serialize)]
pub struct BallProfile {
    pub d1: f64,
    pub d2: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c_star: f64,
    pub beta1: f64,
    #[serde(skip)]
    pub volume: ScalingFunction,
    #[serde(skip)]
    pub phi_scaling: ScalingFunction,
    pub volume_spec: String,
    pub phi_spec: String,
}

impl BallProfile {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        d1: f64,
        d2: f64,
        c1: f64,
        c2: f64,
        c3: f64,
        c_star: f64,
        beta1: f64,
        volume: ScalingFunction,
        phi_scaling: ScalingFunction,
    ) -> Result<Self> {
        if !(d1 > 0.0 && d1 <= d2) {
            return Err(Error::InvalidArgument(format!("need 0 < d1 ≤ d2, got {d1}, {d2}")));
        }
        if !(c1 > 0.0 && c1 <= c2) {
            return Err(Error::InvalidArgument(format!("need 0 < C1 ≤ C2, got {c1}, {c2}")));
        }
        if !(c3 > 0.0 && c_star > 0.0 && beta1 > 0.0) {
            return Err(Error::InvalidArgument("C3, C_*, β₁ must be positive".into()));
        }
        Ok(BallProfile {
            d1,
            d2,
            c1,
            c2,
            c3,
            c_star,
            beta1,
            volume_spec: volume.spec(),
            phi_spec: phi_scaling.spec(),
            volume,
            phi_scaling,
        })
    }

    /// `β(s)/β(t) ≤ C_*^{-1/β₁} (t/s)^{d₂/β₁}` for `s ≤ t`.
    pub fn beta_doubling_bound(&self, s: f64, t: f64) -> f64 {
        self.c_star.powf(-1.0 / self.beta1) * (t / s).powf(self.d2 / self.beta1)
    }

    /// `C_*^{-1/d₂} / (1 - 2^{-β₁/d₂})`, the constant of the integral bound
    /// on `Ψ`.
    pub fn psi_constant(&self) -> f64 {
        self.c_star.powf(-1.0 / self.d2) / (1.0 - 2f64.powf(-self.beta1 / self.d2))
    }
}

/// `β_{x,R}(r) = (1/V(R)) max{(R/φ⁻¹(r))^{d₂}, (R/φ⁻¹(r))^{d₁}}`.
pub fn beta_profile(bp: &BallProfile, big_r: f64, r: f64) -> Result<f64> {
    if !(big_r > 0.0) {
        return Err(Error::Domain { what: "ball radius", value: big_r, lo: 0.0, hi: f64::INFINITY });
    }
    if !(r > 0.0) {
        return Err(Error::Domain { what: "time", value: r, lo: 0.0, hi: f64::INFINITY });
    }
    let q = big_r / bp.phi_scaling.inverse(r)?;
    Ok(q.powf(bp.d2).max(q.powf(bp.d1)) / bp.volume.eval(big_r))
}

/// Grid checks of the volume doubling, volume comparison and lower scaling
/// hypotheses. Runs before any kernel work.
pub fn check_ball_premises(bp: &BallProfile, r_grid: &[f64]) -> Result<()> {
    const SLACK: f64 = 1e-12;
    if r_grid.is_empty() {
        return Err(Error::InvalidArgument("empty radius grid".into()));
    }
    // V is the same at every center here, so V(x,r) ≤ C₃ V(y,r) reads C₃ ≥ 1
    if bp.c3 < 1.0 {
        return Err(Error::PremiseNotCertified(format!(
            "volume comparison fails: V(x,r) = V(y,r) > C3 V(y,r) with C3 = {} (r = {})",
            bp.c3, r_grid[0]
        )));
    }
    for (i, &r) in r_grid.iter().enumerate() {
        for &big_r in &r_grid[i..] {
            let q = big_r / r;
            let ratio = bp.volume.eval(big_r) / bp.volume.eval(r);
            if ratio < bp.c1 * q.powf(bp.d1) * (1.0 - SLACK) || ratio > bp.c2 * q.powf(bp.d2) * (1.0 + SLACK) {
                return Err(Error::PremiseNotCertified(format!(
                    "volume doubling fails at r = {r}, R = {big_r}: V(R)/V(r) = {ratio}"
                )));
            }
            let phi_ratio = bp.phi_scaling.eval(big_r) / bp.phi_scaling.eval(r);
            if phi_ratio < bp.c_star * q.powf(bp.beta1) * (1.0 - SLACK) {
                return Err(Error::PremiseNotCertified(format!(
                    "lower scaling fails at r = {r}, R = {big_r}: φ(R)/φ(r) = {phi_ratio}"
                )));
            }
        }
    }
    Ok(())
}

/// Constants of the Dirichlet ball bound, fixed once for all balls.
#[derive(Debug, Clone, Serialize)]
pub struct BallConstants {
    pub epsilon: f64,
    pub s: f64,
    /// `c` in `p(t,x,x) ≤ c / V(x, φ⁻¹(t))`, measured on the grid and
    /// inflated by 1%.
    pub c: f64,
    /// `Ĉ = c C₃ (C₁⁻¹ ∨ C₂)`.
    pub c_hat: f64,
    pub lambda: u64,
    /// `C(λ)` for the profile `β`.
    pub c_lambda: f64,
    /// `max(1, C_*^{-1/d₂}/(1 - 2^{-β₁/d₂}))`.
    pub c1_psi: f64,
    /// `2 Ĉ C(λ) C_*^{-1/β₁} (2 c₁/C₀)^{d₂/β₁}`.
    pub c_eps: f64,
}

/// Checks the ball premises, measures the on-diagonal constant `c` and
/// assembles the ball constant.
pub fn ball_constants(
    form: &FiniteDirichletForm,
    bp: &BallProfile,
    eps: f64,
    s: f64,
    r_grid: &[f64],
    t_grid: &[f64],
) -> Result<BallConstants> {
    check_ball_premises(bp, r_grid)?;
    check_t_grid(t_grid)?;
    let (c0, big_c, eta) = Admissibility::Jump { s }.constants()?;
    let kernel = SpectralKernel::new(form)?;
    let mut c = 0.0f64;
    for &t in t_grid {
        let v = bp.volume.eval(bp.phi_scaling.inverse(t)?);
        for p in kernel.diagonal(t)? {
            c = c.max(p * v);
        }
    }
    let c = 1.01 * c;
    let c_hat = c * bp.c3 * (1.0 / bp.c1).max(bp.c2);
    let lambda = davies_lambda(eps, big_c, eta)?;
    let beta_c = bp.c_star.powf(-1.0 / bp.beta1);
    let (c_lambda, _) = product_constant(beta_c.max(1.0), bp.d2 / bp.beta1, lambda as f64)?;
    let c1_psi = bp.psi_constant().max(1.0);
    let c_eps = 2.0 * c_hat * c_lambda * beta_c * (2.0 * c1_psi / c0).powf(bp.d2 / bp.beta1);
    Ok(BallConstants { epsilon: eps, s, c, c_hat, lambda, c_lambda, c1_psi, c_eps })
}

/// Outcome of the Dirichlet ball check for one ball.
#[derive(Debug, Clone, Serialize)]
pub struct BallReport {
    pub x0: usize,
    pub radius: f64,
    pub states: usize,
    pub tuples: usize,
    pub worst_log_margin: f64,
    pub witness: Option<OffdiagWitness>,
    /// Smallest constant that would make every tuple pass.
    pub empirical_c_eps: f64,
}

impl BallReport {
    pub fn passed(&self) -> bool {
        self.tuples > 0 && self.worst_log_margin >= -TOLERANCE
    }
}

/// `p^{B}(t,x,y) ≤ C_ε β_{x₀,R}(t) exp(-|ψ(y)-ψ(x)| + (1+ε)Λ(ψ)² t)` on the
/// open ball `B = {d(·,x₀) < R}`, with `Λ` taken on the whole form.
#[allow(clippy::too_many_arguments)]
pub fn dirichlet_ball_bound(
    form: &FiniteDirichletForm,
    bp: &BallProfile,
    k: &BallConstants,
    x0: usize,
    radius: f64,
    psi_family: &[Vec<f64>],
    t_grid: &[f64],
) -> Result<BallReport> {
    check_t_grid(t_grid)?;
    form.coords().ok_or(Error::MissingCoords)?;
    if psi_family.is_empty() {
        return Err(Error::InvalidArgument("empty ψ family".into()));
    }
    let ball: Vec<usize> = (0..form.n())
        .map(|z| form.distance(x0, z).map(|d| (z, d)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|(_, d)| *d < radius)
        .map(|(z, _)| z)
        .collect();
    let part = form.part_form(&ball)?;
    let ln_lsq: Vec<f64> = psi_family.iter().map(|p| form.ln_lambda_sq(p)).collect::<Result<_>>()?;
    let nb = ball.len();
    let per_t: Vec<(Best, f64)> = t_grid
        .par_iter()
        .enumerate()
        .map(|(ti, &t)| -> Result<(Best, f64)> {
            let p: DMatrix<f64> = series_kernel(&part.form, t)?;
            let ln_beta = beta_profile(bp, radius, t)?.ln();
            let mut best = Best::none();
            let mut need = f64::NEG_INFINITY;
            for i in 0..nb {
                for j in 0..nb {
                    let exact = p[(i, j)];
                    if !(exact > 0.0) {
                        continue;
                    }
                    let (x, y) = (ball[i], ball[j]);
                    for (q, psi) in psi_family.iter().enumerate() {
                        let shape =
                            ln_beta - (psi[y] - psi[x]).abs() + (1.0 + k.epsilon) * ln_lsq[q].exp() * t;
                        let ln_b = k.c_eps.ln() + shape;
                        need = need.max(exact.ln() - shape);
                        best = best.better(Best { margin: ln_b - exact.ln(), index: (ti, x, y, q), exact, bound: ln_b.exp() });
                    }
                }
            }
            Ok((best, need))
        })
        .collect::<Result<_>>()?;
    let mut best = Best::none();
    let mut need = f64::NEG_INFINITY;
    for (b, v) in per_t {
        best = best.better(b);
        need = need.max(v);
    }
    let (ti, x, y, q) = best.index;
    Ok(BallReport {
        x0,
        radius,
        states: nb,
        tuples: t_grid.len() * nb * nb * psi_family.len(),
        worst_log_margin: best.margin,
        witness: (ti != usize::MAX).then(|| OffdiagWitness { t: t_grid[ti], x, y, psi_index: q, exact: best.exact, bound: best.bound }),
        empirical_c_eps: need.exp(),
    })
}

/// `Φ(r) = r² / (2 ∫₀^r s/φ(s) ds)`.
pub fn stable_like_phi(phi: &ScalingFunction, r: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain { what: "radius", value: r, lo: 0.0, hi: f64::INFINITY });
    }
    let integral = integrate_from_zero(|s| s / phi.eval(s), r, 1e-12)
        .filter(|v| *v > 0.0 && v.is_finite())
        .ok_or_else(|| Error::ScalingNotAdmissible(format!("∫₀ s/φ(s) ds diverges for {}", phi.spec())))?;
    Ok(r * r / (2.0 * integral))
}

/// Grid diagnostics of `Φ` against `φ`.
#[derive(Debug, Clone, Serialize)]
pub struct PhiCheck {
    /// `max Φ(r)/φ(r)`; below 1 means `Φ < φ` on the grid.
    pub max_ratio: f64,
    /// Smallest and largest elasticity of `Φ`, the exponents `β₁ ≤ β₂`.
    pub beta1: f64,
    pub beta2: f64,
    /// `C_L`, `C_U` for the exponents above (1 for exact power laws).
    pub c_l: f64,
    pub c_u: f64,
    /// `Φ(R)/Φ(r) ≤ (R/r)²` on all grid pairs.
    pub quadratic_ok: bool,
}

impl PhiCheck {
    pub fn passed(&self) -> bool {
        self.max_ratio < 1.0 && self.quadratic_ok
    }
}

pub fn check_stable_like_phi(phi: &ScalingFunction, r_grid: &[f64]) -> Result<PhiCheck> {
    if r_grid.len() < 2 {
        return Err(Error::InvalidArgument("radius grid needs ≥ 2 points".into()));
    }
    let big: Vec<f64> = r_grid.iter().map(|&r| stable_like_phi(phi, r)).collect::<Result<_>>()?;
    let max_ratio = r_grid.iter().zip(&big).map(|(&r, v)| v / phi.eval(r)).fold(0.0, f64::max);
    let ln_r: Vec<f64> = r_grid.iter().map(|r| r.ln()).collect();
    let ln_p: Vec<f64> = big.iter().map(|v| v.ln()).collect();
    let slopes: Vec<f64> = (1..r_grid.len()).map(|i| (ln_p[i] - ln_p[i - 1]) / (ln_r[i] - ln_r[i - 1])).collect();
    let beta1 = slopes.iter().cloned().fold(f64::INFINITY, f64::min);
    let beta2 = slopes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut c_l, mut c_u) = (1.0f64, 1.0f64);
    let mut quadratic_ok = true;
    for i in 0..r_grid.len() {
        for j in i..r_grid.len() {
            let q = ln_r[j] - ln_r[i];
            let d = ln_p[j] - ln_p[i];
            c_l = c_l.min((d - beta1 * q).exp());
            c_u = c_u.max((d - beta2 * q).exp());
            quadratic_ok &= d <= 2.0 * q + 1e-12;
        }
    }
    Ok(PhiCheck { max_ratio, beta1, beta2, c_l, c_u, quadratic_ok })
}

fn phi_inverse(phi: &ScalingFunction, v: f64) -> Result<f64> {
    // Φ is increasing; bisection in ln r
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    if stable_like_phi(phi, lo.exp())? > v || stable_like_phi(phi, hi.exp())? < v {
        return Err(Error::Domain { what: "Φ value", value: v, lo: 0.0, hi: f64::INFINITY });
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if stable_like_phi(phi, mid.exp())? < v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Inputs of a stable-like run.
#[derive(Debug, Clone)]
pub struct StableLikeRun {
    pub n: usize,
    pub d: usize,
    pub phi: ScalingFunction,
    /// Coefficients are drawn from `[1/c_bound, c_bound]`.
    pub c_bound: f64,
    pub eps: f64,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
}

/// One `(t, x, y)` of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineRow {
    pub t: f64,
    pub x: usize,
    pub y: usize,
    pub distance: f64,
    pub exact: f64,
    pub truncated: f64,
    /// `p^ρ + t sup_{|z-w|>ρ} J(z,w)`; always `≥ exact`.
    pub duhamel: f64,
    /// `1/Φ⁻¹(t)^d ∧ t/(|x-y|^d Φ(|x-y|))`.
    pub shape: f64,
    /// `true` when `t > Φ(|x-y|)`.
    pub ondiag_branch: bool,
    /// `exp(-s|x-y|/3 + (1+ε) c₆ t e^{sρ}/Φ(ρ))` on the off-diagonal branch.
    pub q4: f64,
}

/// Per-pair summary.
#[derive(Debug, Clone, Serialize)]
pub struct PairSummary {
    pub x: usize,
    pub y: usize,
    pub distance: f64,
    pub gamma: f64,
    pub rho: f64,
    /// Truncation tail constant.
    pub tail: f64,
    /// `max_t p / shape`.
    pub c11: f64,
    /// Largest measured `c₆ = Γ_ρ[±ψ] Φ(ρ)/e^{sρ}`.
    pub c6: f64,
    /// Smallest `c₃` with `p^ρ ≤ c₃ e^{tail t} q4 / Φ⁻¹(t)^d`.
    pub c3: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StableLikeReport {
    pub n: usize,
    pub d: usize,
    pub phi_spec: String,
    pub c_bound: f64,
    pub eps: f64,
    pub seed: u64,
    pub beta1: f64,
    pub gamma: f64,
    pub phi_check: PhiCheck,
    pub pairs: Vec<PairSummary>,
    /// Fitted `c₁₁` over all pairs.
    pub c11: f64,
    /// `max c₁₁ / min c₁₁` across pairs.
    pub c11_spread: f64,
    /// `p ≤ p^ρ + t sup J_far` held at every tuple.
    pub duhamel_ok: bool,
    /// Regression slope of `ln p(t,x,x)` on `ln t` over `t ∈ [1, 10]`.
    pub ondiag_slope: f64,
    /// Regression slope of `ln p(t,x,y)` at the largest distance for small `t`.
    pub offdiag_slope: f64,
    /// The truncation comparison is the finite-space Duhamel bound, not the
    /// external lemma.
    pub substitution: String,
    #[serde(skip)]
    pub rows: Vec<PipelineRow>,
}

impl StableLikeReport {
    pub fn passed(&self) -> bool {
        self.duhamel_ok && self.c11_spread <= 3.0 && self.phi_check.passed()
    }
}

fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// The stable-like chain of the envelope `c₁₁ (1/Φ⁻¹(t)^d ∧ t/(|x-y|^d Φ(|x-y|)))`,
/// checked against exact kernels with `c₁₁` fitted per pair.
pub fn stable_like_pipeline(run: &StableLikeRun) -> Result<StableLikeReport> {
    check_t_grid(&run.t_grid)?;
    if run.pairs.is_empty() {
        return Err(Error::InvalidArgument("empty pair list".into()));
    }
    if !(run.c_bound >= 1.0) {
        return Err(Error::Domain { what: "c_bound", value: run.c_bound, lo: 1.0, hi: f64::INFINITY });
    }
    let half = run.n as f64 / 2.0;
    let r_grid = geometric_grid(1.0, half.max(2.0), 64);
    let phi_check = check_stable_like_phi(&run.phi, &r_grid)?;
    // lower exponent of the scaling function itself
    let beta1 = r_grid.iter().map(|&r| run.phi.elasticity(r)).fold(f64::INFINITY, f64::min);
    if !(beta1 > 0.0 && beta1 < 2.0) {
        return Err(Error::ScalingNotAdmissible(format!("β₁ = {beta1} outside (0, 2) for {}", run.phi.spec())));
    }
    let d = run.d as f64;
    let gamma = beta1 / (3.0 * (d + beta1));
    let form = models::stable_like(run.n, run.d, &run.phi, 1.0 / run.c_bound, run.c_bound, run.seed)?;
    let kernel = SpectralKernel::new(&form)?;
    let n = form.n();
    let full: Vec<DMatrix<f64>> = run.t_grid.iter().map(|&t| kernel.heat_kernel(t)).collect::<Result<_>>()?;
    let c = form.conductances();
    let m = form.m();
    let ln_inv: Vec<f64> = run.t_grid.iter().map(|&t| phi_inverse(&run.phi, t).map(f64::ln)).collect::<Result<_>>()?;

    let per_pair: Vec<(PairSummary, Vec<PipelineRow>, bool)> = run
        .pairs
        .par_iter()
        .map(|&(x, y)| -> Result<(PairSummary, Vec<PipelineRow>, bool)> {
            if x >= n || y >= n || x == y {
                return Err(Error::InvalidArgument(format!("bad pair ({x},{y}) for {n} states")));
            }
            let dist = form.distance(x, y)?;
            let big_phi_d = stable_like_phi(&run.phi, dist)?;
            let rho = gamma * dist;
            let (trunc, tail) = form.truncate(rho)?;
            let tk = SpectralKernel::new(&trunc)?;
            let mut j_far = 0.0f64;
            for z in 0..n {
                for w in 0..n {
                    if w != z && form.distance(z, w)? > rho {
                        j_far = j_far.max(c[(z, w)] / (m[z] * m[w]));
                    }
                }
            }
            let big_phi_rho = stable_like_phi(&run.phi, rho)?;
            let mut rows = Vec::with_capacity(run.t_grid.len());
            let mut ok = true;
            let (mut c11, mut c6, mut c3) = (0.0f64, 0.0f64, 0.0f64);
            for (ti, &t) in run.t_grid.iter().enumerate() {
                let exact = full[ti][(x, y)];
                let truncated = tk.heat_kernel(t)?[(x, y)];
                let duhamel = truncated + t * j_far;
                ok &= exact <= duhamel * (1.0 + 1e-9) + 1e-15;
                let on = (-d * ln_inv[ti]).exp();
                let off = t / (dist.powf(d) * big_phi_d);
                let shape = on.min(off);
                c11 = c11.max(exact / shape);
                let ondiag_branch = t > big_phi_d;
                let mut q4 = f64::NAN;
                if !ondiag_branch {
                    let s = (big_phi_d / t).ln() / rho;
                    let psi: Vec<f64> = (0..n)
                        .map(|z| form.distance(z, x).map(|r| s / 3.0 * r.min(dist)))
                        .collect::<Result<_>>()?;
                    let neg: Vec<f64> = psi.iter().map(|v| -v).collect();
                    let g = form
                        .gamma_rho(&psi, rho)?
                        .into_iter()
                        .chain(form.gamma_rho(&neg, rho)?)
                        .fold(0.0, f64::max);
                    let c6_here = g * big_phi_rho / (s * rho).exp();
                    c6 = c6.max(c6_here);
                    let exponent = -s * dist / 3.0 + (1.0 + run.eps) * c6_here * t * (s * rho).exp() / big_phi_rho;
                    q4 = exponent.exp();
                    let denom = on * (tail * t).exp() * q4;
                    if truncated > 0.0 && denom > 0.0 {
                        c3 = c3.max(truncated / denom);
                    }
                }
                rows.push(PipelineRow { t, x, y, distance: dist, exact, truncated, duhamel, shape, ondiag_branch, q4 });
            }
            Ok((PairSummary { x, y, distance: dist, gamma, rho, tail, c11, c6, c3 }, rows, ok))
        })
        .collect::<Result<_>>()?;

    let mut pairs = Vec::new();
    let mut rows = Vec::new();
    let mut duhamel_ok = true;
    for (p, r, ok) in per_pair {
        pairs.push(p);
        rows.extend(r);
        duhamel_ok &= ok;
    }
    let c11 = pairs.iter().map(|p| p.c11).fold(0.0, f64::max);
    let c11_min = pairs.iter().map(|p| p.c11).fold(f64::INFINITY, f64::min);

    let x0 = run.pairs[0].0;
    let on_t = geometric_grid(1.0, 10.0, 16);
    let ln_on: Vec<f64> = on_t.iter().map(|&t| kernel.heat_kernel(t).map(|p| p[(x0, x0)].ln())).collect::<Result<_>>()?;
    let far = pairs.iter().max_by(|a, b| a.distance.total_cmp(&b.distance)).expect("nonempty");
    let off_t = geometric_grid(1e-3, 1e-2, 16);
    let ln_off: Vec<f64> = off_t.iter().map(|&t| kernel.heat_kernel(t).map(|p| p[(far.x, far.y)].ln())).collect::<Result<_>>()?;
    let ln = |v: &[f64]| v.iter().map(|t| t.ln()).collect::<Vec<f64>>();

    Ok(StableLikeReport {
        n: run.n,
        d: run.d,
        phi_spec: run.phi.spec(),
        c_bound: run.c_bound,
        eps: run.eps,
        seed: run.seed,
        beta1,
        gamma,
        phi_check,
        c11_spread: c11 / c11_min,
        c11,
        pairs,
        duhamel_ok,
        ondiag_slope: regression_slope(&ln(&on_t), &ln_on),
        offdiag_slope: regression_slope(&ln(&off_t), &ln_off),
        substitution: "truncation comparison by finite-space Duhamel domination p ≤ p^ρ + t sup_{|z-w|>ρ} J(z,w)".into(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;

    #[test]
    fn lambda_examples() {
        assert_eq!(davies_lambda(1.0, 10.0, 2.0).unwrap(), 43);
        assert_eq!(davies_lambda(1.0, 1.0, 1.0).unwrap(), 4);
        assert_eq!(davies_lambda(1e12, 1.0, 2.0).unwrap(), 5);
        assert!(davies_lambda(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn constants_for_inverse_time() {
        let k = davies_constants(&ProfileFunction::power(1.0, -1.0), 1.0, 0.5).unwrap();
        assert_eq!(k.lambda, 43);
        let expect = 43f64.powi(2) * 43.0 / 42.0;
        assert!((k.c_eps / expect - 1.0).abs() < 1e-9, "{}", k.c_eps);
        assert_eq!(k.small_c_eps, 0.5);
    }

    #[test]
    fn single_edge_distance() {
        let d = feasible_psi_distance(&models::two_state(), 0, 1, 50, 1).unwrap();
        assert!((d.d_hat - (1.0 + 2f64.sqrt()).ln()).abs() < 1e-9, "{}", d.d_hat);
        assert!(d.lambda_sq <= 1.0 + 1e-12);
    }

    #[test]
    fn constant_psi_gives_ondiag() {
        let phi = ProfileFunction::power(1.0, -1.0);
        let cert = DaviesCertificate::new(phi.clone(), 0.0, davies_constants(&phi, 1.0, 0.5).unwrap());
        let b = cert.offdiag_bound(&[3.0, 3.0], 0.7, 0, 1, 0.0).unwrap();
        let g = gaussian_envelope(&cert, 0.0, 0.7).unwrap();
        assert!((b / g - 1.0).abs() < 1e-14);
    }

    #[test]
    fn phi_closed_forms() {
        let one = ScalingFunction::power(1.0, 1.0);
        let half = ScalingFunction::power(1.0, 0.5);
        for r in [0.1, 1.0, 7.0] {
            assert!((stable_like_phi(&one, r).unwrap() / (r / 2.0) - 1.0).abs() < 1e-8);
            assert!((stable_like_phi(&half, r).unwrap() / (0.75 * r.sqrt()) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn beta_profile_cancels_radius() {
        let bp = BallProfile::new(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0, ScalingFunction::power(1.0, 1.0), ScalingFunction::power(1.0, 2.0)).unwrap();
        for big_r in [2.0, 9.0] {
            assert!((beta_profile(&bp, big_r, 4.0).unwrap() - 0.5).abs() < 1e-12);
        }
    }
}
