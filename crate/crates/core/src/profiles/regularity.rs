//! Doubling diagnostics, dyadic regularization, infinite-product constants
//! and the regular-class report.

use std::sync::Arc;

use serde::Serialize;

use super::expr::{DyadicAverage, Expr, Limit};
use super::{geometric_grid, ProfileFunction};
use crate::error::{Error, Result};

/// Safety inflation applied to measured grid suprema.
const INFLATE: f64 = 1.01;

/// Outcome of [`check_doubling`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoublingReport {
    /// Smallest `C_d` with `φ(r) ≤ C_d φ(2r)` on the grid.
    pub c_d: f64,
    /// `log₂ C_d`.
    pub eta_d: f64,
}

/// Default grid for profile diagnostics: the evaluation window sampled
/// with 512 points per 6 decades.
pub fn diagnostic_grid(phi: &ProfileFunction) -> Vec<f64> {
    let (a, b) = phi.window();
    let decades = (b / a).log10();
    let n = ((decades / 6.0) * 512.0).ceil().max(512.0) as usize;
    geometric_grid(a, b, n)
}

fn octave_maxima(grid: &[f64], vals: &[f64]) -> Vec<f64> {
    let r0 = grid[0];
    let mut out: Vec<f64> = Vec::new();
    let mut current = usize::MAX;
    for (&r, &v) in grid.iter().zip(vals) {
        let k = (r / r0).log2().floor() as usize;
        if k != current {
            out.push(v);
            current = k;
        } else if let Some(last) = out.last_mut() {
            *last = last.max(v);
        }
    }
    out
}

/// True when the octave maxima grow by more than 10% at either end of the
/// grid, i.e. the sampled quantity looks unbounded.
fn grows_at_ends(oct: &[f64]) -> bool {
    let n = oct.len();
    if n < 3 {
        return false;
    }
    let bad = |edge: f64, inner: f64| !edge.is_finite() || edge > 1.1 * inner;
    bad(oct[n - 1], oct[n - 2]) || bad(oct[0], oct[1])
}

/// Measures the doubling multiplier of `1/φ` on a geometric grid.
pub fn check_doubling(phi: &ProfileFunction, grid: &[f64]) -> Result<DoublingReport> {
    if grid.len() < 512 {
        return Err(Error::InvalidArgument(format!("doubling grid has {} < 512 points", grid.len())));
    }
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    if (hi / lo).log10() < 6.0 - 1e-9 {
        return Err(Error::InvalidArgument(format!("doubling grid spans less than 6 decades: [{lo}, {hi}]")));
    }
    let ln: Vec<f64> = grid.iter().map(|&t| phi.ln_eval(t)).collect();
    for k in 0..grid.len() - 1 {
        if !(ln[k + 1] < ln[k]) {
            return Err(Error::Invariant(format!(
                "profile not strictly decreasing on [{}, {}]",
                grid[k],
                grid[k + 1]
            )));
        }
    }
    let mut rs = Vec::new();
    let mut ratios = Vec::new();
    for (&r, &l) in grid.iter().zip(&ln) {
        if !phi.contains(2.0 * r) {
            continue;
        }
        rs.push(r);
        ratios.push((l - phi.ln_eval(2.0 * r)).exp());
    }
    if rs.len() < 2 {
        return Err(Error::DoublingFailure("grid leaves no room for r ↦ 2r".into()));
    }
    let oct = octave_maxima(&rs, &ratios);
    if grows_at_ends(&oct) {
        return Err(Error::DoublingFailure(format!(
            "φ(r)/φ(2r) grows across the outer octaves ({:.4e} → {:.4e} at the upper end, {:.4e} ← {:.4e} at the lower end)",
            oct[oct.len() - 2],
            oct[oct.len() - 1],
            oct[1],
            oct[0]
        )));
    }
    let c_d = ratios.iter().cloned().fold(1.0, f64::max);
    Ok(DoublingReport { c_d, eta_d: c_d.log2() })
}

/// Smallest `C` with `φ(r)/φ(R) ≤ C (R/r)^η` for all grid pairs `r ≤ R`.
pub fn power_form_constant(phi: &ProfileFunction, eta: f64, grid: &[f64]) -> f64 {
    let mut running = f64::NEG_INFINITY;
    let mut best = 0.0f64;
    for &t in grid {
        let w = phi.ln_eval(t) + eta * t.ln();
        running = running.max(w);
        best = best.max(running - w);
    }
    best.exp()
}

/// Explicit constants of the infinite-product bound for a profile with
/// `φ(r)/φ(R) ≤ C (R/r)^η`: returns `(C(λ), c(λ)) = (C² λ^{2η} (λ/(λ-1))^η, 1)`.
pub fn product_constant(c: f64, eta: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 2.0) {
        return Err(Error::Domain { what: "product-bound base lambda", value: lambda, lo: 2.0, hi: f64::INFINITY });
    }
    if !(c >= 1.0 && eta > 0.0) {
        return Err(Error::InvalidArgument(format!("need C ≥ 1 and η > 0, got C={c}, η={eta}")));
    }
    let big = c * c * lambda.powf(2.0 * eta) * (lambda / (lambda - 1.0)).powf(eta);
    Ok((big, 1.0))
}

/// `∏_{k=1}^{K} φ((λ-1)λ^{-(k+1)} t)^{2^{-k}}`, with `K ≤ k_max` limited by
/// the domain of `φ`.
pub fn product_truncated(phi: &ProfileFunction, lambda: f64, t: f64, k_max: usize) -> f64 {
    let mut acc = 0.0;
    for k in 1..=k_max {
        let arg = (lambda - 1.0) * lambda.powi(-(k as i32 + 1)) * t;
        if !phi.contains(arg) {
            break;
        }
        acc += phi.ln_eval(arg) * 0.5f64.powi(k as i32);
    }
    acc.exp()
}

/// Output of [`regularize`].
#[derive(Debug, Clone)]
pub struct Regularized {
    pub phi_bar: ProfileFunction,
    /// `c⁻¹ φ̄ ≤ φ ≤ c φ̄` on the grid.
    pub c: f64,
    /// `b₁ ≤ -r φ̄′(r)/φ̄(r) ≤ b₂` on the grid.
    pub b1: f64,
    pub b2: f64,
    pub doubling: DoublingReport,
}

/// Dyadic regularization: interpolate `φ` linearly between the points
/// `2^i` and average over `[r, 2r]`.
pub fn regularize(phi: &ProfileFunction) -> Result<Regularized> {
    let doubling = check_doubling(phi, &diagnostic_grid(phi))?;
    let (dlo, dhi) = phi.domain();
    let i_lo = if dlo > 0.0 { (dlo.log2() + 1e-12).ceil() as i32 } else { -60 };
    let i_hi = if dhi.is_finite() { (dhi.log2() - 1e-12).floor() as i32 } else { 60 };
    let mut values = Vec::new();
    let mut first = None;
    for i in i_lo..=i_hi {
        let v = phi.eval(2f64.powi(i));
        if v > 1e-300 && v < 1e300 {
            first.get_or_insert(i);
            values.push(v);
        } else if first.is_some() {
            break;
        }
    }
    let i0 = first.ok_or_else(|| Error::InvalidArgument("profile has no representable dyadic values".into()))?;
    if values.len() < 4 {
        return Err(Error::InvalidArgument("domain too short for dyadic regularization".into()));
    }
    let dy = DyadicAverage { i_lo: i0, values };
    let phi_bar = ProfileFunction::new(Expr::Dyadic(Arc::new(dy)), None)?;

    let (a, b) = phi_bar.window();
    let (wa, wb) = phi.window();
    let grid = geometric_grid(a.max(wa), b.min(wb), 1024);
    let mut c = 1.0f64;
    let mut b1 = f64::INFINITY;
    let mut b2 = 0.0f64;
    for &t in &grid {
        let d = phi.ln_eval(t) - phi_bar.ln_eval(t);
        c = c.max(d.abs().exp());
        let e = -phi_bar.elasticity(t);
        b1 = b1.min(e);
        b2 = b2.max(e);
    }
    Ok(Regularized { phi_bar, c: c * INFLATE, b1: b1 / INFLATE, b2: b2 * INFLATE, doubling })
}

/// Flags for the three items of the regular-class definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassR {
    /// `φ(0) = ∞` and `φ(∞) = 0`.
    pub limits: bool,
    /// `M′` comparable to a decreasing envelope, and `M′(t) ≤ c₀ M′(at)`.
    pub log_derivative: bool,
    /// Infinite-product bound at every tested `λ`.
    pub product: bool,
}

impl ClassR {
    pub fn all(&self) -> bool {
        self.limits && self.log_derivative && self.product
    }
}

/// Entry of the product-constant table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProductEntry {
    pub lambda: f64,
    pub big_c: f64,
    pub small_c: f64,
    /// Worst `log(C φ(c t)) - log(truncated product)` on the test grid.
    pub worst_log_margin: f64,
}

/// Diagnostics for membership of `φ` in the regular class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub doubling_ok: bool,
    pub c_d: Option<f64>,
    pub eta_d: Option<f64>,
    /// Power-form constant `C` of `φ(r)/φ(R) ≤ C (R/r)^{η_d}`.
    pub power_c: Option<f64>,
    /// `inf M′(s)/M′(t)` over `s ∈ {t, 1.25t, 1.5t, 2t}`.
    pub condition_d_lambda: f64,
    pub class_r: ClassR,
    /// Limits or bounds rest on grid evidence rather than closed forms.
    pub grid_certified: bool,
    /// `sup M′/N` for the running-minimum envelope `N`.
    pub envelope_c: f64,
    /// `sup M′(t)/M′(at)` over `a ∈ [1, 2]`.
    pub c0: f64,
    pub b1: Option<f64>,
    pub b2: Option<f64>,
    pub product_constant_table: Vec<ProductEntry>,
}

/// Grid-based check of the regular-class conditions.
pub fn check_regular_class(phi: &ProfileFunction) -> RegularityReport {
    let grid = diagnostic_grid(phi);
    // item (ii) quantifies over all t > 0 and is only ever checked on the grid
    let grid_certified = true;

    // (i) limits
    let analytic = phi.expr().limit_at_zero().is_some() && phi.expr().limit_at_infinity().is_some();
    let (dlo, dhi) = phi.domain();
    let limits = if analytic && dlo == 0.0 && dhi == f64::INFINITY {
        phi.at_zero() == Limit::Infinite && phi.at_infinity() == Limit::Zero
    } else {
        // bounded domain or tabulated: only the end slopes are available
        let (a, b) = phi.window();
        phi.elasticity(a) < 0.0 && phi.elasticity(b) < 0.0
    };

    // (ii) log-derivative envelope
    let mp: Vec<f64> = grid.iter().map(|&t| phi.m_prime(t)).collect();
    let positive = mp.iter().all(|v| *v > 0.0 && v.is_finite());
    let mut env = Vec::with_capacity(mp.len());
    let mut running = f64::INFINITY;
    for &v in &mp {
        running = running.min(v);
        env.push(v / running);
    }
    let envelope_c = env.iter().cloned().fold(1.0, f64::max);
    let a_grid: Vec<f64> = (0..=8).map(|k| 1.0 + k as f64 / 8.0).collect();
    let mut c0_local = Vec::with_capacity(grid.len());
    let mut lambda_d = f64::INFINITY;
    for (&t, &m) in grid.iter().zip(&mp) {
        let mut worst = 1.0f64;
        for &a in &a_grid {
            if phi.contains(a * t) {
                worst = worst.max(m / phi.m_prime(a * t));
            }
        }
        c0_local.push(worst);
        for s in [1.0, 1.25, 1.5, 2.0] {
            if phi.contains(s * t) {
                lambda_d = lambda_d.min(phi.m_prime(s * t) / m);
            }
        }
    }
    let c0 = c0_local.iter().cloned().fold(1.0, f64::max);
    let log_derivative = positive
        && !grows_at_ends(&octave_maxima(&grid, &env))
        && !grows_at_ends(&octave_maxima(&grid, &c0_local));

    // doubling branch
    let doubling = check_doubling(phi, &grid).ok();
    let power_c = doubling.map(|d| power_form_constant(phi, d.eta_d, &grid));
    let (b1, b2) = match doubling.and_then(|_| regularize(phi).ok()) {
        Some(r) => (Some(r.b1), Some(r.b2)),
        None => (None, None),
    };

    // (iii) product bound
    let mut table = Vec::new();
    let mut product_ok = true;
    let test_grid: Vec<f64> = grid.iter().step_by(8).cloned().collect();
    for lambda in [8.0, 16.0, 32.0] {
        let (big_c, small_c) = match (doubling, power_c) {
            (Some(d), Some(pc)) if d.eta_d > 0.0 => product_constant(pc.max(1.0), d.eta_d, lambda).unwrap_or((f64::NAN, 1.0)),
            _ => {
                // c(λ) = Σ 2^{-k} (λ-1) λ^{-(k+1)}, C(λ) measured
                let small_c = (lambda - 1.0) / (lambda * (2.0 * lambda - 1.0));
                let mut sup = Vec::with_capacity(test_grid.len());
                let mut ts = Vec::with_capacity(test_grid.len());
                for &t in &test_grid {
                    if phi.contains(small_c * t) {
                        let lp = product_truncated(phi, lambda, t, 60).ln();
                        sup.push((lp - phi.ln_eval(small_c * t)).exp());
                        ts.push(t);
                    }
                }
                let grows = ts.len() < 3 || grows_at_ends(&octave_maxima(&ts, &sup));
                let s = sup.iter().cloned().fold(0.0, f64::max);
                (if grows { f64::INFINITY } else { s * INFLATE }, small_c)
            }
        };
        let mut worst = f64::INFINITY;
        for &t in &test_grid {
            if !phi.contains(small_c * t) {
                continue;
            }
            let lp = product_truncated(phi, lambda, t, 60).ln();
            worst = worst.min(big_c.ln() + phi.ln_eval(small_c * t) - lp);
        }
        if !(worst >= -1e-9 && big_c.is_finite()) {
            product_ok = false;
        }
        table.push(ProductEntry { lambda, big_c, small_c, worst_log_margin: worst });
    }

    RegularityReport {
        doubling_ok: doubling.is_some(),
        c_d: doubling.map(|d| d.c_d),
        eta_d: doubling.map(|d| d.eta_d),
        power_c,
        condition_d_lambda: lambda_d,
        class_r: ClassR { limits, log_derivative, product: product_ok },
        grid_certified,
        envelope_c,
        c0,
        b1,
        b2,
        product_constant_table: table,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid6() -> Vec<f64> {
        geometric_grid(1e-3, 1e3, 512)
    }

    #[test]
    fn doubling_of_power_laws() {
        let d = check_doubling(&ProfileFunction::parse("pow(-1)").unwrap(), &grid6()).unwrap();
        assert!((d.c_d - 2.0).abs() < 1e-12 && (d.eta_d - 1.0).abs() < 1e-12);
        let d = check_doubling(&ProfileFunction::parse("pow(-0.5)").unwrap(), &grid6()).unwrap();
        assert!((d.c_d - 2f64.sqrt()).abs() < 1e-12 && (d.eta_d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn exponential_is_not_doubling() {
        let phi = ProfileFunction::new(Expr::ExpG { c: 1.0, gamma: 1.0 }, Some((1.0, f64::INFINITY))).unwrap();
        let grid = geometric_grid(1.0001, 1e7, 1024);
        let r = check_doubling(&phi, &grid);
        assert!(matches!(r, Err(Error::DoublingFailure(_))), "{r:?}");
    }

    #[test]
    fn short_grids_are_refused() {
        let phi = ProfileFunction::parse("pow(-1)").unwrap();
        assert!(check_doubling(&phi, &geometric_grid(1.0, 10.0, 600)).is_err());
        assert!(check_doubling(&phi, &geometric_grid(1e-3, 1e3, 100)).is_err());
    }

    #[test]
    fn product_constant_closed_form() {
        let (c, small) = product_constant(1.0, 1.0, 43.0).unwrap();
        assert!((c - 43.0 * 43.0 * 43.0 / 42.0).abs() < 1e-9);
        assert_eq!(small, 1.0);
        let (c, _) = product_constant(1.0, 1.0, 4.0).unwrap();
        assert!((c - 64.0 / 3.0).abs() < 1e-12);
        assert!(product_constant(1.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn truncated_product_is_dominated() {
        let phi = ProfileFunction::parse("pow(-1)").unwrap();
        let (c, small) = product_constant(1.0, 1.0, 4.0).unwrap();
        for t in [0.1, 1.0, 10.0] {
            assert!(product_truncated(&phi, 4.0, t, 40) <= c * phi.eval(small * t));
        }
    }

    #[test]
    fn regularize_power_law() {
        let r = regularize(&ProfileFunction::parse("pow(-1)").unwrap()).unwrap();
        assert!(r.c <= 2.0 * INFLATE);
        assert!(r.b1 > 0.0 && r.b2 <= 2.0 * INFLATE && r.b1 <= r.b2);
    }

    #[test]
    fn regular_class_examples() {
        let rep = check_regular_class(&ProfileFunction::parse("pow(-0.5)").unwrap());
        assert!(rep.class_r.all(), "{rep:?}");
        assert!((rep.envelope_c - 1.0).abs() < 1e-12);
        let hyp = check_regular_class(&ProfileFunction::parse("pow(-1.5)*expg(1,1)").unwrap());
        assert!(hyp.class_r.all(), "{hyp:?}");
        assert!(!hyp.doubling_ok);
        assert!((hyp.envelope_c - 1.0).abs() < 1e-12);
    }
}
