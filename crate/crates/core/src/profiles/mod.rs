//! Profile functions `φ`, Nash rates `θ` and the transforms between them.

pub mod expr;
pub mod parse;
pub mod quad;
mod regularity;
mod transforms;

use std::sync::Arc;

pub use expr::{DyadicAverage, Expr, Limit, Table};
pub use regularity::{
    check_doubling, check_regular_class, diagnostic_grid, power_form_constant, product_constant, product_truncated,
    regularize, DoublingReport, Regularized, RegularityReport,
};
pub use transforms::{phi_from_theta, phi_from_theta_on, theta_from_phi, theta_star, theta_tilde, PhiFromTheta};

use crate::error::{Error, Result};

/// Geometric grid of `n ≥ 2` points from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Monotone positive function on an interval; shared machinery behind
/// [`ProfileFunction`], [`ScalingFunction`] and expression Nash rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    expr: Expr,
    domain: (f64, f64),
    decreasing: bool,
}

/// Outcome of a monotone inversion attempt.
enum Inverse {
    At(f64),
    /// target lies beyond the value at the left end of the domain
    LeftOf,
    /// target lies beyond the value at the right end of the domain
    RightOf,
}

impl Curve {
    fn new(expr: Expr, domain: Option<(f64, f64)>, decreasing: bool) -> Result<Self> {
        let nat = expr.natural_domain();
        let (lo, hi) = match domain {
            Some((a, b)) => (a.max(nat.0), b.min(nat.1)),
            None => nat,
        };
        if !(lo >= 0.0 && hi > lo) {
            return Err(Error::InvalidArgument(format!("empty domain ({lo}, {hi}) for {expr}")));
        }
        let c = Curve { expr, domain: (lo, hi), decreasing };
        c.check_monotone()?;
        Ok(c)
    }

    /// Evaluation window used for grid checks: the domain clipped to
    /// `[1e-6, 1e6]` when unbounded.
    pub fn window(&self) -> (f64, f64) {
        let (lo, hi) = self.domain;
        let a = if lo > 0.0 { lo * (1.0 + 1e-9) } else { 1e-6f64.min(hi * 1e-12) };
        let b = if hi.is_finite() { hi * (1.0 - 1e-9) } else { 1e6f64.max(a * 1e12) };
        (a, b)
    }

    fn check_monotone(&self) -> Result<()> {
        let (a, b) = self.window();
        let grid = geometric_grid(a, b, 256);
        let vals: Vec<f64> = grid.iter().map(|&t| self.expr.ln_value(t)).collect();
        for k in 0..grid.len() - 1 {
            let d = vals[k + 1] - vals[k];
            let ok = if self.decreasing { d < 0.0 } else { d > 0.0 };
            if !ok || !vals[k].is_finite() {
                return Err(Error::NotMonotone {
                    expected: if self.decreasing { "strictly decreasing" } else { "strictly increasing" },
                    lo: grid[k],
                    hi: grid[k + 1],
                });
            }
        }
        Ok(())
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = self.domain;
        let tol = 1e-12;
        t > lo * (1.0 - tol) && t < hi * (1.0 + tol) && t > 0.0 && t.is_finite()
    }

    pub fn ln_eval(&self, t: f64) -> f64 {
        self.expr.ln_value(t)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.expr.value(t)
    }

    pub fn checked_eval(&self, t: f64) -> Result<f64> {
        if !self.contains(t) {
            return Err(Error::Domain { what: "function argument", value: t, lo: self.domain.0, hi: self.domain.1 });
        }
        Ok(self.eval(t))
    }

    pub fn elasticity(&self, t: f64) -> f64 {
        self.expr.elasticity(t)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        self.eval(t) * self.elasticity(t) / t
    }

    /// Limit at the left end: analytic when the left end is `0`, otherwise
    /// the value there.
    pub fn left_limit(&self) -> Limit {
        if self.domain.0 == 0.0 {
            if let Some(l) = self.expr.limit_at_zero() {
                return l;
            }
        }
        Limit::Finite(self.eval(self.window().0))
    }

    /// Limit at the right end, analogous to [`Curve::left_limit`].
    pub fn right_limit(&self) -> Limit {
        if self.domain.1 == f64::INFINITY {
            if let Some(l) = self.expr.limit_at_infinity() {
                return l;
            }
        }
        Limit::Finite(self.eval(self.window().1))
    }

    fn limit_ln(l: Limit) -> f64 {
        match l {
            Limit::Zero => f64::NEG_INFINITY,
            Limit::Infinite => f64::INFINITY,
            Limit::Finite(v) => v.ln(),
        }
    }

    /// `(inf, sup)` of the function over its domain.
    pub fn range(&self) -> (f64, f64) {
        let (l, r) = (Self::limit_ln(self.left_limit()).exp(), Self::limit_ln(self.right_limit()).exp());
        if self.decreasing {
            (r, l)
        } else {
            (l, r)
        }
    }

    fn invert(&self, r: f64) -> Inverse {
        let target = r.ln();
        // g is decreasing in x after orienting the curve
        let sign = if self.decreasing { 1.0 } else { -1.0 };
        let g = |x: f64| sign * (self.expr.ln_value(x.exp()) - target);
        let (dlo, dhi) = self.domain;
        let x_lo_limit = if dlo > 0.0 { (dlo * (1.0 + 1e-12)).ln() } else { -745.0 };
        let x_hi_limit = if dhi.is_finite() { (dhi * (1.0 - 1e-12)).ln() } else { 709.0 };
        // bracket [a, b] with g(a) ≥ 0 ≥ g(b)
        let mut x0 = 0.0f64.clamp(x_lo_limit, x_hi_limit);
        let g0 = g(x0);
        if g0 == 0.0 {
            return Inverse::At(x0.exp());
        }
        let (mut a, mut b);
        let mut step = 1.0;
        if g0 > 0.0 {
            a = x0;
            loop {
                let x1 = (x0 + step).min(x_hi_limit);
                let g1 = g(x1);
                if g1 <= 0.0 {
                    b = x1;
                    break;
                }
                if x1 >= x_hi_limit {
                    return Inverse::RightOf;
                }
                a = x1;
                x0 = x1;
                step *= 2.0;
            }
        } else {
            b = x0;
            loop {
                let x1 = (x0 - step).max(x_lo_limit);
                let g1 = g(x1);
                if g1 >= 0.0 {
                    a = x1;
                    break;
                }
                if x1 <= x_lo_limit {
                    return Inverse::LeftOf;
                }
                b = x1;
                x0 = x1;
                step *= 2.0;
            }
        }
        // safeguarded Newton in x = ln t
        let mut x = 0.5 * (a + b);
        for _ in 0..200 {
            let gx = g(x);
            if gx.abs() <= 1e-15 * (1.0 + target.abs()) {
                return Inverse::At(x.exp());
            }
            if gx > 0.0 {
                a = x;
            } else {
                b = x;
            }
            let slope = sign * self.expr.elasticity(x.exp());
            let newton = x - gx / slope;
            x = if slope < 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if b - a <= 4.0 * f64::EPSILON * (1.0 + x.abs()) {
                return Inverse::At(x.exp());
            }
        }
        Inverse::At(x.exp())
    }

    pub fn inverse(&self, r: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        let err = || Error::Domain { what: "inverse of profile", value: r, lo, hi };
        if !(r > 0.0 && r.is_finite()) {
            return Err(err());
        }
        match self.invert(r) {
            Inverse::At(t) => Ok(t),
            _ => Err(err()),
        }
    }
}

/// Positive, strictly decreasing rate function `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileFunction(Curve);

impl ProfileFunction {
    /// Wraps an expression; `domain` defaults to the expression's natural
    /// domain. Strict decrease is checked on a 256-point geometric grid.
    pub fn new(expr: Expr, domain: Option<(f64, f64)>) -> Result<Self> {
        Curve::new(expr, domain, true).map(ProfileFunction)
    }

    pub fn parse(spec: &str) -> Result<Self> {
        Self::new(parse::parse_expr(spec)?, None)
    }

    /// `a · t^p` with `p < 0`, `a > 0`.
    pub fn power(a: f64, p: f64) -> Self {
        let expr = if a == 1.0 { Expr::Pow(p) } else { Expr::product(vec![Expr::Const(a), Expr::Pow(p)]) };
        Self::new(expr, None).expect("decreasing power law")
    }

    /// Log-log linear interpolation of tabulated `(t, φ(t))`.
    pub fn from_table(t: &[f64], phi: &[f64]) -> Result<Self> {
        Self::new(Expr::Table(Arc::new(Table::from_points(t, phi)?)), None)
    }

    pub fn curve(&self) -> &Curve {
        &self.0
    }

    pub fn expr(&self) -> &Expr {
        self.0.expr()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.0.domain()
    }

    pub fn window(&self) -> (f64, f64) {
        self.0.window()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.0.contains(t)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.eval(t)
    }

    pub fn ln_eval(&self, t: f64) -> f64 {
        self.0.ln_eval(t)
    }

    pub fn checked_eval(&self, t: f64) -> Result<f64> {
        self.0.checked_eval(t)
    }

    /// `φ′(t)`.
    pub fn derivative(&self, t: f64) -> f64 {
        self.0.derivative(t)
    }

    /// `t φ′(t) / φ(t)`; equals `-t M′(t)` with `M = -log φ`.
    pub fn elasticity(&self, t: f64) -> f64 {
        self.0.elasticity(t)
    }

    /// `M′(t)` for `M(t) = -log φ(t)`.
    pub fn m_prime(&self, t: f64) -> f64 {
        -self.0.elasticity(t) / t
    }

    pub fn inverse(&self, r: f64) -> Result<f64> {
        self.0.inverse(r)
    }

    /// `φ(0⁺)` (or the value at the left end of a bounded domain).
    pub fn at_zero(&self) -> Limit {
        self.0.left_limit()
    }

    /// `φ(∞)` (or the value at the right end of a bounded domain).
    pub fn at_infinity(&self) -> Limit {
        self.0.right_limit()
    }

    /// `(inf φ, sup φ)` over the domain.
    pub fn range(&self) -> (f64, f64) {
        self.0.range()
    }

    pub fn spec(&self) -> String {
        self.expr().to_string()
    }
}

/// Positive, strictly increasing function such as a scaling function
/// `φ(r) = r^α` or a volume function `V(r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFunction(Curve);

impl ScalingFunction {
    pub fn new(expr: Expr, domain: Option<(f64, f64)>) -> Result<Self> {
        Curve::new(expr, domain, false).map(ScalingFunction)
    }

    pub fn parse(spec: &str) -> Result<Self> {
        Self::new(parse::parse_expr(spec)?, None)
    }

    /// `a · r^p` with `p > 0`, `a > 0`.
    pub fn power(a: f64, p: f64) -> Self {
        let expr = if a == 1.0 { Expr::Pow(p) } else { Expr::product(vec![Expr::Const(a), Expr::Pow(p)]) };
        Self::new(expr, None).expect("increasing power law")
    }

    pub fn curve(&self) -> &Curve {
        &self.0
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.0.eval(r)
    }

    pub fn inverse(&self, v: f64) -> Result<f64> {
        self.0.inverse(v)
    }

    pub fn elasticity(&self, r: f64) -> f64 {
        self.0.elasticity(r)
    }

    pub fn spec(&self) -> String {
        self.0.expr().to_string()
    }
}

/// Representation of a Nash rate `θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum NashKind {
    /// `θ ≡ 0`.
    Zero,
    /// Explicit increasing expression.
    Expr(Curve),
    /// `θ(r) = -φ′(φ⁻¹(r))`.
    FromProfile(ProfileFunction),
    /// `θ̃(r) = sup_{t>0} (r/t) log(r/φ(t))`.
    Tilde(ProfileFunction),
    /// `θ̃` with the supremum restricted to tabulated `(t_k, φ_k)`.
    GridTilde { t: Vec<f64>, ln_phi: Vec<f64> },
    /// `ϑ θ`.
    Scaled(f64, Box<NashRate>),
}

/// Increasing rate function `θ` with cached structural flags.
#[derive(Debug, Clone, PartialEq)]
pub struct NashRate {
    pub kind: NashKind,
    /// `θ(r)/r` nondecreasing on the check grid.
    pub ratio_increasing: bool,
    /// `∫^∞ ds/θ(s) < ∞`.
    pub tail_integrable: bool,
}

impl NashRate {
    pub fn new(kind: NashKind) -> Self {
        let mut rate = NashRate { kind, ratio_increasing: false, tail_integrable: false };
        rate.ratio_increasing = rate.compute_ratio_increasing();
        rate.tail_integrable = rate.compute_tail_integrable();
        rate
    }

    pub fn zero() -> Self {
        Self::new(NashKind::Zero)
    }

    /// Explicit increasing expression, e.g. `c r³`.
    pub fn expr(expr: Expr) -> Result<Self> {
        Ok(Self::new(NashKind::Expr(Curve::new(expr, None, false)?)))
    }

    /// `c · r^p`.
    pub fn power(c: f64, p: f64) -> Self {
        let e = if c == 1.0 { Expr::Pow(p) } else { Expr::product(vec![Expr::Const(c), Expr::Pow(p)]) };
        Self::expr(e).expect("increasing power rate")
    }

    pub fn from_profile(phi: ProfileFunction) -> Self {
        Self::new(NashKind::FromProfile(phi))
    }

    pub fn tilde(phi: ProfileFunction) -> Self {
        Self::new(NashKind::Tilde(phi))
    }

    /// Grid-restricted `θ̃` from samples `(t_k, φ_k)`.
    pub fn grid_tilde(t: &[f64], phi: &[f64]) -> Result<Self> {
        if t.len() != phi.len() {
            return Err(Error::LengthMismatch { expected: t.len(), got: phi.len() });
        }
        if t.is_empty() || t.iter().chain(phi).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument("grid samples must be positive and finite".into()));
        }
        Ok(Self::new(NashKind::GridTilde { t: t.to_vec(), ln_phi: phi.iter().map(|p| p.ln()).collect() }))
    }

    /// `ϑ θ` with `ϑ > 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(NashKind::Scaled(factor, Box::new(self.clone())))
    }

    /// Parses `zero`, `from-phi:<profile>`, `tilde:<profile>` or an
    /// increasing expression in the profile grammar.
    pub fn parse(spec: &str) -> Result<Self> {
        let s = spec.trim();
        if s == "zero" || s == "0" {
            return Ok(Self::zero());
        }
        if let Some(rest) = s.strip_prefix("from-phi:") {
            return Ok(Self::from_profile(ProfileFunction::parse(rest).map_err(|e| shift(e, 9))?));
        }
        if let Some(rest) = s.strip_prefix("tilde:") {
            return Ok(Self::tilde(ProfileFunction::parse(rest).map_err(|e| shift(e, 6))?));
        }
        Self::expr(parse::parse_expr(s)?)
    }

    pub fn spec(&self) -> String {
        match &self.kind {
            NashKind::Zero => "zero".into(),
            NashKind::Expr(c) => c.expr().to_string(),
            NashKind::FromProfile(p) => format!("from-phi:{}", p.spec()),
            NashKind::Tilde(p) => format!("tilde:{}", p.spec()),
            NashKind::GridTilde { t, .. } => format!("grid-tilde(<{} samples>)", t.len()),
            NashKind::Scaled(k, inner) => format!("{k}*[{}]", inner.spec()),
        }
    }

    /// `θ(r)`, or an error when `r` lies outside the range where the rate is
    /// defined.
    pub fn try_eval(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain { what: "Nash rate argument", value: r, lo: 0.0, hi: f64::INFINITY });
        }
        match &self.kind {
            NashKind::Zero => Ok(0.0),
            NashKind::Expr(c) => c.checked_eval(r),
            NashKind::FromProfile(phi) => match phi.curve().invert(r) {
                Inverse::At(t) => Ok(-phi.derivative(t)),
                // r above sup φ near t = 0: the rate blows up with φ(0) = ∞
                Inverse::LeftOf if phi.at_zero() == Limit::Infinite => Ok(f64::INFINITY),
                _ => {
                    let (lo, hi) = phi.range();
                    Err(Error::Domain { what: "Nash rate argument", value: r, lo, hi })
                }
            },
            NashKind::Tilde(phi) => Ok(theta_tilde(phi, r)),
            NashKind::GridTilde { t, ln_phi } => Ok(grid_tilde_eval(t, ln_phi, r).0),
            NashKind::Scaled(k, inner) => Ok(k * inner.try_eval(r)?),
        }
    }

    /// `θ(r)`; `NaN` outside the domain.
    pub fn eval(&self, r: f64) -> f64 {
        self.try_eval(r).unwrap_or(f64::NAN)
    }

    /// `θ′(r)`; analytic where available, central differences otherwise.
    pub fn derivative(&self, r: f64) -> f64 {
        match &self.kind {
            NashKind::Zero => 0.0,
            NashKind::Expr(c) => c.derivative(r),
            NashKind::GridTilde { t, ln_phi } => grid_tilde_eval(t, ln_phi, r).1,
            NashKind::Scaled(k, inner) => k * inner.derivative(r),
            _ => {
                let h = 1e-6 * r;
                (self.eval(r + h) - self.eval(r - h)) / (2.0 * h)
            }
        }
    }

    fn compute_ratio_increasing(&self) -> bool {
        let grid = geometric_grid(1e-6, 1e6, 256);
        let mut prev = f64::NEG_INFINITY;
        for r in grid {
            let v = self.eval(r) / r;
            if !v.is_finite() {
                continue;
            }
            if v < prev * (1.0 - 1e-12) {
                return false;
            }
            prev = v;
        }
        true
    }

    fn compute_tail_integrable(&self) -> bool {
        if let NashKind::Zero = self.kind {
            return false;
        }
        let start = geometric_grid(1e-6, 1e6, 121)
            .into_iter()
            .find(|&r| self.eval(r) > 0.0 && self.eval(r).is_finite());
        match start {
            Some(r0) => quad::integrate_to_infinity(|s| 1.0 / self.eval(s), r0, 1e-8).is_some(),
            None => false,
        }
    }
}

fn shift(e: Error, by: usize) -> Error {
    match e {
        Error::Parse { pos, msg } => Error::Parse { pos: pos + by, msg },
        other => other,
    }
}

/// `(θ̃(r), θ̃′(r))` for the grid-restricted supremum, clamped at 0.
fn grid_tilde_eval(t: &[f64], ln_phi: &[f64], r: f64) -> (f64, f64) {
    let lr = r.ln();
    let mut best = (0.0, 0.0);
    for (&tk, &lp) in t.iter().zip(ln_phi) {
        let v = r / tk * (lr - lp);
        if v > best.0 {
            best = (v, (lr - lp + 1.0) / tk);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_round_trip() {
        for spec in ["pow(-0.5)", "pow(-1.5)*expg(1,1)", "logm(2,1)", "pow(-1)*logp(1.5,2)"] {
            let phi = ProfileFunction::parse(spec).unwrap();
            for &t in &[1e-4, 0.3, 2.0, 50.0] {
                let r = phi.eval(t);
                let back = phi.inverse(r).unwrap();
                assert!((phi.eval(back) - r).abs() <= 1e-9 * r, "{spec} {t}");
            }
        }
    }

    #[test]
    fn increasing_profile_is_rejected() {
        assert!(matches!(ProfileFunction::parse("pow(0.5)"), Err(Error::NotMonotone { .. })));
    }

    #[test]
    fn inverse_outside_range_names_interval() {
        let phi = ProfileFunction::new(Expr::ExpG { c: 1.0, gamma: 1.0 }, Some((1.0, f64::INFINITY))).unwrap();
        match phi.inverse(0.9) {
            Err(Error::Domain { hi, .. }) => assert!((hi - (-1f64).exp()).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rate_flags() {
        assert!(NashRate::power(1.0, 2.0).tail_integrable);
        assert!(NashRate::power(1.0, 2.0).ratio_increasing);
        assert!(!NashRate::power(3.0, 1.0).tail_integrable);
        let g = NashRate::grid_tilde(&[0.1, 1.0, 10.0], &[5.0, 1.0, 0.5]).unwrap();
        assert!(!g.tail_integrable);
    }

    #[test]
    fn nash_rate_parsing() {
        let r = NashRate::parse("from-phi:pow(-1)").unwrap();
        assert!((r.eval(2.0) - 4.0).abs() < 1e-9);
        match NashRate::parse("from-phi:pow(-1)*bad(1)") {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 17),
            other => panic!("{other:?}"),
        }
    }
}
