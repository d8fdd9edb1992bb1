//! Expression trees for positive functions on subintervals of (0, ∞).
//!
//! Everything is evaluated in logarithmic form: `ln_value(t) = ln f(t)` and
//! `elasticity(t) = d ln f / d ln t = t f'(t) / f(t)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Log-log table: piecewise linear, or cubic Hermite when node slopes are
/// known.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// `ln t` nodes, strictly increasing.
    pub ln_t: Vec<f64>,
    /// `ln f` at the nodes.
    pub ln_f: Vec<f64>,
    /// `d ln f / d ln t` at the nodes, if known.
    pub slopes: Option<Vec<f64>>,
    /// File the table was read from, if any.
    pub source: Option<String>,
}

impl Table {
    pub fn from_points(t: &[f64], f: &[f64]) -> Result<Self> {
        if t.len() != f.len() {
            return Err(Error::LengthMismatch { expected: t.len(), got: f.len() });
        }
        if t.len() < 2 {
            return Err(Error::InvalidArgument("table needs at least two rows".into()));
        }
        let mut ln_t = Vec::with_capacity(t.len());
        let mut ln_f = Vec::with_capacity(t.len());
        for (&ti, &fi) in t.iter().zip(f) {
            if !(ti > 0.0 && fi > 0.0 && ti.is_finite() && fi.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "table row ({ti}, {fi}) is not strictly positive and finite"
                )));
            }
            ln_t.push(ti.ln());
            ln_f.push(fi.ln());
        }
        Self::from_logs(ln_t, ln_f)
    }

    pub fn from_logs(ln_t: Vec<f64>, ln_f: Vec<f64>) -> Result<Self> {
        if ln_t.len() != ln_f.len() {
            return Err(Error::LengthMismatch { expected: ln_t.len(), got: ln_f.len() });
        }
        if ln_t.len() < 2 {
            return Err(Error::InvalidArgument("table needs at least two rows".into()));
        }
        if ln_t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("table abscissae must be strictly increasing".into()));
        }
        Ok(Table { ln_t, ln_f, slopes: None, source: None })
    }

    /// Cubic Hermite table through `(ln t, ln f)` with exact log-log slopes.
    pub fn hermite(ln_t: Vec<f64>, ln_f: Vec<f64>, slopes: Vec<f64>) -> Result<Self> {
        if slopes.len() != ln_t.len() {
            return Err(Error::LengthMismatch { expected: ln_t.len(), got: slopes.len() });
        }
        if slopes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("table slopes must be finite".into()));
        }
        let mut t = Self::from_logs(ln_t, ln_f)?;
        t.slopes = Some(slopes);
        Ok(t)
    }

    /// Reads a CSV file with header columns `t,phi`.
    pub fn read_csv(path: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read table {path}: {e}")))?;
        let headers = rdr
            .headers()
            .map_err(|e| Error::InvalidArgument(format!("table {path}: {e}")))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidArgument(format!("table {path} lacks column `{name}`")))
        };
        let (ct, cf) = (col("t")?, col("phi")?);
        let mut t = Vec::new();
        let mut f = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::InvalidArgument(format!("table {path}: {e}")))?;
            let parse = |c: usize| -> Result<f64> {
                rec.get(c)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("table {path}: bad number in row {}", i + 1)))
            };
            t.push(parse(ct)?);
            f.push(parse(cf)?);
        }
        let mut table = Self::from_points(&t, &f)?;
        table.source = Some(path.to_string());
        Ok(table)
    }

    pub fn t_min(&self) -> f64 {
        self.ln_t[0].exp()
    }

    pub fn t_max(&self) -> f64 {
        self.ln_t[self.ln_t.len() - 1].exp()
    }

    fn segment(&self, x: f64) -> usize {
        let k = self.ln_t.partition_point(|&v| v <= x);
        k.clamp(1, self.ln_t.len() - 1) - 1
    }

    fn slope(&self, k: usize) -> f64 {
        (self.ln_f[k + 1] - self.ln_f[k]) / (self.ln_t[k + 1] - self.ln_t[k])
    }

    fn ln_value(&self, t: f64) -> f64 {
        let x = t.ln();
        let k = self.segment(x);
        if let Some(d) = &self.slopes {
            let n = self.ln_t.len();
            if x <= self.ln_t[0] {
                return self.ln_f[0] + d[0] * (x - self.ln_t[0]);
            }
            if x >= self.ln_t[n - 1] {
                return self.ln_f[n - 1] + d[n - 1] * (x - self.ln_t[n - 1]);
            }
            return hermite(self.ln_t[k], self.ln_t[k + 1], self.ln_f[k], self.ln_f[k + 1], d[k], d[k + 1], x).0;
        }
        self.ln_f[k] + self.slope(k) * (x - self.ln_t[k])
    }

    fn elasticity(&self, t: f64) -> f64 {
        let x = t.ln();
        let k = self.segment(x);
        if let Some(d) = &self.slopes {
            let n = self.ln_t.len();
            if x <= self.ln_t[0] {
                return d[0];
            }
            if x >= self.ln_t[n - 1] {
                return d[n - 1];
            }
            return hermite(self.ln_t[k], self.ln_t[k + 1], self.ln_f[k], self.ln_f[k + 1], d[k], d[k + 1], x).1;
        }
        // at an interior node the interpolant has a kink; report the mean slope
        if k > 0 && x == self.ln_t[k] {
            return 0.5 * (self.slope(k - 1) + self.slope(k));
        }
        self.slope(k)
    }
}

/// Cubic Hermite value and derivative on `[x0, x1]`.
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> (f64, f64) {
    let h = x1 - x0;
    let s = (x - x0) / h;
    let (s2, s3) = (s * s, s * s * s);
    let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1;
    let dv = (6.0 * s2 - 6.0 * s) * (y0 - y1) / h + (3.0 * s2 - 4.0 * s + 1.0) * d0 + (3.0 * s2 - 2.0 * s) * d1;
    (v, dv)
}

/// Dyadic smoothing `f̄(r) = (1/r) ∫_r^{2r} f₀(u) du`, where `f₀` interpolates
/// `f` linearly between the points `2^i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicAverage {
    pub i_lo: i32,
    /// `f(2^i)` for `i = i_lo, i_lo + 1, ...`.
    pub values: Vec<f64>,
}

impl DyadicAverage {
    pub fn t_min(&self) -> f64 {
        2f64.powi(self.i_lo)
    }

    pub fn t_max(&self) -> f64 {
        2f64.powi(self.i_lo + self.values.len() as i32 - 2)
    }

    /// The piecewise linear interpolant `f₀`.
    pub fn base(&self, u: f64) -> f64 {
        let i = (u.log2().floor() as i32 - self.i_lo).clamp(0, self.values.len() as i32 - 2) as usize;
        let a = 2f64.powi(self.i_lo + i as i32);
        let w = (u - a) / a;
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    fn average(&self, r: f64) -> f64 {
        let node = 2f64.powi(r.log2().floor() as i32 + 1);
        let (f_r, f_node, f_2r) = (self.base(r), self.base(node), self.base(2.0 * r));
        let int = 0.5 * (node - r) * (f_r + f_node) + 0.5 * (2.0 * r - node) * (f_node + f_2r);
        int / r
    }

    fn ln_value(&self, r: f64) -> f64 {
        self.average(r).ln()
    }

    fn elasticity(&self, r: f64) -> f64 {
        (2.0 * self.base(2.0 * r) - self.base(r)) / self.average(r) - 1.0
    }
}

/// Expression tree over the primitive families.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    /// `t^a`
    Pow(f64),
    /// `log^β(b + t)`
    LogP { beta: f64, b: f64 },
    /// `log^β(b + 1/t)`
    LogM { beta: f64, b: f64 },
    /// `exp(-c t^γ)`
    ExpG { c: f64, gamma: f64 },
    /// positive constant
    Const(f64),
    Table(Arc<Table>),
    Dyadic(Arc<DyadicAverage>),
    Product(Vec<Expr>),
}

/// Limit of a positive function at an end of its domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Limit {
    Zero,
    Finite(f64),
    Infinite,
}

/// Leading-order description of `ln f` along an end of the domain, written
/// in the variable `u → ∞` (`u = t` at infinity, `u = 1/t` at zero):
/// `Σ cᵢ u^{γᵢ} + a ln u + β ln ln u + const`.
#[derive(Debug, Clone, Default)]
struct Asym {
    exps: Vec<(f64, f64)>,
    pow: f64,
    loglog: f64,
    constant: f64,
}

impl Asym {
    fn add(&mut self, o: Asym) {
        for (g, c) in o.exps {
            self.add_exp(g, c);
        }
        self.pow += o.pow;
        self.loglog += o.loglog;
        self.constant += o.constant;
    }

    fn add_exp(&mut self, gamma: f64, coef: f64) {
        if gamma <= 0.0 {
            // u^γ with γ ≤ 0 stays bounded
            if gamma == 0.0 {
                self.constant += coef;
            }
            return;
        }
        match self.exps.iter_mut().find(|(g, _)| *g == gamma) {
            Some(e) => e.1 += coef,
            None => self.exps.push((gamma, coef)),
        }
    }

    fn limit(&self) -> Limit {
        let lead = self
            .exps
            .iter()
            .filter(|(_, c)| *c != 0.0)
            .max_by(|a, b| a.0.total_cmp(&b.0));
        let sign = if let Some(&(_, c)) = lead {
            c.signum()
        } else if self.pow != 0.0 {
            self.pow.signum()
        } else if self.loglog != 0.0 {
            self.loglog.signum()
        } else {
            return Limit::Finite(self.constant.exp());
        };
        if sign > 0.0 {
            Limit::Infinite
        } else {
            Limit::Zero
        }
    }
}

impl Expr {
    /// Flattens nested products and pulls primitives into one list.
    pub fn product(factors: Vec<Expr>) -> Expr {
        let mut flat = Vec::new();
        for f in factors {
            match f {
                Expr::Product(inner) => flat.extend(inner),
                other => flat.push(other),
            }
        }
        if flat.len() == 1 {
            flat.pop().expect("one factor")
        } else {
            Expr::Product(flat)
        }
    }

    pub fn ln_value(&self, t: f64) -> f64 {
        match self {
            Expr::Pow(a) => a * t.ln(),
            Expr::LogP { beta, b } => beta * ln_shift(*b, t).ln(),
            Expr::LogM { beta, b } => beta * ln_shift(*b, 1.0 / t).ln(),
            Expr::ExpG { c, gamma } => -c * t.powf(*gamma),
            Expr::Const(c) => c.ln(),
            Expr::Table(tab) => tab.ln_value(t),
            Expr::Dyadic(d) => d.ln_value(t),
            Expr::Product(fs) => fs.iter().map(|f| f.ln_value(t)).sum(),
        }
    }

    pub fn elasticity(&self, t: f64) -> f64 {
        match self {
            Expr::Pow(a) => *a,
            Expr::LogP { beta, b } => beta * t / ((b + t) * ln_shift(*b, t)),
            Expr::LogM { beta, b } => -beta / ((b * t + 1.0) * ln_shift(*b, 1.0 / t)),
            Expr::ExpG { c, gamma } => -c * gamma * t.powf(*gamma),
            Expr::Const(_) => 0.0,
            Expr::Table(tab) => tab.elasticity(t),
            Expr::Dyadic(d) => d.elasticity(t),
            Expr::Product(fs) => fs.iter().map(|f| f.elasticity(t)).sum(),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.ln_value(t).exp()
    }

    /// Largest open interval on which every factor is defined and positive.
    pub fn natural_domain(&self) -> (f64, f64) {
        match self {
            Expr::LogP { b, .. } => {
                // need ln(b + t) > 0
                ((1.0 - b).max(0.0), f64::INFINITY)
            }
            Expr::LogM { b, .. } => {
                // need ln(b + 1/t) > 0
                if *b >= 1.0 {
                    (0.0, f64::INFINITY)
                } else {
                    (0.0, 1.0 / (1.0 - b))
                }
            }
            Expr::Table(tab) => (tab.t_min(), tab.t_max()),
            Expr::Dyadic(d) => (d.t_min(), d.t_max()),
            Expr::Product(fs) => fs.iter().fold((0.0, f64::INFINITY), |(lo, hi), f| {
                let (a, b) = f.natural_domain();
                (lo.max(a), hi.min(b))
            }),
            _ => (0.0, f64::INFINITY),
        }
    }

    fn asym_at_infinity(&self) -> Option<Asym> {
        let mut a = Asym::default();
        match self {
            Expr::Pow(p) => a.pow = *p,
            Expr::LogP { beta, .. } => a.loglog = *beta,
            Expr::LogM { beta, b } => {
                if *b == 1.0 {
                    // ln(1 + 1/t) ~ 1/t
                    a.pow = -beta;
                } else if *b > 1.0 {
                    a.constant = beta * b.ln().ln();
                } else {
                    return None;
                }
            }
            Expr::ExpG { c, gamma } => a.add_exp(*gamma, -c),
            Expr::Const(c) => a.constant = c.ln(),
            Expr::Table(_) | Expr::Dyadic(_) => return None,
            Expr::Product(fs) => {
                for f in fs {
                    a.add(f.asym_at_infinity()?);
                }
            }
        }
        Some(a)
    }

    fn asym_at_zero(&self) -> Option<Asym> {
        let mut a = Asym::default();
        match self {
            Expr::Pow(p) => a.pow = -p,
            Expr::LogP { beta, b } => {
                if *b == 1.0 {
                    // ln(1 + t) ~ t
                    a.pow = -beta;
                } else if *b > 1.0 {
                    a.constant = beta * b.ln().ln();
                } else {
                    return None;
                }
            }
            Expr::LogM { beta, .. } => a.loglog = *beta,
            Expr::ExpG { c, gamma } => a.add_exp(-gamma, -c),
            Expr::Const(c) => a.constant = c.ln(),
            Expr::Table(_) | Expr::Dyadic(_) => return None,
            Expr::Product(fs) => {
                for f in fs {
                    a.add(f.asym_at_zero()?);
                }
            }
        }
        Some(a)
    }

    /// Analytic limit as `t → 0⁺`, when the expression has no tabulated parts.
    pub fn limit_at_zero(&self) -> Option<Limit> {
        self.asym_at_zero().map(|a| a.limit())
    }

    /// Analytic limit as `t → ∞`, when the expression has no tabulated parts.
    pub fn limit_at_infinity(&self) -> Option<Limit> {
        self.asym_at_infinity().map(|a| a.limit())
    }
}

fn ln_shift(b: f64, x: f64) -> f64 {
    if b == 1.0 {
        x.ln_1p()
    } else {
        (b + x).ln()
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Pow(a) => write!(f, "pow({a})"),
            Expr::LogP { beta, b } => write!(f, "logp({beta},{b})"),
            Expr::LogM { beta, b } => write!(f, "logm({beta},{b})"),
            Expr::ExpG { c, gamma } => write!(f, "expg({c},{gamma})"),
            Expr::Const(c) => write!(f, "const({c})"),
            Expr::Table(t) => match &t.source {
                Some(p) => write!(f, "table({p})"),
                None => write!(f, "table(<{} nodes>)", t.ln_t.len()),
            },
            Expr::Dyadic(d) => write!(f, "dyadic(<{} nodes>)", d.values.len()),
            Expr::Product(fs) => {
                for (i, x) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    write!(f, "{x}")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_elasticity(e: &Expr, t: f64) -> f64 {
        let h = 1e-5;
        (e.ln_value(t * (1.0 + h)) - e.ln_value(t * (1.0 - h))) / ((1.0 + h).ln() - (1.0 - h).ln())
    }

    #[test]
    fn elasticities_match_finite_differences() {
        let cases = [
            Expr::Pow(-0.5),
            Expr::LogP { beta: 2.0, b: 1.0 },
            Expr::LogP { beta: -1.5, b: 3.0 },
            Expr::LogM { beta: 1.0, b: 1.0 },
            Expr::LogM { beta: 0.5, b: 2.0 },
            Expr::ExpG { c: 1.0, gamma: 0.5 },
            Expr::product(vec![Expr::Pow(-1.5), Expr::ExpG { c: 1.0, gamma: 1.0 }]),
        ];
        for e in &cases {
            for &t in &[1e-3, 0.1, 1.0, 7.0, 300.0] {
                let a = e.elasticity(t);
                let b = fd_elasticity(e, t);
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-3), "{e} at {t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn limits_follow_dominant_factor() {
        let hyp = Expr::product(vec![Expr::Pow(-1.5), Expr::ExpG { c: 1.0, gamma: 1.0 }]);
        assert_eq!(hyp.limit_at_zero(), Some(Limit::Infinite));
        assert_eq!(hyp.limit_at_infinity(), Some(Limit::Zero));
        // t^2 e^{-t}: exponential wins at infinity
        let bump = Expr::product(vec![Expr::Pow(2.0), Expr::ExpG { c: 1.0, gamma: 1.0 }]);
        assert_eq!(bump.limit_at_infinity(), Some(Limit::Zero));
        assert_eq!(bump.limit_at_zero(), Some(Limit::Zero));
        // log(1 + 1/t) ~ 1/t at infinity and ~ log(1/t) at zero
        let lm = Expr::LogM { beta: 1.0, b: 1.0 };
        assert_eq!(lm.limit_at_infinity(), Some(Limit::Zero));
        assert_eq!(lm.limit_at_zero(), Some(Limit::Infinite));
        let c = Expr::product(vec![Expr::Const(3.0), Expr::ExpG { c: 1.0, gamma: -1.0 }]);
        match c.limit_at_infinity() {
            Some(Limit::Finite(v)) => assert!((v - 3.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn table_interpolates_power_laws_exactly() {
        let t: Vec<f64> = (0..10).map(|k| 10f64.powi(k - 5)).collect();
        let f: Vec<f64> = t.iter().map(|x| x.powf(-0.7)).collect();
        let tab = Table::from_points(&t, &f).unwrap();
        for &x in &[2e-5, 0.3, 17.0, 9e3] {
            assert!((tab.ln_value(x) - (-0.7 * f64::ln(x))).abs() < 1e-12);
            assert!((tab.elasticity(x) + 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn dyadic_average_of_power_law() {
        let values: Vec<f64> = (-10..=10).map(|i| 2f64.powi(-i)).collect();
        let d = DyadicAverage { i_lo: -10, values };
        // on [1,2] φ₀(u) = 1 - u/4... check direct quadrature against closed form
        for &r in &[0.01, 0.7, 1.0, 1.5, 300.0] {
            let q = crate::profiles::quad::integrate(|u| d.base(u), r, 2.0 * r, 1e-13, 0.0).value / r;
            assert!((d.average(r) - q).abs() < 1e-12 * q);
            let h = 1e-6;
            let fd = (d.ln_value(r * (1.0 + h)) - d.ln_value(r * (1.0 - h))) / ((1.0 + h).ln() - (1.0 - h).ln());
            assert!((d.elasticity(r) - fd).abs() < 1e-5, "{r}");
        }
    }
}
