//! Finite symmetric Dirichlet forms given by conductances.
//!
//! Convention: `c[x][y] = J(x,y) m(x) m(y)`, so that
//! `ε(u,v) = ½ Σ_{x≠y} (u(x)-u(y))(v(x)-v(y)) c[x][y] + Σ_x κ(x) u(x) v(x)`
//! and `Lu(x) = (1/m(x)) (Σ_y c[x][y] (u(y)-u(x)) - κ(x) u(x))`.
//! The killing rates `κ` vanish for ordinary forms; they appear only in part
//! forms, where they record the conductance to the removed states.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Weighted graph with reference measure, optional killing and optional
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDirichletForm {
    m: Vec<f64>,
    c: DMatrix<f64>,
    killing: Vec<f64>,
    coords: Option<Vec<Vec<f64>>>,
    /// Side lengths of a periodic box; distances wrap around when present.
    period: Option<Vec<f64>>,
}

/// Part form on a subset `D`, with the map back to the original states.
#[derive(Debug, Clone)]
pub struct PartForm {
    pub form: FiniteDirichletForm,
    /// `states[i]` is the original index of local state `i`.
    pub states: Vec<usize>,
}

impl FiniteDirichletForm {
    /// Builds a form from a dense conductance matrix.
    pub fn new(m: Vec<f64>, c: DMatrix<f64>) -> Result<Self> {
        let n = m.len();
        if n == 0 {
            return Err(Error::InvalidArgument("form needs at least one state".into()));
        }
        if c.nrows() != n || c.ncols() != n {
            return Err(Error::LengthMismatch { expected: n, got: c.nrows() });
        }
        if let Some(x) = m.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!("measure must be positive, m[{x}] = {}", m[x])));
        }
        for x in 0..n {
            if c[(x, x)] != 0.0 {
                return Err(Error::InvalidArgument(format!("conductance diagonal must vanish at {x}")));
            }
            for y in 0..x {
                let v = c[(x, y)];
                if v != c[(y, x)] {
                    return Err(Error::InvalidArgument(format!("conductance not symmetric at ({x},{y})")));
                }
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidArgument(format!("conductance c[{x}][{y}] = {v} is negative")));
                }
            }
        }
        Ok(FiniteDirichletForm { m, c, killing: vec![0.0; n], coords: None, period: None })
    }

    /// Builds a form from an edge list `(x, y, c)`; repeated edges add up.
    pub fn from_edges(m: Vec<f64>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = m.len();
        let mut c = DMatrix::zeros(n, n);
        for &(x, y, w) in edges {
            if x >= n || y >= n {
                return Err(Error::InvalidArgument(format!("edge ({x},{y}) outside {n} states")));
            }
            if x == y {
                return Err(Error::InvalidArgument(format!("self-loop at {x}")));
            }
            c[(x, y)] += w;
            c[(y, x)] += w;
        }
        Self::new(m, c)
    }

    /// Attaches coordinates (one point per state).
    pub fn with_coords(mut self, coords: Vec<Vec<f64>>) -> Result<Self> {
        if coords.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), got: coords.len() });
        }
        let d = coords[0].len();
        if coords.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidArgument("coordinates must share one dimension".into()));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    /// Makes coordinate distances periodic with the given side lengths.
    pub fn with_period(mut self, period: Vec<f64>) -> Result<Self> {
        let d = self.coords.as_ref().ok_or(Error::MissingCoords)?[0].len();
        if period.len() != d {
            return Err(Error::LengthMismatch { expected: d, got: period.len() });
        }
        self.period = Some(period);
        Ok(self)
    }

    /// Adds killing rates; used for part forms and Dirichlet chains.
    pub fn with_killing(mut self, killing: Vec<f64>) -> Result<Self> {
        if killing.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), got: killing.len() });
        }
        if killing.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return Err(Error::InvalidArgument("killing rates must be nonnegative".into()));
        }
        self.killing = killing;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn conductances(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn killing(&self) -> &[f64] {
        &self.killing
    }

    pub fn has_killing(&self) -> bool {
        self.killing.iter().any(|k| *k > 0.0)
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn period(&self) -> Option<&[f64]> {
        self.period.as_deref()
    }

    /// `|x - y|` in the coordinate metric (periodic when configured).
    pub fn distance(&self, x: usize, y: usize) -> Result<f64> {
        let pts = self.coords.as_ref().ok_or(Error::MissingCoords)?;
        let mut s = 0.0;
        for (k, (a, b)) in pts[x].iter().zip(&pts[y]).enumerate() {
            let mut d = (a - b).abs();
            if let Some(p) = &self.period {
                d = d.min(p[k] - d);
            }
            s += d * d;
        }
        Ok(s.sqrt())
    }

    /// Sum of conductances out of `x` plus killing.
    pub fn degree(&self, x: usize) -> f64 {
        self.c.row(x).sum() + self.killing[x]
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), got: u.len() });
        }
        Ok(())
    }

    /// `ε(u, v)`.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        self.check_len(v)?;
        let n = self.n();
        let mut s = 0.0;
        for x in 0..n {
            for y in 0..x {
                let w = self.c[(x, y)];
                if w != 0.0 {
                    s += w * (u[x] - u[y]) * (v[x] - v[y]);
                }
            }
            s += self.killing[x] * u[x] * v[x];
        }
        Ok(s)
    }

    /// Density of `Γ(u,u)` with respect to `m`:
    /// `(1/(2m(x))) Σ_y (u(x)-u(y))² c[x][y]`.
    pub fn carre_du_champ(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let n = self.n();
        Ok((0..n)
            .map(|x| {
                let s: f64 = (0..n).map(|y| self.c[(x, y)] * (u[x] - u[y]).powi(2)).sum();
                s / (2.0 * self.m[x])
            })
            .collect())
    }

    /// Generator matrix `L` acting on functions.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = DMatrix::zeros(n, n);
        for x in 0..n {
            let mut diag = 0.0;
            for y in 0..n {
                if y != x {
                    l[(x, y)] = self.c[(x, y)] / self.m[x];
                    diag += self.c[(x, y)];
                }
            }
            l[(x, x)] = -(diag + self.killing[x]) / self.m[x];
        }
        l
    }

    /// `Lu`.
    pub fn apply_generator(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let n = self.n();
        Ok((0..n)
            .map(|x| {
                let s: f64 = (0..n).map(|y| self.c[(x, y)] * (u[y] - u[x])).sum();
                (s - self.killing[x] * u[x]) / self.m[x]
            })
            .collect())
    }

    /// `‖u‖_p` in `L^p(m)`; `p = ∞` gives the max norm.
    pub fn lp_norm(&self, u: &[f64], p: f64) -> f64 {
        if p.is_infinite() {
            return u.iter().fold(0.0, |a, v| a.max(v.abs()));
        }
        let s: f64 = u.iter().zip(&self.m).map(|(v, w)| v.abs().powf(p) * w).sum();
        s.powf(1.0 / p)
    }

    /// `⟨u, v⟩` in `L²(m)`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter().zip(v).zip(&self.m).map(|((a, b), w)| a * b * w).sum()
    }

    /// Per-state values of `(1/(2m(x))) Σ_y (1 - e^{σ(ψ(y)-ψ(x))})² c[x][y]`
    /// for `σ = +1` (first) and `σ = -1` (second), as natural logarithms.
    ///
    /// Terms are combined in log-sum form so that large increments do not
    /// overflow.
    pub fn ln_lambda_densities(&self, psi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_len(psi)?;
        let n = self.n();
        let mut plus = vec![f64::NEG_INFINITY; n];
        let mut minus = vec![f64::NEG_INFINITY; n];
        let mut buf_p = Vec::with_capacity(n);
        let mut buf_m = Vec::with_capacity(n);
        for x in 0..n {
            buf_p.clear();
            buf_m.clear();
            for y in 0..n {
                let w = self.c[(x, y)];
                if w == 0.0 {
                    continue;
                }
                let d = psi[y] - psi[x];
                buf_p.push(w.ln() + ln_sq_expm1(d));
                buf_m.push(w.ln() + ln_sq_expm1(-d));
            }
            let norm = (2.0 * self.m[x]).ln();
            plus[x] = log_sum_exp(&buf_p) - norm;
            minus[x] = log_sum_exp(&buf_m) - norm;
        }
        Ok((plus, minus))
    }

    /// `log Λ(ψ)²`.
    pub fn ln_lambda_sq(&self, psi: &[f64]) -> Result<f64> {
        let (p, m) = self.ln_lambda_densities(psi)?;
        Ok(p.iter().chain(&m).cloned().fold(f64::NEG_INFINITY, f64::max))
    }

    /// `Λ(ψ)² = max_x max_± (1/(2m(x))) Σ_y (1 - e^{±(ψ(y)-ψ(x))})² c[x][y]`.
    pub fn lambda_sq(&self, psi: &[f64]) -> Result<f64> {
        Ok(self.ln_lambda_sq(psi)?.exp())
    }

    /// Terms of the admissibility inequality for `ψ`, `f ≥ 0`, `p ≥ 1`,
    /// `s ∈ (0,1)`.
    pub fn admissibility_terms(&self, psi: &[f64], f: &[f64], p: f64, s: f64) -> Result<AdmissibilityTerms> {
        self.check_len(psi)?;
        self.check_len(f)?;
        if f.iter().any(|v| *v < 0.0) {
            return Err(Error::InvalidArgument("admissibility needs f ≥ 0".into()));
        }
        if f.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidArgument("admissibility needs f ≠ 0".into()));
        }
        if !(p >= 1.0) || !(s > 0.0 && s < 1.0) {
            return Err(Error::InvalidArgument(format!("need p ≥ 1 and s ∈ (0,1), got p={p}, s={s}")));
        }
        let a: Vec<f64> = psi.iter().zip(f).map(|(h, v)| h.exp() * v.powf(2.0 * p - 1.0)).collect();
        let b: Vec<f64> = psi.iter().zip(f).map(|(h, v)| (-h).exp() * v).collect();
        let fp: Vec<f64> = f.iter().map(|v| v.powf(p)).collect();
        let cross = self.energy(&a, &b)?;
        let local = s / p * self.energy(&fp, &fp)?;
        let factor = if p > 1.0 { 1.0 + 4.0 * p * p / (1.0 - s) } else { 1.0 };
        let norm = self.lp_norm(f, 2.0 * p).powf(2.0 * p);
        let penalty = factor * self.lambda_sq(psi)? * norm;
        Ok(AdmissibilityTerms { cross, local, penalty })
    }

    /// `ε(e^ψ f^{2p-1}, e^{-ψ} f) - (s/p) ε(f^p, f^p) + (1 + 4p² 1_{p>1}/(1-s)) Λ(ψ)² ‖f‖_{2p}^{2p}`.
    pub fn admissibility_margin(&self, psi: &[f64], f: &[f64], p: f64, s: f64) -> Result<f64> {
        Ok(self.admissibility_terms(psi, f, p, s)?.margin())
    }

    /// Restriction to `D` with Dirichlet condition outside: conductances to
    /// removed states become killing rates.
    pub fn part_form(&self, d: &[usize]) -> Result<PartForm> {
        let n = self.n();
        if d.is_empty() {
            return Err(Error::InvalidArgument("part form needs a nonempty subset".into()));
        }
        let mut inside = vec![false; n];
        for &x in d {
            if x >= n {
                return Err(Error::InvalidArgument(format!("state {x} outside {n} states")));
            }
            inside[x] = true;
        }
        let states: Vec<usize> = (0..n).filter(|&x| inside[x]).collect();
        let k = states.len();
        let mut c = DMatrix::zeros(k, k);
        let mut killing = vec![0.0; k];
        for (i, &x) in states.iter().enumerate() {
            killing[i] = self.killing[x];
            killing[i] += (0..n).filter(|&y| !inside[y]).map(|y| self.c[(x, y)]).sum::<f64>();
            for (j, &y) in states.iter().enumerate() {
                c[(i, j)] = self.c[(x, y)];
            }
        }
        let m = states.iter().map(|&x| self.m[x]).collect();
        let mut form = FiniteDirichletForm::new(m, c)?.with_killing(killing)?;
        if let Some(pts) = &self.coords {
            form.coords = Some(states.iter().map(|&x| pts[x].clone()).collect());
            form.period = self.period.clone();
        }
        Ok(PartForm { form, states })
    }

    /// Drops jumps longer than `ρ`; returns the truncated form and
    /// `2 sup_x (1/m(x)) Σ_{|x-y|>ρ} c[x][y]`, so that
    /// `ε(u,u) ≤ ε^{(ρ)}(u,u) + tail ‖u‖²₂`.
    pub fn truncate(&self, rho: f64) -> Result<(FiniteDirichletForm, f64)> {
        let n = self.n();
        self.coords.as_ref().ok_or(Error::MissingCoords)?;
        let mut c = self.c.clone();
        let mut tail = 0.0f64;
        for x in 0..n {
            let mut far = 0.0;
            for y in 0..n {
                if y != x && self.c[(x, y)] != 0.0 && self.distance(x, y)? > rho {
                    far += self.c[(x, y)];
                    c[(x, y)] = 0.0;
                }
            }
            tail = tail.max(far / self.m[x]);
        }
        let mut out = self.clone();
        out.c = c;
        Ok((out, 2.0 * tail))
    }

    /// `Γ_ρ[ψ](x) = (1/(2m(x))) Σ_{0<|x-y|≤ρ} (e^{ψ(x)-ψ(y)} - 1)² c[x][y]`.
    pub fn gamma_rho(&self, psi: &[f64], rho: f64) -> Result<Vec<f64>> {
        self.check_len(psi)?;
        self.coords.as_ref().ok_or(Error::MissingCoords)?;
        let n = self.n();
        let mut out = vec![0.0; n];
        for x in 0..n {
            let mut s = 0.0;
            for y in 0..n {
                let w = self.c[(x, y)];
                if w == 0.0 || y == x {
                    continue;
                }
                let d = self.distance(x, y)?;
                if d > 0.0 && d <= rho {
                    s += (psi[x] - psi[y]).exp_m1().powi(2) * w;
                }
            }
            out[x] = s / (2.0 * self.m[x]);
        }
        Ok(out)
    }

    /// Hop distances from `x` along edges with positive conductance;
    /// `usize::MAX` marks unreachable states.
    pub fn hop_distances(&self, x: usize) -> Vec<usize> {
        let n = self.n();
        let mut dist = vec![usize::MAX; n];
        dist[x] = 0;
        let mut q = VecDeque::from([x]);
        while let Some(z) = q.pop_front() {
            for w in 0..n {
                if self.c[(z, w)] > 0.0 && dist[w] == usize::MAX {
                    dist[w] = dist[z] + 1;
                    q.push_back(w);
                }
            }
        }
        dist
    }

    /// Connected components of the conductance graph.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            let comp: Vec<usize> = self
                .hop_distances(s)
                .iter()
                .enumerate()
                .filter(|(_, d)| **d != usize::MAX)
                .map(|(i, _)| i)
                .collect();
            for &i in &comp {
                seen[i] = true;
            }
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// Multiplies both `m` and the conductances (and killing) by `a > 0`.
    pub fn rescaled(&self, a: f64) -> FiniteDirichletForm {
        let mut out = self.clone();
        out.m.iter_mut().for_each(|v| *v *= a);
        out.c *= a;
        out.killing.iter_mut().for_each(|v| *v *= a);
        out
    }
}

/// The three terms of the admissibility inequality.
#[derive(Debug, Clone, Copy)]
pub struct AdmissibilityTerms {
    /// `ε(e^ψ f^{2p-1}, e^{-ψ} f)`
    pub cross: f64,
    /// `(s/p) ε(f^p, f^p)`
    pub local: f64,
    /// `(1 + 4p² 1_{p>1}/(1-s)) Λ(ψ)² ‖f‖_{2p}^{2p}`
    pub penalty: f64,
}

impl AdmissibilityTerms {
    pub fn margin(&self) -> f64 {
        self.cross - self.local + self.penalty
    }

    /// Natural scale for tolerances.
    pub fn scale(&self) -> f64 {
        self.cross.abs() + self.local.abs() + self.penalty.abs()
    }
}

/// `ln (e^d - 1)²`, stable for all `d`.
fn ln_sq_expm1(d: f64) -> f64 {
    if d > 30.0 {
        // (e^d - 1)² = e^{2d} (1 - e^{-d})²
        2.0 * d + 2.0 * (-(-d).exp()).ln_1p()
    } else {
        2.0 * d.exp_m1().abs().ln()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> FiniteDirichletForm {
        FiniteDirichletForm::from_edges(vec![1.0, 1.0], &[(0, 1, 1.0)]).unwrap()
    }

    fn cycle4() -> FiniteDirichletForm {
        FiniteDirichletForm::from_edges(vec![1.0; 4], &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]).unwrap()
    }

    #[test]
    fn energy_examples() {
        let f = two_state();
        assert_eq!(f.energy(&[0.0, 1.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(f.energy(&[3.0, 3.0], &[3.0, 3.0]).unwrap(), 0.0);
        let u = [0.0, 1.0, 0.0, 1.0];
        assert_eq!(cycle4().energy(&u, &u).unwrap(), 4.0);
        assert!(matches!(f.energy(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn carre_du_champ_two_state() {
        assert_eq!(two_state().carre_du_champ(&[0.0, 1.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn lambda_sq_two_state() {
        let v = two_state().lambda_sq(&[0.0, 1.0]).unwrap();
        let e = std::f64::consts::E;
        assert!((v - 0.5 * (e - 1.0).powi(2)).abs() < 1e-14);
        assert_eq!(two_state().lambda_sq(&[2.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn lambda_sq_survives_huge_increments() {
        let v = two_state().ln_lambda_sq(&[0.0, 400.0]).unwrap();
        assert!((v - (800.0 - 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn part_form_of_path_middle() {
        let path = FiniteDirichletForm::from_edges(vec![1.0; 3], &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let part = path.part_form(&[1]).unwrap();
        assert_eq!(part.form.generator()[(0, 0)], -2.0);
        assert_eq!(part.form.killing(), &[2.0]);
        let all = path.part_form(&[0, 1, 2]).unwrap();
        assert_eq!(all.form, path);
        assert!(path.part_form(&[]).is_err());
    }

    #[test]
    fn truncation_two_states() {
        let f = two_state().with_coords(vec![vec![0.0], vec![1.0]]).unwrap();
        let (tr, tail) = f.truncate(0.5).unwrap();
        assert_eq!(tail, 2.0);
        assert_eq!(tr.conductances().sum(), 0.0);
        let (same, zero) = f.truncate(5.0).unwrap();
        assert_eq!(zero, 0.0);
        assert_eq!(same, f);
        assert!(matches!(two_state().truncate(1.0), Err(Error::MissingCoords)));
    }

    #[test]
    fn admissibility_with_constant_psi() {
        let f = cycle4();
        let v = [0.3, 1.0, 0.2, 0.7];
        let m = f.admissibility_margin(&[1.0; 4], &v, 1.0, 0.25).unwrap();
        let e = f.energy(&v, &v).unwrap();
        assert!((m - 0.75 * e).abs() < 1e-12);
        assert!(f.admissibility_margin(&[0.0; 4], &[0.0; 4], 1.0, 0.5).is_err());
        assert!(f.admissibility_margin(&[0.0; 4], &[-1.0, 0.0, 0.0, 0.0], 1.0, 0.5).is_err());
    }
}
