//! Exact heat kernels of finite forms.
//!
//! [`SpectralKernel`] diagonalizes the symmetrized generator once and then
//! evaluates `p(t,·,·)` at any `t`. Its entries carry an absolute error of
//! order `1e-16 · max p`, so exponentially small off-diagonal entries are
//! swamped by rounding. [`series_kernel`] computes `e^{tL}` from a series
//! of nonnegative matrices followed by squarings of nonnegative matrices;
//! there is no cancellation, so every entry is accurate to a small relative
//! error however tiny it is.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::forms::FiniteDirichletForm;

/// Eigendecomposition of `-L` in `L²(m)`.
#[derive(Debug, Clone)]
pub struct SpectralKernel {
    /// `0 ≤ μ₁ ≤ … ≤ μ_n`.
    eigenvalues: Vec<f64>,
    /// Column `k` is the eigenfunction `e_k`, orthonormal in `L²(m)`.
    vectors: DMatrix<f64>,
    m: Vec<f64>,
    conservative: bool,
    reconstruction_error: f64,
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain { what: "time", value: t, lo: 0.0, hi: f64::INFINITY });
    }
    Ok(())
}

impl SpectralKernel {
    pub fn new(form: &FiniteDirichletForm) -> Result<Self> {
        let n = form.n();
        let m = form.m().to_vec();
        let sq: Vec<f64> = m.iter().map(|v| v.sqrt()).collect();
        let l = form.generator();
        // S = M^{1/2} (-L) M^{-1/2} is symmetric
        let mut s = DMatrix::zeros(n, n);
        for x in 0..n {
            for y in 0..n {
                s[(x, y)] = -l[(x, y)] * sq[x] / sq[y];
            }
        }
        let s = 0.5 * (&s + s.transpose());
        let scale = s.amax().max(f64::MIN_POSITIVE);
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut eigenvalues = Vec::with_capacity(n);
        let mut vectors = DMatrix::zeros(n, n);
        for (k, &j) in order.iter().enumerate() {
            let mu = eig.eigenvalues[j];
            if mu < -1e-12 * scale {
                return Err(Error::Invariant(format!("generator has positive eigenvalue {}", -mu)));
            }
            eigenvalues.push(mu.max(0.0));
            for x in 0..n {
                vectors[(x, k)] = eig.eigenvectors[(x, j)] / sq[x];
            }
        }
        let mut sk = SpectralKernel {
            eigenvalues,
            vectors,
            m,
            conservative: !form.has_killing(),
            reconstruction_error: 0.0,
        };
        // L_rec = -E diag(μ) E^T M
        let mut w = sk.vectors.clone();
        for k in 0..n {
            let mu = sk.eigenvalues[k];
            w.column_mut(k).scale_mut(mu);
        }
        let mut rec = -(w * sk.vectors.transpose());
        for y in 0..n {
            rec.column_mut(y).scale_mut(sk.m[y]);
        }
        let err = (&rec - &l).amax();
        let lmax = l.amax().max(f64::MIN_POSITIVE);
        sk.reconstruction_error = err / lmax;
        if sk.reconstruction_error > 1e-10 {
            return Err(Error::Invariant(format!(
                "spectral reconstruction error {:.3e} exceeds 1e-10",
                sk.reconstruction_error
            )));
        }
        Ok(sk)
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Eigenfunctions as columns, orthonormal in `L²(m)`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    /// No killing: `Σ_y p(t,x,y) m(y) = 1`.
    pub fn is_conservative(&self) -> bool {
        self.conservative
    }

    /// `max |L - L_rec| / max |L|`.
    pub fn reconstruction_error(&self) -> f64 {
        self.reconstruction_error
    }

    /// `p(t,x,y) = Σ_k e^{-μ_k t} e_k(x) e_k(y)`.
    pub fn heat_kernel(&self, t: f64) -> Result<DMatrix<f64>> {
        check_t(t)?;
        let n = self.n();
        let mut w = self.vectors.clone();
        for k in 0..n {
            let f = (-self.eigenvalues[k] * t).exp();
            w.column_mut(k).scale_mut(f);
        }
        let p = w * self.vectors.transpose();
        Ok(0.5 * (&p + p.transpose()))
    }

    /// `p(t,x,x)` for all `x`.
    pub fn diagonal(&self, t: f64) -> Result<Vec<f64>> {
        check_t(t)?;
        let n = self.n();
        let decay: Vec<f64> = self.eigenvalues.iter().map(|mu| (-mu * t).exp()).collect();
        Ok((0..n)
            .map(|x| (0..n).map(|k| decay[k] * self.vectors[(x, k)].powi(2)).sum())
            .collect())
    }

    /// `‖P_t‖_{1→∞} = sup_{x,y} p(t,x,y)`, attained on the diagonal.
    pub fn onediag_norm(&self, t: f64) -> Result<f64> {
        let p = self.heat_kernel(t)?;
        let diag = (0..self.n()).map(|x| p[(x, x)]).fold(f64::NEG_INFINITY, f64::max);
        let all = p.max();
        if all > diag + 1e-12 * diag.abs().max(1.0) {
            return Err(Error::Invariant(format!(
                "off-diagonal kernel entry {all} exceeds the diagonal maximum {diag}"
            )));
        }
        Ok(diag)
    }

    /// `‖P_t‖_{1→2} = sup_y (Σ_x p(t,x,y)² m(x))^{1/2}`.
    pub fn norm_1_to_2(&self, t: f64) -> Result<f64> {
        let p = self.heat_kernel(t)?;
        Ok(column_l2_sup(&p, &self.m, None))
    }

    /// `sup_{x,y} e^{ψ(x)} p(t,x,y) e^{-ψ(y)}`, evaluated from the spectral
    /// kernel. See [`series_kernel`] when ψ is steep.
    pub fn perturbed_norm(&self, psi: &[f64], t: f64) -> Result<f64> {
        if psi.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), got: psi.len() });
        }
        let p = self.heat_kernel(t)?;
        Ok(perturbed_sup(&p, psi).exp())
    }

    /// `‖P^ψ_{t/2}‖_{2→∞} ‖P^ψ_{t/2}‖_{1→2}`, an upper bound for
    /// `‖P^ψ_t‖_{1→∞}` through the factorization `P^ψ_t = P^ψ_{t/2} P^ψ_{t/2}`.
    pub fn perturbed_factorized(&self, psi: &[f64], t: f64) -> Result<f64> {
        if psi.len() != self.n() {
            return Err(Error::LengthMismatch { expected: self.n(), got: psi.len() });
        }
        let p = self.heat_kernel(0.5 * t)?;
        Ok(perturbed_factorized_from(&p, &self.m, psi))
    }
}

/// `ln sup_{x,y} e^{ψ(x)} p(x,y) e^{-ψ(y)}` over positive entries.
pub fn perturbed_sup(p: &DMatrix<f64>, psi: &[f64]) -> f64 {
    let n = p.nrows();
    let mut best = f64::NEG_INFINITY;
    for x in 0..n {
        for y in 0..n {
            let v = p[(x, y)];
            if v > 0.0 {
                best = best.max(v.ln() + psi[x] - psi[y]);
            }
        }
    }
    best
}

fn column_l2_sup(p: &DMatrix<f64>, m: &[f64], psi: Option<&[f64]>) -> f64 {
    let n = p.nrows();
    let mut best = 0.0f64;
    for y in 0..n {
        let mut s = 0.0;
        for x in 0..n {
            let w = match psi {
                Some(h) => (h[x] - h[y]).exp(),
                None => 1.0,
            };
            s += (w * p[(x, y)]).powi(2) * m[x];
        }
        best = best.max(s);
    }
    best.sqrt()
}

/// Factorized bound from the kernel at half time.
pub fn perturbed_factorized_from(p_half: &DMatrix<f64>, m: &[f64], psi: &[f64]) -> f64 {
    // ‖P^ψ‖_{1→2}: columns of e^{ψ(x)} p e^{-ψ(y)}; ‖P^ψ‖_{2→∞}: rows of the same kernel
    let one_two = column_l2_sup(p_half, m, Some(psi));
    let n = p_half.nrows();
    let mut two_inf = 0.0f64;
    for x in 0..n {
        let mut s = 0.0;
        for y in 0..n {
            s += ((psi[x] - psi[y]).exp() * p_half[(x, y)]).powi(2) * m[y];
        }
        two_inf = two_inf.max(s);
    }
    one_two * two_inf.sqrt()
}

/// `p(t,·,·)` from `e^{tL} = (e^{tL/2^j})^{2^j}` where the inner factor is
/// the uniformization series `e^{-qτ} Σ (qτ)^k/k! (I + L/q)^k` of
/// nonnegative terms; all entries carry a small relative error.
pub fn series_kernel(form: &FiniteDirichletForm, t: f64) -> Result<DMatrix<f64>> {
    check_t(t)?;
    let n = form.n();
    let l = form.generator();
    let q = (0..n).map(|x| -l[(x, x)]).fold(0.0, f64::max);
    if q == 0.0 {
        // no transitions: e^{tL} = I
        let mut p = DMatrix::zeros(n, n);
        for x in 0..n {
            p[(x, x)] = 1.0 / form.m()[x];
        }
        return Ok(p);
    }
    let mut j = 0u32;
    while q * t / 2f64.powi(j as i32) > 0.5 {
        j += 1;
    }
    let tau = t / 2f64.powi(j as i32);
    // B = I + L/q is entrywise nonnegative
    let mut b = l / q;
    for x in 0..n {
        b[(x, x)] += 1.0;
        b[(x, x)] = b[(x, x)].max(0.0);
    }
    let qt = q * tau;
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    // stop only once every entry has converged relative to itself, so that
    // entries first reached at high order are not truncated away
    for k in 1..=(n + 200) {
        term = &term * &b * (qt / k as f64);
        sum += &term;
        let settled = term.iter().zip(sum.iter()).all(|(a, s)| *a <= 1e-17 * s);
        if settled {
            break;
        }
    }
    let mut e = sum * (-qt).exp();
    for _ in 0..j {
        e = &e * &e;
    }
    // p(t,x,y) = e^{tL}(x,y) / m(y)
    for y in 0..n {
        let my = form.m()[y];
        e.column_mut(y).scale_mut(1.0 / my);
    }
    Ok(e)
}

/// Kernel of the part form on `D` at time `t` (local indices) and the
/// first `k` Dirichlet eigenvalues.
pub fn dirichlet_kernel_and_spectrum(
    form: &FiniteDirichletForm,
    d: &[usize],
    t: f64,
    k: usize,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if k > d.len() {
        return Err(Error::InvalidArgument(format!("asked for {k} eigenvalues of a {}-state domain", d.len())));
    }
    let part = form.part_form(d)?;
    let sk = SpectralKernel::new(&part.form)?;
    Ok((sk.heat_kernel(t)?, sk.eigenvalues()[..k].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> FiniteDirichletForm {
        FiniteDirichletForm::from_edges(vec![1.0, 1.0], &[(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn two_state_closed_form() {
        let sk = SpectralKernel::new(&two_state()).unwrap();
        for &t in &[0.01, 0.5, 3.0] {
            let p = sk.heat_kernel(t).unwrap();
            let e = (-2.0 * t).exp();
            assert!((p[(0, 0)] - 0.5 * (1.0 + e)).abs() < 1e-14);
            assert!((p[(0, 1)] - 0.5 * (1.0 - e)).abs() < 1e-14);
        }
        assert!((sk.onediag_norm(0.5).unwrap() - 0.683_939_720_585_721).abs() < 1e-12);
    }

    #[test]
    fn perturbed_two_state() {
        let sk = SpectralKernel::new(&two_state()).unwrap();
        let v = sk.perturbed_norm(&[0.0, 1.0], 0.5).unwrap();
        let off = 0.5 * (1.0 - (-1.0f64).exp());
        assert!((v - (std::f64::consts::E * off).max(0.5 * (1.0 + (-1.0f64).exp()))).abs() < 1e-12);
        assert!((v - 0.859_140).abs() < 1e-6);
        assert!(sk.heat_kernel(0.0).is_err());
    }

    #[test]
    fn series_matches_spectral() {
        let f = FiniteDirichletForm::from_edges(
            vec![1.0, 2.0, 0.5, 1.5],
            &[(0, 1, 1.0), (1, 2, 0.3), (2, 3, 2.0), (3, 0, 0.7), (0, 2, 0.1)],
        )
        .unwrap();
        let sk = SpectralKernel::new(&f).unwrap();
        for &t in &[0.05, 1.0, 7.5] {
            let a = sk.heat_kernel(t).unwrap();
            let b = series_kernel(&f, t).unwrap();
            assert!((a - b).amax() < 1e-13);
        }
    }

    #[test]
    fn dirichlet_singleton_and_segment() {
        let path = FiniteDirichletForm::from_edges(vec![1.0; 10], &(0..9).map(|i| (i, i + 1, 1.0)).collect::<Vec<_>>()).unwrap();
        let (_, ev) = dirichlet_kernel_and_spectrum(&path, &[4], 1.0, 1).unwrap();
        assert!((ev[0] - 2.0).abs() < 1e-12);
        let (_, ev) = dirichlet_kernel_and_spectrum(&path, &[3, 4, 5], 1.0, 1).unwrap();
        assert!((ev[0] - 2.0 * (1.0 - (std::f64::consts::PI / 4.0).cos())).abs() < 1e-12);
    }
}
