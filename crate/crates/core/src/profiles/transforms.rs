//! Transforms between profiles `φ` and Nash rates `θ`.

use std::sync::Arc;

use super::expr::{hermite, Expr, Limit, Table};
use super::quad;
use super::{NashKind, NashRate, ProfileFunction};
use crate::error::{Error, Result};

/// `θ(r) = -φ′(φ⁻¹(r))`.
pub fn theta_from_phi(phi: &ProfileFunction, r: f64) -> Result<f64> {
    let t = phi.inverse(r)?;
    Ok(-phi.derivative(t))
}

/// `θ_*(r) = r / φ⁻¹(r)`.
pub fn theta_star(phi: &ProfileFunction, r: f64) -> Result<f64> {
    Ok(r / phi.inverse(r)?)
}

/// `θ̃(r) = sup_{t>0} (r/t) log(r/φ(t))`.
///
/// The supremum runs over `ln t ∈ [-40, 40]` intersected with the domain:
/// a dense scan locates the best cell, golden-section search refines it to
/// `1e-10` in `ln t`. Returns `0` when `r ≤ φ(∞)` and `+∞` when `r > φ(0)`
/// for a profile whose domain reaches `0`.
pub fn theta_tilde(phi: &ProfileFunction, r: f64) -> f64 {
    if !(r > 0.0) {
        return 0.0;
    }
    let (dlo, dhi) = phi.domain();
    if dlo == 0.0 {
        if let Limit::Finite(v) = phi.at_zero() {
            if r > v {
                return f64::INFINITY;
            }
        }
    }
    if dhi == f64::INFINITY {
        match phi.at_infinity() {
            Limit::Finite(v) if r <= v => return 0.0,
            Limit::Infinite => return 0.0,
            _ => {}
        }
    }
    let lr = r.ln();
    let obj = |x: f64| (-x).exp() * r * (lr - phi.ln_eval(x.exp()));
    let (wlo, whi) = phi.window();
    let a = if dlo > 0.0 { wlo.ln().max(-40.0) } else { -40.0 };
    let b = if dhi.is_finite() { whi.ln().min(40.0) } else { 40.0 };
    if !(b > a) {
        return 0.0;
    }
    let n = 1601;
    let h = (b - a) / (n - 1) as f64;
    let mut best_k = 0;
    let mut best = f64::NEG_INFINITY;
    for k in 0..n {
        let v = obj(a + h * k as f64);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let lo = (a + h * (best_k as f64 - 1.0)).max(a);
    let hi = (a + h * (best_k as f64 + 1.0)).min(b);
    let (_, v) = golden_max(obj, lo, hi, 1e-10);
    best.max(v).max(0.0)
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    if fx >= fc.max(fd) {
        (x, fx)
    } else if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Result of inverting `G(u) = ∫_u^∞ ds/θ(s)`.
#[derive(Debug, Clone)]
pub struct PhiFromTheta {
    pub phi: ProfileFunction,
    /// `∫_0 ds/θ(s) < ∞`: the profile stays bounded as `t → 0`.
    pub bounded_at_zero: bool,
}

/// [`phi_from_theta_on`] over the window `[1e-6, 1e6]`.
pub fn phi_from_theta(theta: &NashRate) -> Result<PhiFromTheta> {
    phi_from_theta_on(theta, 1e-6, 1e6)
}

/// Tabulates `φ = G⁻¹` where `G(u) = ∫_u^∞ ds/θ(s)`.
///
/// Nodes `(ln G(u), ln u)` are refined adaptively until log-log linear
/// interpolation reproduces every midpoint to `1e-9` relative. The table
/// covers `[t_lo, t_hi]` unless `θ` runs out of representable range first.
pub fn phi_from_theta_on(theta: &NashRate, t_lo: f64, t_hi: f64) -> Result<PhiFromTheta> {
    if !(t_lo > 0.0 && t_hi > t_lo) {
        return Err(Error::InvalidArgument(format!("bad window [{t_lo}, {t_hi}]")));
    }
    if let NashKind::Zero = theta.kind {
        return Err(Error::NotUltracontractive);
    }
    let inv = |s: f64| {
        let v = theta.eval(s);
        if v > 0.0 {
            1.0 / v
        } else {
            f64::INFINITY
        }
    };
    // s/θ(s) in the variable x = ln s
    let h = |x: f64| {
        let s = x.exp();
        s * inv(s)
    };
    let piece = |x0: f64, x1: f64| quad::integrate(h, x0, x1, 1e-13, 0.0).value;

    let x_anchor = 0.0f64;
    let g_anchor = quad::integrate_to_infinity(inv, 1.0, 1e-12).ok_or(Error::NotUltracontractive)?;
    if !(g_anchor > 0.0 && g_anchor.is_finite()) {
        return Err(Error::NotUltracontractive);
    }
    // nodes (x = ln u, ln G(u)), built outward from the anchor one unit of x at a time
    let mut nodes: Vec<(f64, f64)> = vec![(x_anchor, g_anchor.ln())];
    let (lt_lo, lt_hi) = (t_lo.ln(), t_hi.ln());
    // toward small u (large t)
    // θ may vanish or leave its domain at a positive u (φ bounded below);
    // halve the step there so G is followed up to its blow-up
    let (mut x, mut g, mut step) = (x_anchor, g_anchor, 1.0f64);
    while g.ln() < lt_hi && x > -700.0 && step > 1e-12 {
        let x1 = x - step;
        let p = if h(x1).is_finite() { piece(x1, x) } else { f64::INFINITY };
        if !p.is_finite() {
            step *= 0.5;
            continue;
        }
        g += p;
        x = x1;
        nodes.push((x, g.ln()));
    }
    // toward large u (small t)
    let (mut x, mut g) = (x_anchor, g_anchor);
    while g.ln() > lt_lo && x < 640.0 {
        let x1 = x + 1.0;
        let p = piece(x, x1);
        if !(p.is_finite() && p > 0.0 && p < g) {
            break;
        }
        g -= p;
        x = x1;
        nodes.push((x, g.ln()));
    }
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));

    // node (x, ln G, dx/d ln G); dG/dx = -h(x)
    let node = |x: f64, lg: f64| (x, lg, -lg.exp() / h(x));
    let nodes: Vec<(f64, f64, f64)> = nodes.into_iter().map(|(x, lg)| node(x, lg)).collect();
    let mut refined: Vec<(f64, f64, f64)> = Vec::with_capacity(nodes.len() * 8);
    refined.push(nodes[0]);
    for w in nodes.windows(2) {
        refine(&piece, &node, w[0], w[1], 0, &mut refined);
    }
    // table in (ln t, ln φ) with ln t increasing: reverse order of x
    refined.reverse();
    let (mut ln_t, mut ln_f, mut slopes) = (Vec::new(), Vec::new(), Vec::new());
    for &(xu, lg, d) in &refined {
        if ln_t.last().is_some_and(|&last| lg <= last) || !d.is_finite() {
            continue;
        }
        ln_t.push(lg);
        ln_f.push(xu);
        slopes.push(d);
    }
    let table = Table::hermite(ln_t, ln_f, slopes)?;
    let phi = ProfileFunction::new(Expr::Table(Arc::new(table)), None)?;

    let bounded_at_zero = quad::integrate_from_zero(inv, 1.0, 1e-8).is_some();
    Ok(PhiFromTheta { phi, bounded_at_zero })
}

/// Inserts nodes strictly inside `(a, b]` (in `x = ln u`) until the cubic
/// Hermite interpolant of `x` against `ln G` matches the midpoint to `1e-10`.
fn refine<P, N>(piece: &P, node: &N, a: (f64, f64, f64), b: (f64, f64, f64), depth: u32, out: &mut Vec<(f64, f64, f64)>)
where
    P: Fn(f64, f64) -> f64,
    N: Fn(f64, f64) -> (f64, f64, f64),
{
    let xm = 0.5 * (a.0 + b.0);
    // G(u_m) = G(u_b) + ∫_{x_m}^{x_b}
    let gm = (b.1.exp() + piece(xm, b.0)).ln();
    let m = node(xm, gm);
    let err = if (b.1 - a.1).abs() > 1e-12 && m.2.is_finite() {
        (hermite(a.1, b.1, a.0, b.0, a.2, b.2, gm).0 - xm).abs()
    } else {
        0.0
    };
    if err > 1e-10 && depth < 30 {
        refine(piece, node, a, m, depth + 1, out);
        refine(piece, node, m, b, depth + 1, out);
    } else {
        out.push(m);
        out.push(b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_of_power_laws() {
        let phi = ProfileFunction::parse("pow(-1)").unwrap();
        assert!((theta_from_phi(&phi, 2.0).unwrap() - 4.0).abs() < 1e-9);
        assert!((theta_star(&phi, 3.0).unwrap() - 9.0).abs() < 1e-9);
        let half = ProfileFunction::parse("pow(-0.5)").unwrap();
        assert!((theta_from_phi(&half, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((theta_star(&half, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tilde_closed_form() {
        let phi = ProfileFunction::parse("pow(-1)").unwrap();
        let e = std::f64::consts::E;
        assert!((theta_tilde(&phi, 1.0) - 1.0 / e).abs() < 1e-12);
        assert!((theta_tilde(&phi, 2.0) - 4.0 / e).abs() < 1e-11);
    }

    #[test]
    fn tilde_sentinels() {
        // φ = 1 + e^{-t}·... is not in the grammar; use a bounded table
        let phi = ProfileFunction::new(
            Expr::product(vec![Expr::Const(2.0), Expr::ExpG { c: 1.0, gamma: -1.0 }]),
            None,
        );
        // exp(-1/t) is increasing, so this must be rejected
        assert!(phi.is_err());
        let bounded = ProfileFunction::parse("logm(1,2)").unwrap();
        // φ(∞) = log 2, φ(0) = ∞
        assert_eq!(theta_tilde(&bounded, 0.5), 0.0);
        assert!(theta_tilde(&bounded, 2.0) > 0.0);
    }

    #[test]
    fn phi_from_power_rates() {
        let r = phi_from_theta(&NashRate::power(1.0, 2.0)).unwrap();
        for &t in &[1e-6, 1e-3, 0.5, 1.0, 70.0, 1e6] {
            let v = r.phi.eval(t);
            assert!((v - 1.0 / t).abs() <= 1e-8 / t, "{t}: {v}");
        }
        assert!(!r.bounded_at_zero);
        let r = phi_from_theta(&NashRate::power(0.5, 3.0)).unwrap();
        for &t in &[1e-5, 0.02, 3.0, 4e5] {
            let v = r.phi.eval(t);
            assert!((v * t.sqrt() - 1.0).abs() <= 1e-8, "{t}: {v}");
        }
    }

    #[test]
    fn divergent_tail_is_refused() {
        assert!(matches!(phi_from_theta(&NashRate::power(1.0, 1.0)), Err(Error::NotUltracontractive)));
    }
}
