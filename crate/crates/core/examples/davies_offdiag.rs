//! Explicit Davies constants and an off-diagonal certificate on cycle(64).
//!
//! cargo run --release --example davies_offdiag

use heatlab::davies::{
    certify_offdiag, cone_family, davies_constants, davies_lambda, default_slopes, fit_window_profile, verify_offdiag,
};
use heatlab::models;
use heatlab::nash_verify::{fit_nash_delta, FalsifierConfig};
use heatlab::profiles::{geometric_grid, NashRate, ProfileFunction};

fn main() -> heatlab::Result<()> {
    println!("λ(1, 10, 2) = {}", davies_lambda(1.0, 10.0, 2.0)?);
    for eps in [1.0, 3.0] {
        let k = davies_constants(&ProfileFunction::power(1.0, -1.0), eps, 0.5)?;
        println!("φ = 1/t, ε = {eps}: λ = {}, C_ε = {:.2}, c_ε = {}", k.lambda, k.c_eps, k.small_c_eps);
    }

    let form = models::cycle(64)?;
    let grid = geometric_grid(0.01, 5.0, 48);
    let cfg = FalsifierConfig::new(20_000, 7);
    let phi = fit_window_profile(&form, 0.5, &grid)?;
    // constants are in the kernel of a conservative chain, so δ > 0 is needed
    let delta = fit_nash_delta(&form, &NashRate::from_profile(phi.clone()), &cfg)?;
    let family = cone_family(&form, 0, &default_slopes())?;
    let cert = verify_offdiag(&form, &phi, delta, 1.0, 0.5, &family, &grid, &cfg)?;
    println!("φ = {}, δ = {delta:.4}", phi.spec());
    println!("{} tuples, worst log-margin {:.4}, pass {}", cert.tuples, cert.worst_log_margin, cert.passed());
    println!("tightest tuple {:?}", cert.witness);

    let mut weak = cert.clone();
    weak.constants = cert.constants.with_c_eps_scaled(0.1);
    let weak = certify_offdiag(&form, weak, &family, &grid)?;
    println!("C_ε × 0.1: worst log-margin {:.4}, pass {}", weak.worst_log_margin, weak.passed());
    Ok(())
}
