//! Lower bounds on the intrinsic distance and the resulting envelopes.
//!
//! cargo run --release --example intrinsic_distance

use heatlab::davies::{
    davies_constants, feasible_psi_distance, fit_window_profile, ln_gaussian_envelope, ray_envelope, DaviesCertificate,
};
use heatlab::models;
use heatlab::nash_verify::{fit_nash_delta, FalsifierConfig};
use heatlab::profiles::{geometric_grid, NashRate};
use heatlab::semigroup::series_kernel;

fn main() -> heatlab::Result<()> {
    let one = feasible_psi_distance(&models::two_state(), 0, 1, 10, 0)?;
    println!("single edge: d̂ = {:.12} (ln(1+√2) = {:.12})", one.d_hat, (1.0 + 2f64.sqrt()).ln());

    let form = models::cycle(64)?;
    let d = feasible_psi_distance(&form, 0, 32, 200, 3)?;
    println!("cycle(64) antipodes: d̂ = {:.4} after {} sweeps, Λ(ψ*)² = {:.15}", d.d_hat, d.sweeps, d.lambda_sq);

    let grid = geometric_grid(0.01, 5.0, 48);
    let phi = fit_window_profile(&form, 0.5, &grid)?;
    let delta = fit_nash_delta(&form, &NashRate::from_profile(phi.clone()), &FalsifierConfig::new(20_000, 7))?;
    let cert = DaviesCertificate::new(phi.clone(), delta, davies_constants(&phi, 1.0, 0.5)?);
    println!("{:>8} {:>12} {:>12} {:>12}", "t", "ln p", "ln Gaussian", "ln ray");
    for &t in grid.iter().step_by(6) {
        let exact = series_kernel(&form, t)?[(0, 32)].ln();
        let gauss = ln_gaussian_envelope(&cert, d.d_hat, t)?;
        let ray = ray_envelope(&cert, &form, &d.psi, 0, 32, t)?.ln_bound;
        println!("{t:>8.4} {exact:>12.3} {gauss:>12.3} {ray:>12.3}");
    }
    Ok(())
}
