//! Dirichlet heat kernels on balls of torus(128,1) under one constant.
//!
//! cargo run --release --example dirichlet_ball

use heatlab::cli::torus_ball_profile;
use heatlab::davies::{ball_constants, beta_profile, cone_family, default_slopes, dirichlet_ball_bound};
use heatlab::models;
use heatlab::profiles::geometric_grid;

fn main() -> heatlab::Result<()> {
    let form = models::torus(128, 1)?;
    let bp = torus_ball_profile();
    let t = geometric_grid(0.01, 200.0, 48);
    let r_grid = geometric_grid(1.0, 64.0, 32);
    let k = ball_constants(&form, &bp, 1.0, 0.5, &r_grid, &t)?;
    println!("c = {:.4}, Ĉ = {:.4}, λ = {}, C_ε = {:.3}", k.c, k.c_hat, k.lambda, k.c_eps);
    println!("β_(x,R)(1) = {} for every R", beta_profile(&bp, 8.0, 1.0)?);

    let family = cone_family(&form, 0, &default_slopes())?;
    for r in [4.0, 8.0, 16.0, 32.0] {
        let rep = dirichlet_ball_bound(&form, &bp, &k, 0, r, &family, &t)?;
        println!(
            "R = {r:>4}: {:>3} states, worst log-margin {:.3}, smallest workable C_ε {:.3}",
            rep.states, rep.worst_log_margin, rep.empirical_c_eps
        );
    }

    let mut bad = bp.clone();
    bad.c3 *= 0.5;
    match ball_constants(&form, &bad, 1.0, 0.5, &r_grid, &t) {
        Err(e) => println!("C₃ halved: {e}"),
        Ok(_) => println!("C₃ halved unexpectedly accepted"),
    }
    Ok(())
}
