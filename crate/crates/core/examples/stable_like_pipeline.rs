//! Long-range chain with J(x,y) ≍ 1/|x-y|² and its two-regime envelope.
//!
//! cargo run --release --example stable_like_pipeline

use heatlab::davies::{stable_like_phi, stable_like_pipeline, StableLikeRun};
use heatlab::profiles::{geometric_grid, ScalingFunction};

fn main() -> heatlab::Result<()> {
    let lin = ScalingFunction::power(1.0, 1.0);
    let root = ScalingFunction::power(1.0, 0.5);
    for r in [0.5, 2.0, 30.0] {
        println!("Φ({r}) = {:.10} (r/2)   {:.10} (3√r/4)", stable_like_phi(&lin, r)?, stable_like_phi(&root, r)?);
    }

    for c_bound in [1.0, 4.0] {
        let run = StableLikeRun {
            n: 256,
            d: 1,
            phi: lin.clone(),
            c_bound,
            eps: 1.0,
            seed: 3,
            t_grid: geometric_grid(0.01, 50.0, 48),
            pairs: [5, 8, 12, 18, 27, 40, 50].iter().map(|&y| (0, y)).collect(),
        };
        let rep = stable_like_pipeline(&run)?;
        println!("c_bound = {c_bound}: γ = {:.4}, slopes {:.3} (diagonal) / {:.3} (far pair)", rep.gamma, rep.ondiag_slope, rep.offdiag_slope);
        for p in &rep.pairs {
            println!("  |x-y| = {:>3}: c₁₁ = {:.4}, ρ = {:.2}, c₆ = {:.4}", p.distance, p.c11, p.rho, p.c6);
        }
        println!("  spread {:.3}, Duhamel domination {}, pass {}", rep.c11_spread, rep.duhamel_ok, rep.passed());
    }
    Ok(())
}
