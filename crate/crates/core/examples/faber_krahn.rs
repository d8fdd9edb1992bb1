//! Principal Dirichlet eigenvalues of segments of path(256) against
//! Θ(v) = 1/(2v²).
//!
//! cargo run --release --example faber_krahn

use heatlab::models;
use heatlab::nash_verify::faber_krahn_check;
use heatlab::profiles::ProfileFunction;

fn main() -> heatlab::Result<()> {
    let form = models::path(256)?;
    let phi = ProfileFunction::power(1.0, -0.5);
    for size in [2usize, 4, 8, 16, 32] {
        let domains: Vec<Vec<usize>> = (0..=256 - size).map(|a| (a..a + size).collect()).collect();
        let rep = faber_krahn_check(&form, &phi, &domains)?;
        println!("size {size:>2}: inf λ₁(D) m(D)² / (1/2) = {:.4}", rep.inf_ratio);
    }
    Ok(())
}
