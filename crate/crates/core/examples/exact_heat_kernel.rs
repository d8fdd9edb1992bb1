//! Exact heat kernels: spectral decomposition against the two-state closed
//! form, Chapman–Kolmogorov, and the positive series used for tiny entries.
//!
//! cargo run --release --example exact_heat_kernel

use heatlab::cli::chapman_kolmogorov_residual;
use heatlab::models;
use heatlab::semigroup::{series_kernel, SpectralKernel};

fn main() -> heatlab::Result<()> {
    let two = models::two_state();
    let k = SpectralKernel::new(&two)?;
    for t in [0.1, 1.0, 10.0] {
        let p = k.heat_kernel(t)?;
        // m ≡ 1, unit edge: p(t,0,0) = (1 + e^{-2t})/2
        let closed = 0.5 * (1.0 + (-2.0 * t).exp());
        println!("two-state t={t:<5} p(t,0,0) = {:.15}  closed form error {:.1e}", p[(0, 0)], (p[(0, 0)] - closed).abs());
    }

    for spec in ["path(64)", "path_killed(64)", "cycle(64)", "torus(16,2)"] {
        let form = models::parse_model(spec)?;
        println!("{spec:<16} CK residual {:.1e}", chapman_kolmogorov_residual(&form, 11, 3)?);
    }

    // far entries: the spectral sum bottoms out near 1e-16, the series keeps
    // relative accuracy
    let cycle = models::cycle(64)?;
    let t = 0.05;
    let spectral = SpectralKernel::new(&cycle)?.heat_kernel(t)?[(0, 32)];
    let series = series_kernel(&cycle, t)?[(0, 32)];
    println!("p({t}, 0, 32): spectral {spectral:.3e}  series {series:.3e}");
    Ok(())
}
