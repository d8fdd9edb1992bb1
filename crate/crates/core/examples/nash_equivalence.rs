//! Both directions between Nash inequalities and on-diagonal bounds.
//!
//! cargo run --release --example nash_equivalence

use heatlab::models;
use heatlab::nash_verify::{fit_nash_constant, nash_to_ondiag, ondiag_to_nash, FalsifierConfig};
use heatlab::profiles::{geometric_grid, NashRate};
use heatlab::Error;

fn main() -> heatlab::Result<()> {
    let cfg = FalsifierConfig::new(20_000, 7);
    let grid = geometric_grid(1e-2, 1e3, 64);

    // diagonal decay → Nash rate θ̃; the falsifier must come back empty
    for (name, form) in [("two_state", models::two_state()), ("cycle(64)", models::cycle(64)?)] {
        for delta in [0.0, 0.5] {
            let (_, report) = ondiag_to_nash(&form, delta, &grid, &cfg)?;
            println!("{name:<10} δ={delta}: worst relative margin {:.3e}  witness: {}", report.worst_margin, report.witness.is_some());
        }
    }

    // Nash rate c r³ → diagonal bound
    let form = models::path_killed(64)?;
    let c = fit_nash_constant(&form, &NashRate::power(1.0, 3.0), 0.0, &cfg)?;
    let theta = NashRate::power(c, 3.0);
    let report = nash_to_ondiag(&form, &theta, 0.0, &geometric_grid(1e-2, 10.0, 64), &cfg)?;
    println!("path_killed(64): θ = {c:.4} r³, on-diagonal worst log-margin {:.4}", report.worst_margin);

    // a rate the chain cannot support is refused before any kernel work
    match nash_to_ondiag(&form, &theta.scaled(50.0), 0.0, &grid, &cfg) {
        Err(Error::PremiseNotCertified(msg)) => println!("refused: {msg}"),
        other => println!("unexpected: {other:?}"),
    }
    Ok(())
}
