//! Profiles, their Nash rates and the round trip back.
//!
//! cargo run --release --example profile_calculus

use heatlab::profiles::{
    check_regular_class, geometric_grid, phi_from_theta, theta_from_phi, theta_tilde, NashRate, ProfileFunction,
};

fn main() -> heatlab::Result<()> {
    for spec in ["pow(-0.5)", "pow(-1)*logm(1,2)", "pow(-1.5)*expg(1,1)", "logm(2,2)"] {
        let phi = ProfileFunction::parse(spec)?;
        let back = phi_from_theta(&NashRate::from_profile(phi.clone()))?.phi;
        let worst = geometric_grid(1e-3, 1e3, 512)
            .into_iter()
            .filter_map(|t| Some((back.checked_eval(t).ok()? / phi.checked_eval(t).ok()? - 1.0).abs()))
            .fold(0.0, f64::max);
        let reg = check_regular_class(&phi);
        println!("φ = {spec}");
        println!("  θ(1) = {:.6}   θ̃(1) = {:.6}", theta_from_phi(&phi, 1.0)?, theta_tilde(&phi, 1.0));
        println!("  round trip max rel error {worst:.2e}");
        println!("  doubling {}  C_d = {:?}  class R: {}", reg.doubling_ok, reg.c_d, reg.class_r.all());
    }

    // θ̃ of 1/t is r²/e
    let inv = ProfileFunction::power(1.0, -1.0);
    for r in [1e-2, 1.0, 1e2] {
        println!("θ̃({r}) e / r² = {:.12}", theta_tilde(&inv, r) * std::f64::consts::E / (r * r));
    }
    Ok(())
}
