use heatlab::profiles::*;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn power_round_trip(a in 0.2f64..3.0, k in 0.1f64..10.0) {
        let phi = ProfileFunction::parse(&format!("const({k})*pow({})", -a)).unwrap();
        let back = phi_from_theta(&NashRate::from_profile(phi.clone())).unwrap().phi;
        for t in geometric_grid(1e-3, 1e3, 25) {
            prop_assert!(rel(back.eval(t), phi.eval(t)) < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn log_round_trip(a in 0.5f64..2.0, beta in 0.5f64..3.0, b in 1.0f64..4.0) {
        let phi = ProfileFunction::parse(&format!("pow({})*logm({beta},{b})", -a)).unwrap();
        let back = phi_from_theta(&NashRate::from_profile(phi.clone())).unwrap().phi;
        for t in geometric_grid(1e-3, 1e3, 25) {
            prop_assert!(rel(back.eval(t), phi.eval(t)) < 1e-6, "t = {t}");
        }
    }

    // φ(t/λ) has θ̃ equal to θ̃_φ / λ
    #[test]
    fn tilde_time_scaling(a in 0.2f64..2.0, lambda in 0.1f64..10.0, r in 1e-2f64..1e2) {
        let phi = ProfileFunction::power(1.0, -a);
        let slow = ProfileFunction::parse(&format!("const({})*pow({})", lambda.powf(a), -a)).unwrap();
        let lhs = theta_tilde(&slow, r);
        let rhs = theta_tilde(&phi, r) / lambda;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1e-300), "{lhs} vs {rhs}");
    }

    // t^{-a}: the supremum sits at t = e r^{-1/a}, giving a r^{1+1/a} / e
    #[test]
    fn tilde_of_powers(a in 0.2f64..3.0, r in 1e-3f64..1e3) {
        let phi = ProfileFunction::power(1.0, -a);
        let expect = a * r.powf(1.0 + 1.0 / a) / std::f64::consts::E;
        prop_assert!(rel(theta_tilde(&phi, r), expect) < 1e-8);
    }
}

#[test]
fn bounded_profile_has_no_rate_below_its_floor() {
    let phi = ProfileFunction::parse("logm(2,2)").unwrap();
    let floor = 2f64.ln().powi(2);
    let theta = NashRate::from_profile(phi.clone());
    assert!(theta.try_eval(0.9 * floor).is_err());
    let back = phi_from_theta(&theta).unwrap().phi;
    for t in [1e-2, 1.0, 1e2, 1e4] {
        assert!(rel(back.eval(t), phi.eval(t)) < 1e-6);
    }
}

#[test]
fn non_monotone_profile_is_refused() {
    assert!(ProfileFunction::parse("pow(-0.5)*logp(1,1)").is_err());
    assert!(ProfileFunction::parse("pow(0.5)").is_err());
}
