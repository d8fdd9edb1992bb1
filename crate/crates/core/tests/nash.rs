use heatlab::models;
use heatlab::nash_verify::*;
use heatlab::profiles::{geometric_grid, NashRate};
use proptest::prelude::*;

#[test]
fn falsifier_is_deterministic() {
    let form = models::path_killed(24).unwrap();
    let theta = NashRate::power(3.0, 3.0);
    let cfg = FalsifierConfig::new(500, 11);
    let a = falsify_nash(&form, &theta, 0.0, &cfg).unwrap();
    let b = falsify_nash(&form, &theta, 0.0, &cfg).unwrap();
    assert_eq!(a.worst_margin.to_bits(), b.worst_margin.to_bits());
    assert_eq!(a.witness.map(|w| w.vector), b.witness.map(|w| w.vector));
}

#[test]
fn rate_above_the_fit_is_refused() {
    let form = models::path_killed(32).unwrap();
    let cfg = FalsifierConfig::new(2000, 7);
    let c = fit_nash_constant(&form, &NashRate::power(1.0, 3.0), 0.0, &cfg).unwrap();
    let grid = geometric_grid(1e-2, 10.0, 16);
    assert!(nash_to_ondiag(&form, &NashRate::power(c, 3.0), 0.0, &grid, &cfg).unwrap().passed());
    match nash_to_ondiag(&form, &NashRate::power(50.0 * c, 3.0), 0.0, &grid, &cfg) {
        Err(heatlab::Error::PremiseNotCertified(_)) => {}
        other => panic!("expected a refusal, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // with m scaled by a, ‖f‖₁ = 1 forces f/a; ε(f,f) and ‖f‖₂² scale by 1/a
    #[test]
    fn nash_margin_scales_with_measure(a in 0.2f64..5.0, seed in 0u64..50) {
        use rand::{Rng, SeedableRng};
        let form = models::cycle(12).unwrap();
        let scaled = form.rescaled(a);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = (0..12).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = f.iter().sum();
        let f: Vec<f64> = f.iter().map(|v| v / total).collect();
        let g: Vec<f64> = f.iter().map(|v| v / a).collect();
        let theta = NashRate::power(1.0, 2.0);
        let u = nash_terms(&form, &theta, 0.3, &f).unwrap();
        let v = nash_terms(&scaled, &theta, 0.3, &g).unwrap();
        prop_assert!((v.r - u.r / a).abs() <= 1e-12 * u.r);
        prop_assert!((v.energy - u.energy / a).abs() <= 1e-10 * u.energy.max(1e-12));
    }

    #[test]
    fn smaller_rate_survives_when_larger_does(k in 0.01f64..1.0, seed in 0u64..20) {
        let form = models::path_killed(16).unwrap();
        let cfg = FalsifierConfig::new(300, seed);
        let theta = NashRate::power(1.0, 3.0);
        let big = falsify_nash(&form, &theta, 0.0, &cfg).unwrap();
        let small = falsify_nash(&form, &theta.scaled(k), 0.0, &cfg).unwrap();
        if big.witness.is_none() {
            prop_assert!(small.witness.is_none());
        }
        prop_assert!(small.worst_margin >= big.worst_margin - 1e-12);
    }
}
