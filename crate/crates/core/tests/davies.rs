use heatlab::davies::*;
use heatlab::models;
use heatlab::profiles::ProfileFunction;
use heatlab::semigroup::series_kernel;
use proptest::prelude::*;

fn lambda_holds(l: f64, eps: f64, c: f64, eta: f64) -> bool {
    let p = 2f64.powf(eta);
    l > p && (l - 1.0) / l * (1.0 + c * p / (l - p)) < 1.0 + eps
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_is_the_smallest_admissible(eps in 0.05f64..5.0, c in 1.0f64..50.0, eta in 0.1f64..3.0) {
        let l = davies_lambda(eps, c, eta).unwrap() as f64;
        prop_assert!(lambda_holds(l, eps, c, eta));
        prop_assert!(!lambda_holds(l - 1.0, eps, c, eta));
    }

    #[test]
    fn bound_ignores_constant_shift(shift in -50.0f64..50.0, slope in 0.0f64..2.0, t in 0.01f64..10.0) {
        let form = models::cycle(16).unwrap();
        let k = davies_constants(&ProfileFunction::power(1.0, -0.5), 1.0, 0.5).unwrap();
        let cert = DaviesCertificate::new(ProfileFunction::power(1.0, -0.5), 0.1, k);
        let psi = &cone_family(&form, 3, &[slope]).unwrap()[0];
        let moved: Vec<f64> = psi.iter().map(|v| v + shift).collect();
        let (a, b) = (form.lambda_sq(psi).unwrap(), form.lambda_sq(&moved).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
        let u = cert.offdiag_bound(psi, t, 3, 11, a).unwrap();
        let v = cert.offdiag_bound(&moved, t, 3, 11, b).unwrap();
        prop_assert!((u / v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn distance_estimate_is_feasible_and_grows_with_budget(n in 4usize..24, seed in 0u64..100, budget in 0usize..20) {
        let form = models::cycle(n).unwrap();
        let y = n / 2;
        let a = feasible_psi_distance(&form, 0, y, budget, seed).unwrap();
        let b = feasible_psi_distance(&form, 0, y, 2 * budget + 1, seed).unwrap();
        prop_assert!(a.lambda_sq <= 1.0 + 1e-12 && b.lambda_sq <= 1.0 + 1e-12);
        prop_assert!(b.d_hat >= a.d_hat - 1e-12);
        prop_assert!((form.lambda_sq(&b.psi).unwrap() - b.lambda_sq).abs() < 1e-12);
    }
}

#[test]
fn single_edge_distance() {
    let d = feasible_psi_distance(&models::two_state(), 0, 1, 20, 0).unwrap();
    assert!((d.d_hat - (1.0 + 2f64.sqrt()).ln()).abs() < 1e-9);
}

#[test]
fn disconnected_pair_is_reported() {
    let form = heatlab::forms::FiniteDirichletForm::from_edges(vec![1.0; 4], &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
    let d = feasible_psi_distance(&form, 0, 3, 5, 0).unwrap();
    assert!(d.d_hat.is_infinite());
    assert_eq!(d.disconnected, Some(vec![0, 1]));
}

#[test]
fn weakened_constant_is_caught_on_a_short_path() {
    // a small window where the certificate is tight enough to bite
    let form = models::path(8).unwrap();
    let grid = heatlab::profiles::geometric_grid(0.05, 2.0, 12);
    let phi = fit_window_profile(&form, 0.5, &grid).unwrap();
    let k = davies_constants(&phi, 1.0, 0.5).unwrap();
    let family = cone_family(&form, 0, &default_slopes()).unwrap();
    let cert = certify_offdiag(&form, DaviesCertificate::new(phi.clone(), 0.0, k.clone()), &family, &grid).unwrap();
    assert!(cert.passed());
    let weak = DaviesCertificate::new(phi, 0.0, k.with_c_eps_scaled(1e-4));
    let weak = certify_offdiag(&form, weak, &family, &grid).unwrap();
    assert!(!weak.passed());
    let w = weak.witness.expect("witness");
    let exact = series_kernel(&form, w.t).unwrap()[(w.x, w.y)];
    assert!((exact - w.exact).abs() <= 1e-10 * exact && w.exact > w.bound);
}

#[test]
fn ray_envelope_dominates_exact_kernel() {
    let form = models::cycle(32).unwrap();
    let grid = heatlab::profiles::geometric_grid(0.05, 5.0, 10);
    let phi = fit_window_profile(&form, 0.5, &grid).unwrap();
    let k = davies_constants(&phi, 1.0, 0.5).unwrap();
    let cert = DaviesCertificate::new(phi, 3.0, k);
    let d = feasible_psi_distance(&form, 0, 16, 50, 1).unwrap();
    for &t in &grid {
        let exact = series_kernel(&form, t).unwrap()[(0, 16)].ln();
        assert!(ray_envelope(&cert, &form, &d.psi, 0, 16, t).unwrap().ln_bound >= exact);
    }
}
