use heatlab::forms::FiniteDirichletForm;
use heatlab::models;
use heatlab::semigroup::{series_kernel, SpectralKernel};
use proptest::prelude::*;

fn form_strategy() -> impl Strategy<Value = FiniteDirichletForm> {
    (2usize..9).prop_flat_map(|n| {
        (
            proptest::collection::vec(0.2f64..3.0, n),
            proptest::collection::vec(0.0f64..2.0, n * n),
            proptest::collection::vec(0.0f64..0.5, n),
            any::<bool>(),
        )
            .prop_map(move |(m, w, kill, killed)| {
                let mut edges = Vec::new();
                for x in 0..n {
                    for y in (x + 1)..n {
                        // keep a spanning path so the chain is irreducible
                        let c = if y == x + 1 { 0.1 + w[x * n + y] } else { w[x * n + y] - 1.0 };
                        if c > 0.0 {
                            edges.push((x, y, c));
                        }
                    }
                }
                let form = FiniteDirichletForm::from_edges(m, &edges).unwrap();
                if killed {
                    form.with_killing(kill).unwrap()
                } else {
                    form
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_is_symmetric_positive_sub_markov(form in form_strategy(), t in 1e-3f64..50.0) {
        let p = SpectralKernel::new(&form).unwrap().heat_kernel(t).unwrap();
        let n = form.n();
        for x in 0..n {
            let mut mass = 0.0;
            for y in 0..n {
                prop_assert!((p[(x, y)] - p[(y, x)]).abs() <= 1e-10 * p[(x, y)].abs().max(1.0));
                prop_assert!(p[(x, y)] >= -1e-12);
                mass += p[(x, y)] * form.m()[y];
            }
            prop_assert!(mass <= 1.0 + 1e-10, "mass {mass}");
        }
    }

    #[test]
    fn series_agrees_with_spectral(form in form_strategy(), t in 1e-2f64..20.0) {
        let a = SpectralKernel::new(&form).unwrap().heat_kernel(t).unwrap();
        let b = series_kernel(&form, t).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1e-3));
        }
    }

    // scaling m and the conductances together keeps the generator and divides the kernel
    #[test]
    fn rescaling_divides_kernel(form in form_strategy(), a in 0.1f64..10.0, t in 1e-2f64..10.0) {
        let p = SpectralKernel::new(&form).unwrap().heat_kernel(t).unwrap();
        let q = SpectralKernel::new(&form.rescaled(a)).unwrap().heat_kernel(t).unwrap();
        for (u, v) in p.iter().zip(q.iter()) {
            prop_assert!((u / a - v).abs() <= 1e-9 * u.abs().max(1e-6));
        }
    }

    // two routes to ‖P^ψ_t‖_{1→∞}: the entrywise sup and the half-time
    // factorization, which can only be larger and agrees at ψ = 0
    #[test]
    fn perturbed_norm_routes_agree(form in form_strategy(), t in 1e-2f64..10.0, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = SpectralKernel::new(&form).unwrap();
        let psi: Vec<f64> = (0..form.n()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let direct = k.perturbed_norm(&psi, t).unwrap();
        let split = k.perturbed_factorized(&psi, t).unwrap();
        prop_assert!(direct <= split * (1.0 + 1e-10), "{direct} > {split}");
        let zero = vec![0.0; form.n()];
        let (a, b) = (k.perturbed_norm(&zero, t).unwrap(), k.perturbed_factorized(&zero, t).unwrap());
        prop_assert!((a / b - 1.0).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn energy_is_nonnegative_and_symmetric(form in form_strategy(), seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = form.n();
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        prop_assert!(form.energy(&u, &u).unwrap() >= -1e-12);
        prop_assert!((form.energy(&u, &v).unwrap() - form.energy(&v, &u).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn chapman_kolmogorov_on_torus() {
    let form = models::torus(8, 2).unwrap();
    let k = SpectralKernel::new(&form).unwrap();
    let (s, t) = (0.3, 1.7);
    let (ps, pt, pst) = (k.heat_kernel(s).unwrap(), k.heat_kernel(t).unwrap(), k.heat_kernel(s + t).unwrap());
    let n = form.n();
    for x in [0, 5, 17] {
        for y in [0, 9, 63] {
            let conv: f64 = (0..n).map(|z| ps[(x, z)] * pt[(z, y)] * form.m()[z]).sum();
            assert!((conv - pst[(x, y)]).abs() < 1e-12);
        }
    }
}

#[test]
fn killed_path_loses_mass() {
    let form = models::path_killed(16).unwrap();
    let p = SpectralKernel::new(&form).unwrap().heat_kernel(5.0).unwrap();
    let mass: f64 = (0..16).map(|y| p[(0, y)] * form.m()[y]).sum();
    assert!(mass < 0.999);
}
