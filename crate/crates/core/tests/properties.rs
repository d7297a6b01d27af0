use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pbfree::diagnostics::{random_direction, random_field};
use pbfree::*;

fn grid() -> Grid {
    make_grid(9, 9, 1.0, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cell_gradient_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_direction(grid(), &mut rng);
        let v = random_direction(grid(), &mut rng);
        let w = u.scaled(a).add_scaled(b, &v);
        let (gu, gv, gw) = (gradient_field(&u), gradient_field(&v), gradient_field(&w));
        for k in 0..gw.len() {
            for c in 0..2 {
                prop_assert!((gw[k][c] - (a * gu[k][c] + b * gv[k][c])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn integral_of_nonnegative_cells_is_nonnegative(vals in prop::collection::vec(0.0f64..10.0, 64)) {
        let s = integrate_field(&vals, &grid()).unwrap();
        prop_assert!(s >= 0.0);
        let mean = vals.iter().sum::<f64>() / 64.0;
        prop_assert!((s - mean).abs() < 1e-12);
    }

    #[test]
    fn smoother_is_monotone_and_bounded(t in -1.0f64..2.0, dt in 0.0f64..0.5) {
        let s = SmootherSpec::Quintic;
        prop_assert!(s.G(t + dt) >= s.G(t));
        prop_assert!((0.0..=1.0).contains(&s.G(t)));
        prop_assert!((0.0..=2.0).contains(&s.g(t)));
    }

    #[test]
    fn smooth_and_sharp_energies_differ_by_at_most_the_band(seed in any::<u64>(), amp in 0.5f64..3.0, alpha in 0.01f64..0.5) {
        let prm = Params::new(2.0, 3.0, 5.0, alpha).unwrap();
        let u = random_field(grid(), &mut ChaCha8Rng::seed_from_u64(seed), amp);
        let t = energy_terms(&u, &prm);
        prop_assert!((t.smooth() - t.sharp()).abs() <= t.band_area + 1e-12);
    }

    #[test]
    fn hessian_is_symmetric(seed in any::<u64>(), p in 1.5f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prm = Params::new(p, 4.0, 20.0, 0.2).unwrap();
        let u = random_field(grid(), &mut rng, 1.8);
        let v = random_direction(grid(), &mut rng);
        let w = random_direction(grid(), &mut rng);
        let a = hessian_vector(&u, &v, &prm).inner(&w);
        let b = hessian_vector(&u, &w, &prm).inner(&v);
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn energies_below_one_see_only_diffusion(seed in any::<u64>(), amp in 0.01f64..0.99) {
        let prm = Params::new(2.0, 3.0, 50.0, 0.1).unwrap();
        let u = random_field(grid(), &mut ChaCha8Rng::seed_from_u64(seed), amp);
        let t = energy_terms(&u, &prm);
        prop_assert_eq!(t.indicator_smooth, 0.0);
        prop_assert_eq!(t.load, 0.0);
        prop_assert!((smooth_energy(&u, &prm) - sharp_energy(&u, &prm)).abs() < 1e-14);
    }

    #[test]
    fn oracle_profile_is_symmetric(x in 0.0f64..1.0) {
        let sol = oracle();
        prop_assert!((sol.eval(x) - sol.eval(1.0 - x)).abs() < 1e-12);
        prop_assert!(sol.eval(x) <= sol.umax + 1e-12 && sol.eval(x) >= 0.0);
    }
}

fn oracle() -> &'static Slab {
    static SOL: std::sync::OnceLock<Slab> = std::sync::OnceLock::new();
    SOL.get_or_init(|| shoot_slab(&Params::new(2.0, 3.0, 60.0, 0.05).unwrap(), (1.05, 5.0), 1e-11).unwrap())
}
