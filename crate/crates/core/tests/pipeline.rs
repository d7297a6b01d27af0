use std::f64::consts::PI;

use pbfree::solver::{comparison_constant, MountainPassOptions};
use pbfree::*;

fn bump(g: Grid) -> Field {
    Field::from_fn(g, |x, y| 2.0 * (PI * x).sin() * (PI * y).sin())
}

/// Sharp energy of `2 sin(pi x) sin(pi y)` with p = 2, q = 3, lambda = 1 by
/// fine midpoint quadrature of the exact field. The Dirichlet part is
/// `pi^2` in closed form.
fn continuous_sharp_energy() -> f64 {
    let n = 3000;
    let h = 1.0 / n as f64;
    let mut measure = 0.0;
    let mut load = 0.0;
    for i in 0..n {
        let sx = (PI * (i as f64 + 0.5) * h).sin();
        for j in 0..n {
            let u = 2.0 * sx * (PI * (j as f64 + 0.5) * h).sin();
            if u > 1.0 {
                measure += 1.0;
                load += (u - 1.0).powi(3) / 3.0;
            }
        }
    }
    PI * PI + (measure - load) * h * h
}

#[test]
fn sharp_energy_converges_to_continuous_value() {
    let reference = continuous_sharp_energy();
    let prm = Params::new(2.0, 3.0, 1.0, 0.1).unwrap();
    let errs: Vec<f64> = [33, 65, 129]
        .iter()
        .map(|&n| (sharp_energy(&bump(make_grid(n, n, 1.0, 1.0).unwrap()), &prm) - reference).abs())
        .collect();
    assert!(errs[2] < 3e-3, "{errs:?}");
    // second order: each halving of h cuts the error by about four
    assert!(errs[1] / errs[2] > 3.0 && errs[0] / errs[1] > 3.0, "{errs:?}");
}

#[test]
fn eigenvalue_of_two_by_one_rectangle() {
    let g = make_grid(65, 33, 2.0, 1.0).unwrap();
    let l = first_eigenvalue(2.0, &g, 1e-10).unwrap();
    let exact = PI * PI * (1.0 / 4.0 + 1.0);
    assert!((l / exact - 1.0).abs() < 0.02, "{l} vs {exact}");
}

#[test]
fn oracle_field_has_oracle_slopes() {
    let sol = shoot_slab(&Params::new(2.0, 3.0, 60.0, 0.05).unwrap(), (1.05, 5.0), 1e-11).unwrap();
    let g = Grid2D::slab(257, 9, 1.0, 1.0 / 16.0).unwrap();
    let u = Field::from_fn(g, |x, _| sol.eval(x));
    let offset = 2.0 * g.h_max();
    // the normal points into {u > 1}, so the first slope is the inner one
    let (plus, minus) = one_sided_gradient(&u, [sol.interface, 0.03], [1.0, 0.0], offset).unwrap().unwrap();
    assert!((plus - sol.slope_plus).abs() < 5e-2, "{plus} vs {}", sol.slope_plus);
    assert!((minus - sol.slope_minus).abs() < 5e-2, "{minus} vs {}", sol.slope_minus);
    let stats = jump_residual_stats(&u, &Params::new(2.0, 3.0, 60.0, 0.01).unwrap(), Some(offset)).unwrap();
    assert!(!stats.samples.is_empty());
    // slope errors of 5e-2 allow a residual of about 2 * 4.3 * 5e-2
    assert!(stats.median < 0.2, "{}", stats.median);
}

#[test]
fn mountain_pass_on_slab_is_a_saddle() {
    let g = Grid2D::slab(65, 65, 1.0, 1.0).unwrap();
    let prm = Params::new(2.0, 3.0, 60.0, 0.05).unwrap();
    let far = Field::from_fn(g, |x, _| 4.0 * (PI * x).sin());
    let path_max = (1..40)
        .map(|k| smooth_energy(&far.scaled(k as f64 / 40.0), &prm))
        .fold(f64::NEG_INFINITY, f64::max);
    let rep = mountain_pass(&prm, &far, 15, 1e-8, 400).unwrap();
    assert!(rep.converged() && rep.residual_norm <= 1e-8);
    assert!(rep.energy_smooth > 0.0 && rep.energy_smooth <= path_max + 1e-12);
    assert!(morse_index(&rep.u, &prm, 10, 1e-8).unwrap() >= 1);
}

#[test]
fn mountain_pass_without_load_has_no_far_point() {
    let g = make_grid(17, 17, 1.0, 1.0).unwrap();
    let prm = Params::new(2.0, 3.0, 0.0, 0.05).unwrap();
    assert!(mountain_pass(&prm, &bump(g).scaled(5.0), 11, 1e-8, 50).is_err());
    let opts = MountainPassOptions::new(11, 1e-8, 50);
    assert!(solver::mountain_pass_with(&prm, &bump(g).scaled(50.0), &opts).is_err());
}

#[test]
fn minimizing_the_loaded_problem_runs_away() {
    // with lambda > 0 the smoothed energy is unbounded below
    let g = make_grid(65, 65, 1.0, 1.0).unwrap();
    let prm = Params::new(2.0, 3.0, 60.0, 0.05).unwrap();
    let rep = minimize_smooth(&bump(g).scaled(2.0), &prm, 1e-8, 200).unwrap();
    assert_eq!(rep.status, SolveStatus::Diverged);
}

#[test]
fn continuation_on_coarse_slab_tracks_oracle() {
    let g = Grid2D::slab(65, 17, 1.0, 0.25).unwrap();
    let prm = Params::new(2.0, 3.0, 60.0, 0.2).unwrap();
    let u0 = Field::from_fn(g, |x, _| 2.0 * (PI * x).sin());
    let rep = continue_alpha(&u0, &prm, &ContinuationSchedule::new(0.2, 0.5, 4, 1e-9)).unwrap();
    let sol = shoot_slab(&prm, (1.05, 5.0), 1e-11).unwrap();
    let errs: Vec<f64> = rep
        .fields
        .iter()
        .map(|u| compare_to_oracle(u, &sol, Axis::X).unwrap().sup_error)
        .collect();
    assert!(errs[3] < 5e-3, "{errs:?}");
    for (s, u) in rep.steps.iter().zip(&rep.fields) {
        let p = prm.with_alpha(s.alpha).unwrap();
        let phi = solve_poisson_p(comparison_constant(u, &p), &p, &g, 1e-10).unwrap();
        assert!(u.values().iter().zip(phi.values()).all(|(a, b)| *a <= b + 1e-8));
    }
    let mut csv = Vec::new();
    rep.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
}

#[test]
fn field_csv_round_trip() {
    let g = Grid2D::slab(9, 5, 1.0, 0.5).unwrap();
    let u = Field::from_fn(g, |x, y| x * (1.0 - x) + 0.1 * (2.0 * PI * y).cos());
    let mut buf = Vec::new();
    u.write_csv(&mut buf).unwrap();
    let back = Field::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.grid(), u.grid());
    assert_eq!(back.values(), u.values());
}

#[test]
fn single_precision_pipeline() {
    let g = make_grid(17, 17, 1.0f32, 1.0).unwrap();
    let prm = ProblemParams::new(2.0f32, 3.0, 0.0, 0.1).unwrap();
    let u0 = ScalarField::from_fn(g, |x, y| 0.3 * x * (1.0 - x) * y * (1.0 - y));
    let rep = minimize_smooth(&u0, &prm, 1e-4, 50).unwrap();
    assert!(rep.converged());
    assert!(rep.u.sup_norm() < 1e-3);
    let l = first_eigenvalue(2.0f32, &g, 1e-5).unwrap();
    assert!((l / (2.0 * std::f32::consts::PI.powi(2)) - 1.0).abs() < 0.05);
}

#[test]
fn continuation_below_grid_scale_splits_stalled_steps() {
    // alpha = 0.0125 is under h = 1/64; the direct jump from 0.025 stalls
    let g = Grid2D::slab(65, 65, 1.0, 1.0).unwrap();
    let prm = Params::new(2.0, 3.0, 60.0, 0.2).unwrap();
    let u0 = Field::from_fn(g, |x, _| 2.0 * (PI * x).sin());
    let rep = continue_alpha(&u0, &prm, &ContinuationSchedule::new(0.2, 0.5, 5, 1e-8)).unwrap();
    assert_eq!(rep.steps.len(), 5);
    assert!((rep.steps[4].alpha - 0.0125).abs() < 1e-15);
    assert!(rep.steps.iter().all(|s| s.residual_norm <= 1e-8));
}
