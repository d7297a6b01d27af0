//! Built-in invariant checks: finite-difference consistency of the
//! gradient and Hessian, Hessian symmetry, and normalization of the
//! smoother. The CLI `check` subcommand runs [`run_checks`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{make_grid, Grid2D, ScalarField};
use crate::energy::{hessian_vector, smooth_energy, smooth_gradient, ProblemParams};
use crate::smoothing::{check_normalization, SmootherSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckOutcome {
    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, passed: value.is_finite() && value <= threshold }
    }
}

/// Smooth random field: a few seeded sine modes scaled so the maximum is
/// `amplitude`. Zero on fixed nodes.
pub fn random_field(grid: Grid2D<f64>, rng: &mut impl Rng, amplitude: f64) -> ScalarField<f64> {
    let pi = std::f64::consts::PI;
    let (lx, ly) = (grid.lx(), grid.ly());
    let modes: Vec<(f64, f64, f64)> = (1..=3)
        .flat_map(|k| (1..=3).map(move |l| (k as f64, l as f64)))
        .map(|(k, l)| (k, l, rng.gen_range(-1.0..1.0) / (k * l)))
        .collect();
    let periodic = grid.is_periodic();
    let base = ScalarField::from_fn(grid, |x, y| {
        modes
            .iter()
            .map(|&(k, l, a)| {
                let fy = if periodic { (2.0 * pi * (l - 1.0) * y / ly).cos() } else { (l * pi * y / ly).sin() };
                a * (k * pi * x / lx).sin() * fy
            })
            .sum::<f64>()
            .abs()
    });
    let m = base.max_value();
    if m > 0.0 {
        base.scaled(amplitude / m)
    } else {
        base
    }
}

/// Perturbation direction with independent nodal entries on the unknowns.
pub fn random_direction(grid: Grid2D<f64>, rng: &mut impl Rng) -> ScalarField<f64> {
    let d: Vec<f64> = (0..grid.dof_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ScalarField::from_dofs(grid, &d)
}

/// [`random_direction`] scaled by `amplitude`, drawn from a generator
/// seeded with `seed`.
pub fn seeded_perturbation(grid: Grid2D<f64>, seed: u64, amplitude: f64) -> ScalarField<f64> {
    random_direction(grid, &mut ChaCha8Rng::seed_from_u64(seed)).scaled(amplitude)
}

fn rel(a: f64, b: f64) -> f64 {
    let s = a.abs().max(b.abs());
    if s == 0.0 {
        0.0
    } else {
        (a - b).abs() / s
    }
}

/// Largest relative error between central differences of
/// [`smooth_energy`] and the discrete inner product `<smooth_gradient, v>`
/// (which carries the cell area) over `samples`
/// random `(u, v)` pairs.
pub fn gradient_consistency(prm: &ProblemParams<f64>, grid: Grid2D<f64>, samples: usize, seed: u64, t: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let amp = 1.0 + 2.0 * prm.alpha + rng.gen_range(0.0..1.0);
        let u = random_field(grid, &mut rng, amp);
        let v = random_direction(grid, &mut rng);
        let fd = (smooth_energy(&u.add_scaled(t, &v), prm) - smooth_energy(&u.add_scaled(-t, &v), prm)) / (2.0 * t);
        let an = smooth_gradient(&u, prm).inner(&v);
        worst = worst.max(rel(fd, an));
    }
    worst
}

/// `(fd, sym)`: largest sup-norm relative error between
/// [`hessian_vector`] and central differences of [`smooth_gradient`], and
/// largest relative defect of `<H v, w> = <v, H w>`.
pub fn hessian_consistency(prm: &ProblemParams<f64>, grid: Grid2D<f64>, samples: usize, seed: u64, t: f64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut fd_worst, mut sym_worst) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let amp = 1.0 + 2.0 * prm.alpha + rng.gen_range(0.0..1.0);
        let u = random_field(grid, &mut rng, amp);
        let v = random_direction(grid, &mut rng);
        let w = random_direction(grid, &mut rng);
        let hv = hessian_vector(&u, &v, prm);
        let fd = smooth_gradient(&u.add_scaled(t, &v), prm)
            .add_scaled(-1.0, &smooth_gradient(&u.add_scaled(-t, &v), prm))
            .scaled(0.5 / t);
        let scale = hv.sup_norm().max(fd.sup_norm());
        if scale > 0.0 {
            fd_worst = fd_worst.max(hv.add_scaled(-1.0, &fd).sup_norm() / scale);
        }
        let hw = hessian_vector(&u, &w, prm);
        let (a, b) = (hv.inner(&w), v.inner(&hw));
        let s = (hv.inner(&hv).sqrt() * w.inner(&w).sqrt()).max(f64::MIN_POSITIVE);
        sym_worst = sym_worst.max((a - b).abs() / s);
    }
    (fd_worst, sym_worst)
}

/// `(closed_form_mass, quadrature_error, monotone, bounded)` for the
/// smoother on a `sweep`-point grid of `[-0.5, 1.5]`.
pub fn smoothing_checks(spec: SmootherSpec, sweep: usize) -> (f64, f64, bool, bool) {
    // mass of 30 t^2 (1-t)^2 on [0, 1]: 30 (1/3 - 1/2 + 1/5)
    let closed = spec.G(1.0f64) - spec.G(0.0f64);
    let quad = (check_normalization::<f64>(spec, 4000) - 1.0).abs();
    let n = sweep.max(2);
    let ts: Vec<f64> = (0..n).map(|k| -0.5 + 2.0 * k as f64 / (n - 1) as f64).collect();
    let monotone = ts.windows(2).all(|w| spec.G(w[1]) >= spec.G(w[0]));
    let bounded = ts.iter().all(|&t| {
        let g = spec.g(t);
        (0.0..=2.0).contains(&g)
    });
    (closed, quad, monotone, bounded)
}

/// The self-check suite on 17x17 grids.
pub fn run_checks(seed: u64) -> Vec<CheckOutcome> {
    let grid = make_grid(17, 17, 1.0, 1.0).expect("valid grid");
    let mut out = Vec::new();
    let p2 = ProblemParams::new(2.0, 3.0, 10.0, 0.3).expect("valid").with_eps(0.0).expect("valid");
    out.push(CheckOutcome::below("gradient_fd_p2", gradient_consistency(&p2, grid, 20, seed, 1e-5), 1e-6));
    for p in [1.5, 3.0] {
        let prm = ProblemParams::new(p, 4.0, 10.0, 0.3).expect("valid");
        let e = gradient_consistency(&prm, grid, 20, seed, 1e-5);
        out.push(CheckOutcome::below(format!("gradient_fd_p{p}"), e, 1e-4));
    }
    let (fd, sym) = hessian_consistency(&p2, grid, 20, seed, 1e-5);
    out.push(CheckOutcome::below("hessian_fd_p2", fd, 1e-5));
    out.push(CheckOutcome::below("hessian_symmetry_p2", sym, 1e-10));
    let (closed, quad, monotone, bounded) = smoothing_checks(SmootherSpec::Quintic, 1000);
    out.push(CheckOutcome::below("smoother_mass_closed_form", (closed - 1.0).abs(), 0.0));
    out.push(CheckOutcome::below("smoother_mass_quadrature", quad, 1e-8));
    out.push(CheckOutcome::below("smoother_monotone", if monotone { 0.0 } else { 1.0 }, 0.0));
    out.push(CheckOutcome::below("smoother_bounds", if bounded { 0.0 } else { 1.0 }, 0.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_checks(7) {
            assert!(c.passed, "{c:?}");
        }
    }

    #[test]
    fn random_field_is_reproducible_and_scaled() {
        let g = make_grid(9, 9, 1.0, 1.0).unwrap();
        let a = random_field(g, &mut ChaCha8Rng::seed_from_u64(3), 2.0);
        let b = random_field(g, &mut ChaCha8Rng::seed_from_u64(3), 2.0);
        assert_eq!(a.values(), b.values());
        assert!((a.max_value() - 2.0).abs() < 1e-14);
        assert!(a.min_value() >= 0.0);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // energy at alpha 0.3 against a gradient at another alpha fails
        let g = make_grid(9, 9, 1.0, 1.0).unwrap();
        let a = ProblemParams::new(2.0, 3.0, 10.0, 0.3).unwrap();
        let b = a.with_alpha(0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = random_field(g, &mut rng, 1.8);
        let v = random_direction(g, &mut rng);
        let t = 1e-5;
        let fd = (smooth_energy(&u.add_scaled(t, &v), &a) - smooth_energy(&u.add_scaled(-t, &v), &a)) / (2.0 * t);
        let an = smooth_gradient(&u, &b).inner(&v);
        assert!(rel(fd, an) > 1e-3);
    }
}
