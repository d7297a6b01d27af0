use super::newton::{minimize_objective, NewtonOptions};
use super::Torsion;
use crate::domain::{Grid2D, ScalarField};
use crate::energy::{Exponent, ProblemParams, SolveStatus};
use crate::error::SolverError;
use crate::linalg::{FastLaplacian, Preconditioner};
use crate::scalar::Real;

/// Solves `-Delta_p phi = lambda * c` with zero Dirichlet data by minimizing
/// `int |grad phi|^p / p - lambda c int phi`.
pub fn solve_poisson_p<T: Real>(
    c: T,
    prm: &ProblemParams<T>,
    grid: &Grid2D<T>,
    tol: T,
) -> Result<ScalarField<T>, SolverError> {
    solve_poisson_p_with(c, prm, grid, &NewtonOptions::new(tol, 200))
}

pub fn solve_poisson_p_with<T: Real>(
    c: T,
    prm: &ProblemParams<T>,
    grid: &Grid2D<T>,
    opts: &NewtonOptions<T>,
) -> Result<ScalarField<T>, SolverError> {
    prm.validate()?;
    if !(c >= T::zero() && c.is_finite()) {
        return Err(SolverError::InvalidInput(format!("load constant must be finite and nonnegative, got {c}")));
    }
    let zero = ScalarField::zeros(*grid);
    if c == T::zero() || prm.lambda == T::zero() {
        return Ok(zero);
    }
    let load = prm.lambda * c;
    let obj = Torsion { p: prm.p, eps: prm.eps, load };
    // start from the p = 2 solution rescaled to the p-homogeneity of the load
    let fast = FastLaplacian::new(grid);
    let rhs = vec![T::one(); grid.dof_count()];
    let mut base = vec![T::zero(); rhs.len()];
    fast.solve(&rhs, &mut base);
    let scale = load.powf(T::one() / (prm.p - T::one()));
    let guess = ScalarField::from_dofs(*grid, &base).scaled(scale);
    let out = minimize_objective(&obj, &guess, opts)?;
    match out.status {
        SolveStatus::Converged => Ok(out.u),
        _ => Err(SolverError::MaxIter { iterations: out.iterations, residual: out.residual.to_f64().unwrap_or(f64::NAN) }),
    }
}

/// Load bound `C0 = sup g * max (u - 1)_+^(q-1)` for the comparison
/// function of a solution `u`.
pub fn comparison_constant<T: Real>(u: &ScalarField<T>, prm: &ProblemParams<T>) -> T {
    let w = (u.max_value() - T::one()).max(T::zero());
    prm.smoother.g_max::<T>() * Exponent::new(prm.q - T::one()).pow(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_grid;

    fn prm(p: f64) -> ProblemParams<f64> {
        ProblemParams::new(p, p + 1.0, 1.0, 0.1).unwrap()
    }

    #[test]
    fn zero_load_gives_zero() {
        let g = make_grid(9, 9, 1.0f64, 1.0).unwrap();
        let phi = solve_poisson_p(0.0, &prm(2.0), &g, 1e-10).unwrap();
        assert_eq!(phi.sup_norm(), 0.0);
    }

    #[test]
    fn linear_in_load_for_p2() {
        let g = make_grid(17, 17, 1.0f64, 1.0).unwrap();
        let a = solve_poisson_p(1.0, &prm(2.0), &g, 1e-11).unwrap();
        let b = solve_poisson_p(2.0, &prm(2.0), &g, 1e-11).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((2.0 * x - y).abs() < 1e-10);
            assert!(*x >= 0.0);
        }
    }

    #[test]
    fn p3_torsion_is_nonnegative_and_scales() {
        // -Delta_3 phi = c scales like c^(1/2)
        let g = make_grid(17, 17, 1.0f64, 1.0).unwrap();
        let a = solve_poisson_p(1.0, &prm(3.0), &g, 1e-9).unwrap();
        let b = solve_poisson_p(4.0, &prm(3.0), &g, 1e-9).unwrap();
        assert!(a.min_value() >= -1e-12);
        let ratio = b.max_value() / a.max_value();
        assert!((ratio - 2.0).abs() < 1e-4, "{ratio}");
    }

    #[test]
    fn rejects_negative_load() {
        let g = make_grid(5, 5, 1.0f64, 1.0).unwrap();
        assert!(solve_poisson_p(-1.0, &prm(2.0), &g, 1e-8).is_err());
    }

    #[test]
    fn comparison_constant_values() {
        let g = make_grid(5, 5, 1.0f64, 1.0).unwrap();
        let u = ScalarField::from_fn(g, |x, y| 12.0 * x * (1.0 - x) * y * (1.0 - y) * 4.0);
        // max at the centre: 12 * 0.0625 * 4 = 3, so (3 - 1)^2 * 1.875
        let c = comparison_constant(&u, &prm(2.0));
        assert!((c - 7.5).abs() < 1e-12, "{c}");
    }
}
