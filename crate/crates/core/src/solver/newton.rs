use super::{Objective, Smooth};
use crate::domain::ScalarField;
use crate::energy::{ProblemParams, SolveReport, SolveStatus};
use crate::error::SolverError;
use crate::linalg::{dot, minres, truncated_pcg, FastLaplacian, Jacobi, Preconditioner};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions<T> {
    /// Stop when the residual sup-norm is at most `tol`.
    pub tol: T,
    pub max_iter: usize,
    /// Minimization reports `Diverged` once the energy falls below this.
    pub energy_floor: T,
    /// Upper bound on the relative tolerance of the inner linear solves.
    pub inner_rtol: T,
    pub inner_max_iter: usize,
}

impl<T: Real> NewtonOptions<T> {
    pub fn new(tol: T, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            energy_floor: lit(-1e8),
            inner_rtol: lit(0.1),
            inner_max_iter: 2000,
        }
    }

    fn check(&self) -> Result<(), SolverError> {
        if !(self.tol > T::zero()) {
            return Err(SolverError::InvalidInput(format!("tolerance must be positive, got {}", self.tol)));
        }
        Ok(())
    }

    fn forcing(&self, rn: T) -> T {
        self.inner_rtol.min(rn.sqrt()).max(lit(1e-12))
    }
}

pub(crate) struct Outcome<T> {
    pub u: ScalarField<T>,
    pub residual: T,
    pub iterations: usize,
    pub status: SolveStatus,
}

fn check_field<T: Real>(u: &ScalarField<T>) -> Result<(), SolverError> {
    if u.values().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SolverError::NonFinite)
    }
}

/// Damped Newton on an energy: truncated Jacobi-PCG directions, scaled
/// steepest descent where the Hessian is not positive, Armijo
/// backtracking on the energy.
pub(crate) fn minimize_objective<T: Real>(
    obj: &dyn Objective<T>,
    u0: &ScalarField<T>,
    opts: &NewtonOptions<T>,
) -> Result<Outcome<T>, SolverError> {
    opts.check()?;
    check_field(u0)?;
    let grid = *u0.grid();
    let mut u = u0.clone();
    let mut e = obj.energy(&u);
    let mut r = obj.gradient(&u);
    let c1: T = lit(1e-4);
    for it in 0..opts.max_iter {
        let rn = r.sup_norm();
        if !(rn.is_finite() && e.is_finite()) {
            return Err(SolverError::NonFinite);
        }
        if rn <= opts.tol {
            return Ok(Outcome { u, residual: rn, iterations: it, status: SolveStatus::Converged });
        }
        let rd = r.to_dofs();
        let b: Vec<T> = rd.iter().map(|x| -*x).collect();
        let h = obj.hessian(&u);
        let jac = Jacobi::new(&h.diagonal());
        let cg = truncated_pcg(&h, &b, &jac, opts.forcing(rn), opts.inner_max_iter);
        let mut d = cg.x;
        let area = grid.cell_area();
        let mut slope: T = rd.iter().zip(&d).map(|(a, b)| *a * *b).sum::<T>() * area;
        if !(slope < T::zero()) {
            jac.solve(&b, &mut d);
            slope = rd.iter().zip(&d).map(|(a, b)| *a * *b).sum::<T>() * area;
        }
        let dir = ScalarField::from_dofs(grid, &d);
        let noise = lit::<T>(1e-13) * (e.abs() + T::one());
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let trial = u.add_scaled(t, &dir);
            let et = obj.energy(&trial);
            if et.is_finite() {
                if et <= e + c1 * t * slope {
                    accepted = Some((trial, et, None));
                    break;
                }
                // rounding regime: energy changes are below resolution
                if -slope * t <= noise && et <= e + noise {
                    let rt = obj.gradient(&trial);
                    if rt.sup_norm() < rn {
                        accepted = Some((trial, et, Some(rt)));
                        break;
                    }
                }
            }
            t *= lit(0.5);
        }
        let Some((next, en, rt)) = accepted else {
            return Ok(Outcome { u, residual: rn, iterations: it, status: SolveStatus::MaxIter });
        };
        debug_assert!(en <= e + noise, "energy increased: {e} -> {en}");
        u = next;
        e = en;
        r = match rt {
            Some(rt) => rt,
            None => obj.gradient(&u),
        };
        if e < opts.energy_floor {
            return Ok(Outcome {
                residual: r.sup_norm(),
                u,
                iterations: it + 1,
                status: SolveStatus::Diverged,
            });
        }
    }
    let rn = r.sup_norm();
    let status = if rn <= opts.tol { SolveStatus::Converged } else { SolveStatus::MaxIter };
    Ok(Outcome { u, residual: rn, iterations: opts.max_iter, status })
}

/// Minimizes the smoothed energy from `u0` (see [`minimize_smooth_with`]).
pub fn minimize_smooth<T: Real>(
    u0: &ScalarField<T>,
    prm: &ProblemParams<T>,
    tol: T,
    max_iter: usize,
) -> Result<SolveReport<T>, SolverError> {
    minimize_smooth_with(u0, prm, &NewtonOptions::new(tol, max_iter))
}

/// Damped Newton descent on the smoothed energy. A run whose energy falls
/// below `opts.energy_floor` stops with status `Diverged`; one that runs
/// out of iterations or line-search steps reports `MaxIter`.
pub fn minimize_smooth_with<T: Real>(
    u0: &ScalarField<T>,
    prm: &ProblemParams<T>,
    opts: &NewtonOptions<T>,
) -> Result<SolveReport<T>, SolverError> {
    prm.validate()?;
    let out = minimize_objective(&Smooth(prm), u0, opts)?;
    Ok(SolveReport::build(out.u, prm, out.residual, out.iterations, out.status))
}

/// Newton's method on the residual of an objective with MINRES inner
/// solves preconditioned by the fast Laplacian inverse and backtracking
/// on the residual norm. Converges to saddles as well as minima.
pub(crate) fn critical_point_objective<T: Real>(
    obj: &dyn Objective<T>,
    u0: &ScalarField<T>,
    opts: &NewtonOptions<T>,
) -> Result<Outcome<T>, SolverError> {
    opts.check()?;
    check_field(u0)?;
    let grid = *u0.grid();
    let pre = FastLaplacian::new(&grid);
    let mut u = u0.clone();
    let mut r = obj.gradient(&u);
    // merit is the dual norm of the residual, which does not blow up with
    // the sharp layer of G'' the way the Euclidean norm does
    let dual = |r: &ScalarField<T>| {
        let d = r.to_dofs();
        let mut z = vec![T::zero(); d.len()];
        pre.solve(&d, &mut z);
        dot(&d, &z).max(T::zero()).sqrt()
    };
    let mut merit = dual(&r);
    for it in 0..opts.max_iter {
        let rn = r.sup_norm();
        if !rn.is_finite() {
            return Err(SolverError::NonFinite);
        }
        if rn <= opts.tol {
            return Ok(Outcome { u, residual: rn, iterations: it, status: SolveStatus::Converged });
        }
        let b: Vec<T> = r.to_dofs().iter().map(|x| -*x).collect();
        let h = obj.hessian(&u);
        let sol = minres(&h, &b, &pre, opts.forcing(rn / (rn + T::one())), opts.inner_max_iter);
        let dir = ScalarField::from_dofs(grid, &sol.x);
        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let trial = u.add_scaled(t, &dir);
            let rt = obj.gradient(&trial);
            let mt = dual(&rt);
            if mt.is_finite() && mt <= (T::one() - lit::<T>(1e-4) * t) * merit {
                accepted = Some((trial, rt, mt));
                break;
            }
            t *= lit(0.5);
        }
        let Some((next, rt, mt)) = accepted else {
            return Ok(Outcome { u, residual: rn, iterations: it, status: SolveStatus::MaxIter });
        };
        u = next;
        r = rt;
        merit = mt;
    }
    let rn = r.sup_norm();
    let status = if rn <= opts.tol { SolveStatus::Converged } else { SolveStatus::MaxIter };
    Ok(Outcome { u, residual: rn, iterations: opts.max_iter, status })
}

/// Critical point of the smoothed energy near `u0` (minimum or saddle).
pub fn find_critical_point<T: Real>(
    u0: &ScalarField<T>,
    prm: &ProblemParams<T>,
    opts: &NewtonOptions<T>,
) -> Result<SolveReport<T>, SolverError> {
    prm.validate()?;
    let out = critical_point_objective(&Smooth(prm), u0, opts)?;
    Ok(SolveReport::build(out.u, prm, out.residual, out.iterations, out.status))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_grid;
    use crate::energy::smooth_energy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_small(n: usize, seed: u64) -> ScalarField<f64> {
        let g = make_grid(n, n, 1.0f64, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..g.node_count()).map(|_| rng.gen_range(-0.3..0.3)).collect();
        ScalarField::from_dofs(g, &ScalarField::from_raw(g, vals).to_dofs())
    }

    #[test]
    fn zero_load_relaxes_to_zero() {
        for p in [2.0, 3.0, 1.5] {
            let q = if p < 2.0 { 3.0 } else { p + 1.0 };
            let prm = ProblemParams::new(p, q, 0.0, 0.1).unwrap();
            let rep = minimize_smooth(&random_small(17, 3), &prm, 1e-9, 200).unwrap();
            assert!(rep.converged(), "p={p}: {:?} {}", rep.status, rep.residual_norm);
            assert!(rep.energy_smooth.abs() < 1e-10, "p={p}: {}", rep.energy_smooth);
            assert!(rep.u.sup_norm() < 1e-3, "p={p}: {}", rep.u.sup_norm());
        }
    }

    #[test]
    fn converged_minimizer_is_fixed_point() {
        let prm = ProblemParams::new(2.0, 3.0, 0.0, 0.1).unwrap();
        let first = minimize_smooth(&random_small(17, 9), &prm, 1e-10, 50).unwrap();
        let again = minimize_smooth(&first.u, &prm, 1e-10, 50).unwrap();
        assert!(again.converged());
        assert!(again.iterations <= 1);
    }

    #[test]
    fn large_bump_with_load_is_unbounded_below() {
        let g = make_grid(33, 33, 1.0f64, 1.0).unwrap();
        let pi = std::f64::consts::PI;
        let u0 = ScalarField::from_fn(g, |x, y| 4.0 * (pi * x).sin() * (pi * y).sin());
        let prm = ProblemParams::new(2.0, 3.0, 60.0, 0.05).unwrap();
        assert!(smooth_energy(&u0, &prm) < 0.0);
        let rep = minimize_smooth(&u0, &prm, 1e-8, 200).unwrap();
        assert_eq!(rep.status, SolveStatus::Diverged);
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let prm = ProblemParams::new(2.0, 3.0, 0.0, 0.1).unwrap();
        assert!(minimize_smooth(&random_small(5, 1), &prm, 0.0, 5).is_err());
    }

    #[test]
    fn critical_point_from_zero_neighbourhood() {
        let prm = ProblemParams::new(2.0, 3.0, 5.0, 0.1).unwrap();
        let rep = find_critical_point(&random_small(17, 4), &prm, &NewtonOptions::new(1e-10, 30)).unwrap();
        assert!(rep.converged());
        assert!(rep.u.sup_norm() < 1e-8);
    }
}
