use std::io::Write;

use super::newton::{find_critical_point, minimize_smooth_with, NewtonOptions};
use crate::domain::{gradient_field, ScalarField};
use crate::energy::{energy_terms, ProblemParams, SolveReport, SolveStatus};
use crate::error::SolverError;
use crate::freeboundary::jump_residual_stats;
use crate::scalar::{lit, Real};

/// Solver used at each width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContinuationMethod {
    /// Newton on the residual; follows saddle-type critical points.
    #[default]
    CriticalPoint,
    /// Energy-decreasing Newton; only meaningful where the solution is a
    /// local minimum.
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationSchedule<T> {
    pub alpha0: T,
    /// Width ratio between consecutive steps, in `(0, 1)`.
    pub factor: T,
    pub steps: usize,
    /// Residual sup-norm tolerance of every solve.
    pub tol: T,
    pub max_iter: usize,
    pub method: ContinuationMethod,
    /// Jump-probe offset; `2 * max(hx, hy)` when `None`.
    pub probe_offset: Option<T>,
}

impl<T: Real> ContinuationSchedule<T> {
    pub fn new(alpha0: T, factor: T, steps: usize, tol: T) -> Self {
        Self {
            alpha0,
            factor,
            steps,
            tol,
            max_iter: 100,
            method: ContinuationMethod::default(),
            probe_offset: None,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::InvalidInput(m.to_string()));
        if !(self.alpha0 > T::zero() && self.alpha0 <= T::one()) {
            return bad("alpha0 must lie in (0, 1]");
        }
        if !(self.factor > T::zero() && self.factor < T::one()) {
            return bad("factor must lie in (0, 1)");
        }
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if !(self.tol > T::zero()) {
            return bad("tol must be positive");
        }
        Ok(())
    }

    /// `alpha0 * factor^j` for `j < steps`.
    pub fn alphas(&self) -> Vec<T> {
        let mut a = self.alpha0;
        (0..self.steps)
            .map(|_| {
                let cur = a;
                a *= self.factor;
                cur
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationStep<T> {
    pub alpha: T,
    pub energy_smooth: T,
    pub energy_sharp: T,
    /// `|{|u - 1| < alpha}|`.
    pub band_area: T,
    pub residual_norm: T,
    /// Largest cell gradient magnitude.
    pub max_gradient_norm: T,
    pub jump_residual_median: T,
    pub jump_samples: usize,
    pub iterations: usize,
    pub umax: T,
}

#[derive(Debug, Clone)]
pub struct ContinuationReport<T> {
    pub steps: Vec<ContinuationStep<T>>,
    /// Converged field of every step.
    pub fields: Vec<ScalarField<T>>,
}

impl<T: Real> ContinuationReport<T> {
    /// Field of the last step.
    pub fn u(&self) -> &ScalarField<T> {
        self.fields.last().expect("a report holds at least one step")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "alpha,energy_smooth,energy_sharp,band_area,residual_norm,max_gradient_norm,jump_residual_median,jump_samples,iterations,umax"
        )?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                s.alpha,
                s.energy_smooth,
                s.energy_sharp,
                s.band_area,
                s.residual_norm,
                s.max_gradient_norm,
                s.jump_residual_median,
                s.jump_samples,
                s.iterations,
                s.umax
            )?;
        }
        Ok(())
    }
}

const MAX_REFINE: usize = 4;

type Solve<'a, T> = dyn Fn(&ScalarField<T>, T) -> Result<SolveReport<T>, SolverError> + 'a;

/// Reaches `to` from a solution at `from` through the geometric midpoint,
/// splitting again while a leg fails. `None` once the depth runs out.
fn refine<T: Real>(
    solve: &Solve<'_, T>,
    u: &ScalarField<T>,
    from: T,
    to: T,
    depth: usize,
) -> Result<Option<SolveReport<T>>, SolverError> {
    if depth == 0 {
        return Ok(None);
    }
    let mid = (from * to).sqrt();
    let first = match solve(u, mid)? {
        r if r.status == SolveStatus::Converged => r,
        _ => match refine(solve, u, from, mid, depth - 1)? {
            Some(r) => r,
            None => return Ok(None),
        },
    };
    let last = solve(&first.u, to)?;
    if last.status == SolveStatus::Converged {
        return Ok(Some(last));
    }
    refine(solve, &first.u, mid, to, depth - 1)
}

/// Solves at `alpha_j = alpha0 * factor^j`, each solve warm-started from
/// the previous solution, recording energies, gradient bounds and jump
/// statistics per step.
pub fn continue_alpha<T: Real>(
    u0: &ScalarField<T>,
    prm: &ProblemParams<T>,
    sched: &ContinuationSchedule<T>,
) -> Result<ContinuationReport<T>, SolverError> {
    sched.validate()?;
    prm.validate()?;
    let mut u = u0.clone();
    let mut report = ContinuationReport { steps: Vec::new(), fields: Vec::new() };
    let opts = NewtonOptions::new(sched.tol, sched.max_iter);
    let offset = sched.probe_offset.unwrap_or_else(|| lit::<T>(2.0) * u0.grid().h_max());
    let mut prev: Option<T> = None;
    for (j, alpha) in sched.alphas().into_iter().enumerate() {
        let wrap = |e: SolverError| SolverError::Continuation { step: j, source: Box::new(e) };
        let solve = |u: &ScalarField<T>, a: T| -> Result<SolveReport<T>, SolverError> {
            let p = prm.with_alpha(a)?;
            match sched.method {
                ContinuationMethod::CriticalPoint => find_critical_point(u, &p, &opts),
                ContinuationMethod::Minimize => minimize_smooth_with(u, &p, &opts),
            }
        };
        let p = prm.with_alpha(alpha).map_err(|e| wrap(e.into()))?;
        let mut rep = solve(&u, alpha).map_err(wrap)?;
        // a stalled Newton solve is retried through intermediate alphas
        if let (SolveStatus::MaxIter, Some(from)) = (rep.status, prev) {
            if let Some(r) = refine(&solve, &u, from, alpha, MAX_REFINE).map_err(wrap)? {
                rep = r;
            }
        }
        match rep.status {
            SolveStatus::Converged => {}
            SolveStatus::Diverged => {
                return Err(wrap(SolverError::Diverged { iterations: rep.iterations, floor: opts.energy_floor.to_f64().unwrap_or(f64::NAN) }))
            }
            SolveStatus::MaxIter => {
                return Err(wrap(SolverError::MaxIter {
                    iterations: rep.iterations,
                    residual: rep.residual_norm.to_f64().unwrap_or(f64::NAN),
                }))
            }
        }
        prev = Some(alpha);
        u = rep.u;
        let terms = energy_terms(&u, &p);
        let max_grad = gradient_field(&u).iter().fold(T::zero(), |m, g| m.max(g[0].hypot(g[1])));
        let jump = jump_residual_stats(&u, &p, Some(offset))
            .map_err(|e| wrap(SolverError::InvalidInput(e.to_string())))?;
        report.steps.push(ContinuationStep {
            alpha,
            energy_smooth: terms.smooth(),
            energy_sharp: terms.sharp(),
            band_area: terms.band_area,
            residual_norm: rep.residual_norm,
            max_gradient_norm: max_grad,
            jump_residual_median: jump.median,
            jump_samples: jump.samples.len(),
            iterations: rep.iterations,
            umax: u.max_value(),
        });
        report.fields.push(u.clone());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_grid;

    fn guess() -> ScalarField<f64> {
        let g = make_grid(17, 17, 1.0f64, 1.0).unwrap();
        ScalarField::from_fn(g, |x, y| 0.5 * (x * (1.0 - x) * y * (1.0 - y)).sqrt())
    }

    #[test]
    fn schedule_validation_and_alphas() {
        let s = ContinuationSchedule::new(0.2f64, 0.5, 5, 1e-8);
        assert!(s.validate().is_ok());
        let a = s.alphas();
        assert_eq!(a.len(), 5);
        assert!((a[4] - 0.0125).abs() < 1e-15);
        assert!(ContinuationSchedule::new(0.2, 1.0, 5, 1e-8).validate().is_err());
        assert!(ContinuationSchedule::new(0.0, 0.5, 5, 1e-8).validate().is_err());
        assert!(ContinuationSchedule::new(0.2, 0.5, 0, 1e-8).validate().is_err());
        assert!(ContinuationSchedule::new(0.2, 0.5, 1, 0.0).validate().is_err());
    }

    #[test]
    fn zero_load_stays_trivial() {
        let prm = ProblemParams::new(2.0, 3.0, 0.0, 0.2).unwrap();
        let rep = continue_alpha(&guess(), &prm, &ContinuationSchedule::new(0.2, 0.5, 3, 1e-10)).unwrap();
        assert_eq!(rep.steps.len(), 3);
        for s in &rep.steps {
            assert!(s.energy_smooth.abs() < 1e-12 && s.umax.abs() < 1e-8 && s.jump_samples == 0);
        }
        assert!(rep.steps.windows(2).all(|w| w[1].alpha < w[0].alpha));
    }

    #[test]
    fn single_step_equals_single_solve() {
        let prm = ProblemParams::new(2.0, 3.0, 0.0, 0.2).unwrap();
        let mut s = ContinuationSchedule::new(0.2, 0.5, 1, 1e-10);
        s.method = ContinuationMethod::Minimize;
        let rep = continue_alpha(&guess(), &prm, &s).unwrap();
        let direct = super::super::minimize_smooth(&guess(), &prm, 1e-10, 100).unwrap();
        assert_eq!(rep.u().values(), direct.u.values());
        assert_eq!(rep.steps[0].iterations, direct.iterations);
    }
}
