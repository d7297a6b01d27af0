//! Critical-point solvers, comparison solves, alpha-continuation and
//! spectral diagnostics.

mod continuation;
mod eigen;
mod morse;
mod mountain;
mod newton;
mod poisson;

pub use continuation::{
    continue_alpha, ContinuationMethod, ContinuationReport, ContinuationSchedule, ContinuationStep,
};
pub use eigen::{first_eigenvalue, first_eigenvalue_from, EigenOptions};
pub use morse::{lowest_eigenvalues, morse_index};
pub use mountain::{mountain_pass, mountain_pass_with, MountainPassOptions};
pub use newton::{find_critical_point, minimize_smooth, minimize_smooth_with, NewtonOptions};
pub use poisson::{comparison_constant, solve_poisson_p, solve_poisson_p_with};

use crate::domain::ScalarField;
use crate::energy::{
    accumulate_diffusion, smooth_energy, smooth_gradient, Diffusion, HessianOperator, ProblemParams,
};
use crate::scalar::Real;

/// An energy with gradient and Hessian on one grid.
pub(crate) trait Objective<T: Real> {
    fn energy(&self, u: &ScalarField<T>) -> T;
    fn gradient(&self, u: &ScalarField<T>) -> ScalarField<T>;
    fn hessian(&self, u: &ScalarField<T>) -> HessianOperator<T>;
}

pub(crate) struct Smooth<'a, T>(pub &'a ProblemParams<T>);

impl<T: Real> Objective<T> for Smooth<'_, T> {
    fn energy(&self, u: &ScalarField<T>) -> T {
        smooth_energy(u, self.0)
    }
    fn gradient(&self, u: &ScalarField<T>) -> ScalarField<T> {
        smooth_gradient(u, self.0)
    }
    fn hessian(&self, u: &ScalarField<T>) -> HessianOperator<T> {
        HessianOperator::new(u, self.0)
    }
}

/// `int Phi(grad phi) - load * int phi`.
pub(crate) struct Torsion<T> {
    pub p: T,
    pub eps: T,
    pub load: T,
}

impl<T: Real> Objective<T> for Torsion<T> {
    fn energy(&self, u: &ScalarField<T>) -> T {
        let grid = u.grid();
        let diff = Diffusion::new(self.p, self.eps);
        let mut acc = T::zero();
        for j in 0..grid.ny() - 1 {
            for i in 0..grid.nx() - 1 {
                let g = u.cell_gradient(i, j);
                acc += diff.density(g[0] * g[0] + g[1] * g[1]);
            }
        }
        // the cell-average quadrature of int phi gives each unknown weight 1
        let mass: T = grid.dof_nodes().map(|n| u.values()[n]).sum();
        (acc - self.load * mass) * grid.cell_area()
    }
    fn gradient(&self, u: &ScalarField<T>) -> ScalarField<T> {
        let grid = *u.grid();
        let mut out = vec![T::zero(); grid.node_count()];
        accumulate_diffusion(u, self.p, self.eps, &mut out);
        grid.fold(&mut out);
        for n in grid.dof_nodes().collect::<Vec<_>>() {
            out[n] -= self.load;
        }
        ScalarField::from_raw(grid, out)
    }
    fn hessian(&self, u: &ScalarField<T>) -> HessianOperator<T> {
        HessianOperator::diffusion_only(u, self.p, self.eps)
    }
}
