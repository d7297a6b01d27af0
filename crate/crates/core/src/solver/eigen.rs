use crate::domain::{Grid2D, ScalarField};
use crate::energy::{p_laplacian_residual, Diffusion, Exponent, DEFAULT_EPS};
use crate::error::SolverError;
use crate::linalg::{FastLaplacian, Preconditioner};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, Copy)]
pub struct EigenOptions<T> {
    /// Relative stationarity tolerance on the Rayleigh quotient.
    pub tol: T,
    pub max_iter: usize,
    /// Gradient regularizer; ignored for `p = 2`.
    pub eps: T,
}

impl<T: Real> EigenOptions<T> {
    pub fn new(tol: T) -> Self {
        Self { tol, max_iter: 2000, eps: lit(DEFAULT_EPS) }
    }
}

struct Rayleigh<T> {
    p: T,
    eps: T,
    pow_p: Exponent<T>,
    pow_pm1: Exponent<T>,
}

impl<T: Real> Rayleigh<T> {
    fn denominator(&self, u: &ScalarField<T>) -> T {
        let g = u.grid();
        g.dof_nodes().map(|n| self.pow_p.pow(u.values()[n].abs())).sum::<T>() * g.cell_area()
    }

    fn numerator(&self, u: &ScalarField<T>) -> T {
        let g = u.grid();
        let diff = Diffusion::new(self.p, self.eps);
        let mut acc = T::zero();
        for j in 0..g.ny() - 1 {
            for i in 0..g.nx() - 1 {
                let c = u.cell_gradient(i, j);
                acc += diff.density(c[0] * c[0] + c[1] * c[1]);
            }
        }
        acc * g.cell_area() * self.p
    }

    fn normalize(&self, u: &ScalarField<T>) -> Option<ScalarField<T>> {
        let d = self.denominator(u);
        if !(d > T::zero() && d.is_finite()) {
            return None;
        }
        Some(u.scaled(T::one() / d.powf(T::one() / self.p)))
    }

    /// `A(u) - R |u|^(p-2) u` on unknowns, for normalized `u`.
    fn gradient(&self, u: &ScalarField<T>, r: T) -> Vec<T> {
        let a = p_laplacian_residual(u, self.p, self.eps);
        u.grid()
            .dof_nodes()
            .map(|n| {
                let v = u.values()[n];
                a.values()[n] - r * v.signum() * self.pow_pm1.pow(v.abs())
            })
            .collect()
    }
}

/// First Dirichlet eigenvalue of the discrete p-Laplacian on `grid`,
/// starting from a positive product bump.
pub fn first_eigenvalue<T: Real>(p: T, grid: &Grid2D<T>, tol: T) -> Result<T, SolverError> {
    let (lx, ly) = (grid.lx(), grid.ly());
    let periodic = grid.is_periodic();
    let u0 = ScalarField::from_fn(*grid, |x, y| {
        let bx = x * (lx - x);
        if periodic {
            bx
        } else {
            bx * y * (ly - y)
        }
    });
    first_eigenvalue_from(p, &u0, &EigenOptions::new(tol))
}

/// Minimizes the Rayleigh quotient `int |grad u|^p / int |u|^p` by
/// normalized descent along Laplacian-preconditioned gradients, projecting
/// back to `||u||_p = 1` after every step.
pub fn first_eigenvalue_from<T: Real>(
    p: T,
    u0: &ScalarField<T>,
    opts: &EigenOptions<T>,
) -> Result<T, SolverError> {
    if !(p > T::one()) {
        return Err(SolverError::InvalidInput(format!("p must exceed 1, got {p}")));
    }
    if !(opts.tol > T::zero()) {
        return Err(SolverError::InvalidInput("tolerance must be positive".into()));
    }
    let eps = if p == lit(2.0) { T::zero() } else { opts.eps };
    let ray = Rayleigh { p, eps, pow_p: Exponent::new(p), pow_pm1: Exponent::new(p - T::one()) };
    let grid = *u0.grid();
    let fast = FastLaplacian::new(&grid);
    let mut u = ray
        .normalize(u0)
        .ok_or_else(|| SolverError::InvalidInput("initial guess must be nonzero".into()))?;
    let mut r = ray.numerator(&u);
    let mut step = T::one();
    let mut z = vec![T::zero(); grid.dof_count()];
    for it in 0..opts.max_iter {
        let g = ray.gradient(&u, r);
        fast.solve(&g, &mut z);
        let dir = ScalarField::from_dofs(grid, &z);
        // unit step is inverse iteration for p = 2; longer steps flip the
        // sign of higher modes instead of damping them
        let mut t = (step * lit(2.0)).min(T::one());
        let mut next = None;
        for _ in 0..50 {
            if let Some(v) = ray.normalize(&u.add_scaled(-t, &dir)) {
                let rv = ray.numerator(&v);
                if rv < r {
                    next = Some((v, rv));
                    break;
                }
            }
            t *= lit(0.5);
        }
        let Some((v, rv)) = next else {
            // no decrease at any step length: stationary to rounding
            return Ok(r);
        };
        let change = (r - rv) / r;
        u = v;
        r = rv;
        step = t;
        if change <= opts.tol && it > 0 {
            return Ok(r);
        }
    }
    Err(SolverError::MaxIter { iterations: opts.max_iter, residual: r.to_f64().unwrap_or(f64::NAN) })
}
