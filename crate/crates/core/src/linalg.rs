//! Krylov solvers and eigen-iterations on matrix-free symmetric operators.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::Grid2D;
use crate::scalar::{lit, to_f64, Real};

/// A symmetric linear map on `R^dim`.
pub trait LinearOperator<T> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[T], y: &mut [T]);
}

/// Approximate inverse `z = M^{-1} r` of a symmetric positive definite `M`.
pub trait Preconditioner<T> {
    fn solve(&self, r: &[T], z: &mut [T]);
}

pub struct Identity;

impl<T: Real> Preconditioner<T> for Identity {
    fn solve(&self, r: &[T], z: &mut [T]) {
        z.copy_from_slice(r);
    }
}

/// Diagonal scaling by `1 / max(|d_i|, floor)`.
pub struct Jacobi<T> {
    inv: Vec<T>,
}

impl<T: Real> Jacobi<T> {
    pub fn new(diag: &[T]) -> Self {
        let scale = diag.iter().fold(T::zero(), |m, d| m.max(d.abs()));
        let floor = (scale * lit(1e-8)).max(T::min_positive_value());
        Self {
            inv: diag.iter().map(|d| T::one() / d.abs().max(floor)).collect(),
        }
    }
}

impl<T: Real> Preconditioner<T> for Jacobi<T> {
    fn solve(&self, r: &[T], z: &mut [T]) {
        for ((z, r), d) in z.iter_mut().zip(r).zip(&self.inv) {
            *z = *r * *d;
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

pub fn norm_inf<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// `y += a x`
pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += a * *x;
    }
}

/// Exact inverse of the discrete Laplacian `-Delta_h` of [`crate::energy::HessianOperator::laplacian`]
/// by fast diagonalization. The stencil is a tensor sum `K x M + M x K`
/// of 1D stiffness and averaging matrices sharing one eigenbasis, so each
/// solve costs two dense transforms per axis.
#[derive(Debug, Clone)]
pub struct FastLaplacian {
    mx: usize,
    my: usize,
    sx: DMatrix<f64>,
    sy: DMatrix<f64>,
    eig: DMatrix<f64>,
}

fn stiffness_1d(n: usize, h: f64, periodic: bool) -> (DMatrix<f64>, Vec<f64>) {
    let mut k = DMatrix::zeros(n, n);
    let c = 1.0 / (h * h);
    for i in 0..n {
        k[(i, i)] = 2.0 * c;
        if i + 1 < n {
            k[(i, i + 1)] -= c;
            k[(i + 1, i)] -= c;
        }
    }
    if periodic && n > 1 {
        // n >= 2 here; for n == 2 both wrap entries land on the off-diagonal
        k[(0, n - 1)] -= c;
        k[(n - 1, 0)] -= c;
    }
    let e = SymmetricEigen::new(k);
    (e.eigenvectors, e.eigenvalues.iter().copied().collect())
}

impl FastLaplacian {
    pub fn new<T: Real>(grid: &Grid2D<T>) -> Self {
        let (hx, hy) = (to_f64(grid.hx()), to_f64(grid.hy()));
        let mx = grid.nx() - 2;
        let my = grid.dof_count() / mx;
        let (sx, kx) = stiffness_1d(mx, hx, false);
        let (sy, ky) = stiffness_1d(my, hy, grid.is_periodic());
        let mut eig = DMatrix::zeros(mx, my);
        for i in 0..mx {
            let ax = 1.0 - hx * hx * kx[i] / 4.0;
            for j in 0..my {
                let ay = 1.0 - hy * hy * ky[j] / 4.0;
                eig[(i, j)] = kx[i] * ay + ax * ky[j];
            }
        }
        Self { mx, my, sx, sy, eig }
    }

    /// Eigenvalues of the operator (unordered).
    pub fn eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        self.eig.iter().copied()
    }

    /// `z = f(L) r` for the spectral function `f`.
    pub fn apply_fn<T: Real>(&self, r: &[T], z: &mut [T], f: impl Fn(f64) -> f64) {
        let mut u = DMatrix::zeros(self.mx, self.my);
        for j in 0..self.my {
            for i in 0..self.mx {
                u[(i, j)] = to_f64(r[j * self.mx + i]);
            }
        }
        let mut hat = self.sx.tr_mul(&u) * &self.sy;
        for (h, e) in hat.iter_mut().zip(self.eig.iter()) {
            *h *= f(*e);
        }
        let out = &self.sx * hat * self.sy.transpose();
        for j in 0..self.my {
            for i in 0..self.mx {
                z[j * self.mx + i] = lit(out[(i, j)]);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.mx * self.my
    }
}

impl<T: Real> Preconditioner<T> for FastLaplacian {
    fn solve(&self, r: &[T], z: &mut [T]) {
        self.apply_fn(r, z, |e| 1.0 / e);
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// Final residual norm estimate `|b - A x|`.
    pub residual: T,
    pub converged: bool,
    /// Conjugate gradients met a direction with `p' A p <= 0`.
    pub negative_curvature: bool,
}

/// Preconditioned conjugate gradients for `A x = b` stopped at relative
/// residual `rtol`, or truncated at the first direction of non-positive
/// curvature. The iterate so far is returned, or the preconditioned
/// right-hand side `M^{-1} b` if that happens at the first step.
pub fn truncated_pcg<T: Real>(
    a: &dyn LinearOperator<T>,
    b: &[T],
    m: &dyn Preconditioner<T>,
    rtol: T,
    max_iter: usize,
) -> KrylovOutcome<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let mut r = b.to_vec();
    let mut z = vec![T::zero(); n];
    m.solve(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let bnorm = norm2(b);
    let target = rtol * bnorm;
    let mut res = bnorm;
    if bnorm == T::zero() {
        return KrylovOutcome { x, iterations: 0, residual: res, converged: true, negative_curvature: false };
    }
    for it in 0..max_iter {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            if it == 0 {
                x.copy_from_slice(&p);
            }
            return KrylovOutcome { x, iterations: it, residual: res, converged: false, negative_curvature: true };
        }
        let step = rz / pap;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        res = norm2(&r);
        if res <= target {
            return KrylovOutcome { x, iterations: it + 1, residual: res, converged: true, negative_curvature: false };
        }
        m.solve(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (p, z) in p.iter_mut().zip(&z) {
            *p = *z + beta * *p;
        }
    }
    KrylovOutcome { x, iterations: max_iter, residual: res, converged: false, negative_curvature: false }
}

/// Preconditioned MINRES for symmetric, possibly indefinite `A x = b`.
/// The preconditioner must be symmetric positive definite. Convergence is
/// measured in the preconditioned norm relative to its initial value.
pub fn minres<T: Real>(
    a: &dyn LinearOperator<T>,
    b: &[T],
    m: &dyn Preconditioner<T>,
    rtol: T,
    max_iter: usize,
) -> KrylovOutcome<T> {
    let n = b.len();
    let mut x = vec![T::zero(); n];
    let mut r1 = b.to_vec();
    let mut y = vec![T::zero(); n];
    m.solve(&r1, &mut y);
    let beta1 = dot(&r1, &y).max(T::zero()).sqrt();
    if beta1 == T::zero() {
        return KrylovOutcome { x, iterations: 0, residual: T::zero(), converged: true, negative_curvature: false };
    }
    let mut r2 = r1.clone();
    let (mut oldb, mut beta) = (T::zero(), beta1);
    let (mut dbar, mut epsln, mut phibar) = (T::zero(), T::zero(), beta1);
    let (mut cs, mut sn) = (-T::one(), T::zero());
    let mut w = vec![T::zero(); n];
    let mut w2 = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let tiny = T::epsilon();
    for it in 0..max_iter {
        let s = T::one() / beta;
        for (v, y) in v.iter_mut().zip(&y) {
            *v = s * *y;
        }
        a.apply(&v, &mut y);
        if it > 0 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        m.solve(&r2, &mut y);
        oldb = beta;
        beta = dot(&r2, &y);
        if beta < T::zero() {
            break;
        }
        beta = beta.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(tiny);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar = sn * phibar;
        let denom = T::one() / gamma;
        for k in 0..n {
            let w1 = w2[k];
            w2[k] = w[k];
            w[k] = (v[k] - oldeps * w1 - delta * w2[k]) * denom;
            x[k] += phi * w[k];
        }
        if phibar <= rtol * beta1 || beta <= tiny * beta1 {
            return KrylovOutcome { x, iterations: it + 1, residual: phibar, converged: true, negative_curvature: false };
        }
    }
    KrylovOutcome { x, iterations: max_iter, residual: phibar, converged: false, negative_curvature: false }
}

/// Ritz pairs from a Lanczos run.
#[derive(Debug, Clone)]
pub struct RitzPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// `|beta_m * s_m|` residual bound per pair.
    pub residuals: Vec<f64>,
}

/// Lanczos with full reorthogonalization in `f64`, run in the orthogonal
/// complement of `locked` (orthonormal). Returns all Ritz pairs sorted by
/// value.
pub fn lanczos(
    apply: &dyn Fn(&[f64], &mut [f64]),
    dim: usize,
    steps: usize,
    locked: &[Vec<f64>],
    seed: u64,
) -> RitzPairs {
    let project = |v: &mut [f64], basis: &[Vec<f64>]| {
        for b in basis {
            let c = dot(v, b);
            axpy(-c, b, v);
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    project(&mut q, locked);
    project(&mut q, locked);
    let nq = norm2(&q);
    let steps = steps.min(dim.saturating_sub(locked.len())).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut alphas = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);
    if nq == 0.0 {
        return RitzPairs { values: vec![], vectors: vec![], residuals: vec![] };
    }
    q.iter_mut().for_each(|x| *x /= nq);
    let mut w = vec![0.0; dim];
    let mut last_beta = 0.0;
    for k in 0..steps {
        apply(&q, &mut w);
        project(&mut w, locked);
        let a = dot(&w, &q);
        axpy(-a, &q, &mut w);
        if let Some(prev) = basis.last() {
            axpy(-betas[k - 1], prev, &mut w);
        }
        basis.push(q.clone());
        alphas.push(a);
        // two passes of classical Gram-Schmidt against everything
        for _ in 0..2 {
            project(&mut w, locked);
            project(&mut w, &basis);
        }
        let b = norm2(&w);
        last_beta = b;
        if b <= 1e-12 * a.abs().max(1.0) || k + 1 == steps {
            break;
        }
        betas.push(b);
        q = w.iter().map(|x| x / b).collect();
    }
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let e = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let mut out = RitzPairs { values: vec![], vectors: vec![], residuals: vec![] };
    for &c in &order {
        let s = e.eigenvectors.column(c);
        let mut v = vec![0.0; dim];
        for (k, b) in basis.iter().enumerate() {
            axpy(s[k], b, &mut v);
        }
        out.values.push(e.eigenvalues[c]);
        out.vectors.push(v);
        out.residuals.push((last_beta * s[m - 1]).abs());
    }
    out
}

/// All eigenvalues of a small operator, assembled densely in `f64`.
pub fn dense_eigenvalues(apply: &dyn Fn(&[f64], &mut [f64]), dim: usize) -> Vec<f64> {
    let mut a = DMatrix::zeros(dim, dim);
    let mut e = vec![0.0; dim];
    let mut col = vec![0.0; dim];
    for j in 0..dim {
        e[j] = 1.0;
        apply(&e, &mut col);
        e[j] = 0.0;
        for i in 0..dim {
            a[(i, j)] = col[i];
        }
    }
    let sym = (&a + a.transpose()) * 0.5;
    let mut v: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_grid;
    use crate::energy::HessianOperator;

    struct Diag(Vec<f64>);
    impl LinearOperator<f64> for Diag {
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for i in 0..x.len() {
                y[i] = self.0[i] * x[i];
            }
        }
    }

    fn residual(a: &dyn LinearOperator<f64>, x: &[f64], b: &[f64]) -> f64 {
        let mut y = vec![0.0; b.len()];
        a.apply(x, &mut y);
        y.iter().zip(b).map(|(y, b)| (y - b).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn cg_solves_laplacian() {
        let g = make_grid(17, 13, 1.0f64, 0.7).unwrap();
        let l = HessianOperator::laplacian(g);
        let b: Vec<f64> = (0..l.dim()).map(|k| ((k * 7 % 11) as f64) - 5.0).collect();
        let out = truncated_pcg(&l, &b, &Jacobi::new(&l.diagonal()), 1e-12, 2000);
        assert!(out.converged && !out.negative_curvature);
        assert!(residual(&l, &out.x, &b) < 1e-9 * norm2(&b));
    }

    #[test]
    fn cg_flags_negative_curvature() {
        let a = Diag(vec![1.0, -2.0, 3.0]);
        let out = truncated_pcg(&a, &[0.0, 1.0, 0.0], &Identity, 1e-12, 10);
        assert!(out.negative_curvature);
        assert_eq!(out.x, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn minres_solves_indefinite() {
        let a = Diag((0..50).map(|k| k as f64 - 20.5).collect());
        let b: Vec<f64> = (0..50).map(|k| (k as f64).sin()).collect();
        let out = minres(&a, &b, &Identity, 1e-12, 200);
        assert!(out.converged);
        assert!(residual(&a, &out.x, &b) < 1e-9);
    }

    #[test]
    fn fast_laplacian_inverts_stencil() {
        for g in [
            make_grid(12, 9, 1.3f64, 0.8).unwrap(),
            Grid2D::slab(9, 11, 1.0f64, 0.5).unwrap(),
        ] {
            let l = HessianOperator::laplacian(g);
            let fl = FastLaplacian::new(&g);
            assert_eq!(fl.dim(), l.dim());
            let b: Vec<f64> = (0..l.dim()).map(|k| ((k * 5 % 7) as f64) - 3.0).collect();
            let mut x = vec![0.0; b.len()];
            fl.solve(&b, &mut x);
            assert!(residual(&l, &x, &b) < 1e-9 * norm2(&b));
            let lo = fl.eigenvalues().fold(f64::INFINITY, f64::min);
            assert!(lo > 0.0);
        }
    }

    #[test]
    fn lanczos_and_dense_agree() {
        let g = make_grid(9, 9, 1.0f64, 1.0).unwrap();
        let l = HessianOperator::laplacian(g);
        let ap = |x: &[f64], y: &mut [f64]| l.apply(x, y);
        let dense = dense_eigenvalues(&ap, l.dim());
        let ritz = lanczos(&ap, l.dim(), l.dim(), &[], 7);
        assert!((ritz.values[0] - dense[0]).abs() < 1e-8 * dense[0]);
        // smallest Dirichlet eigenvalue of the stencil
        let h: f64 = 1.0 / 8.0;
        let pi = std::f64::consts::PI;
        let k = 4.0 / (h * h) * (pi * h / 2.0).sin().powi(2);
        let m = 1.0 - h * h * k / 4.0;
        assert!((dense[0] - 2.0 * k * m).abs() < 1e-9 * dense[0]);
    }

    #[test]
    fn lanczos_respects_locked_vectors() {
        let a = Diag(vec![-3.0, -1.0, 2.0, 5.0, 7.0]);
        let ap = |x: &[f64], y: &mut [f64]| a.apply(x, y);
        let locked = vec![vec![1.0, 0.0, 0.0, 0.0, 0.0]];
        let r = lanczos(&ap, 5, 10, &locked, 1);
        assert!((r.values[0] + 1.0).abs() < 1e-10);
    }
}
