//! Sharp and smoothed energies on a grid, the discrete first variation and
//! the matrix-free second variation.
//!
//! The discrete smoothed energy is
//!
//! ```text
//! E(u) = |cell| * sum_cells [ Phi(grad_c u)
//!                             + w * sum_points ( G((u_k - 1)/alpha) - lambda (u_k - 1)_+^q / q ) ]
//! ```
//!
//! with `grad_c` the cell-centered gradient, `Phi(g) = ((eps^2 + |g|^2)^(p/2) - eps^p) / p`,
//! and `u_k` the bilinear interpolant at the points of a [`CellRule`].
//! [`smooth_gradient`] returns `dE/du_n / |cell|` at every unknown, so the
//! zero set of the residual is the discrete Euler-Lagrange equation.

use crate::domain::{CellRule, Grid2D, ScalarField};
use crate::error::ParamError;
use crate::linalg::LinearOperator;
use crate::scalar::{lit, to_f64, Real};
use crate::smoothing::SmootherSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemParams<T> {
    pub p: T,
    pub q: T,
    pub lambda: T,
    /// Width of the smoothing band `1 < u < 1 + alpha`.
    pub alpha: T,
    /// Regularizer of the p-Laplacian weight `(eps^2 + |grad u|^2)^((p-2)/2)`.
    pub eps: T,
    /// Sub-cell points per axis used for the indicator and load terms.
    pub subcells: usize,
    pub smoother: SmootherSpec,
}

pub const DEFAULT_EPS: f64 = 1e-8;
pub const DEFAULT_SUBCELLS: usize = 8;

impl<T: Real> ProblemParams<T> {
    pub fn new(p: T, q: T, lambda: T, alpha: T) -> Result<Self, ParamError> {
        Self {
            p,
            q,
            lambda,
            alpha,
            eps: lit(DEFAULT_EPS),
            subcells: DEFAULT_SUBCELLS,
            smoother: SmootherSpec::Quintic,
        }
        .validated()
    }

    pub fn with_eps(mut self, eps: T) -> Result<Self, ParamError> {
        self.eps = eps;
        self.validated()
    }

    pub fn with_alpha(mut self, alpha: T) -> Result<Self, ParamError> {
        self.alpha = alpha;
        self.validated()
    }

    pub fn with_lambda(mut self, lambda: T) -> Result<Self, ParamError> {
        self.lambda = lambda;
        self.validated()
    }

    pub fn with_subcells(mut self, subcells: usize) -> Result<Self, ParamError> {
        self.subcells = subcells;
        self.validated()
    }

    pub fn validated(self) -> Result<Self, ParamError> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let (p, q) = (to_f64(self.p), to_f64(self.q));
        if !(p.is_finite() && p > 1.0) {
            return Err(ParamError::PTooSmall(p));
        }
        if !(q.is_finite() && p <= q - 1.0) {
            return Err(ParamError::ExponentOrder { p, q });
        }
        if p < 2.0 {
            let critical = 2.0 * p / (2.0 - p);
            if q >= critical {
                return Err(ParamError::Supercritical { p, q, critical });
            }
        }
        let lambda = to_f64(self.lambda);
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(ParamError::Lambda(lambda));
        }
        let alpha = to_f64(self.alpha);
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(ParamError::Alpha(alpha));
        }
        let eps = to_f64(self.eps);
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(ParamError::Eps(eps));
        }
        if eps == 0.0 && p != 2.0 {
            return Err(ParamError::DegenerateWeight(p));
        }
        if self.subcells == 0 {
            return Err(ParamError::Subcells);
        }
        Ok(())
    }
}

/// Power with a fast path for small integer exponents.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Exponent<T> {
    Int(i32),
    Real(T),
}

impl<T: Real> Exponent<T> {
    pub(crate) fn new(e: T) -> Self {
        let r = e.round();
        if (e - r).abs() < lit(1e-12) && r.abs() <= lit(16.0) {
            Exponent::Int(r.to_i32().unwrap_or(0))
        } else {
            Exponent::Real(e)
        }
    }

    #[inline]
    pub(crate) fn pow(self, x: T) -> T {
        match self {
            Exponent::Int(k) => x.powi(k),
            Exponent::Real(e) => x.powf(e),
        }
    }
}

/// Regularized p-Laplacian integrand and its derivatives as functions of
/// `s2 = |grad u|^2`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Diffusion<T> {
    p: T,
    eps2: T,
    eps_p: T,
    half_p: Exponent<T>,
    weight_exp: Exponent<T>,
    weight2_exp: Exponent<T>,
}

impl<T: Real> Diffusion<T> {
    pub(crate) fn new(p: T, eps: T) -> Self {
        let two = lit::<T>(2.0);
        Self {
            p,
            eps2: eps * eps,
            eps_p: if eps > T::zero() { eps.powf(p) } else { T::zero() },
            half_p: Exponent::new(p / two),
            weight_exp: Exponent::new((p - two) / two),
            weight2_exp: Exponent::new((p - lit(4.0)) / two),
        }
    }

    /// `((eps^2 + s2)^(p/2) - eps^p) / p`
    #[inline]
    pub(crate) fn density(&self, s2: T) -> T {
        (self.half_p.pow(self.eps2 + s2) - self.eps_p) / self.p
    }

    /// `(eps^2 + s2)^((p-2)/2)`
    #[inline]
    pub(crate) fn weight(&self, s2: T) -> T {
        match self.weight_exp {
            Exponent::Int(0) => T::one(),
            e => e.pow(self.eps2 + s2),
        }
    }

    /// Tangent tensor `w I + (p-2) (eps^2+s2)^((p-4)/2) g g^T` as `[xx, xy, yy]`.
    #[inline]
    pub(crate) fn tensor(&self, g: [T; 2]) -> [T; 3] {
        let s2 = g[0] * g[0] + g[1] * g[1];
        let w = self.weight(s2);
        let pm2 = self.p - lit(2.0);
        if pm2 == T::zero() {
            return [w, T::zero(), w];
        }
        let w2 = pm2 * self.weight2_exp.pow(self.eps2 + s2);
        [w + w2 * g[0] * g[0], w2 * g[0] * g[1], w + w2 * g[1] * g[1]]
    }
}

/// Derivatives of the cell gradient with respect to the four corner values.
#[inline]
pub(crate) fn gradient_stencil<T: Real>(grid: &Grid2D<T>) -> [[T; 2]; 4] {
    let ax = lit::<T>(0.5) / grid.hx();
    let ay = lit::<T>(0.5) / grid.hy();
    [[-ax, -ay], [ax, -ay], [-ax, ay], [ax, ay]]
}

#[inline]
fn scatter<T: Real>(out: &mut [T], nodes: &[usize; 4], local: &[T; 4]) {
    for k in 0..4 {
        out[nodes[k]] += local[k];
    }
}

/// Pointwise nonlinear terms of the smoothed energy at value `u`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Reaction<T> {
    lambda: T,
    inv_alpha: T,
    q: T,
    q_exp: Exponent<T>,
    qm1_exp: Exponent<T>,
    qm2_exp: Exponent<T>,
    smoother: SmootherSpec,
}

impl<T: Real> Reaction<T> {
    pub(crate) fn new(prm: &ProblemParams<T>) -> Self {
        Self {
            lambda: prm.lambda,
            inv_alpha: T::one() / prm.alpha,
            q: prm.q,
            q_exp: Exponent::new(prm.q),
            qm1_exp: Exponent::new(prm.q - T::one()),
            qm2_exp: Exponent::new(prm.q - lit(2.0)),
            smoother: prm.smoother,
        }
    }

    /// `G((u-1)/alpha) - lambda (u-1)_+^q / q`
    #[inline]
    pub(crate) fn density(&self, u: T) -> T {
        let w = u - T::one();
        if w <= T::zero() {
            return T::zero();
        }
        self.smoother.G(w * self.inv_alpha) - self.lambda * self.q_exp.pow(w) / self.q
    }

    /// `g((u-1)/alpha)/alpha - lambda (u-1)_+^(q-1)`
    #[inline]
    pub(crate) fn source(&self, u: T) -> T {
        let w = u - T::one();
        if w <= T::zero() {
            return T::zero();
        }
        self.smoother.g(w * self.inv_alpha) * self.inv_alpha - self.lambda * self.qm1_exp.pow(w)
    }

    /// `lambda (u-1)_+^(q-1)`
    #[inline]
    pub(crate) fn load(&self, u: T) -> T {
        let w = u - T::one();
        if w <= T::zero() {
            T::zero()
        } else {
            self.lambda * self.qm1_exp.pow(w)
        }
    }

    /// `g'((u-1)/alpha)/alpha^2 - lambda (q-1) (u-1)_+^(q-2)`
    #[inline]
    pub(crate) fn curvature(&self, u: T) -> T {
        let w = u - T::one();
        if w <= T::zero() {
            return T::zero();
        }
        let ia = self.inv_alpha;
        self.smoother.g_prime(w * ia) * ia * ia
            - self.lambda * (self.q - T::one()) * self.qm2_exp.pow(w)
    }
}

/// Integrals making up the discrete energies of one field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms<T> {
    /// `int Phi(grad u)` with the eps-regularized density.
    pub dirichlet_smooth: T,
    /// `int |grad u|^p / p`.
    pub dirichlet_sharp: T,
    /// `int G((u - 1) / alpha)`.
    pub indicator_smooth: T,
    /// `|{u > 1}|`.
    pub indicator_sharp: T,
    /// `lambda int (u - 1)_+^q / q`.
    pub load: T,
    /// `|{|u - 1| < alpha}|`.
    pub band_area: T,
}

impl<T: Real> EnergyTerms<T> {
    pub fn smooth(&self) -> T {
        self.dirichlet_smooth + self.indicator_smooth - self.load
    }
    pub fn sharp(&self) -> T {
        self.dirichlet_sharp + self.indicator_sharp - self.load
    }
}

/// Evaluates every energy term in one sweep over the cells. Point values
/// come from the sub-cell rule of `prm`; the sharp indicator and the band
/// use the same points as the smoothed indicator.
pub fn energy_terms<T: Real>(u: &ScalarField<T>, prm: &ProblemParams<T>) -> EnergyTerms<T> {
    let grid = u.grid();
    let rule = CellRule::new(prm.subcells);
    let diff = Diffusion::new(prm.p, prm.eps);
    let sharp_exp = Exponent::new(prm.p);
    let q_exp = Exponent::new(prm.q);
    let one = T::one();
    let inv_alpha = one / prm.alpha;
    let mut t = EnergyTerms {
        dirichlet_smooth: T::zero(),
        dirichlet_sharp: T::zero(),
        indicator_smooth: T::zero(),
        indicator_sharp: T::zero(),
        load: T::zero(),
        band_area: T::zero(),
    };
    for j in 0..grid.ny() - 1 {
        for i in 0..grid.nx() - 1 {
            let g = u.cell_gradient(i, j);
            let s2 = g[0] * g[0] + g[1] * g[1];
            t.dirichlet_smooth += diff.density(s2);
            t.dirichlet_sharp += sharp_exp.pow(s2.sqrt()) / prm.p;
            let c = u.corners(i, j);
            let hi = c.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lo = c.iter().fold(T::infinity(), |m, &v| m.min(v));
            if hi <= one - prm.alpha {
                continue;
            }
            if lo >= one + prm.alpha {
                // whole cell inside {u >= 1 + alpha}: G = 1, no band
                let mut load = T::zero();
                for s in rule.shapes() {
                    load += q_exp.pow(CellRule::interpolate(s, &c) - one);
                }
                t.indicator_smooth += one;
                t.indicator_sharp += one;
                t.load += load * rule.weight();
                continue;
            }
            let (mut gs, mut ind, mut load, mut band) = (T::zero(), T::zero(), T::zero(), T::zero());
            for s in rule.shapes() {
                let w = CellRule::interpolate(s, &c) - one;
                if w.abs() < prm.alpha {
                    band += one;
                }
                if w > T::zero() {
                    ind += one;
                    gs += prm.smoother.G(w * inv_alpha);
                    load += q_exp.pow(w);
                }
            }
            let wt = rule.weight();
            t.indicator_smooth += gs * wt;
            t.indicator_sharp += ind * wt;
            t.load += load * wt;
            t.band_area += band * wt;
        }
    }
    let area = grid.cell_area();
    t.dirichlet_smooth *= area;
    t.dirichlet_sharp *= area;
    t.indicator_smooth *= area;
    t.indicator_sharp *= area;
    t.load *= area * prm.lambda / prm.q;
    t.band_area *= area;
    t
}

/// `I(u) = int |grad u|^p / p + |{u > 1}| - lambda int (u - 1)_+^q / q`.
pub fn sharp_energy<T: Real>(u: &ScalarField<T>, prm: &ProblemParams<T>) -> T {
    energy_terms(u, prm).sharp()
}

/// `I_alpha(u) = int Phi(grad u) + int G((u - 1)/alpha) - lambda int (u - 1)_+^q / q`.
pub fn smooth_energy<T: Real>(u: &ScalarField<T>, prm: &ProblemParams<T>) -> T {
    let grid = u.grid();
    let rule = CellRule::new(prm.subcells);
    let diff = Diffusion::new(prm.p, prm.eps);
    let react = Reaction::new(prm);
    let mut dirichlet = T::zero();
    let mut nonlinear = T::zero();
    for j in 0..grid.ny() - 1 {
        for i in 0..grid.nx() - 1 {
            let g = u.cell_gradient(i, j);
            dirichlet += diff.density(g[0] * g[0] + g[1] * g[1]);
            let c = u.corners(i, j);
            if c.iter().all(|&v| v <= T::one()) {
                continue;
            }
            let mut acc = T::zero();
            for s in rule.shapes() {
                acc += react.density(CellRule::interpolate(s, &c));
            }
            nonlinear += acc * rule.weight();
        }
    }
    (dirichlet + nonlinear) * grid.cell_area()
}

/// Adds the p-Laplacian part of the residual, `sum_cells flux . dgrad/du_n`,
/// into `out` (unfolded nodal array).
pub(crate) fn accumulate_diffusion<T: Real>(u: &ScalarField<T>, p: T, eps: T, out: &mut [T]) {
    let grid = u.grid();
    let diff = Diffusion::new(p, eps);
    let st = gradient_stencil(grid);
    for j in 0..grid.ny() - 1 {
        for i in 0..grid.nx() - 1 {
            let g = u.cell_gradient(i, j);
            let w = diff.weight(g[0] * g[0] + g[1] * g[1]);
            let f = [w * g[0], w * g[1]];
            let local = [
                f[0] * st[0][0] + f[1] * st[0][1],
                f[0] * st[1][0] + f[1] * st[1][1],
                f[0] * st[2][0] + f[1] * st[2][1],
                f[0] * st[3][0] + f[1] * st[3][1],
            ];
            scatter(out, &grid.cell_nodes(i, j), &local);
        }
    }
}

/// Adds `sum_points w * f(u_k) * N_n(k)` per node into `out` for cells
/// where some corner exceeds 1 (every pointwise term vanishes below 1).
pub(crate) fn accumulate_pointwise<T: Real>(
    u: &ScalarField<T>,
    subcells: usize,
    f: impl Fn(T) -> T,
    out: &mut [T],
) {
    let grid = u.grid();
    let rule = CellRule::new(subcells);
    for j in 0..grid.ny() - 1 {
        for i in 0..grid.nx() - 1 {
            let c = u.corners(i, j);
            if c.iter().all(|&v| v <= T::one()) {
                continue;
            }
            let mut local = [T::zero(); 4];
            for s in rule.shapes() {
                let val = f(CellRule::interpolate(s, &c));
                if val != T::zero() {
                    for k in 0..4 {
                        local[k] += val * s[k];
                    }
                }
            }
            for v in local.iter_mut() {
                *v *= rule.weight();
            }
            scatter(out, &grid.cell_nodes(i, j), &local);
        }
    }
}

/// Discrete residual of the smoothed problem: the gradient of
/// [`smooth_energy`] with respect to the unknowns, divided by the cell
/// area. Fixed nodes carry zero.
pub fn smooth_gradient<T: Real>(u: &ScalarField<T>, prm: &ProblemParams<T>) -> ScalarField<T> {
    let grid = *u.grid();
    let mut out = vec![T::zero(); grid.node_count()];
    accumulate_diffusion(u, prm.p, prm.eps, &mut out);
    let react = Reaction::new(prm);
    accumulate_pointwise(u, prm.subcells, |v| react.source(v), &mut out);
    grid.fold(&mut out);
    ScalarField::from_raw(grid, out)
}

/// Discrete `-Delta_p u` alone (the diffusion part of [`smooth_gradient`]).
pub fn p_laplacian_residual<T: Real>(u: &ScalarField<T>, p: T, eps: T) -> ScalarField<T> {
    let grid = *u.grid();
    let mut out = vec![T::zero(); grid.node_count()];
    accumulate_diffusion(u, p, eps, &mut out);
    grid.fold(&mut out);
    ScalarField::from_raw(grid, out)
}

/// Nodal load `lambda (u - 1)_+^(q-1)` distributed with the same point rule
/// as [`smooth_gradient`].
pub fn nodal_load<T: Real>(u: &ScalarField<T>, prm: &ProblemParams<T>) -> ScalarField<T> {
    let grid = *u.grid();
    let mut out = vec![T::zero(); grid.node_count()];
    let react = Reaction::new(prm);
    accumulate_pointwise(u, prm.subcells, |v| react.load(v), &mut out);
    grid.fold(&mut out);
    ScalarField::from_raw(grid, out)
}

/// Second variation of a cell-based energy, frozen at a state and applied
/// matrix-free. Acts on unknown vectors (see [`Grid2D::dof_nodes`]) and
/// returns `H v / |cell|`.
#[derive(Debug, Clone)]
pub struct HessianOperator<T> {
    grid: Grid2D<T>,
    /// Per-cell tangent tensor `[xx, xy, yy]` of the diffusion term.
    tensors: Vec<[T; 3]>,
    /// Cells with a pointwise term: cell index, node indices and the
    /// symmetric 4x4 local matrix in packed upper-triangular order.
    reaction: Vec<(usize, [usize; 4], [T; 10])>,
}

#[inline]
fn packed(a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    // rows: 0 -> 0..4, 1 -> 4..7, 2 -> 7..9, 3 -> 9
    [0, 4, 7, 9][a] + (b - a)
}

impl<T: Real> HessianOperator<T> {
    /// Hessian of the smoothed energy at `u`.
    pub fn new(u: &ScalarField<T>, prm: &ProblemParams<T>) -> Self {
        let react = Reaction::new(prm);
        let mut op = Self::diffusion_only(u, prm.p, prm.eps);
        let grid = *u.grid();
        let rule = CellRule::new(prm.subcells);
        for j in 0..grid.ny() - 1 {
            for i in 0..grid.nx() - 1 {
                let c = u.corners(i, j);
                if c.iter().all(|&v| v <= T::one()) {
                    continue;
                }
                let mut m = [T::zero(); 10];
                let mut any = false;
                for s in rule.shapes() {
                    let k = react.curvature(CellRule::interpolate(s, &c));
                    if k == T::zero() {
                        continue;
                    }
                    any = true;
                    for a in 0..4 {
                        for b in a..4 {
                            m[packed(a, b)] += k * s[a] * s[b];
                        }
                    }
                }
                if any {
                    for v in m.iter_mut() {
                        *v *= rule.weight();
                    }
                    op.reaction.push((grid.cell(i, j), grid.cell_nodes(i, j), m));
                }
            }
        }
        op
    }

    /// Hessian of `int Phi(grad u)` alone; with `p = 2` this is the
    /// discrete Dirichlet Laplacian.
    pub fn diffusion_only(u: &ScalarField<T>, p: T, eps: T) -> Self {
        let grid = *u.grid();
        let diff = Diffusion::new(p, eps);
        let mut tensors = Vec::with_capacity(grid.cell_count());
        for j in 0..grid.ny() - 1 {
            for i in 0..grid.nx() - 1 {
                tensors.push(diff.tensor(u.cell_gradient(i, j)));
            }
        }
        Self {
            grid,
            tensors,
            reaction: Vec::new(),
        }
    }

    /// Discrete Laplacian `-Delta_h` on `grid`.
    pub fn laplacian(grid: Grid2D<T>) -> Self {
        Self {
            grid,
            tensors: vec![[T::one(), T::zero(), T::one()]; grid.cell_count()],
            reaction: Vec::new(),
        }
    }

    pub fn grid(&self) -> &Grid2D<T> {
        &self.grid
    }

    /// Applies the operator to a nodal array (boundary-consistent) and
    /// returns the folded nodal result.
    pub fn apply_nodal(&self, x: &[T]) -> Vec<T> {
        let grid = &self.grid;
        let st = gradient_stencil(grid);
        let mut y = vec![T::zero(); grid.node_count()];
        let half = lit::<T>(0.5);
        let (ax, ay) = (half / grid.hx(), half / grid.hy());
        let mut c = 0;
        for j in 0..grid.ny() - 1 {
            for i in 0..grid.nx() - 1 {
                let nodes = grid.cell_nodes(i, j);
                let v = [x[nodes[0]], x[nodes[1]], x[nodes[2]], x[nodes[3]]];
                let gx = ax * ((v[1] - v[0]) + (v[3] - v[2]));
                let gy = ay * ((v[2] - v[0]) + (v[3] - v[1]));
                let a = &self.tensors[c];
                let fx = a[0] * gx + a[1] * gy;
                let fy = a[1] * gx + a[2] * gy;
                for k in 0..4 {
                    y[nodes[k]] += fx * st[k][0] + fy * st[k][1];
                }
                c += 1;
            }
        }
        for (_, nodes, m) in &self.reaction {
            let v = [x[nodes[0]], x[nodes[1]], x[nodes[2]], x[nodes[3]]];
            for a in 0..4 {
                let mut acc = T::zero();
                for b in 0..4 {
                    acc += m[packed(a, b)] * v[b];
                }
                y[nodes[a]] += acc;
            }
        }
        grid.fold(&mut y);
        y
    }

    pub fn apply_field(&self, v: &ScalarField<T>) -> ScalarField<T> {
        ScalarField::from_raw(self.grid, self.apply_nodal(v.values()))
    }

    /// Diagonal of the operator in unknown order.
    pub fn diagonal(&self) -> Vec<T> {
        let grid = &self.grid;
        let st = gradient_stencil(grid);
        let mut d = vec![T::zero(); grid.node_count()];
        let mut c = 0;
        for j in 0..grid.ny() - 1 {
            for i in 0..grid.nx() - 1 {
                let nodes = grid.cell_nodes(i, j);
                let a = &self.tensors[c];
                for k in 0..4 {
                    let [sx, sy] = st[k];
                    d[nodes[k]] += a[0] * sx * sx + lit::<T>(2.0) * a[1] * sx * sy + a[2] * sy * sy;
                }
                c += 1;
            }
        }
        for (_, nodes, m) in &self.reaction {
            for a in 0..4 {
                d[nodes[a]] += m[packed(a, a)];
            }
        }
        grid.fold(&mut d);
        grid.dof_nodes().map(|n| d[n]).collect()
    }

    /// Number of cells carrying a pointwise term.
    pub fn reaction_cells(&self) -> usize {
        self.reaction.len()
    }
}

impl<T: Real> LinearOperator<T> for HessianOperator<T> {
    fn dim(&self) -> usize {
        self.grid.dof_count()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        let mut nodal = vec![T::zero(); self.grid.node_count()];
        for (n, &v) in self.grid.dof_nodes().zip(x) {
            nodal[n] = v;
        }
        self.grid.sync(&mut nodal);
        let out = self.apply_nodal(&nodal);
        for (slot, n) in y.iter_mut().zip(self.grid.dof_nodes()) {
            *slot = out[n];
        }
    }
}

/// `<I''_alpha(u) v, .>` as a nodal array divided by the cell area.
pub fn hessian_vector<T: Real>(
    u: &ScalarField<T>,
    v: &ScalarField<T>,
    prm: &ProblemParams<T>,
) -> ScalarField<T> {
    HessianOperator::new(u, prm).apply_field(v)
}

/// Outcome of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Diverged,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Diverged => "diverged",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub u: ScalarField<T>,
    pub energy_smooth: T,
    pub energy_sharp: T,
    /// Sup-norm of the residual at `u`.
    pub residual_norm: T,
    pub iterations: usize,
    /// `None` when not computed.
    pub morse_index: Option<usize>,
    pub status: SolveStatus,
    /// Seed of any random initialization that produced `u`.
    pub seed: Option<u64>,
}

impl<T: Real> SolveReport<T> {
    pub(crate) fn build(
        u: ScalarField<T>,
        prm: &ProblemParams<T>,
        residual_norm: T,
        iterations: usize,
        status: SolveStatus,
    ) -> Self {
        let t = energy_terms(&u, prm);
        Self {
            u,
            energy_smooth: t.smooth(),
            energy_sharp: t.sharp(),
            residual_norm,
            iterations,
            morse_index: None,
            status,
            seed: None,
        }
    }

    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_grid;

    fn params() -> ProblemParams<f64> {
        ProblemParams::new(2.0, 3.0, 10.0, 0.25).unwrap()
    }

    fn bump(n: usize, amp: f64) -> ScalarField<f64> {
        let g = make_grid(n, n, 1.0f64, 1.0).unwrap();
        let pi = std::f64::consts::PI;
        ScalarField::from_fn(g, move |x, y| amp * (pi * x).sin() * (pi * y).sin())
    }

    #[test]
    fn param_validation() {
        assert!(ProblemParams::new(2.0, 3.0, 1.0, 0.5).is_ok());
        assert!(matches!(
            ProblemParams::new(3.0, 3.0, 1.0, 0.5),
            Err(ParamError::ExponentOrder { .. })
        ));
        assert!(matches!(
            ProblemParams::new(1.0, 3.0, 1.0, 0.5),
            Err(ParamError::PTooSmall(_))
        ));
        // p = 1.5: critical exponent 6
        assert!(ProblemParams::new(1.5, 5.9, 1.0, 0.5).is_ok());
        assert!(matches!(
            ProblemParams::new(1.5, 6.0, 1.0, 0.5),
            Err(ParamError::Supercritical { .. })
        ));
        assert!(ProblemParams::new(2.0, 3.0, -1.0, 0.5).is_err());
        assert!(ProblemParams::new(2.0, 3.0, 1.0, 0.0).is_err());
        assert!(ProblemParams::new(2.0, 3.0, 1.0, 1.5).is_err());
        assert!(params().with_eps(0.0).is_ok());
        assert!(ProblemParams::new(3.0, 4.0, 1.0, 0.5)
            .unwrap()
            .with_eps(0.0)
            .is_err());
    }

    #[test]
    fn zero_field_is_critical() {
        let u = ScalarField::zeros(make_grid(9, 9, 1.0f64, 1.0).unwrap());
        for prm in [params(), params().with_lambda(1e3).unwrap()] {
            assert_eq!(smooth_energy(&u, &prm), 0.0);
            assert_eq!(sharp_energy(&u, &prm), 0.0);
            assert!(smooth_gradient(&u, &prm).values().iter().all(|&r| r == 0.0));
        }
    }

    #[test]
    fn below_one_only_dirichlet_term_survives() {
        let u = bump(17, 0.999);
        let prm = params();
        let t = energy_terms(&u, &prm);
        assert_eq!(t.indicator_smooth, 0.0);
        assert_eq!(t.indicator_sharp, 0.0);
        assert_eq!(t.load, 0.0);
        assert!((sharp_energy(&u, &prm) - t.dirichlet_sharp).abs() < 1e-15);
        assert!((smooth_energy(&u, &prm) - t.dirichlet_smooth).abs() < 1e-15);
    }

    #[test]
    fn smooth_energy_matches_terms() {
        let u = bump(33, 2.0);
        let prm = params();
        let t = energy_terms(&u, &prm);
        assert!((t.smooth() - smooth_energy(&u, &prm)).abs() < 1e-12);
    }

    #[test]
    fn smooth_and_sharp_differ_by_band_at_most() {
        let u = bump(33, 2.0);
        for alpha in [0.25, 0.125] {
            let prm = params().with_alpha(alpha).unwrap();
            let t = energy_terms(&u, &prm);
            let gap = t.sharp() - t.smooth();
            assert!(gap >= -1e-12 && gap <= t.band_area + 1e-12, "{gap} {}", t.band_area);
        }
    }

    #[test]
    fn hessian_at_zero_is_laplacian() {
        let g = make_grid(9, 9, 1.0f64, 1.0).unwrap();
        let u = ScalarField::zeros(g);
        let v = ScalarField::from_fn(g, |x, y| (x * 7.0).sin() * y * (1.0 - y));
        let hv = hessian_vector(&u, &v, &params().with_lambda(50.0).unwrap());
        let lv = HessianOperator::laplacian(g).apply_field(&v);
        for (a, b) in hv.values().iter().zip(lv.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_matches_unit_vectors() {
        let u = bump(7, 1.6);
        let prm = ProblemParams::new(3.0, 4.0, 5.0, 0.5).unwrap();
        let op = HessianOperator::new(&u, &prm);
        assert!(op.reaction_cells() > 0);
        let d = op.diagonal();
        let n = op.dim();
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let mut y = vec![0.0; n];
            op.apply(&e, &mut y);
            assert!((y[k] - d[k]).abs() < 1e-9 * d[k].abs().max(1.0));
        }
    }

    #[test]
    fn packed_indices_cover_upper_triangle() {
        let mut seen = [false; 10];
        for a in 0..4 {
            for b in a..4 {
                seen[packed(a, b)] = true;
                assert_eq!(packed(a, b), packed(b, a));
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
