//! Uniform tensor grids on rectangles, nodal fields, cell gradients and
//! cell quadrature.
//!
//! Nodes are stored row-major: node `(i, j)` with `i` along x (fastest) and
//! `j` along y lives at index `j * nx + i`. Cell `(i, j)` spans nodes
//! `(i, j)`, `(i + 1, j)`, `(i, j + 1)`, `(i + 1, j + 1)` and lives at index
//! `j * (nx - 1) + i`.

use std::io::{BufRead, Write};

use crate::error::{FieldIoError, GridError};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Boundary treatment of a [`Grid2D`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Homogeneous Dirichlet data on all four sides.
    #[default]
    Dirichlet,
    /// Dirichlet on `x = 0` and `x = lx`, periodic in `y`. Row `ny - 1`
    /// duplicates row `0`. Used for slab (y-independent) configurations.
    PeriodicY,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D<T> {
    nx: usize,
    ny: usize,
    lx: T,
    ly: T,
    hx: T,
    hy: T,
    boundary: Boundary,
}

/// Builds a Dirichlet grid with `nx * ny` nodes over `[0, lx] x [0, ly]`.
pub fn make_grid<T: Real>(nx: usize, ny: usize, lx: T, ly: T) -> Result<Grid2D<T>, GridError> {
    Grid2D::new(nx, ny, lx, ly)
}

impl<T: Real> Grid2D<T> {
    pub fn new(nx: usize, ny: usize, lx: T, ly: T) -> Result<Self, GridError> {
        Self::with_boundary(nx, ny, lx, ly, Boundary::Dirichlet)
    }

    /// Grid that is periodic in `y`; see [`Boundary::PeriodicY`].
    pub fn slab(nx: usize, ny: usize, lx: T, ly: T) -> Result<Self, GridError> {
        Self::with_boundary(nx, ny, lx, ly, Boundary::PeriodicY)
    }

    pub fn with_boundary(
        nx: usize,
        ny: usize,
        lx: T,
        ly: T,
        boundary: Boundary,
    ) -> Result<Self, GridError> {
        if nx < 3 || ny < 3 {
            return Err(GridError::TooFewNodes { nx, ny });
        }
        if !(lx.is_finite() && ly.is_finite() && lx > T::zero() && ly > T::zero()) {
            return Err(GridError::BadExtent {
                lx: to_f64(lx),
                ly: to_f64(ly),
            });
        }
        Ok(Self {
            nx,
            ny,
            lx,
            ly,
            hx: lx / from_usize(nx - 1),
            hy: ly / from_usize(ny - 1),
            boundary,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> T {
        self.lx
    }
    pub fn ly(&self) -> T {
        self.ly
    }
    pub fn hx(&self) -> T {
        self.hx
    }
    pub fn hy(&self) -> T {
        self.hy
    }
    pub fn h_max(&self) -> T {
        self.hx.max(self.hy)
    }
    pub fn boundary(&self) -> Boundary {
        self.boundary
    }
    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::PeriodicY
    }

    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }
    pub fn cell_count(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }
    pub fn cell_area(&self) -> T {
        self.hx * self.hy
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        j * (self.nx - 1) + i
    }
    #[inline]
    pub fn x(&self, i: usize) -> T {
        from_usize::<T>(i) * self.hx
    }
    #[inline]
    pub fn y(&self, j: usize) -> T {
        from_usize::<T>(j) * self.hy
    }

    /// Node indices of the four corners of cell `(i, j)`, ordered
    /// `(i, j)`, `(i + 1, j)`, `(i, j + 1)`, `(i + 1, j + 1)`.
    #[inline]
    pub fn cell_nodes(&self, i: usize, j: usize) -> [usize; 4] {
        let n00 = self.node(i, j);
        [n00, n00 + 1, n00 + self.nx, n00 + self.nx + 1]
    }

    /// Rows holding independent unknowns.
    fn free_rows(&self) -> std::ops::Range<usize> {
        match self.boundary {
            Boundary::Dirichlet => 1..self.ny - 1,
            Boundary::PeriodicY => 0..self.ny - 1,
        }
    }

    /// Whether node `(i, j)` carries an independent unknown. Mirror rows of
    /// periodic grids are not free.
    pub fn is_free(&self, i: usize, j: usize) -> bool {
        i > 0 && i + 1 < self.nx && self.free_rows().contains(&j)
    }

    /// Whether node `(i, j)` is pinned to zero.
    pub fn is_fixed(&self, i: usize, j: usize) -> bool {
        match self.boundary {
            Boundary::Dirichlet => i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny,
            Boundary::PeriodicY => i == 0 || i + 1 == self.nx,
        }
    }

    pub fn dof_count(&self) -> usize {
        (self.nx - 2) * self.free_rows().len()
    }

    /// Node indices of the unknowns, in unknown order.
    pub fn dof_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.free_rows()
            .flat_map(move |j| (1..self.nx - 1).map(move |i| self.node(i, j)))
    }

    /// Makes a nodal array consistent with the boundary: zeroes fixed nodes
    /// and copies row 0 into the mirror row of periodic grids.
    pub fn sync(&self, values: &mut [T]) {
        for j in 0..self.ny {
            values[self.node(0, j)] = T::zero();
            values[self.node(self.nx - 1, j)] = T::zero();
        }
        match self.boundary {
            Boundary::Dirichlet => {
                for i in 0..self.nx {
                    values[self.node(i, 0)] = T::zero();
                    values[self.node(i, self.ny - 1)] = T::zero();
                }
            }
            Boundary::PeriodicY => {
                for i in 0..self.nx {
                    values[self.node(i, self.ny - 1)] = values[self.node(i, 0)];
                }
            }
        }
    }

    /// Turns per-node accumulated contributions into residual form: the
    /// mirror row of a periodic grid is added into row 0, then the array
    /// is synced.
    pub fn fold(&self, values: &mut [T]) {
        if self.is_periodic() {
            let top = self.ny - 1;
            for i in 0..self.nx {
                let extra = values[self.node(i, top)];
                values[self.node(i, 0)] += extra;
            }
        }
        self.sync(values);
    }

    /// Discrete L2 inner product of two nodal arrays: sum over unknowns
    /// times the cell area.
    pub fn inner(&self, a: &[T], b: &[T]) -> T {
        let mut acc = T::zero();
        for n in self.dof_nodes() {
            acc += a[n] * b[n];
        }
        acc * self.cell_area()
    }

    /// Largest absolute value over unknowns.
    pub fn sup_norm(&self, a: &[T]) -> T {
        self.dof_nodes().fold(T::zero(), |m, n| m.max(a[n].abs()))
    }

    /// Cell containing `(x, y)` and local coordinates in `[0, 1]^2`.
    /// `None` outside the domain (periodic grids wrap `y`).
    pub fn locate(&self, x: T, y: T) -> Option<(usize, usize, T, T)> {
        if !(x.is_finite() && y.is_finite()) {
            return None;
        }
        let y = if self.is_periodic() {
            let r = y % self.ly;
            if r < T::zero() {
                r + self.ly
            } else {
                r
            }
        } else {
            y
        };
        let tol = lit::<T>(1e-12) * (self.lx + self.ly);
        if x < -tol || x > self.lx + tol || y < -tol || y > self.ly + tol {
            return None;
        }
        let fx = (x / self.hx).max(T::zero());
        let fy = (y / self.hy).max(T::zero());
        let i = fx.floor().to_usize().unwrap_or(0).min(self.nx - 2);
        let j = fy.floor().to_usize().unwrap_or(0).min(self.ny - 2);
        let s = (fx - from_usize(i)).min(T::one());
        let t = (fy - from_usize(j)).min(T::one());
        Some((i, j, s, t))
    }
}

/// Nodal values of a function on a [`Grid2D`]. Fixed nodes hold zero and
/// periodic mirror rows match row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    grid: Grid2D<T>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn zeros(grid: Grid2D<T>) -> Self {
        Self {
            values: vec![T::zero(); grid.node_count()],
            grid,
        }
    }

    /// Samples `f(x, y)` at nodes; boundary nodes are forced to the
    /// boundary condition.
    pub fn from_fn(grid: Grid2D<T>, f: impl Fn(T, T) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.node_count());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), grid.y(j)));
            }
        }
        grid.sync(&mut values);
        Self { grid, values }
    }

    /// Wraps nodal values, checking every field invariant.
    pub fn from_values(grid: Grid2D<T>, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != grid.node_count() {
            return Err(GridError::SizeMismatch {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { node });
        }
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                let n = grid.node(i, j);
                if grid.is_fixed(i, j) && values[n] != T::zero() {
                    return Err(GridError::BoundaryNonzero {
                        node: n,
                        value: to_f64(values[n]),
                    });
                }
            }
        }
        if grid.is_periodic() {
            for i in 0..grid.nx() {
                if values[grid.node(i, 0)] != values[grid.node(i, grid.ny() - 1)] {
                    return Err(GridError::PeriodicMismatch { column: i });
                }
            }
        }
        Ok(Self { grid, values })
    }

    /// Wraps a nodal array after forcing boundary consistency.
    pub(crate) fn from_raw(grid: Grid2D<T>, mut values: Vec<T>) -> Self {
        grid.sync(&mut values);
        Self { grid, values }
    }

    pub fn from_dofs(grid: Grid2D<T>, dofs: &[T]) -> Self {
        let mut values = vec![T::zero(); grid.node_count()];
        for (n, &v) in grid.dof_nodes().zip(dofs) {
            values[n] = v;
        }
        grid.sync(&mut values);
        Self { grid, values }
    }

    pub fn to_dofs(&self) -> Vec<T> {
        self.grid.dof_nodes().map(|n| self.values[n]).collect()
    }

    pub fn grid(&self) -> &Grid2D<T> {
        &self.grid
    }
    pub fn values(&self) -> &[T] {
        &self.values
    }
    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[self.grid.node(i, j)]
    }

    #[inline]
    pub(crate) fn corners(&self, i: usize, j: usize) -> [T; 4] {
        let [a, b, c, d] = self.grid.cell_nodes(i, j);
        [self.values[a], self.values[b], self.values[c], self.values[d]]
    }

    /// `self + a * other`.
    pub fn add_scaled(&self, a: T, other: &Self) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| x + a * y)
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    pub fn scaled(&self, a: T) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&x| a * x).collect(),
        }
    }

    pub fn max_value(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |m, &v| m.max(v))
    }

    pub fn min_value(&self) -> T {
        self.values.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    pub fn sup_norm(&self) -> T {
        self.grid.sup_norm(&self.values)
    }

    /// Discrete L2 inner product with another field on the same grid.
    pub fn inner(&self, other: &Self) -> T {
        self.grid.inner(&self.values, &other.values)
    }

    /// Bilinear interpolation at `(x, y)`; `None` outside the domain.
    pub fn sample(&self, x: T, y: T) -> Option<T> {
        let (i, j, s, t) = self.grid.locate(x, y)?;
        let [u00, u10, u01, u11] = self.corners(i, j);
        let one = T::one();
        Some(
            (one - s) * (one - t) * u00
                + s * (one - t) * u10
                + (one - s) * t * u01
                + s * t * u11,
        )
    }

    /// Gradient of the bilinear interpolant at `(x, y)`.
    pub fn sample_gradient(&self, x: T, y: T) -> Option<[T; 2]> {
        let (i, j, s, t) = self.grid.locate(x, y)?;
        let [u00, u10, u01, u11] = self.corners(i, j);
        let one = T::one();
        let gx = ((one - t) * (u10 - u00) + t * (u11 - u01)) / self.grid.hx();
        let gy = ((one - s) * (u01 - u00) + s * (u11 - u10)) / self.grid.hy();
        Some([gx, gy])
    }

    /// Average of the four corner values of cell `(i, j)`.
    pub fn cell_average(&self, i: usize, j: usize) -> T {
        let [a, b, c, d] = self.corners(i, j);
        (a + b + c + d) * lit(0.25)
    }

    pub fn cell_gradient(&self, i: usize, j: usize) -> [T; 2] {
        let [u00, u10, u01, u11] = self.corners(i, j);
        let half = lit::<T>(0.5);
        [
            half * ((u10 - u00) + (u11 - u01)) / self.grid.hx(),
            half * ((u01 - u00) + (u11 - u10)) / self.grid.hy(),
        ]
    }

    /// Writes the field in the plain-text field format: a header line
    /// `nx,ny,lx,ly` (with a trailing `,periodic_y` for slab grids), then
    /// one nodal value per line in row-major order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let g = &self.grid;
        write!(w, "{},{},{},{}", g.nx(), g.ny(), g.lx(), g.ly())?;
        if g.is_periodic() {
            write!(w, ",periodic_y")?;
        }
        writeln!(w)?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, FieldIoError> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(FieldIoError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = header?;
        let parts: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        let bad = |msg: &str| FieldIoError::Parse {
            line: 1,
            msg: msg.to_string(),
        };
        if parts.len() != 4 && !(parts.len() == 5 && parts[4] == "periodic_y") {
            return Err(bad("expected header nx,ny,lx,ly"));
        }
        let nx: usize = parts[0].parse().map_err(|_| bad("bad nx"))?;
        let ny: usize = parts[1].parse().map_err(|_| bad("bad ny"))?;
        let lx = parse_real::<T>(parts[2]).ok_or_else(|| bad("bad lx"))?;
        let ly = parse_real::<T>(parts[3]).ok_or_else(|| bad("bad ly"))?;
        let boundary = if parts.len() == 5 {
            Boundary::PeriodicY
        } else {
            Boundary::Dirichlet
        };
        let grid = Grid2D::with_boundary(nx, ny, lx, ly, boundary)?;
        let mut values = Vec::with_capacity(grid.node_count());
        for (k, line) in lines {
            let line = line?;
            let s = line.trim();
            if s.is_empty() {
                continue;
            }
            let v = parse_real::<T>(s).ok_or_else(|| FieldIoError::Parse {
                line: k + 1,
                msg: format!("not a number: {s:?}"),
            })?;
            values.push(v);
        }
        Ok(Self::from_values(grid, values)?)
    }
}

pub(crate) fn parse_real<T: Real>(s: &str) -> Option<T> {
    s.parse::<f64>().ok().and_then(T::from_f64)
}

/// Cell-centered gradient of every cell, in cell order.
///
/// Each component averages the two one-sided differences along that axis,
/// so the result is exact for affine fields.
pub fn gradient_field<T: Real>(u: &ScalarField<T>) -> Vec<[T; 2]> {
    let g = u.grid();
    let mut out = Vec::with_capacity(g.cell_count());
    for j in 0..g.ny() - 1 {
        for i in 0..g.nx() - 1 {
            out.push(u.cell_gradient(i, j));
        }
    }
    out
}

/// Midpoint rule: sum of per-cell values times the cell area.
pub fn integrate_field<T: Real>(cells: &[T], grid: &Grid2D<T>) -> Result<T, GridError> {
    if cells.len() != grid.cell_count() {
        return Err(GridError::SizeMismatch {
            expected: grid.cell_count(),
            got: cells.len(),
        });
    }
    let sum: T = cells.iter().copied().sum();
    Ok(sum * grid.cell_area())
}

/// Tensor sub-cell midpoint rule on the unit cell: `s * s` points with
/// equal weights, each carrying the four bilinear shape values.
#[derive(Debug, Clone)]
pub struct CellRule<T> {
    shapes: Vec<[T; 4]>,
    weight: T,
}

impl<T: Real> CellRule<T> {
    pub fn new(subcells: usize) -> Self {
        let s = subcells.max(1);
        let sf = from_usize::<T>(s);
        let mut shapes = Vec::with_capacity(s * s);
        for b in 0..s {
            let eta = (from_usize::<T>(b) + lit(0.5)) / sf;
            for a in 0..s {
                let xi = (from_usize::<T>(a) + lit(0.5)) / sf;
                let one = T::one();
                shapes.push([
                    (one - xi) * (one - eta),
                    xi * (one - eta),
                    (one - xi) * eta,
                    xi * eta,
                ]);
            }
        }
        Self {
            shapes,
            weight: T::one() / (sf * sf),
        }
    }

    pub fn shapes(&self) -> &[[T; 4]] {
        &self.shapes
    }

    pub fn weight(&self) -> T {
        self.weight
    }

    #[inline]
    pub fn interpolate(shape: &[T; 4], corners: &[T; 4]) -> T {
        shape[0] * corners[0] + shape[1] * corners[1] + shape[2] * corners[2] + shape[3] * corners[3]
    }
}
