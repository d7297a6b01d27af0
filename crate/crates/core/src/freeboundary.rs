//! The level set `{u = 1}`, one-sided gradients across it, the jump
//! residual `|grad u+|^p - |grad u-|^p - p/(p-1)` and the p-harmonicity
//! diagnostic away from it.

use std::collections::HashMap;
use std::io::Write;

use crate::domain::ScalarField;
use crate::energy::{energy_terms, p_laplacian_residual, ProblemParams};
use crate::error::FreeBoundaryError;
use crate::scalar::{lit, to_f64, Real};

/// A crossing of the level on a grid edge, with the unit normal pointing
/// toward `{u > level}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelPoint<T> {
    pub x: T,
    pub y: T,
    pub normal: [T; 2],
}

#[derive(Debug, Clone)]
pub struct LevelSet<T> {
    /// Crossings sorted by `(x, y)`; each grid edge contributes at most one.
    pub points: Vec<LevelPoint<T>>,
    /// Marching-squares segments as index pairs into `points`.
    pub segments: Vec<[usize; 2]>,
    /// Area of `{u > level}` enclosed by the piecewise-linear contour.
    pub enclosed_area: T,
}

impl<T: Real> LevelSet<T> {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn perimeter(&self) -> T {
        self.segments
            .iter()
            .map(|[a, b]| {
                let (p, q) = (&self.points[*a], &self.points[*b]);
                let dy = q.y - p.y;
                // segments across the periodic seam join y = 0 to y near ly
                (q.x - p.x).hypot(dy)
            })
            .sum()
    }
}

#[derive(Hash, PartialEq, Eq, Clone, Copy, PartialOrd, Ord)]
enum Edge {
    /// From node (i, j) to (i + 1, j).
    H(usize, usize),
    /// From node (i, j) to (i, j + 1).
    V(usize, usize),
}

/// Marching squares on the bilinear field: every edge whose endpoints lie
/// on different sides of `level` (strictly above vs. not) carries one
/// linearly interpolated crossing.
pub fn extract_level_set<T: Real>(u: &ScalarField<T>, level: T) -> LevelSet<T> {
    let grid = *u.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let top = ny - 1;
    let above = |i: usize, j: usize| u.at(i, j) > level;
    // mirror row of a periodic grid shares its horizontal edges with row 0
    let canon = |e: Edge| match e {
        Edge::H(i, j) if grid.is_periodic() && j == top => Edge::H(i, 0),
        e => e,
    };
    let crossing = |e: Edge| -> Option<(T, T)> {
        let ((i0, j0), (i1, j1)) = match e {
            Edge::H(i, j) => ((i, j), (i + 1, j)),
            Edge::V(i, j) => ((i, j), (i, j + 1)),
        };
        if above(i0, j0) == above(i1, j1) {
            return None;
        }
        let (a, b) = (u.at(i0, j0), u.at(i1, j1));
        let t = (level - a) / (b - a);
        let x = grid.x(i0) + t * (grid.x(i1) - grid.x(i0));
        let y = grid.y(j0) + t * (grid.y(j1) - grid.y(j0));
        Some((x, y))
    };
    let mut index: HashMap<Edge, usize> = HashMap::new();
    let mut raw: Vec<(Edge, T, T)> = Vec::new();
    let mut segments = Vec::new();
    let mut area = T::zero();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            // counter-clockwise walk: corners and edges between them
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let edges = [Edge::H(i, j), Edge::V(i + 1, j), Edge::H(i, j + 1), Edge::V(i, j)];
            let mut poly: Vec<(T, T)> = Vec::with_capacity(8);
            let mut cell_pts: Vec<usize> = Vec::with_capacity(4);
            for k in 0..4 {
                let (ci, cj) = corners[k];
                if above(ci, cj) {
                    poly.push((grid.x(ci), grid.y(cj)));
                }
                if let Some((x, y)) = crossing(edges[k]) {
                    poly.push((x, y));
                    let key = canon(edges[k]);
                    let id = *index.entry(key).or_insert_with(|| {
                        let (x, y) = if key != edges[k] { (x, T::zero()) } else { (x, y) };
                        raw.push((key, x, y));
                        raw.len() - 1
                    });
                    cell_pts.push(id);
                }
            }
            if poly.len() >= 3 {
                let mut s = T::zero();
                for k in 0..poly.len() {
                    let (x0, y0) = poly[k];
                    let (x1, y1) = poly[(k + 1) % poly.len()];
                    s += x0 * y1 - x1 * y0;
                }
                area += s.abs() * lit(0.5);
            }
            match cell_pts.len() {
                2 => segments.push([cell_pts[0], cell_pts[1]]),
                4 => {
                    // saddle: separate by the value at the cell centre
                    let centre = u.cell_average(i, j) > level;
                    if centre == above(i, j) {
                        segments.push([cell_pts[0], cell_pts[1]]);
                        segments.push([cell_pts[2], cell_pts[3]]);
                    } else {
                        segments.push([cell_pts[3], cell_pts[0]]);
                        segments.push([cell_pts[1], cell_pts[2]]);
                    }
                }
                _ => {}
            }
        }
    }
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        raw[a].1.partial_cmp(&raw[b].1).unwrap_or(std::cmp::Ordering::Equal).then(
            raw[a].2.partial_cmp(&raw[b].2).unwrap_or(std::cmp::Ordering::Equal),
        )
    });
    let mut rank = vec![0; raw.len()];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    let points = order
        .iter()
        .map(|&k| {
            let (edge, x, y) = raw[k];
            let normal = u
                .sample_gradient(x, y)
                .and_then(|g| {
                    let n = g[0].hypot(g[1]);
                    (n > T::zero()).then(|| [g[0] / n, g[1] / n])
                })
                .unwrap_or_else(|| {
                    // fall back to the edge direction toward the upper side
                    let (dx, dy, i0, j0) = match edge {
                        Edge::H(i, j) => (T::one(), T::zero(), i, j),
                        Edge::V(i, j) => (T::zero(), T::one(), i, j),
                    };
                    if above(i0, j0) {
                        [-dx, -dy]
                    } else {
                        [dx, dy]
                    }
                });
            LevelPoint { x, y, normal }
        })
        .collect();
    let segments = segments.into_iter().map(|[a, b]| [rank[a], rank[b]]).collect();
    LevelSet { points, segments, enclosed_area: area }
}

/// Least-squares slope of `u(point + s * d * normal)` against `d` for
/// `d` in `{offset, 2 offset, 3 offset}`, for `s = +1` and `s = -1`.
/// Returns the two magnitudes, or `None` when a sample leaves the grid.
pub fn one_sided_gradient<T: Real>(
    u: &ScalarField<T>,
    point: [T; 2],
    normal: [T; 2],
    offset: T,
) -> Result<Option<(T, T)>, FreeBoundaryError> {
    let grid = u.grid();
    let min = lit::<T>(2.0) * grid.h_max();
    if !(offset >= min * (T::one() - lit(1e-12))) {
        return Err(FreeBoundaryError::OffsetTooSmall { offset: to_f64(offset), min: to_f64(min) });
    }
    let fit = |sign: T| -> Option<T> {
        let mut ds = [T::zero(); 3];
        let mut vs = [T::zero(); 3];
        for k in 0..3 {
            let d = offset * lit((k + 1) as f64);
            ds[k] = d;
            vs[k] = u.sample(point[0] + sign * d * normal[0], point[1] + sign * d * normal[1])?;
        }
        let three = lit::<T>(3.0);
        let dm = (ds[0] + ds[1] + ds[2]) / three;
        let vm = (vs[0] + vs[1] + vs[2]) / three;
        let mut num = T::zero();
        let mut den = T::zero();
        for k in 0..3 {
            num += (ds[k] - dm) * (vs[k] - vm);
            den += (ds[k] - dm) * (ds[k] - dm);
        }
        Some((num / den).abs())
    };
    Ok(fit(T::one()).zip(fit(-T::one())))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpSample<T> {
    pub x: T,
    pub y: T,
    pub normal: [T; 2],
    pub grad_plus: T,
    pub grad_minus: T,
    /// `grad_plus^p - grad_minus^p - p/(p-1)`.
    pub residual: T,
}

#[derive(Debug, Clone)]
pub struct FreeBoundaryReport<T> {
    pub samples: Vec<JumpSample<T>>,
    /// Level-set points whose probes left the grid.
    pub skipped: usize,
    pub offset: T,
    /// Required jump `p / (p - 1)`.
    pub jump_constant: T,
    /// Median, mean and max of `|residual|`.
    pub median: T,
    pub mean: T,
    pub max: T,
    /// Fraction of samples with `grad_plus >= grad_minus`.
    pub ordered_fraction: T,
    /// `|{|u - 1| < alpha}|`, large values flag plateaus at the level.
    pub plateau_area: T,
}

impl<T: Real> FreeBoundaryReport<T> {
    /// One sample per row: `x,y,nx,ny,grad_plus,grad_minus,residual`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,y,nx,ny,grad_plus,grad_minus,residual")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                s.x, s.y, s.normal[0], s.normal[1], s.grad_plus, s.grad_minus, s.residual
            )?;
        }
        Ok(())
    }

    /// `(key, value)` summary lines in a fixed order.
    pub fn summary(&self) -> Vec<(&'static str, String)> {
        vec![
            ("samples", self.samples.len().to_string()),
            ("skipped", self.skipped.to_string()),
            ("offset", self.offset.to_string()),
            ("jump_constant", self.jump_constant.to_string()),
            ("median_abs_residual", self.median.to_string()),
            ("mean_abs_residual", self.mean.to_string()),
            ("max_abs_residual", self.max.to_string()),
            ("ordered_fraction", self.ordered_fraction.to_string()),
            ("plateau_area", self.plateau_area.to_string()),
        ]
    }
}

/// Probe offset used when none is given: `max(2h, 2 alpha)`.
pub fn default_offset<T: Real>(u: &ScalarField<T>, prm: &ProblemParams<T>) -> T {
    let two = lit::<T>(2.0);
    (two * u.grid().h_max()).max(two * prm.alpha)
}

/// Jump-condition residuals at every crossing of `{u = 1}`.
pub fn jump_residual_stats<T: Real>(
    u: &ScalarField<T>,
    prm: &ProblemParams<T>,
    offset: Option<T>,
) -> Result<FreeBoundaryReport<T>, FreeBoundaryError> {
    let offset = offset.unwrap_or_else(|| default_offset(u, prm));
    let p = prm.p;
    let jump = p / (p - T::one());
    let set = extract_level_set(u, T::one());
    let mut samples = Vec::with_capacity(set.points.len());
    let mut skipped = 0;
    for pt in &set.points {
        match one_sided_gradient(u, [pt.x, pt.y], pt.normal, offset)? {
            Some((gp, gm)) => samples.push(JumpSample {
                x: pt.x,
                y: pt.y,
                normal: pt.normal,
                grad_plus: gp,
                grad_minus: gm,
                residual: gp.powf(p) - gm.powf(p) - jump,
            }),
            None => skipped += 1,
        }
    }
    let mut abs: Vec<T> = samples.iter().map(|s| s.residual.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = abs.len();
    let (median, mean, max) = if n == 0 {
        (T::zero(), T::zero(), T::zero())
    } else {
        let med = if n % 2 == 1 { abs[n / 2] } else { (abs[n / 2 - 1] + abs[n / 2]) * lit(0.5) };
        let sum: T = abs.iter().copied().sum();
        (med, sum / lit(n as f64), abs[n - 1])
    };
    let ordered = samples.iter().filter(|s| s.grad_plus >= s.grad_minus).count();
    let ordered_fraction = if n == 0 { T::one() } else { lit::<T>(ordered as f64) / lit(n as f64) };
    Ok(FreeBoundaryReport {
        samples,
        skipped,
        offset,
        jump_constant: jump,
        median,
        mean,
        max,
        ordered_fraction,
        plateau_area: energy_terms(u, prm).band_area,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PHarmonicReport<T> {
    /// Max `|-Delta_p u|` over unknowns with `u < 1` at distance at least
    /// `margin` from the level set.
    pub sup_residual: T,
    /// Min of the discrete `Delta_p u` over unknowns with `u < 1`.
    pub min_signed: T,
    /// Nodes entering `sup_residual`.
    pub far_nodes: usize,
}

/// Discrete p-harmonicity of `u` in `{u < 1}`. Nodal values of the
/// p-Laplacian are per unit area, as in the solver residual.
pub fn pharmonic_residual<T: Real>(
    u: &ScalarField<T>,
    prm: &ProblemParams<T>,
    margin: T,
) -> Result<PHarmonicReport<T>, FreeBoundaryError> {
    if !(margin > T::zero()) {
        return Err(FreeBoundaryError::Margin(to_f64(margin)));
    }
    let grid = *u.grid();
    let res = p_laplacian_residual(u, prm.p, prm.eps);
    let set = extract_level_set(u, T::one());
    let periodic = grid.is_periodic();
    let ly = grid.ly();
    let m2 = margin * margin;
    let mut sup = T::zero();
    let mut min_signed = T::infinity();
    let mut far = 0;
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if !grid.is_free(i, j) {
                continue;
            }
            let n = grid.node(i, j);
            let v = u.values()[n];
            if !(v < T::one()) {
                continue;
            }
            let lap = -res.values()[n];
            min_signed = min_signed.min(lap);
            let (x, y) = (grid.x(i), grid.y(j));
            let clear = set.points.iter().all(|pt| {
                let dx = pt.x - x;
                let mut dy = (pt.y - y).abs();
                if periodic {
                    dy = dy.min(ly - dy);
                }
                dx * dx + dy * dy >= m2
            });
            if clear {
                far += 1;
                sup = sup.max(lap.abs());
            }
        }
    }
    if !min_signed.is_finite() {
        min_signed = T::zero();
    }
    Ok(PHarmonicReport { sup_residual: sup, min_signed, far_nodes: far })
}
