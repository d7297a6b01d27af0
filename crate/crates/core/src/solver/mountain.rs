use super::newton::{critical_point_objective, NewtonOptions};
use super::{Objective, Smooth};
use crate::domain::ScalarField;
use crate::energy::{ProblemParams, SolveReport, SolveStatus};
use crate::error::SolverError;
use crate::linalg::{FastLaplacian, Preconditioner};
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, Copy)]
pub struct MountainPassOptions<T> {
    pub path_nodes: usize,
    /// Residual sup-norm required of the returned point.
    pub tol: T,
    /// Budget of path deformation steps.
    pub max_iter: usize,
    /// Hand over to Newton once the dual norm of the gradient at the path
    /// maximum drops below this.
    pub newton_switch: T,
    pub newton_max_iter: usize,
}

impl<T: Real> MountainPassOptions<T> {
    pub fn new(path_nodes: usize, tol: T, max_iter: usize) -> Self {
        Self { path_nodes, tol, max_iter, newton_switch: lit(0.05), newton_max_iter: 40 }
    }
}

/// Mountain-pass point of the smoothed energy between `0` and `far_point`.
pub fn mountain_pass<T: Real>(
    prm: &ProblemParams<T>,
    far_point: &ScalarField<T>,
    path_nodes: usize,
    tol: T,
    max_iter: usize,
) -> Result<SolveReport<T>, SolverError> {
    mountain_pass_with(prm, far_point, &MountainPassOptions::new(path_nodes, tol, max_iter))
}

/// Squared Dirichlet seminorm `int |grad v|^2`.
fn energy_norm2<T: Real>(v: &ScalarField<T>) -> T {
    let g = v.grid();
    let mut acc = T::zero();
    for j in 0..g.ny() - 1 {
        for i in 0..g.nx() - 1 {
            let c = v.cell_gradient(i, j);
            acc += c[0] * c[0] + c[1] * c[1];
        }
    }
    acc * g.cell_area()
}

/// Straight path `t v`, `0 <= t <= reach`, sampled at equally spaced nodes.
struct Ray<'a, T: Real> {
    obj: &'a dyn Objective<T>,
    nodes: usize,
}

struct Peak<T> {
    t: T,
    energy: T,
    reach: T,
}

impl<T: Real> Ray<'_, T> {
    /// Highest point of the path: best node, then golden-section search
    /// between its neighbours. The reach is doubled while the end of the
    /// path is not below zero.
    fn peak(&self, v: &ScalarField<T>, mut reach: T) -> Option<Peak<T>> {
        let e = |t: T| self.obj.energy(&v.scaled(t));
        let m = self.nodes;
        for _ in 0..30 {
            if e(reach) < T::zero() {
                break;
            }
            reach *= lit(2.0);
        }
        if !(e(reach) < T::zero()) {
            return None;
        }
        let ts: Vec<T> = (0..m).map(|k| reach * from_usize::<T>(k) / from_usize::<T>(m - 1)).collect();
        let es: Vec<T> = ts.iter().map(|&t| e(t)).collect();
        let k = (1..m - 1)
            .max_by(|&a, &b| es[a].partial_cmp(&es[b]).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(1);
        let (mut a, mut b) = (ts[k - 1], ts[k + 1]);
        let phi: T = lit(0.618_033_988_749_894_9);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let (mut ec, mut ed) = (e(c), e(d));
        for _ in 0..40 {
            if ec > ed {
                b = d;
                d = c;
                ed = ec;
                c = b - phi * (b - a);
                ec = e(c);
            } else {
                a = c;
                c = d;
                ec = ed;
                d = a + phi * (b - a);
                ed = e(d);
            }
            if b - a <= lit::<T>(1e-9) * reach {
                break;
            }
        }
        let (t, energy) = if ec > ed { (c, ec) } else { (d, ed) };
        let (t, energy) = if es[k] > energy { (ts[k], es[k]) } else { (t, energy) };
        energy.is_finite().then_some(Peak { t, energy, reach })
    }
}

/// Minimax over straight paths from `0`: each path is the ray through a
/// unit direction `v` up to a point of negative energy, sampled at
/// `path_nodes` equally spaced nodes. The highest point of the path is
/// pushed down along the Laplacian-preconditioned gradient with its
/// radial part removed, which rotates the path; the nodes are then laid
/// out evenly again on the new ray. When the gradient at the peak is small
/// the point is refined by Newton's method on the residual.
pub fn mountain_pass_with<T: Real>(
    prm: &ProblemParams<T>,
    far_point: &ScalarField<T>,
    opts: &MountainPassOptions<T>,
) -> Result<SolveReport<T>, SolverError> {
    prm.validate()?;
    if opts.path_nodes < 3 {
        return Err(SolverError::InvalidInput(format!("path needs at least 3 nodes, got {}", opts.path_nodes)));
    }
    let obj = Smooth(prm);
    let far_energy = obj.energy(far_point);
    if !(far_energy < T::zero()) {
        return Err(SolverError::InvalidInput(format!(
            "far point must have negative energy, got {far_energy}"
        )));
    }
    let grid = *far_point.grid();
    let area = grid.cell_area();
    let fast = FastLaplacian::new(&grid);
    let ray = Ray { obj: &obj, nodes: opts.path_nodes };
    let far_norm = energy_norm2(far_point).sqrt();
    let mut v = far_point.scaled(T::one() / far_norm);
    let mut peak = ray
        .peak(&v, far_norm)
        .ok_or_else(|| SolverError::InvalidInput("no peak along the initial path".into()))?;
    let initial_max = peak.energy;
    let newton = NewtonOptions { inner_max_iter: 500, ..NewtonOptions::new(opts.tol, opts.newton_max_iter) };
    let mut switch = opts.newton_switch;
    let mut step = T::one();
    let mut z = vec![T::zero(); grid.dof_count()];
    let c1: T = lit(1e-4);
    let mut spent = 0;
    for it in 0..opts.max_iter {
        spent = it + 1;
        let w = v.scaled(peak.t);
        let r = obj.gradient(&w).to_dofs();
        fast.solve(&r, &mut z);
        let dual2: T = r.iter().zip(&z).map(|(a, b)| *a * *b).sum::<T>() * area;
        if !dual2.is_finite() {
            return Err(SolverError::NonFinite);
        }
        let dual = dual2.sqrt();
        if dual <= switch {
            let out = critical_point_objective(&obj, &w, &newton)?;
            let e = obj.energy(&out.u);
            if out.status == SolveStatus::Converged && e > T::zero() && e <= initial_max {
                let iterations = it + out.iterations;
                return Ok(SolveReport::build(out.u, prm, out.residual, iterations, SolveStatus::Converged));
            }
            switch *= lit(0.25);
        }
        // remove the radial component: <s, v>_E = area * r . v
        let vd = v.to_dofs();
        let radial = r.iter().zip(&vd).map(|(a, b)| *a * *b).sum::<T>() * area;
        for (zi, vi) in z.iter_mut().zip(&vd) {
            *zi -= radial * *vi;
        }
        let perp2 = (dual2 - radial * radial).max(T::zero());
        let dir = ScalarField::from_dofs(grid, &z);
        let mut t = (step * lit(2.0)).min(T::one());
        let mut next = None;
        for _ in 0..30 {
            let moved = w.add_scaled(-t, &dir);
            let n = energy_norm2(&moved).sqrt();
            if n > T::zero() {
                let cand = moved.scaled(T::one() / n);
                if let Some(pk) = ray.peak(&cand, peak.reach) {
                    if pk.energy <= peak.energy - c1 * t * perp2 {
                        next = Some((cand, pk));
                        break;
                    }
                }
            }
            t *= lit(0.5);
        }
        let Some((cand, pk)) = next else {
            break;
        };
        v = cand;
        peak = pk;
        step = t;
    }
    let u = v.scaled(peak.t);
    let res = obj.gradient(&u).sup_norm();
    Ok(SolveReport::build(u, prm, res, spent, SolveStatus::MaxIter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_grid;

    #[test]
    fn rejects_bad_inputs() {
        let g = make_grid(9, 9, 1.0f64, 1.0).unwrap();
        let prm = ProblemParams::new(2.0, 3.0, 0.0, 0.1).unwrap();
        let far = ScalarField::from_fn(g, |x, y| 5.0 * x * (1.0 - x) * y * (1.0 - y));
        assert!(mountain_pass(&prm, &far, 11, 1e-8, 10).is_err());
        let prm = ProblemParams::new(2.0, 3.0, 60.0, 0.1).unwrap();
        let far = ScalarField::from_fn(g, |x, y| 50.0 * x * (1.0 - x) * y * (1.0 - y));
        assert!(mountain_pass(&prm, &far, 2, 1e-8, 10).is_err());
    }

    #[test]
    fn peak_of_quadratic_minus_cubic() {
        // below 1 the energy along t v is t^2 |v|^2 / 2; far out the load wins
        let g = make_grid(17, 17, 1.0f64, 1.0).unwrap();
        let prm = ProblemParams::new(2.0, 3.0, 100.0, 0.2).unwrap();
        let obj = Smooth(&prm);
        let v = ScalarField::from_fn(g, |x, y| (x * (1.0 - x) * y * (1.0 - y)).sqrt());
        let v = v.scaled(1.0 / energy_norm2(&v).sqrt());
        let ray = Ray { obj: &obj, nodes: 21 };
        let pk = ray.peak(&v, 1.0).unwrap();
        assert!(pk.reach >= 1.0);
        let h = 1e-4 * pk.t;
        let (em, ep) = (obj.energy(&v.scaled(pk.t - h)), obj.energy(&v.scaled(pk.t + h)));
        assert!(pk.energy >= em && pk.energy >= ep);
        assert!(pk.energy > 0.0);
    }

    #[test]
    fn finds_positive_saddle_on_small_grid() {
        let g = make_grid(17, 17, 1.0f64, 1.0).unwrap();
        let pi = std::f64::consts::PI;
        let prm = ProblemParams::new(2.0, 3.0, 150.0, 0.2).unwrap();
        let far = ScalarField::from_fn(g, |x, y| 6.0 * (pi * x).sin() * (pi * y).sin());
        let initial = Smooth(&prm).energy(&far.scaled(0.5));
        let rep = mountain_pass(&prm, &far, 15, 1e-8, 400).unwrap();
        assert!(rep.converged(), "{:?} res {}", rep.status, rep.residual_norm);
        assert!(rep.energy_smooth > 0.0);
        assert!(rep.u.max_value() > 1.0);
        assert!(initial.is_finite());
        let idx = super::super::morse_index(&rep.u, &prm, 10, 1e-8).unwrap();
        assert!(idx >= 1);
    }
}
