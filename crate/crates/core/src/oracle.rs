//! Shooting solver for the sharp problem on the slab `0 < x < 1`.
//!
//! The solution is symmetric about `x = 1/2`. Inside `{u > 1}` it solves
//! `-(|u'|^(p-2) u')' = lambda (u-1)^(q-1)`; outside it is linear. At the
//! interface the one-sided slopes satisfy
//! `slope_plus^p - slope_minus^p = p/(p-1)`.

use std::io::Write;

use crate::domain::ScalarField;
use crate::energy::ProblemParams;
use crate::error::OracleError;
use crate::scalar::{lit, to_f64, Real};

/// Longest step the ODE integrator may take.
const MAX_STEP: f64 = 1e-3;
const MAX_BISECTIONS: usize = 300;

/// Knot of the inner profile: distance `t` from the centre, value, slope `du/dt`.
#[derive(Debug, Clone, Copy)]
struct Knot<T> {
    t: T,
    u: T,
    du: T,
}

#[derive(Debug, Clone)]
pub struct SlabSolution<T> {
    pub umax: T,
    /// Left interface `x_f`; the right one sits at `1 - x_f`.
    pub interface: T,
    pub slope_plus: T,
    pub slope_minus: T,
    pub lambda: T,
    pub p: T,
    pub q: T,
    /// `slope_minus * x_f - 1` at the returned `umax`.
    pub closure: T,
    knots: Vec<Knot<T>>,
}

/// Defects obtained by substituting the solution back into its equations.
#[derive(Debug, Clone, Copy)]
pub struct SlabResiduals<T> {
    /// Max defect of the first integral
    /// `(p-1)/p |u'|^p + lambda (u-1)^q / q = lambda (umax-1)^q / q` over the knots.
    pub ode: T,
    pub jump: T,
    pub closure: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy)]
pub struct OracleComparison<T> {
    pub sup_error: T,
    pub l2_error: T,
    /// Largest distance between the 2D and oracle interface positions.
    pub interface_error: T,
    /// Left and right crossings of `u = 1` on the 2D midline.
    pub interface_2d: Option<(T, T)>,
    pub samples: usize,
}

enum Shot<T> {
    /// `u` never drops to 1 before the boundary.
    NoInterface,
    Hit { t: T, slope: T, knots: Vec<Knot<T>> },
}

struct Rhs<T> {
    lambda: T,
    qm1: T,
    inv_pm1: T,
}

impl<T: Real> Rhs<T> {
    /// State `(u, psi)` with `psi = |u_t|^(p-2) u_t`.
    fn eval(&self, s: [T; 2]) -> [T; 2] {
        let du = -(-s[1]).max(T::zero()).powf(self.inv_pm1);
        let dpsi = -self.lambda * (s[0] - T::one()).max(T::zero()).powf(self.qm1);
        [du, dpsi]
    }
}

// Dormand-Prince 5(4) tableau; the right-hand side is autonomous so the
// nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand-Prince step; returns the 5th-order state and the error estimate.
fn dp_step<T: Real>(f: &Rhs<T>, s: [T; 2], h: T) -> ([T; 2], [T; 2]) {
    let mut k = [[T::zero(); 2]; 7];
    for i in 0..7 {
        let mut st = s;
        for (j, kj) in k.iter().enumerate().take(i) {
            let a: T = lit(A[i][j]);
            st[0] += h * a * kj[0];
            st[1] += h * a * kj[1];
        }
        k[i] = f.eval(st);
    }
    let mut hi = s;
    let mut err = [T::zero(); 2];
    for i in 0..7 {
        let (b5, b4): (T, T) = (lit(B5[i]), lit(B4[i]));
        for c in 0..2 {
            hi[c] += h * b5 * k[i][c];
            err[c] += h * (b5 - b4) * k[i][c];
        }
    }
    (hi, err)
}

fn shoot<T: Real>(prm: &ProblemParams<T>, umax: T, ode_tol: T) -> Result<Shot<T>, OracleError> {
    let f = Rhs { lambda: prm.lambda, qm1: prm.q - T::one(), inv_pm1: T::one() / (prm.p - T::one()) };
    let half: T = lit(0.5);
    let max_step: T = lit(MAX_STEP);
    let mut t = T::zero();
    let mut s = [umax, T::zero()];
    let mut h = max_step * lit(0.1);
    let mut knots = vec![Knot { t, u: s[0], du: T::zero() }];
    let mut rejections = 0usize;
    while t < half {
        h = h.min(half - t).min(max_step);
        let (next, err) = dp_step(&f, s, h);
        let scale = |c: usize| ode_tol * (T::one() + s[c].abs().max(next[c].abs()));
        let e = (err[0].abs() / scale(0)).max(err[1].abs() / scale(1));
        if !e.is_finite() {
            return Err(OracleError::Integration(format!("non-finite state at t = {}", to_f64(t))));
        }
        if e > T::one() {
            h *= (lit::<T>(0.9) * e.powf(lit(-0.2))).max(lit(0.1));
            rejections += 1;
            if h < lit(1e-14) || rejections > 100_000 {
                return Err(OracleError::Integration("step size underflow".into()));
            }
            continue;
        }
        if next[0] <= T::one() {
            // locate the crossing inside this step by Newton on the step length
            let mut theta = (s[0] - T::one()) / (s[0] - next[0]);
            let mut st = next;
            for _ in 0..50 {
                let (trial, _) = dp_step(&f, s, theta * h);
                st = trial;
                let slope = f.eval(trial)[0] * h;
                if slope >= T::zero() {
                    break;
                }
                let d = (trial[0] - T::one()) / slope;
                theta -= d;
                if d.abs() <= T::epsilon() * lit(4.0) {
                    break;
                }
            }
            let (cross, _) = dp_step(&f, s, theta * h);
            st = if (cross[0] - T::one()).abs() <= (st[0] - T::one()).abs() { cross } else { st };
            let tf = t + theta * h;
            let du = f.eval(st)[0];
            knots.push(Knot { t: tf, u: T::one(), du });
            return Ok(Shot::Hit { t: tf, slope: -du, knots });
        }
        t += h;
        s = next;
        knots.push(Knot { t, u: s[0], du: f.eval(s)[0] });
        h *= (lit::<T>(0.9) * e.max(lit(1e-10)).powf(lit(-0.2))).min(lit(5.0));
    }
    Ok(Shot::NoInterface)
}

struct Closure<T> {
    value: T,
    slope_plus: T,
    slope_minus: T,
    interface: T,
    feasible: bool,
    knots: Vec<Knot<T>>,
}

/// `slope_minus * x_f - 1` for a given centre value. Infeasible jumps and
/// shots that never reach the interface map to `-1`, the limit of both.
fn closure<T: Real>(prm: &ProblemParams<T>, umax: T, ode_tol: T) -> Result<Closure<T>, OracleError> {
    let pp = prm.p / (prm.p - T::one());
    match shoot(prm, umax, ode_tol)? {
        Shot::NoInterface => Ok(Closure {
            value: -T::one(),
            slope_plus: T::zero(),
            slope_minus: T::zero(),
            interface: T::zero(),
            feasible: false,
            knots: Vec::new(),
        }),
        Shot::Hit { t, slope, knots } => {
            let xf = lit::<T>(0.5) - t;
            let excess = slope.powf(prm.p) - pp;
            let feasible = excess > T::zero();
            let sm = if feasible { excess.powf(T::one() / prm.p) } else { T::zero() };
            Ok(Closure { value: sm * xf - T::one(), slope_plus: slope, slope_minus: sm, interface: xf, feasible, knots })
        }
    }
}

/// Sub-intervals of `[lo, hi]` on which the closure residual changes sign,
/// found on `samples` equally spaced centre values.
pub fn slab_brackets<T: Real>(
    prm: &ProblemParams<T>,
    lo: T,
    hi: T,
    samples: usize,
) -> Result<Vec<(T, T)>, OracleError> {
    check_inputs(prm, lo, hi)?;
    let n = samples.max(2);
    let ode_tol = lit(1e-10);
    let mut out = Vec::new();
    let mut prev = (lo, closure(prm, lo, ode_tol)?.value);
    for k in 1..n {
        let m = lo + (hi - lo) * lit::<T>(k as f64 / (n - 1) as f64);
        let v = closure(prm, m, ode_tol)?.value;
        if (prev.1 < T::zero()) != (v < T::zero()) {
            out.push((prev.0, m));
        }
        prev = (m, v);
    }
    Ok(out)
}

fn check_inputs<T: Real>(prm: &ProblemParams<T>, lo: T, hi: T) -> Result<(), OracleError> {
    if !(prm.lambda >= T::zero()) {
        return Err(OracleError::Lambda(to_f64(prm.lambda)));
    }
    if !(lo > T::one() && hi > lo) {
        return Err(OracleError::Bracket { lo: to_f64(lo), hi: to_f64(hi) });
    }
    Ok(())
}

/// Solves the slab problem by bisection on the centre value inside
/// `umax_bracket` until the boundary closure is below `tol`.
pub fn shoot_slab<T: Real>(
    prm: &ProblemParams<T>,
    umax_bracket: (T, T),
    tol: T,
) -> Result<SlabSolution<T>, OracleError> {
    let ode_tol = (tol * lit(1e-2)).max(lit(1e-14));
    shoot_slab_with(prm, umax_bracket, tol, ode_tol)
}

/// As [`shoot_slab`] with an explicit ODE step tolerance.
pub fn shoot_slab_with<T: Real>(
    prm: &ProblemParams<T>,
    umax_bracket: (T, T),
    tol: T,
    ode_tol: T,
) -> Result<SlabSolution<T>, OracleError> {
    let (mut lo, mut hi) = umax_bracket;
    check_inputs(prm, lo, hi)?;
    let required = to_f64(prm.p / (prm.p - T::one()));
    if prm.lambda == T::zero() {
        // u stays at umax: the interior slope never leaves zero
        return Err(OracleError::InfeasibleJump { slope_pow: 0.0, required });
    }
    let f_lo = closure(prm, lo, ode_tol)?;
    let f_hi = closure(prm, hi, ode_tol)?;
    if (f_lo.value < T::zero()) == (f_hi.value < T::zero()) {
        if !f_hi.feasible && f_hi.value < T::zero() {
            return Err(OracleError::InfeasibleJump {
                slope_pow: to_f64(f_hi.slope_plus.powf(prm.p)),
                required,
            });
        }
        return Err(OracleError::NoSignChange { f_lo: to_f64(f_lo.value), f_hi: to_f64(f_hi.value) });
    }
    let lo_negative = f_lo.value < T::zero();
    let (mut best_m, mut best) = if f_lo.value.abs() < f_hi.value.abs() { (lo, f_lo) } else { (hi, f_hi) };
    for _ in 0..MAX_BISECTIONS {
        if best.value.abs() <= tol && best.feasible {
            break;
        }
        let mid = (lo + hi) * lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        let c = closure(prm, mid, ode_tol)?;
        if (c.value < T::zero()) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
        if c.value.abs() <= best.value.abs() || !best.feasible {
            best = c;
            best_m = mid;
        }
    }
    if !best.feasible {
        return Err(OracleError::InfeasibleJump { slope_pow: to_f64(best.slope_plus.powf(prm.p)), required });
    }
    Ok(SlabSolution {
        umax: best_m,
        interface: best.interface,
        slope_plus: best.slope_plus,
        slope_minus: best.slope_minus,
        lambda: prm.lambda,
        p: prm.p,
        q: prm.q,
        closure: best.value,
        knots: best.knots,
    })
}

impl<T: Real> SlabSolution<T> {
    /// Profile value at `x` in `[0, 1]` (clamped).
    pub fn eval(&self, x: T) -> T {
        let x = x.max(T::zero()).min(T::one());
        let d = x.min(T::one() - x);
        if d <= self.interface {
            return self.slope_minus * d;
        }
        let t = lit::<T>(0.5) - d;
        let k = self.knots.partition_point(|k| k.t <= t).clamp(1, self.knots.len() - 1);
        let (a, b) = (self.knots[k - 1], self.knots[k]);
        let h = b.t - a.t;
        if h <= T::zero() {
            return a.u;
        }
        let s = (t - a.t) / h;
        let (s2, s3) = (s * s, s * s * s);
        let two: T = lit(2.0);
        let three: T = lit(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = three * s2 - two * s3;
        let h11 = s3 - s2;
        h00 * a.u + h10 * h * a.du + h01 * b.u + h11 * h * b.du
    }

    /// `n` equally spaced samples `(x, u)` on `[0, 1]`.
    pub fn profile(&self, n: usize) -> Vec<(T, T)> {
        let n = n.max(2);
        (0..n)
            .map(|i| {
                let x = lit::<T>(i as f64 / (n - 1) as f64);
                (x, self.eval(x))
            })
            .collect()
    }

    pub fn residuals(&self) -> SlabResiduals<T> {
        let (p, q, l) = (self.p, self.q, self.lambda);
        let level = l * (self.umax - T::one()).powf(q) / q;
        let ode = self
            .knots
            .iter()
            .map(|k| {
                let kinetic = (p - T::one()) / p * k.du.abs().powf(p);
                (kinetic + l * (k.u - T::one()).max(T::zero()).powf(q) / q - level).abs()
            })
            .fold(T::zero(), T::max);
        let jump = (self.slope_plus.powf(p) - self.slope_minus.powf(p) - p / (p - T::one())).abs();
        let closure = (self.slope_minus * self.interface - T::one()).abs();
        SlabResiduals { ode, jump, closure }
    }

    /// Writes `n` samples in the field CSV layout of a degenerate `n x 1` grid.
    pub fn write_csv<W: Write>(&self, mut w: W, n: usize) -> std::io::Result<()> {
        let samples = self.profile(n);
        writeln!(w, "{},1,1,0", samples.len())?;
        for (_, u) in samples {
            writeln!(w, "{u}")?;
        }
        Ok(())
    }
}

/// Compares the midline profile of a 2D field with the slab solution.
/// `Axis::X` reads the row through the middle of the domain, `Axis::Y` the
/// middle column; the grid must have unit extent along that axis.
pub fn compare_to_oracle<T: Real>(
    u: &ScalarField<T>,
    sol: &SlabSolution<T>,
    axis: Axis,
) -> Result<OracleComparison<T>, OracleError> {
    let g = u.grid();
    let (len, n) = match axis {
        Axis::X => (g.lx(), g.nx()),
        Axis::Y => (g.ly(), g.ny()),
    };
    if (len - T::one()).abs() > lit(1e-12) {
        return Err(OracleError::DomainMismatch { grid: to_f64(len), slab: 1.0 });
    }
    let line: Vec<(T, T)> = match axis {
        Axis::X => {
            let j = (g.ny() - 1) / 2;
            (0..n).map(|i| (g.x(i), u.at(i, j))).collect()
        }
        Axis::Y => {
            let i = (g.nx() - 1) / 2;
            (0..n).map(|j| (g.y(j), u.at(i, j))).collect()
        }
    };
    let h = len / lit::<T>((n - 1) as f64);
    let mut sup = T::zero();
    let mut l2 = T::zero();
    for (k, &(x, v)) in line.iter().enumerate() {
        let e = (v - sol.eval(x)).abs();
        sup = sup.max(e);
        let w = if k == 0 || k == n - 1 { lit(0.5) } else { T::one() };
        l2 += w * h * e * e;
    }
    let left = first_crossing(line.iter().zip(line.iter().skip(1)));
    let right = first_crossing(line.iter().rev().zip(line.iter().rev().skip(1)));
    let interface_2d = left.zip(right);
    let interface_error = match interface_2d {
        Some((l, r)) => (l - sol.interface).abs().max((r - (T::one() - sol.interface)).abs()),
        None => T::infinity(),
    };
    Ok(OracleComparison { sup_error: sup, l2_error: l2.sqrt(), interface_error, interface_2d, samples: n })
}

fn first_crossing<'a, T: Real>(mut pairs: impl Iterator<Item = (&'a (T, T), &'a (T, T))>) -> Option<T> {
    pairs.find_map(|(a, b)| {
        ((a.1 - T::one()) * (b.1 - T::one()) <= T::zero() && a.1 != b.1)
            .then(|| a.0 + (T::one() - a.1) / (b.1 - a.1) * (b.0 - a.0))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Grid2D;

    fn prm(lambda: f64) -> ProblemParams<f64> {
        ProblemParams::new(2.0, 3.0, lambda, 0.05).unwrap()
    }

    fn reference() -> SlabSolution<f64> {
        shoot_slab(&prm(60.0), (1.05, 5.0), 1e-11).unwrap()
    }

    #[test]
    fn reference_values() {
        let s = reference();
        assert!((s.umax - 1.7709055).abs() < 1e-6, "{}", s.umax);
        assert!((s.interface - 0.2474928).abs() < 1e-6, "{}", s.interface);
        assert!((s.slope_plus - 4.28087).abs() < 1e-4);
        assert!((s.slope_minus - 4.04052).abs() < 1e-4);
    }

    #[test]
    fn residual_substitution() {
        let s = reference();
        let r = s.residuals();
        assert!(r.ode < 1e-9, "{}", r.ode);
        assert!(r.jump < 1e-10, "{}", r.jump);
        assert!(r.closure < 1e-11, "{}", r.closure);
    }

    #[test]
    fn symmetric_with_zero_boundary_values() {
        let s = reference();
        assert_eq!(s.eval(0.0), 0.0);
        assert_eq!(s.eval(1.0), 0.0);
        assert!((s.eval(0.5) - s.umax).abs() < 1e-14);
        for i in 0..=200 {
            let x = i as f64 / 200.0;
            assert!((s.eval(x) - s.eval(1.0 - x)).abs() < 1e-12);
        }
        assert!((s.eval(s.interface) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_load_is_infeasible() {
        let e = shoot_slab(&prm(0.0), (1.1, 3.0), 1e-10).unwrap_err();
        assert!(matches!(e, OracleError::InfeasibleJump { .. }));
    }

    #[test]
    fn bad_bracket_and_missing_sign_change() {
        assert!(matches!(shoot_slab(&prm(60.0), (0.5, 3.0), 1e-10), Err(OracleError::Bracket { .. })));
        // both ends above the root
        let e = shoot_slab(&prm(60.0), (3.0, 4.0), 1e-10).unwrap_err();
        assert!(matches!(e, OracleError::NoSignChange { .. }), "{e:?}");
    }

    #[test]
    fn halving_ode_tolerance_barely_moves_umax() {
        let p = prm(60.0);
        let a = shoot_slab_with(&p, (1.05, 5.0), 1e-12, 1e-10).unwrap();
        let b = shoot_slab_with(&p, (1.05, 5.0), 1e-12, 5e-11).unwrap();
        assert!((a.umax - b.umax).abs() < 10.0 * 1e-10);
    }

    #[test]
    fn brackets_contain_the_root() {
        let br = slab_brackets(&prm(60.0), 1.05, 5.0, 40).unwrap();
        assert!(br.iter().any(|&(a, b)| a <= 1.7709055 && 1.7709055 <= b));
    }

    #[test]
    fn other_exponents_satisfy_the_jump() {
        for (p, q, lambda) in [(1.5f64, 3.0f64, 40.0f64), (3.0, 4.5, 200.0)] {
            let prm = ProblemParams::new(p, q, lambda, 0.05).unwrap();
            let br = slab_brackets(&prm, 1.01, 20.0, 80).unwrap();
            let s = shoot_slab(&prm, br[0], 1e-10).unwrap();
            let r = s.residuals();
            assert!(r.jump < 1e-10 && r.closure < 1e-10, "{r:?}");
            // first-integral level sets the scale of the defect
            let level = lambda * (s.umax - 1.0).powf(q) / q;
            assert!(r.ode < 1e-9 * level.max(1.0), "p={p} level={level} {r:?}");
        }
    }

    #[test]
    fn self_comparison_is_second_order() {
        let s = reference();
        let mut errs = Vec::new();
        for n in [65, 129] {
            let g = Grid2D::slab(n, 9, 1.0, 0.25).unwrap();
            // kinked at the interface, so nodal sampling is exact but the
            // interface estimate from linear interpolation is O(h^2)
            let u = ScalarField::from_fn(g, |x, _| s.eval(x));
            let c = compare_to_oracle(&u, &s, Axis::X).unwrap();
            assert!(c.sup_error < 1e-12);
            let h = 1.0 / (n - 1) as f64;
            assert!(c.interface_error <= 10.0 * h * h, "{}", c.interface_error);
            errs.push(c.interface_error);
        }
        assert!(errs[1] <= errs[0] + 1e-12);
    }

    #[test]
    fn mismatched_extent_rejected() {
        let s = reference();
        let g = Grid2D::new(17, 17, 2.0, 1.0).unwrap();
        let u = ScalarField::zeros(g);
        assert!(matches!(compare_to_oracle(&u, &s, Axis::X), Err(OracleError::DomainMismatch { .. })));
        assert!(compare_to_oracle(&u, &s, Axis::Y).is_ok());
    }

    #[test]
    fn csv_export_layout() {
        let s = reference();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, 11).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "11,1,1,0");
        assert_eq!(lines.len(), 12);
        assert_eq!(lines[1].parse::<f64>().unwrap(), 0.0);
    }
}
