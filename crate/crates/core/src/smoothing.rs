//! The smoothing pair `(g, G)`: a nonnegative bump supported in `(0, 1)`
//! with unit mass, and its antiderivative, which replaces the indicator
//! of `{u > 1}` by `G((u - 1) / alpha)`.

use crate::scalar::{from_usize, lit, Real};

/// Which bump is used. Only the quintic smoothstep is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmootherSpec {
    /// `g(t) = 30 t^2 (1 - t)^2` on `(0, 1)`, so `G` is the quintic
    /// smoothstep `10 t^3 - 15 t^4 + 6 t^5`.
    #[default]
    Quintic,
}

impl SmootherSpec {
    #[inline]
    pub fn g<T: Real>(self, t: T) -> T {
        match self {
            SmootherSpec::Quintic => {
                if t <= T::zero() || t >= T::one() {
                    T::zero()
                } else {
                    let s = t * (T::one() - t);
                    lit::<T>(30.0) * s * s
                }
            }
        }
    }

    /// Derivative of `g`.
    #[inline]
    pub fn g_prime<T: Real>(self, t: T) -> T {
        match self {
            SmootherSpec::Quintic => {
                if t <= T::zero() || t >= T::one() {
                    T::zero()
                } else {
                    let one = T::one();
                    lit::<T>(60.0) * t * (one - t) * (one - t - t)
                }
            }
        }
    }

    #[inline]
    #[allow(non_snake_case)]
    pub fn G<T: Real>(self, t: T) -> T {
        match self {
            SmootherSpec::Quintic => {
                if t <= T::zero() {
                    T::zero()
                } else if t >= T::one() {
                    T::one()
                } else {
                    let t3 = t * t * t;
                    t3 * (lit::<T>(10.0) + t * (lit::<T>(-15.0) + lit::<T>(6.0) * t))
                }
            }
        }
    }

    /// Supremum of `g` over the real line.
    pub fn g_max<T: Real>(self) -> T {
        match self {
            SmootherSpec::Quintic => lit(1.875),
        }
    }
}

pub fn g_eval<T: Real>(spec: SmootherSpec, t: T) -> T {
    spec.g(t)
}

#[allow(non_snake_case)]
pub fn G_eval<T: Real>(spec: SmootherSpec, t: T) -> T {
    spec.G(t)
}

/// Composite midpoint approximation of the mass of `g` on `[0, 1]` with
/// `n` nodes.
pub fn check_normalization<T: Real>(spec: SmootherSpec, n: usize) -> T {
    let n = n.max(1);
    let h = T::one() / from_usize(n);
    let mut acc = T::zero();
    for k in 0..n {
        acc += spec.g((from_usize::<T>(k) + lit(0.5)) * h);
    }
    acc * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const Q: SmootherSpec = SmootherSpec::Quintic;

    #[test]
    fn point_values() {
        assert_eq!(g_eval(Q, -1.0), 0.0);
        assert_eq!(g_eval(Q, 2.0), 0.0);
        assert_eq!(g_eval(Q, 0.5), 1.875);
        assert_eq!(G_eval(Q, 0.0), 0.0);
        assert_eq!(G_eval(Q, 1.0), 1.0);
        assert_eq!(G_eval(Q, 0.5), 0.5);
    }

    #[test]
    fn normalization() {
        let fine: f64 = check_normalization(Q, 10_000);
        assert!((fine - 1.0).abs() < 1e-8);
        let coarse: f64 = check_normalization(Q, 2);
        assert!((coarse - 1.0).abs() < 0.1, "{coarse}");
    }

    #[test]
    fn derivative_of_antiderivative() {
        let h = 1e-5;
        for k in 0..=1000 {
            let t = -0.5 + 2.0 * k as f64 / 1000.0;
            let fd = (Q.G(t + h) - Q.G(t - h)) / (2.0 * h);
            assert!((fd - Q.g(t)).abs() < 1e-8, "t={t}");
            let fd2 = (Q.g(t + h) - Q.g(t - h)) / (2.0 * h);
            // g' has kinks at 0 and 1, where the central difference is O(h)
            assert!((fd2 - Q.g_prime(t)).abs() < 1e-3, "t={t}");
        }
    }

    #[test]
    fn g_max_is_attained() {
        let m = (0..=1000).map(|k| Q.g(k as f64 / 1000.0)).fold(0.0, f64::max);
        assert_eq!(m, Q.g_max::<f64>());
    }

    proptest! {
        #[test]
        fn g_bounded(t in -3.0f64..3.0) {
            let v = Q.g(t);
            prop_assert!((0.0..=2.0).contains(&v));
        }

        #[test]
        fn big_g_monotone(a in -2.0f64..2.0, b in -2.0f64..2.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(Q.G(hi) >= Q.G(lo));
            prop_assert!((0.0..=1.0).contains(&Q.G(a)));
        }
    }
}
