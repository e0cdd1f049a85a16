//! One-dimensional profiles and their analytic derivatives up to order three.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::geometry::Point;
use crate::scalar::Scalar;

/// Truncated Taylor jet: value and first three derivatives along one variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet3<T> {
    pub v: T,
    pub d1: T,
    pub d2: T,
    pub d3: T,
}

impl<T: Scalar> Jet3<T> {
    pub fn new(v: T, d1: T, d2: T, d3: T) -> Self {
        Self { v, d1, d2, d3 }
    }

    pub fn constant(v: T) -> Self {
        Self::new(v, T::zero(), T::zero(), T::zero())
    }

    pub fn variable(v: T) -> Self {
        Self::new(v, T::one(), T::zero(), T::zero())
    }

    pub fn zero() -> Self {
        Self::constant(T::zero())
    }

    /// f(self) given f and its derivatives at self.v (chain rule to third order).
    pub fn compose(self, f: [T; 4]) -> Self {
        let (u1, u2, u3) = (self.d1, self.d2, self.d3);
        let three = T::c(3.0);
        Self::new(
            f[0],
            f[1] * u1,
            f[2] * u1 * u1 + f[1] * u2,
            f[3] * u1 * u1 * u1 + three * f[2] * u1 * u2 + f[1] * u3,
        )
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.compose([e, e, e, e])
    }

    pub fn ln(self) -> Self {
        let x = self.v;
        self.compose([x.ln(), x.recip(), -(x * x).recip(), T::c(2.0) / (x * x * x)])
    }

    pub fn recip(self) -> Self {
        let x = self.v;
        let r = x.recip();
        self.compose([r, -r * r, T::c(2.0) * r * r * r, -T::c(6.0) * r * r * r * r])
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.v * s, self.d1 * s, self.d2 * s, self.d3 * s)
    }

    pub fn as_array(self) -> [T; 4] {
        [self.v, self.d1, self.d2, self.d3]
    }
}

impl<T: Scalar> Add for Jet3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.v + o.v, self.d1 + o.d1, self.d2 + o.d2, self.d3 + o.d3)
    }
}

impl<T: Scalar> Sub for Jet3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.v - o.v, self.d1 - o.d1, self.d2 - o.d2, self.d3 - o.d3)
    }
}

impl<T: Scalar> Neg for Jet3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-T::one())
    }
}

impl<T: Scalar> Mul for Jet3<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let three = T::c(3.0);
        let two = T::c(2.0);
        Self::new(
            self.v * o.v,
            self.d1 * o.v + self.v * o.d1,
            self.d2 * o.v + two * self.d1 * o.d1 + self.v * o.d2,
            self.d3 * o.v + three * self.d2 * o.d1 + three * self.d1 * o.d2 + self.v * o.d3,
        )
    }
}

impl<T: Scalar> Div for Jet3<T> {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

// Below this the exponential transition is below 1e-80 along with all its derivatives.
const FLAT_EDGE: f64 = 0.005;

/// C-infinity step: 0 for t <= 0, 1 for t >= 1, e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}) between.
pub fn smoothstep_jet<T: Scalar>(t: Jet3<T>) -> Jet3<T> {
    if t.v <= T::c(FLAT_EDGE) {
        return Jet3::zero();
    }
    if t.v >= T::c(1.0 - FLAT_EDGE) {
        return Jet3::constant(T::one());
    }
    let one = Jet3::constant(T::one());
    let a = (-t.recip()).exp();
    let b = (-(one - t).recip()).exp();
    a / (a + b)
}

pub fn smoothstep<T: Scalar>(t: T) -> T {
    smoothstep_jet(Jet3::constant(t)).v
}

/// Septic C^3 step 35u^4 - 84u^5 + 70u^6 - 20u^7 with derivatives, clamped outside [0, 1].
pub fn septic_step<T: Scalar>(u: T) -> [T; 4] {
    if u <= T::zero() {
        return [T::zero(); 4];
    }
    if u >= T::one() {
        return [T::one(), T::zero(), T::zero(), T::zero()];
    }
    let c = T::c;
    let u2 = u * u;
    let u3 = u2 * u;
    let v = u2 * u2 * (c(35.0) - c(84.0) * u + c(70.0) * u2 - c(20.0) * u3);
    let d1 = c(140.0) * u3 * (T::one() - u) * (T::one() - u) * (T::one() - u);
    let d2 = c(420.0) * u2 * (T::one() - u) * (T::one() - u) * (T::one() - c(2.0) * u);
    let d3 = c(840.0) * u * (T::one() - u) * (c(1.0) - c(5.0) * u + c(5.0) * u2);
    [v, d1, d2, d3]
}

/// Antiderivative of the septic step on [0, 1], vanishing at 0.
pub fn septic_step_integral<T: Scalar>(u: T) -> T {
    let c = T::c;
    let u = u.max(T::zero());
    if u >= T::one() {
        return c(0.5) + (u - T::one());
    }
    let u2 = u * u;
    u2 * u2 * u * (c(7.0) - c(14.0) * u + c(10.0) * u2 - c(2.5) * u2 * u)
}

/// Full derivative data of a radial function x -> F(|x|) at one point.
#[derive(Clone, Copy, Debug)]
pub struct RadialDerivs<T> {
    pub value: T,
    pub grad: [T; 2],
    pub hess: [[T; 2]; 2],
    pub third: [[[T; 2]; 2]; 2],
}

impl<T: Scalar> RadialDerivs<T> {
    /// `f` holds F(r), F'(r), F''(r), F'''(r) at r = |x - c|.
    pub fn at(x: Point<T>, c: Point<T>, f: Jet3<T>) -> Self {
        let d = x - c;
        let r = d.norm();
        if r <= T::c(1e-12) {
            // Regular radial profiles are flat or even at the origin.
            let mut hess = [[T::zero(); 2]; 2];
            hess[0][0] = f.d2;
            hess[1][1] = f.d2;
            return Self { value: f.v, grad: [T::zero(); 2], hess, third: [[[T::zero(); 2]; 2]; 2] };
        }
        let u = [d.x / r, d.y / r];
        let a = f.d2 - f.d1 / r;
        let b = f.d1 / r;
        let ap = f.d3 - f.d2 / r + f.d1 / (r * r);
        let c3 = ap - T::c(2.0) * a / r;
        let ar = a / r;
        let delta = |i: usize, j: usize| if i == j { T::one() } else { T::zero() };
        let mut hess = [[T::zero(); 2]; 2];
        let mut third = [[[T::zero(); 2]; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                hess[i][j] = a * u[i] * u[j] + b * delta(i, j);
                for k in 0..2 {
                    third[i][j][k] = c3 * u[i] * u[j] * u[k]
                        + ar * (delta(i, k) * u[j] + delta(j, k) * u[i] + delta(i, j) * u[k]);
                }
            }
        }
        Self { value: f.v, grad: [f.d1 * u[0], f.d1 * u[1]], hess, third }
    }

    /// Frobenius norms of the derivative tensors of order 0..=3.
    pub fn norms(&self) -> [T; 4] {
        let g = (self.grad[0] * self.grad[0] + self.grad[1] * self.grad[1]).sqrt();
        let h = self.hess.iter().flatten().map(|&v| v * v).sum::<T>().sqrt();
        let t = self.third.iter().flatten().flatten().map(|&v| v * v).sum::<T>().sqrt();
        [self.value.abs(), g, h, t]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> [f64; 3] {
        let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
        let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        let d3 = (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h);
        [d1, d2, d3]
    }

    #[test]
    fn smoothstep_derivatives_match_differences() {
        for &t in &[0.1, 0.3, 0.5, 0.77, 0.93] {
            let j = smoothstep_jet(Jet3::variable(t));
            let d = fd(smoothstep, t, 1e-4);
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-5 * (1.0 + b.abs());
            assert!(close(j.d1, d[0]) && close(j.d2, d[1]), "{t} {j:?} {d:?}");
            assert!((j.d3 - d[2]).abs() <= 1e-3 * (1.0 + d[2].abs()), "{t} {j:?} {d:?}");
        }
        assert_eq!(smoothstep(0.5), 0.5);
        assert_eq!(smoothstep(-1.0), 0.0);
        assert_eq!(smoothstep(1.5), 1.0);
    }

    #[test]
    fn septic_is_c3_and_integrates() {
        let s = septic_step(1.0f64 - 1e-12);
        assert!((s[0] - 1.0).abs() < 1e-9 && s[1].abs() < 1e-9);
        for &u in &[0.2, 0.6] {
            let d = fd(|x| septic_step(x)[0], u, 1e-4);
            let s = septic_step(u);
            assert!((s[1] - d[0]).abs() < 1e-6);
            assert!((s[2] - d[1]).abs() < 1e-4);
            assert!((s[3] - d[2]).abs() < 1e-2);
            let i = (septic_step_integral(u + 1e-5) - septic_step_integral(u - 1e-5)) / 2e-5;
            assert!((i - s[0]).abs() < 1e-8);
        }
        assert!((septic_step_integral(1.0) - 0.5f64).abs() < 1e-14);
    }

    #[test]
    fn radial_hessian_matches_differences() {
        // F(r) = r^3 so that the Hessian of |x|^3 is known.
        let x = Point::new(0.7, -0.4);
        let r: f64 = x.norm();
        let d = RadialDerivs::at(x, Point::origin(), Jet3::new(r.powi(3), 3.0 * r * r, 6.0 * r, 6.0));
        let f = |p: Point<f64>| p.norm().powi(3);
        let h = 1e-4;
        let fx = (f(x + Point::new(h, 0.0)) - f(x - Point::new(h, 0.0))) / (2.0 * h);
        assert!((d.grad[0] - fx).abs() < 1e-7);
        let fxy = (f(x + Point::new(h, h)) - f(x + Point::new(h, -h)) - f(x + Point::new(-h, h))
            + f(x + Point::new(-h, -h)))
            / (4.0 * h * h);
        assert!((d.hess[0][1] - fxy).abs() < 1e-5);
        // third: d/dx of Hxx
        let hxx = |p: Point<f64>| {
            let rr = p.norm();
            RadialDerivs::at(p, Point::origin(), Jet3::new(rr.powi(3), 3.0 * rr * rr, 6.0 * rr, 6.0)).hess[0][0]
        };
        let txxx = (hxx(x + Point::new(h, 0.0)) - hxx(x - Point::new(h, 0.0))) / (2.0 * h);
        assert!((d.third[0][0][0] - txxx).abs() < 1e-6);
        let txxy = (hxx(x + Point::new(0.0, h)) - hxx(x - Point::new(0.0, h))) / (2.0 * h);
        assert!((d.third[0][0][1] - txxy).abs() < 1e-6);
    }
}
