use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero())
    }

    #[inline]
    pub fn polar(r: T, theta: T) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }

    #[inline]
    pub fn norm2(self) -> T {
        self.x * self.x + self.y * self.y
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    #[inline]
    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    /// Counter-clockwise quarter turn.
    #[inline]
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn cast<U: Scalar>(self) -> Point<U> {
        Point::new(U::c(self.x.as_f64()), U::c(self.y.as_f64()))
    }
}

impl<T: Scalar> Add for Point<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Scalar> Sub for Point<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Scalar> Neg for Point<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl<T: Scalar> Mul<T> for Point<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

/// Finite planar configuration: finite, pairwise distinct points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointConfig<T> {
    points: Vec<Point<T>>,
}

impl<T: Scalar> PointConfig<T> {
    pub fn new(points: Vec<Point<T>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidConfig(format!("point {i} is not finite")));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            let (p, q) = (points[a], points[b]);
            p.x.partial_cmp(&q.x)
                .unwrap()
                .then(p.y.partial_cmp(&q.y).unwrap())
        });
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                return Err(Error::InvalidConfig(format!(
                    "points {} and {} coincide",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self { points: Vec::new() }
    }

    /// Caller guarantees the invariants (used on hot paths that only move points to fresh positions).
    pub(crate) fn from_trusted(points: Vec<Point<T>>) -> Self {
        Self { points }
    }

    pub fn from_xy(xy: &[[T; 2]]) -> Result<Self> {
        Self::new(xy.iter().map(|&[x, y]| Point::new(x, y)).collect())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point<T>> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point<T>> {
        self.points
    }

    pub(crate) fn set(&mut self, i: usize, p: Point<T>) {
        self.points[i] = p;
    }

    pub fn translate(&self, u: Point<T>) -> Self {
        Self::from_trusted(self.points.iter().map(|&p| p + u).collect())
    }

    /// Points inside `w` (closed), in original order.
    pub fn restrict(&self, w: &Window<T>) -> Self {
        Self::from_trusted(self.points.iter().copied().filter(|&p| w.contains(p)).collect())
    }

    /// Points outside `w`.
    pub fn exclude(&self, w: &Window<T>) -> Self {
        Self::from_trusted(self.points.iter().copied().filter(|&p| !w.contains(p)).collect())
    }

    /// Union with a disjoint configuration. Fails if a point is shared.
    pub fn union(&self, other: &Self) -> Result<Self> {
        let mut pts = self.points.clone();
        pts.extend_from_slice(&other.points);
        Self::new(pts)
    }

    pub fn to_xy(&self) -> Vec<[T; 2]> {
        self.points.iter().map(|p| [p.x, p.y]).collect()
    }

    pub fn min_distance(&self) -> Option<T> {
        let pts = &self.points;
        let mut best: Option<T> = None;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                let d = pts[i].dist(pts[j]);
                best = Some(best.map_or(d, |b| b.min(d)));
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk<T> {
    pub center: Point<T>,
    pub radius: T,
}

impl<T: Scalar> Disk<T> {
    pub fn new(center: Point<T>, radius: T) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() || !center.is_finite() {
            return Err(Error::Parameter(format!("disk radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn centered(radius: T) -> Result<Self> {
        Self::new(Point::origin(), radius)
    }

    /// Σ_N: the centered disk of area N.
    pub fn system(n: usize) -> Self {
        assert!(n >= 1, "system disk needs N >= 1");
        Self { center: Point::origin(), radius: system_radius(n) }
    }

    #[inline]
    pub fn contains(&self, p: Point<T>) -> bool {
        (p - self.center).norm2() <= self.radius * self.radius
    }

    pub fn area(&self) -> T {
        T::PI() * self.radius * self.radius
    }
}

/// R_N = sqrt(N / pi).
pub fn system_radius<T: Scalar>(n: usize) -> T {
    (T::count(n) / T::PI()).sqrt()
}

/// Bounded closed window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Window<T> {
    Disk { center: Point<T>, radius: T },
    Rect { lo: Point<T>, hi: Point<T> },
    Annulus { center: Point<T>, inner: T, outer: T },
}

impl<T: Scalar> From<Disk<T>> for Window<T> {
    fn from(d: Disk<T>) -> Self {
        Window::Disk { center: d.center, radius: d.radius }
    }
}

impl<T: Scalar> Window<T> {
    pub fn disk(center: Point<T>, radius: T) -> Result<Self> {
        Disk::new(center, radius).map(Into::into)
    }

    pub fn centered_disk(radius: T) -> Result<Self> {
        Self::disk(Point::origin(), radius)
    }

    pub fn rect(lo: Point<T>, hi: Point<T>) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi.x > lo.x && hi.y > lo.y) {
            return Err(Error::Parameter("rectangle needs lo < hi in both coordinates".into()));
        }
        Ok(Window::Rect { lo, hi })
    }

    pub fn annulus(center: Point<T>, inner: T, outer: T) -> Result<Self> {
        if !(inner >= T::zero() && outer > inner && outer.is_finite() && center.is_finite()) {
            return Err(Error::Parameter("annulus needs 0 <= inner < outer".into()));
        }
        Ok(Window::Annulus { center, inner, outer })
    }

    #[inline]
    pub fn contains(&self, p: Point<T>) -> bool {
        match *self {
            Window::Disk { center, radius } => (p - center).norm2() <= radius * radius,
            Window::Rect { lo, hi } => p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y,
            Window::Annulus { center, inner, outer } => {
                let r2 = (p - center).norm2();
                r2 >= inner * inner && r2 <= outer * outer
            }
        }
    }

    pub fn area(&self) -> T {
        match *self {
            Window::Disk { radius, .. } => T::PI() * radius * radius,
            Window::Rect { lo, hi } => (hi.x - lo.x) * (hi.y - lo.y),
            Window::Annulus { inner, outer, .. } => T::PI() * (outer * outer - inner * inner),
        }
    }

    pub fn translate(&self, u: Point<T>) -> Self {
        match *self {
            Window::Disk { center, radius } => Window::Disk { center: center + u, radius },
            Window::Rect { lo, hi } => Window::Rect { lo: lo + u, hi: hi + u },
            Window::Annulus { center, inner, outer } => {
                Window::Annulus { center: center + u, inner, outer }
            }
        }
    }

    pub fn bounding_box(&self) -> (Point<T>, Point<T>) {
        match *self {
            Window::Disk { center, radius } | Window::Annulus { center, outer: radius, .. } => {
                let d = Point::new(radius, radius);
                (center - d, center + d)
            }
            Window::Rect { lo, hi } => (lo, hi),
        }
    }

    /// Smallest radius around `c` enclosing the window.
    pub fn max_distance_from(&self, c: Point<T>) -> T {
        match *self {
            Window::Disk { center, radius } | Window::Annulus { center, outer: radius, .. } => {
                (center - c).norm() + radius
            }
            Window::Rect { lo, hi } => [lo, hi, Point::new(lo.x, hi.y), Point::new(hi.x, lo.y)]
                .iter()
                .map(|&q| (q - c).norm())
                .fold(T::zero(), T::max),
        }
    }

    /// Largest radius around `c` whose open disk avoids the window, zero if `c` is inside.
    pub fn min_distance_from(&self, c: Point<T>) -> T {
        if self.contains(c) {
            return T::zero();
        }
        match *self {
            Window::Disk { center, radius } => (c - center).norm() - radius,
            Window::Annulus { center, inner, outer } => {
                let d = (c - center).norm();
                if d < inner { inner - d } else { d - outer }
            }
            Window::Rect { lo, hi } => {
                let dx = (lo.x - c.x).max(c.x - hi.x).max(T::zero());
                let dy = (lo.y - c.y).max(c.y - hi.y).max(T::zero());
                dx.hypot(dy)
            }
        }
    }

    /// Whether the window is a disk or annulus centered at `c` (rotationally symmetric about it).
    pub fn is_radial_about(&self, c: Point<T>) -> bool {
        match *self {
            Window::Disk { center, .. } | Window::Annulus { center, .. } => center == c,
            Window::Rect { .. } => false,
        }
    }

    /// Angles in (-pi, pi] at which the circle |y - c| = r crosses the window boundary.
    pub fn circle_crossings(&self, c: Point<T>, r: T, out: &mut Vec<T>) {
        match *self {
            Window::Disk { center, radius } => circle_circle(c, r, center, radius, out),
            Window::Annulus { center, inner, outer } => {
                circle_circle(c, r, center, inner, out);
                circle_circle(c, r, center, outer, out);
            }
            Window::Rect { lo, hi } => {
                for x0 in [lo.x, hi.x] {
                    let u = (x0 - c.x) / r;
                    if u.abs() <= T::one() {
                        let a = u.acos();
                        out.push(a);
                        out.push(-a);
                    }
                }
                for y0 in [lo.y, hi.y] {
                    let u = (y0 - c.y) / r;
                    if u.abs() <= T::one() {
                        let a = u.asin();
                        out.push(a);
                        out.push(wrap_angle(T::PI() - a));
                    }
                }
            }
        }
    }

    /// Distances from `c` at which the crossing pattern of centered circles can change.
    pub fn radial_breaks(&self, c: Point<T>, out: &mut Vec<T>) {
        match *self {
            Window::Disk { center, radius } => {
                let d = (center - c).norm();
                out.extend([(d - radius).abs(), d + radius]);
            }
            Window::Annulus { center, inner, outer } => {
                let d = (center - c).norm();
                out.extend([(d - inner).abs(), d + inner, (d - outer).abs(), d + outer]);
            }
            Window::Rect { lo, hi } => {
                out.extend(
                    [lo, hi, Point::new(lo.x, hi.y), Point::new(hi.x, lo.y)].iter().map(|&q| (q - c).norm()),
                );
                out.extend([(lo.x - c.x).abs(), (hi.x - c.x).abs(), (lo.y - c.y).abs(), (hi.y - c.y).abs()]);
            }
        }
    }

    /// Uniform point by rejection from the bounding box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point<T> {
        let (lo, hi) = self.bounding_box();
        loop {
            let p = Point::new(
                lo.x + (hi.x - lo.x) * T::c(rng.random::<f64>()),
                lo.y + (hi.y - lo.y) * T::c(rng.random::<f64>()),
            );
            if self.contains(p) {
                return p;
            }
        }
    }
}

fn circle_circle<T: Scalar>(c: Point<T>, r: T, a: Point<T>, rho: T, out: &mut Vec<T>) {
    let d = (a - c).norm();
    if d == T::zero() || rho == T::zero() {
        return;
    }
    let cos_alpha = (r * r + d * d - rho * rho) / (T::c(2.0) * r * d);
    if cos_alpha.abs() <= T::one() {
        let phi = (a - c).angle();
        let alpha = cos_alpha.acos();
        out.push(wrap_angle(phi + alpha));
        out.push(wrap_angle(phi - alpha));
    }
}

pub(crate) fn wrap_angle<T: Scalar>(a: T) -> T {
    let two_pi = T::c(2.0) * T::PI();
    let mut a = a % two_pi;
    if a > T::PI() {
        a -= two_pi;
    } else if a <= -T::PI() {
        a += two_pi;
    }
    a
}

pub fn pts_count<T: Scalar>(x: &PointConfig<T>, w: &Window<T>) -> usize {
    x.iter().filter(|&&p| w.contains(p)).count()
}

/// The configuration seen from `x`.
pub fn local_view<T: Scalar>(x: &PointConfig<T>, at: Point<T>) -> PointConfig<T> {
    x.translate(-at)
}

/// dist(x, boundary of Sigma_N) / sqrt(N).
pub fn bulk_margin<T: Scalar>(x: Point<T>, n: usize) -> Result<T> {
    let sigma = Disk::<T>::system(n);
    if !sigma.contains(x) {
        return Err(Error::Domain(format!("({}, {}) lies outside Sigma_{n}", x.x, x.y)));
    }
    Ok((sigma.radius - x.norm()).max(T::zero()) / T::count(n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_rejected() {
        let p = Point::new(0.3, 0.1);
        assert!(PointConfig::new(vec![p, Point::new(1.0, 0.0), p]).is_err());
        assert!(PointConfig::new(vec![Point::new(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn counts_and_views() {
        let x = PointConfig::from_xy(&[[0.0, 0.0]]).unwrap();
        assert_eq!(pts_count(&x, &Window::centered_disk(1.0).unwrap()), 1);
        assert_eq!(pts_count(&PointConfig::<f64>::empty(), &Window::centered_disk(1.0).unwrap()), 0);
        let y = PointConfig::from_xy(&[[1.0, 1.0]]).unwrap();
        assert_eq!(local_view(&y, Point::new(1.0, 1.0)).points()[0], Point::origin());
        assert!(local_view(&PointConfig::<f64>::empty(), Point::new(2.0, 0.0)).is_empty());
    }

    #[test]
    fn boundary_is_inside() {
        let w = Window::centered_disk(1.0f64).unwrap();
        assert!(w.contains(Point::new(1.0, 0.0)));
        let r = Window::rect(Point::new(0.0, 0.0), Point::new(1.0, 2.0)).unwrap();
        assert!(r.contains(Point::new(1.0, 2.0)));
    }

    #[test]
    fn bulk_margin_values() {
        let m: f64 = bulk_margin(Point::origin(), 100).unwrap();
        assert!((m - 1.0 / std::f64::consts::PI.sqrt()).abs() < 1e-12);
        let r: f64 = system_radius(100);
        assert!(bulk_margin(Point::new(r, 0.0), 100).unwrap().abs() < 1e-12);
        let r4: f64 = system_radius(400);
        let m = bulk_margin(Point::new(r4 / 2.0, 0.0), 400).unwrap();
        assert!((m - 0.28209479).abs() < 1e-6);
        assert!(bulk_margin(Point::new(r4 * 1.01, 0.0), 400).is_err());
    }

    #[test]
    fn crossings_lie_on_both_curves() {
        let w = Window::rect(Point::new(-1.0f64, -0.5), Point::new(2.0, 1.5)).unwrap();
        let c = Point::new(0.2, 0.1);
        let mut out = Vec::new();
        w.circle_crossings(c, 1.3, &mut out);
        assert!(!out.is_empty());
        for &a in &out {
            let p = c + Point::polar(1.3, a);
            let on_edge = [(p.x + 1.0).abs(), (p.x - 2.0).abs(), (p.y + 0.5).abs(), (p.y - 1.5).abs()]
                .iter()
                .any(|&e| e < 1e-12);
            assert!(on_edge, "{p:?}");
        }
        let d = Window::disk(Point::new(1.0f64, 0.0), 0.7).unwrap();
        out.clear();
        d.circle_crossings(Point::origin(), 0.9, &mut out);
        assert_eq!(out.len(), 2);
        for &a in &out {
            let p = Point::polar(0.9, a);
            assert!(((p - Point::new(1.0, 0.0)).norm() - 0.7).abs() < 1e-12);
        }
    }
}
