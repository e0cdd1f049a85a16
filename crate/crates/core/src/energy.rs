//! Logarithmic interaction energies with a uniform neutralizing background.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::geometry::{Disk, Point, PointConfig, Window};
use crate::quadrature::{integrate, integrate_with_breaks, QuadOptions};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyBreakdown<T> {
    pub point_point: T,
    pub point_background: T,
    pub background_background: T,
    pub total: T,
}

impl<T: Scalar> EnergyBreakdown<T> {
    pub fn new(point_point: T, point_background: T, background_background: T) -> Self {
        Self {
            point_point,
            point_background,
            background_background,
            total: point_point + point_background + background_background,
        }
    }
}

#[inline]
pub fn log_kernel<T: Scalar>(x: Point<T>, y: Point<T>) -> T {
    let d2 = (x - y).norm2();
    if d2 == T::zero() {
        T::infinity()
    } else {
        -T::c(0.5) * d2.ln()
    }
}

/// Potential of unit density on the disk of radius `radius` centered at the origin, at distance `r`.
#[inline]
pub fn disk_potential_radial<T: Scalar>(r: T, radius: T) -> T {
    let pi = T::PI();
    let r2 = radius * radius;
    if r <= radius {
        pi * r2 * (-radius.ln()) + pi * (r2 - r * r) * T::c(0.5)
    } else {
        -pi * r2 * r.ln()
    }
}

/// Integral of -log|x - y| over the disk of radius R centered at the origin.
pub fn disk_background_potential<T: Scalar>(x: Point<T>, radius: T) -> T {
    disk_potential_radial(x.norm(), radius)
}

/// Radial derivative of the disk potential.
#[inline]
pub fn disk_potential_slope<T: Scalar>(r: T, radius: T) -> T {
    if r <= radius {
        -T::PI() * r
    } else {
        -T::PI() * radius * radius / r
    }
}

/// Background self-interaction 1/2 m^2 (-log R + 1/4) of a disk, m = pi R^2.
pub fn disk_self_energy<T: Scalar>(radius: T) -> T {
    let m = T::PI() * radius * radius;
    T::c(0.5) * m * m * (-radius.ln() + T::c(0.25))
}

// Integral of -s log s over [0, rho].
#[inline]
fn radial_log_primitive<T: Scalar>(rho: T) -> T {
    if rho <= T::zero() {
        return T::zero();
    }
    let r2 = rho * rho;
    -T::c(0.5) * r2 * rho.ln() + T::c(0.25) * r2
}

/// Integral of -log|x - y| over a rectangle, in polar coordinates about x with the radial part exact.
pub fn rect_potential<T: Scalar>(x: Point<T>, lo: Point<T>, hi: Point<T>, tol: T) -> T {
    let corners = [lo, hi, Point::new(lo.x, hi.y), Point::new(hi.x, lo.y)];
    let mut breaks: Vec<T> = corners
        .iter()
        .filter(|&&c| c != x)
        .map(|&c| {
            let a = (c - x).angle();
            if a < T::zero() { a + T::c(2.0) * T::PI() } else { a }
        })
        .collect();
    breaks.extend([T::c(0.5) * T::PI(), T::PI(), T::c(1.5) * T::PI()]);
    let ray = |th: T| {
        let (d, e) = (th.cos(), th.sin());
        let mut s0 = T::zero();
        let mut s1 = T::infinity();
        for (p, dp, l, h) in [(x.x, d, lo.x, hi.x), (x.y, e, lo.y, hi.y)] {
            if dp.abs() < T::c(1e-300).max(T::min_positive_value()) {
                if p < l || p > h {
                    return T::zero();
                }
            } else {
                let (a, b) = ((l - p) / dp, (h - p) / dp);
                s0 = s0.max(a.min(b));
                s1 = s1.min(a.max(b));
            }
        }
        if s1 <= s0 {
            T::zero()
        } else {
            radial_log_primitive(s1) - radial_log_primitive(s0)
        }
    };
    integrate_with_breaks(ray, T::zero(), T::c(2.0) * T::PI(), &breaks, QuadOptions::new(tol, T::c(1e-13)))
        .value
}

/// Integral of -log|x - y| dy over the window.
pub fn window_potential<T: Scalar>(x: Point<T>, w: &Window<T>) -> T {
    match *w {
        Window::Disk { center, radius } => disk_potential_radial((x - center).norm(), radius),
        Window::Annulus { center, inner, outer } => {
            let r = (x - center).norm();
            let hole = if inner > T::zero() { disk_potential_radial(r, inner) } else { T::zero() };
            disk_potential_radial(r, outer) - hole
        }
        Window::Rect { lo, hi } => rect_potential(x, lo, hi, T::c(1e-11)),
    }
}

fn self_energy_cache() -> &'static Mutex<HashMap<(u8, [u64; 4]), f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(u8, [u64; 4]), f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// 1/2 of the double integral of -log|x - y| over the window; memoized for non-disk shapes.
pub fn window_self_energy<T: Scalar>(w: &Window<T>) -> T {
    match *w {
        Window::Disk { radius, .. } => disk_self_energy(radius),
        Window::Annulus { inner, outer, .. } => {
            let key = (1u8, [inner.as_f64().to_bits(), outer.as_f64().to_bits(), 0, 0]);
            T::c(cached(key, || annulus_self_energy(inner.as_f64(), outer.as_f64())))
        }
        Window::Rect { lo, hi } => {
            // Translation invariant: key on the side lengths only.
            let (a, b) = ((hi.x - lo.x).as_f64(), (hi.y - lo.y).as_f64());
            let key = (2u8, [a.to_bits(), b.to_bits(), 0, 0]);
            T::c(cached(key, || rect_self_energy(a, b)))
        }
    }
}

fn cached(key: (u8, [u64; 4]), f: impl FnOnce() -> f64) -> f64 {
    if let Some(&v) = self_energy_cache().lock().unwrap().get(&key) {
        return v;
    }
    let v = f();
    self_energy_cache().lock().unwrap().insert(key, v);
    v
}

fn annulus_self_energy(inner: f64, outer: f64) -> f64 {
    let u = |r: f64| {
        let hole = if inner > 0.0 { disk_potential_radial(r, inner) } else { 0.0 };
        (disk_potential_radial(r, outer) - hole) * 2.0 * std::f64::consts::PI * r
    };
    0.5 * integrate(u, inner, outer, QuadOptions::new(1e-10, 1e-13)).value
}

fn rect_self_energy(a: f64, b: f64) -> f64 {
    let (lo, hi) = (Point::new(0.0, 0.0), Point::new(a, b));
    let opts = QuadOptions::new(1e-10, 1e-12);
    let inner = |x: f64| {
        integrate(|y: f64| rect_potential(Point::new(x, y), lo, hi, 1e-12), 0.0, b, opts).value
    };
    0.5 * integrate(inner, 0.0, a, opts).value
}

/// Pairwise summation with fan-in two; fixes the reduction order.
pub fn tree_sum<T: Scalar>(v: &[T]) -> T {
    match v.len() {
        0 => T::zero(),
        1 => v[0],
        n => tree_sum(&v[..n / 2]) + tree_sum(&v[n / 2..]),
    }
}

fn pair_energy<T: Scalar>(pts: &[Point<T>]) -> T {
    let rows: Vec<T> = (0..pts.len())
        .map(|i| {
            let p = pts[i];
            let mut s = T::zero();
            for q in &pts[i + 1..] {
                s += log_kernel(p, *q);
            }
            s
        })
        .collect();
    tree_sum(&rows)
}

fn assemble<T: Scalar>(x: &PointConfig<T>, potential: impl Fn(Point<T>) -> T, self_energy: T) -> EnergyBreakdown<T> {
    let pp = pair_energy(x.points());
    let pb: Vec<T> = x.iter().map(|&p| -potential(p)).collect();
    EnergyBreakdown::new(pp, tree_sum(&pb), self_energy)
}

/// F_N with background on the disk `domain`.
pub fn interaction_energy<T: Scalar>(x: &PointConfig<T>, domain: &Disk<T>) -> Result<EnergyBreakdown<T>> {
    if let Some(p) = x.iter().find(|&&p| !domain.contains(p)) {
        return Err(Error::Domain(format!("point ({}, {}) outside the domain disk", p.x, p.y)));
    }
    let (c, r) = (domain.center, domain.radius);
    Ok(assemble(x, |p| disk_potential_radial((p - c).norm(), r), disk_self_energy(r)))
}

/// F_Lambda with background Lebesgue measure restricted to the window.
pub fn local_energy<T: Scalar>(x: &PointConfig<T>, w: &Window<T>) -> Result<EnergyBreakdown<T>> {
    if let Some(p) = x.iter().find(|&&p| !w.contains(p)) {
        return Err(Error::Domain(format!("point ({}, {}) outside the window", p.x, p.y)));
    }
    Ok(assemble(x, |p| window_potential(p, w), window_self_energy(w)))
}

/// sum_{j != i} [-log|new - x_j| + log|old - x_j|].
///
/// Ratios of squared distances are multiplied four at a time before one logarithm.
#[inline]
pub fn pair_delta<T: Scalar>(pts: &[Point<T>], i: usize, new: Point<T>) -> T {
    let old = pts[i];
    let mut acc = T::zero();
    let mut buf = [T::one(); 4];
    let mut k = 0;
    for (j, q) in pts.iter().enumerate() {
        if j == i {
            continue;
        }
        let dn = (new - *q).norm2();
        if dn == T::zero() {
            return T::infinity();
        }
        buf[k] = (old - *q).norm2() / dn;
        k += 1;
        if k == 4 {
            acc += chunk_log(&buf);
            k = 0;
        }
    }
    acc += chunk_log(&buf[..k]);
    T::c(0.5) * acc
}

#[inline]
fn chunk_log<T: Scalar>(ratios: &[T]) -> T {
    let prod = ratios.iter().fold(T::one(), |a, &b| a * b);
    if prod.is_normal() {
        prod.ln()
    } else {
        // Over- or underflow of the product: fall back to one log per ratio.
        ratios.iter().map(|r| r.ln()).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MoveDelta<T> {
    pub point_point: T,
    pub point_background: T,
}

impl<T: Scalar> MoveDelta<T> {
    pub fn total(&self) -> T {
        self.point_point + self.point_background
    }
}

pub fn move_delta<T: Scalar>(x: &PointConfig<T>, i: usize, new: Point<T>, domain: &Disk<T>) -> Result<MoveDelta<T>> {
    if i >= x.n() {
        return Err(Error::IndexOutOfRange { index: i, len: x.n() });
    }
    if !domain.contains(new) {
        return Err(Error::Domain("proposed position outside the domain disk".into()));
    }
    let old = x.points()[i];
    let (c, r) = (domain.center, domain.radius);
    let pb = disk_potential_radial((old - c).norm(), r) - disk_potential_radial((new - c).norm(), r);
    Ok(MoveDelta { point_point: pair_delta(x.points(), i, new), point_background: pb })
}

/// F_N after moving point i to `new`, minus F_N before.
pub fn delta_energy_move<T: Scalar>(x: &PointConfig<T>, i: usize, new: Point<T>, domain: &Disk<T>) -> Result<T> {
    move_delta(x, i, new, domain).map(|d| d.total())
}
