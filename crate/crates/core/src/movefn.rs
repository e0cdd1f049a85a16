//! Partial move functions: layered evaluation, the direct signed-measure form, convergence
//! diagnostics across truncation levels, and the Taylor split of far layers.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Disk, Point, PointConfig, Window};
use crate::observables::{Evaluator, TestFunction};
use crate::partition::{cumulative_weight, DyadicPartition};
use crate::quadrature::{integrate_polar_region, Region};

type P = Point<f64>;

/// Where the background and the exterior live.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Volume {
    /// Finite system on the given disk: everything is multiplied by its indicator.
    Finite(Disk<f64>),
    /// Infinite-volume form; the exterior configuration is only known up to `coverage`.
    Infinite { coverage: f64 },
}

impl Volume {
    fn check_coverage(&self, p: u32) -> Result<()> {
        if let Volume::Infinite { coverage } = *self {
            let need = 2f64.powi(p as i32 + 1);
            if coverage < need {
                return Err(Error::Coverage { have: coverage, need });
            }
        }
        Ok(())
    }

    fn contains(&self, y: P) -> bool {
        match self {
            Volume::Finite(d) => d.contains(y),
            Volume::Infinite { .. } => true,
        }
    }

    fn window(&self) -> Option<Window<f64>> {
        match self {
            Volume::Finite(d) => Some((*d).into()),
            Volume::Infinite { .. } => None,
        }
    }

    fn radial(&self) -> bool {
        match self {
            Volume::Finite(d) => d.center == P::origin(),
            Volume::Infinite { .. } => true,
        }
    }
}

/// Per-layer absolute tolerance for background integrals.
pub const LAYER_TOL: f64 = 1e-8;

/// Layer kernel y -> (-log|x - y| + log|y|) chi_i(y).
pub fn phi_ix(i: u32, x: P, partition: &DyadicPartition<f64>) -> TestFunction {
    let part = partition.clone();
    let eval: Evaluator = Arc::new(move |y: P| layer_kernel(&part, i, x, y));
    let (inner, outer) = (DyadicPartition::<f64>::inner_radius(i), DyadicPartition::<f64>::outer_radius(i));
    let support = if i == 0 {
        Window::Disk { center: P::origin(), radius: outer }
    } else {
        Window::Annulus { center: P::origin(), inner, outer }
    };
    TestFunction::new(format!("phi_{i},x"), support, eval)
}

#[inline]
fn layer_kernel(part: &DyadicPartition<f64>, i: u32, x: P, y: P) -> f64 {
    let c = part.chi(i, y);
    if c == 0.0 {
        return 0.0;
    }
    let d2 = (x - y).norm2();
    let y2 = y.norm2();
    0.5 * (y2 / d2).ln() * c
}

/// True when Lambda is a disk centered at the origin and the background is radial: then the
/// background part of every layer vanishes (mean value of log over circles) and the background
/// part of the direct form does not depend on x.
pub fn newton_fast_path(window: &Window<f64>, volume: &Volume) -> bool {
    matches!(window, Window::Disk { center, .. } if *center == P::origin()) && volume.radial()
}

/// Integral of phi_{i,x} over (complement of Lambda) intersected with the volume.
pub fn layer_background(i: u32, x: P, window: &Window<f64>, volume: &Volume, part: &DyadicPartition<f64>) -> f64 {
    if newton_fast_path(window, volume) {
        return 0.0;
    }
    layer_background_quadrature(i, x, window, volume, part)
}

/// Same integral, always by radial-angular adaptive quadrature.
pub fn layer_background_quadrature(
    i: u32,
    x: P,
    window: &Window<f64>,
    volume: &Volume,
    part: &DyadicPartition<f64>,
) -> f64 {
    let (inner, outer) = (DyadicPartition::<f64>::inner_radius(i), DyadicPartition::<f64>::outer_radius(i));
    let vol = volume.window();
    let mut region = Region { inside: vec![], outside: vec![window] };
    if let Some(v) = vol.as_ref() {
        region.inside.push(v);
    }
    let tol = LAYER_TOL * 2f64.powi(-(i as i32));
    let breaks = [x.norm(), 2f64.powi(i as i32)];
    integrate_polar_region(P::origin(), inner, outer, &region, &breaks, |y| layer_kernel(part, i, x, y), tol).value
}

/// Exterior points (outside Lambda, inside the volume) within the reach of layers 0..=p.
fn exterior_points(x: &PointConfig<f64>, window: &Window<f64>, volume: &Volume, p: u32) -> Vec<P> {
    let reach = DyadicPartition::<f64>::outer_radius(p);
    x.iter().copied().filter(|&y| !window.contains(y) && volume.contains(y) && y.norm() < reach).collect()
}

/// Contribution of layer i for a single interior point x: Fluct[phi_{i,x} 1_{complement}](X).
fn layer_term(i: u32, x: P, ext: &[P], window: &Window<f64>, volume: &Volume, part: &DyadicPartition<f64>) -> f64 {
    let s: f64 = ext.iter().map(|&y| layer_kernel(part, i, x, y)).sum();
    s - layer_background(i, x, window, volume, part)
}

/// Per-layer values sum_{x in X'} Fluct[phi_{i,x} 1_{complement}](X) for i = 0..=p.
pub fn tilde_layers(
    x_new: &PointConfig<f64>,
    x: &PointConfig<f64>,
    window: &Window<f64>,
    p: u32,
    volume: &Volume,
    part: &DyadicPartition<f64>,
) -> Result<Vec<f64>> {
    volume.check_coverage(p)?;
    if let Some(q) = x_new.iter().find(|&&q| !window.contains(q)) {
        return Err(Error::Domain(format!("proposed point ({}, {}) outside the window", q.x, q.y)));
    }
    let ext = exterior_points(x, window, volume, p);
    Ok((0..=p)
        .map(|i| x_new.iter().map(|&q| layer_term(i, q, &ext, window, volume, part)).sum())
        .collect())
}

/// Layered form of the partial move function from the reference configuration.
pub fn partial_move_tilde(
    x_new: &PointConfig<f64>,
    x: &PointConfig<f64>,
    window: &Window<f64>,
    p: u32,
    volume: &Volume,
    part: &DyadicPartition<f64>,
) -> Result<f64> {
    Ok(tilde_layers(x_new, x, window, p, volume, part)?.iter().sum())
}

fn check_canonical(x_new: &PointConfig<f64>, x: &PointConfig<f64>, window: &Window<f64>) -> Result<PointConfig<f64>> {
    let inside = x.restrict(window);
    if inside.n() != x_new.n() {
        return Err(Error::Canonical { interior: inside.n(), probe: x_new.n() });
    }
    Ok(inside)
}

/// M^p = tilde(X') - tilde(X_Lambda).
pub fn partial_move(
    x_new: &PointConfig<f64>,
    x: &PointConfig<f64>,
    window: &Window<f64>,
    p: u32,
    volume: &Volume,
    part: &DyadicPartition<f64>,
) -> Result<f64> {
    let inside = check_canonical(x_new, x, window)?;
    Ok(partial_move_tilde(x_new, x, window, p, volume, part)? - partial_move_tilde(&inside, x, window, p, volume, part)?)
}

/// Potential of the exterior signed measure (X - Leb) restricted to the complement of Lambda,
/// weighted by sum_{i <= p} chi_i, at points of Lambda.
#[derive(Clone, Debug)]
pub struct ExteriorField {
    window: Window<f64>,
    volume: Volume,
    p: u32,
    sources: Vec<(P, f64)>,
    // Background part when it does not depend on x.
    constant_background: Option<f64>,
}

impl ExteriorField {
    pub fn new(x: &PointConfig<f64>, window: &Window<f64>, p: u32, volume: &Volume) -> Result<Self> {
        volume.check_coverage(p)?;
        let sources = exterior_points(x, window, volume, p)
            .into_iter()
            .map(|y| (y, cumulative_weight(p, y.norm())))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        let mut f = Self { window: *window, volume: *volume, p, sources, constant_background: None };
        if newton_fast_path(window, volume) {
            f.constant_background = Some(f.background_quadrature(P::origin()));
        }
        Ok(f)
    }

    /// A field that vanishes identically (no exterior, no background).
    pub fn empty(window: &Window<f64>) -> Self {
        Self {
            window: *window,
            volume: Volume::Infinite { coverage: f64::INFINITY },
            p: 0,
            sources: Vec::new(),
            constant_background: Some(0.0),
        }
    }

    pub fn source_count(&self) -> usize {
        self.sources.len()
    }

    fn background_quadrature(&self, x: P) -> f64 {
        let reach = DyadicPartition::<f64>::outer_radius(self.p);
        let vol = self.volume.window();
        let mut region = Region { inside: vec![], outside: vec![&self.window] };
        if let Some(v) = vol.as_ref() {
            region.inside.push(v);
        }
        let p = self.p;
        let breaks = [x.norm(), 2f64.powi(p as i32)];
        integrate_polar_region(
            P::origin(),
            0.0,
            reach,
            &region,
            &breaks,
            |y| -0.5 * (x - y).norm2().ln() * cumulative_weight(p, y.norm()),
            LAYER_TOL,
        )
        .value
    }

    #[inline]
    pub fn point_part(&self, x: P) -> f64 {
        let mut s = 0.0;
        for &(y, w) in &self.sources {
            s -= 0.5 * (x - y).norm2().ln() * w;
        }
        s
    }

    pub fn background_part(&self, x: P) -> f64 {
        match self.constant_background {
            Some(c) => c,
            None => self.background_quadrature(x),
        }
    }

    pub fn potential(&self, x: P) -> f64 {
        self.point_part(x) - self.background_part(x)
    }

    /// Difference of potentials, skipping the background when it is constant.
    pub fn delta(&self, from: P, to: P) -> f64 {
        let pt = self.point_part(to) - self.point_part(from);
        match self.constant_background {
            Some(_) => pt,
            None => pt - (self.background_part(to) - self.background_part(from)),
        }
    }
}

/// Direct signed-measure form: integral of -log|x - y| d(X' - X_Lambda)(x) against the weighted exterior.
pub fn partial_move_direct(
    x_new: &PointConfig<f64>,
    x: &PointConfig<f64>,
    window: &Window<f64>,
    p: u32,
    volume: &Volume,
) -> Result<f64> {
    let inside = check_canonical(x_new, x, window)?;
    let field = ExteriorField::new(x, window, p, volume)?;
    let a: f64 = x_new.iter().map(|&q| field.potential(q)).sum();
    let b: f64 = inside.iter().map(|&q| field.potential(q)).sum();
    Ok(a - b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoveEval {
    pub window: Window<f64>,
    pub p_values: Vec<u32>,
    /// tilde M^p evaluated at X'.
    pub tilde_new: Vec<f64>,
    /// tilde M^p evaluated at X_Lambda.
    pub tilde_old: Vec<f64>,
    pub values: Vec<f64>,
    /// Layer-i contribution to M^p (same for every p >= i).
    pub layers: Vec<f64>,
    /// |M^{p+1} - M^p| for p = 0..p_max-1.
    pub increments: Vec<f64>,
    pub tolerance: f64,
    pub converged: bool,
    /// M^{p_max} when converged.
    pub value: Option<f64>,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-3;

pub fn convergence_diagnostic(
    x_new: &PointConfig<f64>,
    x: &PointConfig<f64>,
    window: &Window<f64>,
    p_max: u32,
    volume: &Volume,
    part: &DyadicPartition<f64>,
    tolerance: f64,
) -> Result<MoveEval> {
    let inside = check_canonical(x_new, x, window)?;
    let ln = tilde_layers(x_new, x, window, p_max, volume, part)?;
    let lo = tilde_layers(&inside, x, window, p_max, volume, part)?;
    let layers: Vec<f64> = ln.iter().zip(&lo).map(|(a, b)| a - b).collect();
    let cum = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .scan(0.0, |s, &t| {
                *s += t;
                Some(*s)
            })
            .collect()
    };
    let (tilde_new, tilde_old, values) = (cum(&ln), cum(&lo), cum(&layers));
    let increments: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let tail = &increments[increments.len().saturating_sub(3)..];
    let converged = !tail.is_empty() && tail.iter().all(|&d| d < tolerance);
    Ok(MoveEval {
        window: *window,
        p_values: (0..=p_max).collect(),
        value: converged.then(|| *values.last().unwrap()),
        tilde_new,
        tilde_old,
        values,
        layers,
        increments,
        tolerance,
        converged,
    })
}

/// Far-layer Taylor split phi_{i,x} = <x, J_i> + Rem_i(x, .).
pub struct TaylorSplit {
    pub i: u32,
    pub x: P,
    part: DyadicPartition<f64>,
    pub rem: TestFunction,
}

/// J_i(y) = y chi_i(y) / |y|^2.
pub fn j_field(i: u32, y: P, part: &DyadicPartition<f64>) -> [f64; 2] {
    let c = part.chi(i, y);
    if c == 0.0 {
        return [0.0, 0.0];
    }
    let s = c / y.norm2();
    [y.x * s, y.y * s]
}

pub fn taylor_split(i: u32, x: P, window: &Window<f64>, part: &DyadicPartition<f64>) -> Result<TaylorSplit> {
    let reach = window.max_distance_from(P::origin()).max(x.norm());
    if i < 4 || reach > 2f64.powi(i as i32 - 4) {
        return Err(Error::Precondition(format!(
            "layer {i} overlaps the window (window reaches radius {reach:.3}, need <= 2^(i-4))"
        )));
    }
    let p2 = part.clone();
    let eval: Evaluator = Arc::new(move |y: P| {
        let j = j_field(i, y, &p2);
        layer_kernel(&p2, i, x, y) - (x.x * j[0] + x.y * j[1])
    });
    let support = Window::Annulus {
        center: P::origin(),
        inner: DyadicPartition::<f64>::inner_radius(i),
        outer: DyadicPartition::<f64>::outer_radius(i),
    };
    Ok(TaylorSplit { i, x, part: part.clone(), rem: TestFunction::new(format!("rem_{i}"), support, eval) })
}

impl TaylorSplit {
    /// <x, Fluct[J_i](X)> with background over the annulus intersected with `background`.
    pub fn j_contribution(&self, config: &PointConfig<f64>, background: Option<&Window<f64>>) -> f64 {
        if self.x == P::origin() {
            return 0.0;
        }
        let s = config.iter().fold([0.0, 0.0], |acc, &y| {
            let j = j_field(self.i, y, &self.part);
            [acc[0] + j[0], acc[1] + j[1]]
        });
        let annulus = self.rem.support;
        let mut integral = [0.0, 0.0];
        // A radial background makes the integral of J_i vanish by symmetry.
        let radial_bg = background.is_none_or(|b| b.is_radial_about(P::origin()) && b.max_distance_from(P::origin()) >= DyadicPartition::<f64>::outer_radius(self.i));
        if !radial_bg {
            let mut region = Region { inside: vec![&annulus], outside: vec![] };
            if let Some(b) = background {
                region.inside.push(b);
            }
            for (k, slot) in integral.iter_mut().enumerate() {
                *slot = integrate_polar_region(P::origin(), 0.0, DyadicPartition::<f64>::outer_radius(self.i), &region, &[], |y| j_field(self.i, y, &self.part)[k], 1e-12).value;
            }
        }
        self.x.x * (s[0] - integral[0]) + self.x.y * (s[1] - integral[1])
    }

    /// Grid maxima of |Rem_i(x, .)| and of its gradient by central differences, over the annulus.
    pub fn measured_rem(&self, n_r: usize, n_theta: usize) -> [f64; 2] {
        let (inner, outer) = (DyadicPartition::<f64>::inner_radius(self.i), DyadicPartition::<f64>::outer_radius(self.i));
        let h = inner * 1e-4;
        let mut m = [0.0f64; 2];
        for a in 0..=n_r {
            let r = inner + (outer - inner) * a as f64 / n_r as f64;
            for b in 0..n_theta {
                let y = P::polar(r, 2.0 * std::f64::consts::PI * b as f64 / n_theta as f64);
                m[0] = m[0].max(self.rem.value(y).abs());
                let gx = (self.rem.value(y + P::new(h, 0.0)) - self.rem.value(y - P::new(h, 0.0))) / (2.0 * h);
                let gy = (self.rem.value(y + P::new(0.0, h)) - self.rem.value(y - P::new(0.0, h))) / (2.0 * h);
                m[1] = m[1].max(gx.hypot(gy));
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part() -> DyadicPartition<f64> {
        crate::partition::build_dyadic_partition()
    }

    #[test]
    fn phi_ix_trivial_cases() {
        let pt = part();
        let f = phi_ix(3, P::origin(), &pt);
        assert_eq!(f.value(P::new(5.0, 1.0)), 0.0);
        let g = phi_ix(3, P::new(0.3, 0.2), &pt);
        assert_eq!(g.value(P::new(0.5, 0.0)), 0.0);
        assert_eq!(g.value(P::new(40.0, 0.0)), 0.0);
    }

    #[test]
    fn empty_new_config_is_zero() {
        let pt = part();
        let x = PointConfig::from_xy(&[[3.0, 0.5], [-2.0, 4.0], [0.2, 0.1]]).unwrap();
        let w = Window::centered_disk(1.0).unwrap();
        let vol = Volume::Finite(Disk::centered(6.0).unwrap());
        for p in 0..5 {
            assert_eq!(partial_move_tilde(&PointConfig::empty(), &x, &w, p, &vol, &pt).unwrap(), 0.0);
        }
    }

    #[test]
    fn identity_move_is_zero_and_count_mismatch_errors() {
        let pt = part();
        let x = PointConfig::from_xy(&[[3.0, 0.5], [-2.0, 4.0], [0.2, 0.1]]).unwrap();
        let w = Window::centered_disk(1.0).unwrap();
        let vol = Volume::Finite(Disk::centered(6.0).unwrap());
        let inside = x.restrict(&w);
        assert_eq!(partial_move(&inside, &x, &w, 4, &vol, &pt).unwrap(), 0.0);
        assert!(matches!(
            partial_move(&PointConfig::empty(), &x, &w, 4, &vol, &pt),
            Err(Error::Canonical { .. })
        ));
    }

    #[test]
    fn coverage_is_enforced() {
        let pt = part();
        let x = PointConfig::from_xy(&[[3.0, 0.5]]).unwrap();
        let w = Window::centered_disk(1.0).unwrap();
        let vol = Volume::Infinite { coverage: 10.0 };
        assert!(partial_move_tilde(&PointConfig::empty(), &x, &w, 2, &vol, &pt).is_ok());
        assert!(matches!(
            partial_move_tilde(&PointConfig::empty(), &x, &w, 4, &vol, &pt),
            Err(Error::Coverage { .. })
        ));
    }

    #[test]
    fn taylor_reassembly_and_precondition() {
        let pt = part();
        let w = Window::centered_disk(1.0).unwrap();
        assert!(taylor_split(3, P::new(0.5, 0.1), &w, &pt).is_err());
        let x = P::new(0.5, -0.3);
        let t = taylor_split(6, x, &w, &pt).unwrap();
        for &y in &[P::new(40.0, 3.0), P::new(-20.0, 50.0), P::new(0.0, 100.0)] {
            let j = j_field(6, y, &pt);
            let lhs = x.x * j[0] + x.y * j[1] + t.rem.value(y);
            let rhs = phi_ix(6, x, &pt).value(y);
            assert!((lhs - rhs).abs() < 1e-12);
        }
        let z = taylor_split(6, P::origin(), &w, &pt).unwrap();
        assert_eq!(z.rem.value(P::new(50.0, 0.0)), 0.0);
    }
}
