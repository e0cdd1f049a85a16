//! Linear statistics, discrepancies, correlation estimators and rigidity test functions.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pts_count, Disk, Point, PointConfig, Window};
use crate::partition::cutoff_jet;
use crate::profile::{septic_step, septic_step_integral, Jet3, RadialDerivs};
use crate::quadrature::{integrate_polar_region, integrate_with_breaks, QuadOptions, Region};
use crate::stats::{variance_with_se, Welford};

pub use crate::stats::{exp_moment, MomentEstimate};

type P = Point<f64>;
pub type Evaluator = Arc<dyn Fn(P) -> f64 + Send + Sync>;
pub type Gradient = Arc<dyn Fn(P) -> [f64; 2] + Send + Sync>;
pub type RadialProfile = Arc<dyn Fn(f64) -> Jet3<f64> + Send + Sync>;

/// Rotationally symmetric shape: value F(|y - center|), zero beyond `outer`.
#[derive(Clone)]
pub struct Radial {
    pub center: P,
    pub outer: f64,
    pub profile: RadialProfile,
    /// Radii where the profile is not smooth (quadrature breakpoints).
    pub kinks: Vec<f64>,
}

#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    eval: Evaluator,
    grad: Option<Gradient>,
    pub support: Window<f64>,
    /// Declared bounds on |phi|_0..|phi|_3; infinity where not declared.
    pub seminorms: [f64; 4],
    pub radial: Option<Radial>,
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("seminorms", &self.seminorms)
            .field("radial", &self.radial.is_some())
            .finish()
    }
}

impl TestFunction {
    pub fn new(name: impl Into<String>, support: Window<f64>, eval: Evaluator) -> Self {
        Self { name: name.into(), eval, grad: None, support, seminorms: [f64::INFINITY; 4], radial: None }
    }

    pub fn with_gradient(mut self, g: Gradient) -> Self {
        self.grad = Some(g);
        self
    }

    pub fn with_seminorms(mut self, s: [f64; 4]) -> Self {
        self.seminorms = s;
        self
    }

    pub fn radial(name: impl Into<String>, center: P, outer: f64, profile: RadialProfile, kinks: Vec<f64>) -> Self {
        let prof = profile.clone();
        let eval: Evaluator = Arc::new(move |y: P| {
            let r = (y - center).norm();
            if r >= outer { 0.0 } else { prof(r).v }
        });
        let prof = profile.clone();
        let grad: Gradient = Arc::new(move |y: P| {
            let d = y - center;
            let r = d.norm();
            if r >= outer || r == 0.0 {
                return [0.0, 0.0];
            }
            let s = prof(r).d1 / r;
            [s * d.x, s * d.y]
        });
        let support = Window::Disk { center, radius: outer };
        Self {
            name: name.into(),
            eval,
            grad: Some(grad),
            support,
            seminorms: [f64::INFINITY; 4],
            radial: Some(Radial { center, outer, profile, kinks }),
        }
    }

    pub fn zero(support: Window<f64>) -> Self {
        Self::new("zero", support, Arc::new(|_| 0.0)).with_seminorms([0.0; 4])
    }

    #[inline]
    pub fn value(&self, y: P) -> f64 {
        if self.support.contains(y) { (self.eval)(y) } else { 0.0 }
    }

    pub fn gradient(&self, y: P) -> [f64; 2] {
        if let Some(g) = &self.grad {
            return g(y);
        }
        let h = 1e-6;
        let fx = (self.value(y + P::new(h, 0.0)) - self.value(y - P::new(h, 0.0))) / (2.0 * h);
        let fy = (self.value(y + P::new(0.0, h)) - self.value(y - P::new(0.0, h))) / (2.0 * h);
        [fx, fy]
    }

    /// phi(. - u).
    pub fn translate(&self, u: P) -> Self {
        let e = self.eval.clone();
        let mut out = Self::new(self.name.clone(), self.support.translate(u), Arc::new(move |y| e(y - u)));
        if let Some(g) = self.grad.clone() {
            out.grad = Some(Arc::new(move |y| g(y - u)));
        }
        out.seminorms = self.seminorms;
        out.radial = self.radial.as_ref().map(|r| Radial { center: r.center + u, ..r.clone() });
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        let e = self.eval.clone();
        let mut out = Self::new(self.name.clone(), self.support, Arc::new(move |y| a * e(y)));
        if let Some(g) = self.grad.clone() {
            out.grad = Some(Arc::new(move |y| {
                let v = g(y);
                [a * v[0], a * v[1]]
            }));
        }
        out.seminorms = self.seminorms.map(|s| s * a.abs());
        out.radial = self.radial.as_ref().map(|r| {
            let p = r.profile.clone();
            Radial { profile: Arc::new(move |t| p(t).scale(a)), ..r.clone() }
        });
        out
    }

    /// Full derivative tensors (radial functions only).
    pub fn radial_derivs(&self, y: P) -> Option<RadialDerivs<f64>> {
        let r = self.radial.as_ref()?;
        let d = (y - r.center).norm();
        let jet = if d >= r.outer { Jet3::zero() } else { (r.profile)(d) };
        Some(RadialDerivs::at(y, r.center, jet))
    }

    /// Integral of phi over the support intersected with `background`.
    pub fn integral_over(&self, background: &Window<f64>) -> f64 {
        if let Some(r) = &self.radial {
            let c = r.center;
            let full = background.min_distance_from(c) == 0.0
                && background.is_radial_about(c)
                || matches!(background, Window::Disk { center, radius } if (*center - c).norm() + r.outer <= *radius);
            if full {
                let (lo, hi) = match *background {
                    Window::Annulus { inner, outer, center } if center == c => (inner, outer.min(r.outer)),
                    Window::Disk { center, radius } if center == c => (0.0, radius.min(r.outer)),
                    _ => (0.0, r.outer),
                };
                let prof = r.profile.clone();
                return integrate_with_breaks(
                    |t: f64| 2.0 * PI * t * prof(t).v,
                    lo,
                    hi,
                    &r.kinks,
                    QuadOptions::new(1e-12, 1e-12),
                )
                .value;
            }
        }
        let (c, rmax) = match self.support {
            Window::Disk { center, radius } => (center, radius),
            Window::Annulus { center, outer, .. } => (center, outer),
            Window::Rect { lo, hi } => {
                let c = (lo + hi) * 0.5;
                (c, (hi - c).norm())
            }
        };
        let kinks = self.radial.as_ref().map(|r| r.kinks.clone()).unwrap_or_default();
        let region = Region { inside: vec![&self.support, background], outside: vec![] };
        integrate_polar_region(c, 0.0, rmax, &region, &kinks, |y| self.value(y), 1e-10).value
    }

    /// Grid maxima of |phi| and |grad phi| over the support's bounding box (and of the higher tensors for radial functions).
    pub fn measured_seminorms(&self, grid: usize) -> [f64; 4] {
        let (lo, hi) = self.support.bounding_box();
        let mut m = [0.0f64; 4];
        for a in 0..=grid {
            for b in 0..=grid {
                let y = P::new(
                    lo.x + (hi.x - lo.x) * a as f64 / grid as f64,
                    lo.y + (hi.y - lo.y) * b as f64 / grid as f64,
                );
                if let Some(d) = self.radial_derivs(y) {
                    for (k, v) in d.norms().iter().enumerate() {
                        m[k] = m[k].max(*v);
                    }
                } else {
                    m[0] = m[0].max(self.value(y).abs());
                    let g = self.gradient(y);
                    m[1] = m[1].max(g[0].hypot(g[1]));
                }
            }
        }
        m
    }

    /// Max |phi| on grid points of the enlarged bounding box that lie outside the support.
    pub fn leak_outside_support(&self, grid: usize) -> f64 {
        let (lo, hi) = self.support.bounding_box();
        let pad = (hi - lo) * 0.25;
        let (lo, hi) = (lo - pad, hi + pad);
        let mut worst: f64 = 0.0;
        for a in 0..=grid {
            for b in 0..=grid {
                let y = P::new(
                    lo.x + (hi.x - lo.x) * a as f64 / grid as f64,
                    lo.y + (hi.y - lo.y) * b as f64 / grid as f64,
                );
                if !self.support.contains(y) {
                    worst = worst.max((self.eval)(y).abs());
                }
            }
        }
        worst
    }

    /// Dirichlet energy, exact 1D quadrature for radial functions, 2D quadrature otherwise.
    pub fn dirichlet_energy(&self) -> f64 {
        if let Some(r) = &self.radial {
            let prof = r.profile.clone();
            return integrate_with_breaks(
                |t: f64| 2.0 * PI * t * prof(t).d1.powi(2),
                0.0,
                r.outer,
                &r.kinks,
                QuadOptions::new(1e-13, 1e-12),
            )
            .value;
        }
        let (lo, hi) = self.support.bounding_box();
        let c = (lo + hi) * 0.5;
        let region = Region { inside: vec![&self.support], outside: vec![] };
        integrate_polar_region(c, 0.0, (hi - c).norm(), &region, &[], |y| {
            let g = self.gradient(y);
            g[0] * g[0] + g[1] * g[1]
        }, 1e-10)
        .value
    }
}

/// Sum over points minus the background integral.
pub fn fluct(phi: &TestFunction, x: &PointConfig<f64>, background: &Window<f64>) -> f64 {
    let s: f64 = x.iter().map(|&p| phi.value(p)).sum();
    s - phi.integral_over(background)
}

/// Fluct with a precomputed background integral, for repeated evaluation.
pub fn fluct_with(phi: &TestFunction, x: &PointConfig<f64>, integral: f64) -> f64 {
    x.iter().map(|&p| phi.value(p)).sum::<f64>() - integral
}

pub fn discrepancy(x: &PointConfig<f64>, w: &Window<f64>) -> f64 {
    pts_count(x, w) as f64 - w.area()
}

/// Smooth bump: 1 on D(c, a), 0 off D(c, 2a), scaled by `height`.
pub fn smooth_bump(center: P, a: f64, height: f64) -> TestFunction {
    let prof: RadialProfile = Arc::new(move |r| cutoff_jet(Jet3::variable(r / a)).compose_scale(1.0 / a).scale(height));
    let mut f = TestFunction::radial(format!("bump(r={a})"), center, 2.0 * a, prof, vec![a]);
    let m = f.measured_seminorms(200);
    f.seminorms = m.map(|v| v * 1.02);
    f
}

/// Lipschitz tent max(0, a - |y - c|) * slope.
pub fn tent(center: P, a: f64, slope: f64) -> TestFunction {
    let prof: RadialProfile = Arc::new(move |r| {
        if r >= a { Jet3::zero() } else { Jet3::new((a - r) * slope, -slope, 0.0, 0.0) }
    });
    TestFunction::radial(format!("tent(a={a})"), center, a, prof, vec![0.0])
        .with_seminorms([a * slope.abs(), slope.abs(), f64::INFINITY, f64::INFINITY])
}

trait ComposeScale {
    fn compose_scale(self, s: f64) -> Self;
}

impl ComposeScale for Jet3<f64> {
    // Derivatives of f(r / a) with respect to r from those with respect to r / a.
    fn compose_scale(self, s: f64) -> Self {
        Jet3::new(self.v, self.d1 * s, self.d2 * s * s, self.d3 * s * s * s)
    }
}

pub const DICTIONARY_VERSION: &str = "lipschitz-dict-v1";

/// 32 fixed functions, each 1/ell-Lipschitz with support in D(x0, 4 ell): 12 tents, 12 ridges, 8 radial bumps.
pub fn lipschitz_dictionary(x0: P, ell: f64) -> Vec<TestFunction> {
    let mut out = Vec::with_capacity(32);
    let tents: [(f64, [f64; 2]); 12] = [
        (1.0, [0.0, 0.0]),
        (1.0, [2.0, 0.0]),
        (1.0, [0.0, 2.0]),
        (1.0, [-2.0, 0.0]),
        (1.0, [0.0, -2.0]),
        (2.0, [0.0, 0.0]),
        (2.0, [1.5, 0.0]),
        (2.0, [-1.5, 0.0]),
        (2.0, [0.0, 1.5]),
        (3.0, [0.0, 0.0]),
        (3.0, [0.9, 0.0]),
        (3.0, [-0.6, -0.6]),
    ];
    for (a, o) in tents {
        out.push(tent(x0 + P::new(o[0], o[1]) * ell, a * ell, 1.0 / ell));
    }
    for k in 0..6 {
        for &shift in &[0.0, 1.5] {
            let th = k as f64 * PI / 6.0;
            let e = P::polar(1.0, th);
            let support = Window::Disk { center: x0, radius: 4.0 * ell };
            let eval: Evaluator = Arc::new(move |y: P| {
                let u = (y - x0).dot(e) / ell - shift;
                let g = (1.0 - u.abs()).max(0.0);
                let h = ((4.0 * ell - (y - x0).norm()) / ell).clamp(0.0, 1.0);
                0.5 * g * h
            });
            out.push(
                TestFunction::new(format!("ridge(theta={th:.4},s={shift})"), support, eval)
                    .with_seminorms([0.5, 1.0 / ell, f64::INFINITY, f64::INFINITY]),
            );
        }
    }
    let bumps: [(f64, [f64; 2]); 8] = [
        (1.0, [0.0, 0.0]),
        (1.0, [1.5, 0.0]),
        (1.0, [-1.5, 0.0]),
        (1.0, [0.0, 1.5]),
        (1.0, [0.0, -1.5]),
        (1.5, [0.0, 0.0]),
        (1.5, [0.9, 0.0]),
        (1.5, [-0.9, 0.0]),
    ];
    let slope = cutoff_max_slope();
    for (rho, o) in bumps {
        let a = rho * ell;
        // |grad| = height * max|psi'| / a must equal 1 / ell.
        let height = a / (ell * slope);
        let mut b = smooth_bump(x0 + P::new(o[0], o[1]) * ell, a, height);
        b.seminorms[1] = 1.0 / ell;
        out.push(b);
    }
    out
}

/// max |psi'| of the unit cutoff profile.
pub fn cutoff_max_slope() -> f64 {
    (0..=4000).map(|k| cutoff_jet(Jet3::variable(1.0 + k as f64 / 4000.0)).d1.abs()).fold(0.0, f64::max)
}

/// Ghosh-Peres function: 1 on D(ell), 0 off D(2 ell e^{1/eps}), a mollified ramp in eps log(r / ell).
pub fn ghosh_peres_function(eps: f64, ell: f64) -> Result<TestFunction> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Parameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(ell >= 1.0) || !ell.is_finite() {
        return Err(Error::Parameter(format!("ell must be >= 1, got {ell}")));
    }
    let t_end = 1.0 + eps * 2f64.ln();
    let w = 0.25;
    let q_total = t_end - w;
    // q mollifies the indicator of [0, T]; G(t) = 1 - Q(t)/Q(T) with Q the antiderivative of q.
    let g_of_t = move |t: f64| -> [f64; 4] {
        if t <= 0.0 {
            return [1.0, 0.0, 0.0, 0.0];
        }
        if t >= t_end {
            return [0.0; 4];
        }
        let (q, big_q) = if t < w {
            let s = septic_step(t / w);
            ([s[0], s[1] / w, s[2] / (w * w)], w * septic_step_integral(t / w))
        } else if t > t_end - w {
            let u = (t_end - t) / w;
            let s = septic_step(u);
            ([s[0], -s[1] / w, s[2] / (w * w)], q_total - w * septic_step_integral(u))
        } else {
            ([1.0, 0.0, 0.0], w * 0.5 + (t - w))
        };
        [1.0 - big_q / q_total, -q[0] / q_total, -q[1] / q_total, -q[2] / q_total]
    };
    let outer = 2.0 * ell * (1.0 / eps).exp();
    let prof: RadialProfile = Arc::new(move |r: f64| {
        if r <= ell {
            return Jet3::constant(1.0);
        }
        let t = eps * (r / ell).ln();
        let tj = Jet3::new(t, eps / r, -eps / (r * r), 2.0 * eps / (r * r * r));
        tj.compose(g_of_t(t))
    });
    let kinks = vec![ell, ell * (w / eps).exp(), ell * ((t_end - w) / eps).exp()];
    let mut f = TestFunction::radial(format!("ghosh_peres(eps={eps},ell={ell})"), P::origin(), outer, prof, kinks);
    let mut m = [0.0f64; 4];
    for k in 0..=20_000 {
        let r = outer * k as f64 / 20_000.0;
        let d = f.radial_derivs(P::new(r, 0.0)).unwrap().norms();
        for i in 0..4 {
            m[i] = m[i].max(d[i]);
        }
    }
    f.seminorms = m.map(|v| v * 1.01);
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityRow {
    pub eps: f64,
    pub ell: f64,
    pub support_radius: f64,
    pub mean: f64,
    pub variance: f64,
    pub variance_se: f64,
    pub dirichlet: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityScan {
    pub rows: Vec<RigidityRow>,
    /// For each ell: variance non-increasing as eps decreases.
    pub monotone_in_eps: Vec<(f64, bool)>,
}

pub fn rigidity_variance_scan(
    samples: &[PointConfig<f64>],
    eps_list: &[f64],
    ell_list: &[f64],
    center: P,
    domain: &Disk<f64>,
) -> Result<RigidityScan> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: samples.len() });
    }
    let bg: Window<f64> = (*domain).into();
    let mut rows = Vec::new();
    for &ell in ell_list {
        for &eps in eps_list {
            let phi = ghosh_peres_function(eps, ell)?.translate(center);
            let outer = phi.radial.as_ref().unwrap().outer;
            if (center - domain.center).norm() + outer > domain.radius {
                return Err(Error::Domain(format!(
                    "support radius {outer:.3} around the center leaves the domain of radius {:.3}",
                    domain.radius
                )));
            }
            let integral = phi.integral_over(&bg);
            let vals: Vec<f64> = samples.iter().map(|x| fluct_with(&phi, x, integral)).collect();
            let (variance, variance_se) = variance_with_se(&vals);
            rows.push(RigidityRow {
                eps,
                ell,
                support_radius: outer,
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                variance,
                variance_se,
                dirichlet: phi.dirichlet_energy(),
                count: vals.len(),
            });
        }
    }
    let mut monotone = Vec::new();
    for &ell in ell_list {
        let mut r: Vec<&RigidityRow> = rows.iter().filter(|r| r.ell == ell).collect();
        r.sort_by(|a, b| b.eps.partial_cmp(&a.eps).unwrap());
        monotone.push((ell, r.windows(2).all(|w| w[1].variance <= w[0].variance)));
    }
    Ok(RigidityScan { rows, monotone_in_eps: monotone })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardEdgeRow {
    pub radius: f64,
    pub mean_abs_discrepancy_over_r: f64,
    pub se: f64,
}

/// E|Discr(X, D(0, r))| / r for centered disks.
pub fn radial_hard_edge_scan(samples: &[PointConfig<f64>], radii: &[f64], n: usize) -> Result<Vec<HardEdgeRow>> {
    let rn = crate::geometry::system_radius::<f64>(n);
    radii
        .iter()
        .map(|&r| {
            if !(r > 0.0 && r <= rn) {
                return Err(Error::Domain(format!("radius {r} outside (0, R_N = {rn}]")));
            }
            let w = Window::Disk { center: P::origin(), radius: r };
            let area = if r == rn { n as f64 } else { w.area() };
            let acc: Welford = samples.iter().map(|x| (pts_count(x, &w) as f64 - area).abs() / r).collect();
            Ok(HardEdgeRow { radius: r, mean_abs_discrepancy_over_r: acc.mean, se: acc.std_error() })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationGrid {
    pub center: Point<f64>,
    /// First points are drawn from D(center, bulk_radius) for k >= 2; rings for k = 1 use `edges` as radii.
    pub bulk_radius: f64,
    pub edges: Vec<f64>,
    /// System domain, used for the bulk mask (bins within distance 1 of the wall are masked).
    pub domain: Disk<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinEstimate {
    pub bin: Vec<(f64, f64)>,
    pub value: f64,
    pub se: f64,
    pub bulk: bool,
}

fn ring_area(lo: f64, hi: f64) -> f64 {
    PI * (hi * hi - lo * lo)
}

/// Binned k-point correlation estimate with ordered-tuple counting and self-exclusion.
///
/// k = 1: rings about the center. k = 2: distance from a first point in the bulk disk.
/// k = 3: pairs of distances from a first point in the bulk disk.
pub fn correlation_rho_k(samples: &[PointConfig<f64>], k: usize, grid: &CorrelationGrid) -> Result<Vec<BinEstimate>> {
    if !(1..=3).contains(&k) {
        return Err(Error::Parameter(format!("k must be 1, 2 or 3, got {k}")));
    }
    if samples.len() < 100 {
        return Err(Error::InsufficientSamples { need: 100, got: samples.len() });
    }
    if grid.edges.len() < 2 || grid.edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("bin edges must be strictly increasing".into()));
    }
    let e = &grid.edges;
    let nb = e.len() - 1;
    let wall = grid.domain.radius - (grid.center - grid.domain.center).norm() - 1.0;
    let first = Window::Disk { center: grid.center, radius: grid.bulk_radius };
    let w_area = first.area();
    let bin_of = |d: f64| -> Option<usize> {
        if d < e[0] || d >= e[nb] {
            return None;
        }
        Some(e.partition_point(|&b| b <= d) - 1)
    };
    let nbins = if k == 3 { nb * nb } else { nb };
    let mut acc = vec![Welford::new(); nbins];
    let mut counts = vec![0.0; nbins];
    for x in samples {
        counts.iter_mut().for_each(|c| *c = 0.0);
        let pts = x.points();
        match k {
            1 => {
                for p in pts {
                    if let Some(b) = bin_of((*p - grid.center).norm()) {
                        counts[b] += 1.0;
                    }
                }
                for b in 0..nb {
                    counts[b] /= ring_area(e[b], e[b + 1]);
                }
            }
            _ => {
                for (i, p) in pts.iter().enumerate() {
                    if !first.contains(*p) {
                        continue;
                    }
                    let near: Vec<usize> = pts
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != i)
                        .filter_map(|(_, q)| bin_of((*q - *p).norm()))
                        .collect();
                    if k == 2 {
                        for b in near {
                            counts[b] += 1.0;
                        }
                    } else {
                        for (a, &ba) in near.iter().enumerate() {
                            for (c, &bc) in near.iter().enumerate() {
                                if a != c {
                                    counts[ba * nb + bc] += 1.0;
                                }
                            }
                        }
                    }
                }
                for b in 0..nbins {
                    let norm = if k == 2 {
                        w_area * ring_area(e[b], e[b + 1])
                    } else {
                        let (ba, bc) = (b / nb, b % nb);
                        w_area * ring_area(e[ba], e[ba + 1]) * ring_area(e[bc], e[bc + 1])
                    };
                    counts[b] /= norm;
                }
            }
        }
        for (a, &c) in acc.iter_mut().zip(&counts) {
            a.push(c);
        }
    }
    Ok((0..nbins)
        .map(|b| {
            let (bin, reach) = match k {
                1 => (vec![(e[b], e[b + 1])], e[b + 1]),
                2 => (vec![(e[b], e[b + 1])], grid.bulk_radius + e[b + 1]),
                _ => {
                    let (ba, bc) = (b / nb, b % nb);
                    (vec![(e[ba], e[ba + 1]), (e[bc], e[bc + 1])], grid.bulk_radius + e[ba + 1].max(e[bc + 1]))
                }
            };
            BinEstimate { bin, value: acc[b].mean, se: acc[b].std_error(), bulk: reach <= wall }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_fluct_is_minus_integral() {
        // Bump with plateau radius a has integral pi when scaled by 1 / (integral / pi).
        let b = smooth_bump(P::origin(), 0.5, 1.0);
        let unit = Window::Disk { center: P::origin(), radius: 5.0 };
        let i = b.integral_over(&unit);
        let b = b.scaled(PI / i);
        assert!((fluct(&b, &PointConfig::empty(), &unit) + PI).abs() < 1e-10);
        let z = TestFunction::zero(unit);
        assert_eq!(fluct(&z, &PointConfig::from_xy(&[[0.1, 0.2]]).unwrap(), &unit), 0.0);
    }

    #[test]
    fn discrepancy_examples() {
        let unit = Window::Disk { center: P::origin(), radius: 1.0 };
        let x = PointConfig::from_xy(&[[0.1, 0.0], [0.0, 0.2], [-0.3, 0.1], [0.0, -0.5]]).unwrap();
        assert!((discrepancy(&x, &unit) - (4.0 - PI)).abs() < 1e-15);
        assert!((discrepancy(&PointConfig::empty(), &unit) + PI).abs() < 1e-15);
    }

    #[test]
    fn ghosh_peres_values() {
        for &(eps, ell) in &[(0.5, 1.0), (0.25, 3.0)] {
            let f = ghosh_peres_function(eps, ell).unwrap();
            assert_eq!(f.value(P::origin()), 1.0);
            let far = 3.0 * ell * (1.0f64 / eps).exp();
            assert_eq!(f.value(P::new(far, 0.0)), 0.0);
            assert!(f.leak_outside_support(50) == 0.0);
        }
        assert!(ghosh_peres_function(1.0, 1.0).is_err());
        assert!(ghosh_peres_function(0.5, 0.5).is_err());
    }

    #[test]
    fn ghosh_peres_jets_match_differences() {
        let f = ghosh_peres_function(0.5, 1.0).unwrap();
        let prof = f.radial.as_ref().unwrap().profile.clone();
        for &r in &[1.05, 1.3, 2.0, 5.0, 12.0] {
            let h = 1e-5;
            let d1 = (prof(r + h).v - prof(r - h).v) / (2.0 * h);
            let d2 = (prof(r + h).d1 - prof(r - h).d1) / (2.0 * h);
            let d3 = (prof(r + h).d2 - prof(r - h).d2) / (2.0 * h);
            let j = prof(r);
            assert!((j.d1 - d1).abs() < 1e-7, "{r}");
            assert!((j.d2 - d2).abs() < 1e-6, "{r}");
            assert!((j.d3 - d3).abs() < 1e-5, "{r}");
        }
    }

    #[test]
    fn general_integral_matches_radial_path() {
        let b = smooth_bump(P::new(0.3, -0.2), 0.7, 1.3);
        let bg = Window::Disk { center: P::origin(), radius: 10.0 };
        let radial = b.integral_over(&bg);
        let mut general = b.clone();
        general.radial = None;
        let g = general.integral_over(&bg);
        assert!((radial - g).abs() < 1e-8, "{radial} {g}");
    }

    #[test]
    fn dictionary_shape() {
        let d = lipschitz_dictionary(P::new(1.0, 2.0), 2.0);
        assert_eq!(d.len(), 32);
        for f in &d {
            let (lo, hi) = f.support.bounding_box();
            assert!((lo - P::new(1.0, 2.0)).norm() <= 8.0 * 2f64.sqrt() + 1e-9);
            assert!((hi - P::new(1.0, 2.0)).norm() <= 8.0 * 2f64.sqrt() + 1e-9);
            let m = f.measured_seminorms(120);
            assert!(m[1] <= 0.5 * 1.03, "{} {}", f.name, m[1]);
        }
    }
}
