//! Truncated electric fields of a configuration against the neutralizing background, the local
//! energies Ener and EnerPts, the local-law scan and the deterministic fluctuation ratio.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::{pts_count, Disk, Point, PointConfig, Window};
use crate::observables::{fluct, TestFunction};
use crate::stats::{quantile, slope_fit, SlopeFit, Welford};

type P = Point<f64>;

/// min(log(|x| / eta), 0).
pub fn f_eta(x: P, eta: f64) -> f64 {
    assert!(eta > 0.0, "truncation radius must be positive");
    (x.norm() / eta).ln().min(0.0)
}

/// r(x_i) = min(min_{j != i} |x_i - x_j|, 1) / 4.
pub fn nn_distance(x: &PointConfig<f64>, i: usize) -> f64 {
    let p = x.points()[i];
    let d = x
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &q)| p.dist(q))
        .fold(f64::INFINITY, f64::min);
    0.25 * d.min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum EtaPolicy {
    /// eta_i = r(x_i).
    NearestNeighbor,
    /// eta_i = s r(x_i), used for monotonicity checks.
    Scaled(f64),
    /// The same eta for every point; zero means no truncation.
    Uniform(f64),
}

/// Field grad h_eta: the gradient of the log-potential of X - 1_Sigma Leb with each charge smeared
/// on the circle of radius eta_i around it (so it contributes nothing inside that circle).
#[derive(Clone, Debug)]
pub struct TruncatedField {
    pts: Vec<P>,
    eta: Vec<f64>,
    domain: Disk<f64>,
}

impl TruncatedField {
    pub fn new(x: &PointConfig<f64>, domain: &Disk<f64>, policy: EtaPolicy) -> Result<Self> {
        let eta: Vec<f64> = match policy {
            EtaPolicy::NearestNeighbor => (0..x.n()).map(|i| nn_distance(x, i)).collect(),
            EtaPolicy::Scaled(s) if s > 0.0 && s <= 1.0 => (0..x.n()).map(|i| s * nn_distance(x, i)).collect(),
            EtaPolicy::Uniform(e) if e >= 0.0 => vec![e; x.n()],
            _ => return Err(Error::Parameter(format!("invalid truncation policy {policy:?}"))),
        };
        Ok(Self { pts: x.points().to_vec(), eta, domain: *domain })
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn points(&self) -> &[P] {
        &self.pts
    }

    pub fn background(&self, x: P) -> P {
        let z = x - self.domain.center;
        let r2 = z.norm2();
        let rr = self.domain.radius * self.domain.radius;
        if r2 <= rr { z * PI } else { z * (PI * rr / r2) }
    }

    #[inline]
    fn eval_unchecked(&self, x: P) -> P {
        let (mut gx, mut gy) = (0.0, 0.0);
        for (&q, &e) in self.pts.iter().zip(&self.eta) {
            let dx = x.x - q.x;
            let dy = x.y - q.y;
            let d2 = dx * dx + dy * dy;
            if d2 >= e * e {
                gx -= dx / d2;
                gy -= dy / d2;
            }
        }
        P::new(gx, gy) + self.background(x)
    }

    pub fn eval(&self, x: P) -> Result<P> {
        if self.pts.iter().zip(&self.eta).any(|(&q, &e)| e == 0.0 && q == x) {
            return Err(Error::Singular);
        }
        Ok(self.eval_unchecked(x))
    }

    // Circles closer to the window than the base cell size can matter for refinement.
    fn near(&self, w: &Window<f64>) -> Vec<(P, f64)> {
        self.pts
            .iter()
            .zip(&self.eta)
            .filter(|&(&q, &e)| w.min_distance_from(q) <= e + 4.0 * BASE_CELL)
            .map(|(&q, &e)| (q, e))
            .collect()
    }

    /// Smallest eta among charges whose circle meets the window.
    pub fn min_eta_near(&self, w: &Window<f64>) -> Option<f64> {
        self.pts
            .iter()
            .zip(&self.eta)
            .filter(|&(&q, &e)| w.min_distance_from(q) <= e)
            .map(|(_, &e)| e)
            .fold(None, |m, e| Some(m.map_or(e, |v: f64| v.min(e))))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    /// Richardson-extrapolated value from the (h, h/2) pair.
    pub value: f64,
    pub coarse: f64,
    pub fine: f64,
    pub error: f64,
    pub h: f64,
    pub leaves: usize,
}

const BASE_CELL: f64 = 0.5;

/// Distance from x to the nearest truncation circle and that circle's radius.
fn nearest_circle(circles: &[(P, f64)], x: P) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    for &(q, e) in circles {
        let d = ((x - q).norm() - e).abs();
        if d < best.0 {
            best = (d, e);
        }
    }
    best
}

// Leaves near the circle of radius eta have size at most h_rel * eta (h_rel * eta_min = h), and
// away from circles at most `ratio` times the distance to the nearest one.
struct Pass<'a> {
    field: &'a TruncatedField,
    // Circles that can influence refinement inside the window.
    near: &'a [(P, f64)],
    omega: &'a Window<f64>,
    h_rel: f64,
    ratio: f64,
}

impl Pass<'_> {
    fn cell(&self, c: P, s: f64) -> (f64, usize) {
        let half = 0.5 * s;
        let probes = [c, c + P::new(half, half), c + P::new(-half, half), c + P::new(half, -half), c + P::new(-half, -half)];
        let inside = probes.iter().filter(|&&q| self.omega.contains(q)).count();
        if inside == 0 && self.omega.min_distance_from(c) > half * std::f64::consts::SQRT_2 {
            return (0.0, 0);
        }
        let straddles = inside != 5;
        let (d, e) = nearest_circle(self.near, c);
        let floor = if e > 0.0 { self.h_rel * e } else { self.h_rel * BASE_CELL };
        let refine = s > floor && (straddles || s > self.ratio * d);
        if !refine {
            if !self.omega.contains(c) {
                return (0.0, 0);
            }
            return (self.field.eval_unchecked(c).norm2() * s * s, 1);
        }
        let q = 0.25 * s;
        let mut out = (0.0, 0);
        for (dx, dy) in [(-q, -q), (q, -q), (-q, q), (q, q)] {
            let (v, n) = self.cell(c + P::new(dx, dy), 0.5 * s);
            out.0 += v;
            out.1 += n;
        }
        out
    }

    fn run(&self) -> (f64, usize) {
        let (lo, hi) = self.omega.bounding_box();
        let nx = ((hi.x - lo.x) / BASE_CELL).ceil().max(1.0) as usize;
        let ny = ((hi.y - lo.y) / BASE_CELL).ceil().max(1.0) as usize;
        let cells: Vec<(f64, usize)> = (0..nx * ny)
            .into_par_iter()
            .map(|k| {
                let c = P::new(lo.x + ((k % nx) as f64 + 0.5) * BASE_CELL, lo.y + ((k / nx) as f64 + 0.5) * BASE_CELL);
                self.cell(c, BASE_CELL)
            })
            .collect();
        // Fixed-order reduction keeps the result independent of the thread count.
        cells.iter().fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
    }
}

/// Largest admissible grid size: a quarter of the smallest truncation radius meeting the window.
pub fn max_resolution(field: &TruncatedField, omega: &Window<f64>) -> f64 {
    field.min_eta_near(omega).map_or(0.05, |e| (0.25 * e).min(0.05))
}

/// Ener(X, Omega) = integral over Omega of |grad h_eta|^2, by adaptive midpoint quadrature.
///
/// `h` is the leaf size at the smallest truncation circle meeting Omega; leaves at larger circles
/// scale with their radius. The estimate is the Richardson extrapolation of the (h, h/2) pair.
pub fn local_electric_energy_with(field: &TruncatedField, omega: &Window<f64>, h: Option<f64>) -> Result<EnergyEstimate> {
    let max = max_resolution(field, omega);
    if field.min_eta_near(omega) == Some(0.0) {
        return Err(Error::Singular);
    }
    let h = h.unwrap_or(max);
    if !(h > 0.0 && h <= max * (1.0 + 1e-12)) {
        return Err(Error::Resolution { h, max });
    }
    let h_rel = h / field.min_eta_near(omega).unwrap_or(BASE_CELL);
    let near = field.near(omega);
    let (coarse, _) = Pass { field, near: &near, omega, h_rel, ratio: 0.5 }.run();
    let (fine, leaves) = Pass { field, near: &near, omega, h_rel: 0.5 * h_rel, ratio: 0.25 }.run();
    Ok(EnergyEstimate {
        value: fine + (fine - coarse) / 3.0,
        coarse,
        fine,
        error: (fine - coarse).abs() / 3.0,
        h,
        leaves,
    })
}

pub fn local_electric_energy(x: &PointConfig<f64>, domain: &Disk<f64>, omega: &Window<f64>, h: Option<f64>) -> Result<EnergyEstimate> {
    let field = TruncatedField::new(x, domain, EtaPolicy::NearestNeighbor)?;
    local_electric_energy_with(&field, omega, h)
}

/// EnerPts = |Omega|^{1/2} Ener^{1/2} + Pts(X, Omega).
pub fn ener_pts(x: &PointConfig<f64>, domain: &Disk<f64>, omega: &Window<f64>) -> Result<f64> {
    let e = local_electric_energy(x, domain, omega, None)?.value.max(0.0);
    Ok(omega.area().sqrt() * e.sqrt() + pts_count(x, omega) as f64)
}

/// Field sampled on the nodes of a rectangle.
#[derive(Clone, Debug)]
pub struct FieldGrid {
    pub lo: P,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<P>,
}

impl FieldGrid {
    pub fn sample(field: &TruncatedField, lo: P, hi: P, h: f64) -> Self {
        let nx = ((hi.x - lo.x) / h).round() as usize;
        let ny = ((hi.y - lo.y) / h).round() as usize;
        let values = (0..(nx + 1) * (ny + 1))
            .into_par_iter()
            .map(|k| field.eval_unchecked(lo + P::new((k % (nx + 1)) as f64 * h, (k / (nx + 1)) as f64 * h)))
            .collect();
        Self { lo, h, nx, ny, values }
    }

    fn at(&self, i: usize, j: usize) -> P {
        self.values[j * (self.nx + 1) + i]
    }

    /// Largest per-cell mismatch between the trapezoid flux of the sampled field and
    /// -2 pi (smeared charge - background area) in that cell.
    pub fn divergence_residual(&self, field: &TruncatedField) -> f64 {
        let h = self.h;
        (0..self.nx * self.ny)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k % self.nx, k / self.nx);
                let (a, b, c, d) = (self.at(i, j), self.at(i + 1, j), self.at(i + 1, j + 1), self.at(i, j + 1));
                let flux = 0.5 * h * ((b.x + c.x) - (a.x + d.x) + (c.y + d.y) - (a.y + b.y));
                let lo = self.lo + P::new(i as f64 * h, j as f64 * h);
                let cell = Window::Rect { lo, hi: lo + P::new(h, h) };
                let charge: f64 = field.pts.iter().zip(&field.eta).map(|(&q, &e)| arc_fraction(&cell, q, e)).sum();
                let area = background_area(&cell, &field.domain);
                (flux + 2.0 * PI * (charge - area)).abs()
            })
            .reduce(|| 0.0, f64::max)
    }
}

// Fraction of the circle |y - q| = e lying in the cell (a point mass when e = 0).
fn arc_fraction(cell: &Window<f64>, q: P, e: f64) -> f64 {
    if e == 0.0 {
        return cell.contains(q) as u8 as f64;
    }
    if cell.min_distance_from(q) > e {
        return 0.0;
    }
    let mut cuts = Vec::new();
    cell.circle_crossings(q, e, &mut cuts);
    if cuts.is_empty() {
        return cell.contains(q + P::new(e, 0.0)) as u8 as f64;
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut frac = 0.0;
    for k in 0..cuts.len() {
        let a = cuts[k];
        let b = if k + 1 < cuts.len() { cuts[k + 1] } else { cuts[0] + 2.0 * PI };
        if cell.contains(q + P::polar(e, 0.5 * (a + b))) {
            frac += (b - a) / (2.0 * PI);
        }
    }
    frac
}

fn background_area(cell: &Window<f64>, domain: &Disk<f64>) -> f64 {
    let (lo, hi) = cell.bounding_box();
    let corners = [lo, hi, P::new(lo.x, hi.y), P::new(hi.x, lo.y)];
    let inside = corners.iter().filter(|&&c| domain.contains(c)).count();
    match inside {
        4 => cell.area(),
        0 if cell.min_distance_from(domain.center) > domain.radius => 0.0,
        _ => {
            // Cut cells: 32x32 midpoint count, only on the boundary of Sigma.
            let n = 32;
            let s = (hi.x - lo.x) / n as f64;
            let k = (0..n * n)
                .filter(|&m| domain.contains(lo + P::new(((m % n) as f64 + 0.5) * s, ((m / n) as f64 + 0.5) * s)))
                .count();
            k as f64 * s * s
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalLawRow {
    pub ell: f64,
    pub count: usize,
    pub mean: f64,
    pub se: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalLawTable {
    pub rows: Vec<LocalLawRow>,
    /// Fit of log mean(Ener / ell^2) against log ell.
    pub trend: SlopeFit,
    /// max / min of the row means, minus one.
    pub spread: f64,
}

/// Ener(X, D(x, ell)) / ell^2 over samples and centers, for each ell.
pub fn local_law_scan(samples: &[PointConfig<f64>], n: usize, centers: &[P], ells: &[f64]) -> Result<LocalLawTable> {
    if samples.is_empty() || centers.is_empty() || ells.len() < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: samples.len().min(centers.len()).min(ells.len()) });
    }
    let sigma = Disk::<f64>::system(n);
    for &c in centers {
        for &l in ells {
            if c.norm() + l + 1.0 > sigma.radius {
                return Err(Error::Bulk(format!("D(({}, {}), {l}) is not inside Sigma_{n} with margin 1", c.x, c.y)));
            }
        }
    }
    let mut rows = Vec::new();
    for &l in ells {
        let mut vals: Vec<f64> = samples
            .par_iter()
            .flat_map_iter(|x| centers.iter().map(move |&c| (x, c)))
            .map(|(x, c)| Ok(local_electric_energy(x, &sigma, &Window::Disk { center: c, radius: l }, None)?.value / (l * l)))
            .collect::<Result<_>>()?;
        let w: Welford = vals.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.push(LocalLawRow {
            ell: l,
            count: vals.len(),
            mean: w.mean,
            se: w.std_error(),
            q10: quantile(&vals, 0.1),
            q50: quantile(&vals, 0.5),
            q90: quantile(&vals, 0.9),
        });
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.ell.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.mean.ln()).collect();
    let lse: Vec<f64> = rows.iter().map(|r| r.se / r.mean).collect();
    let hi = rows.iter().map(|r| r.mean).fold(f64::NEG_INFINITY, f64::max);
    let lo = rows.iter().map(|r| r.mean).fold(f64::INFINITY, f64::min);
    Ok(LocalLawTable { trend: slope_fit(&lx, &ly, Some(&lse), 0.95), spread: hi / lo - 1.0, rows })
}

// Support radii recovered from bounding boxes carry rounding, hence the slack.
fn window_contains_disk(w: &Window<f64>, c: P, r: f64) -> bool {
    let r = r - 1e-9 * (1.0 + r);
    match *w {
        Window::Disk { center, radius } => (c - center).norm() + r <= radius,
        Window::Rect { lo, hi } => c.x - r >= lo.x && c.x + r <= hi.x && c.y - r >= lo.y && c.y + r <= hi.y,
        Window::Annulus { center, inner, outer } => {
            let d = (c - center).norm();
            d + r <= outer && d - r >= inner
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriResult {
    pub fluct: f64,
    pub lipschitz: f64,
    pub ener_pts: f64,
    pub ratio: f64,
}

fn lipschitz(phi: &TestFunction) -> f64 {
    if phi.seminorms[1].is_finite() { phi.seminorms[1] } else { phi.measured_seminorms(256)[1] }
}

/// |Fluct[phi](X)| / (|phi|_1 EnerPts(X, Omega)); Omega must contain the 1-neighborhood of the support.
pub fn apriori_bound_check(x: &PointConfig<f64>, phi: &TestFunction, omega: &Window<f64>, domain: &Disk<f64>) -> Result<AprioriResult> {
    let (lo, hi) = phi.support.bounding_box();
    let c = (lo + hi) * 0.5;
    let r = phi.support.max_distance_from(c);
    if !window_contains_disk(omega, c, r + 1.0) {
        return Err(Error::Domain(format!("window does not contain D(({}, {}), {})", c.x, c.y, r + 1.0)));
    }
    let bg: Window<f64> = (*domain).into();
    let f = fluct(phi, x, &bg);
    let lip = lipschitz(phi);
    let ep = ener_pts(x, domain, omega)?;
    let ratio = if f == 0.0 { 0.0 } else { f.abs() / (lip * ep) };
    Ok(AprioriResult { fluct: f, lipschitz: lip, ener_pts: ep, ratio })
}

/// Product kernel K(x, y) = phi(x) psi(y): |Fluct^2[K]| / (|K|_{1+1} EnerPts(Omega_1) EnerPts(Omega_2)).
pub fn apriori_two_var(
    x: &PointConfig<f64>,
    phi: &TestFunction,
    psi: &TestFunction,
    omegas: (&Window<f64>, &Window<f64>),
    domain: &Disk<f64>,
) -> Result<f64> {
    let a = apriori_bound_check(x, phi, omegas.0, domain)?;
    let b = apriori_bound_check(x, psi, omegas.1, domain)?;
    let num = (a.fluct * b.fluct).abs();
    if num == 0.0 {
        return Ok(0.0);
    }
    Ok(num / (a.lipschitz * b.lipschitz * a.ener_pts * b.ener_pts))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriRow {
    pub sample: usize,
    pub function: String,
    pub center: P,
    pub result: AprioriResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriScan {
    pub dictionary: String,
    pub rows: Vec<AprioriRow>,
    pub max_ratio: f64,
}

/// Random (X, phi) pairs: phi from the Lipschitz dictionary at scale support/4, centered uniformly
/// in the disk that keeps D(center, support + 1) inside Sigma_N; Omega = D(center, support + 1).
pub fn apriori_scan(samples: &[PointConfig<f64>], n: usize, support: f64, pairs: usize, seed: u64) -> Result<AprioriScan> {
    use crate::observables::{lipschitz_dictionary, DICTIONARY_VERSION};
    use crate::rng::{stream, Purpose};
    use rand::Rng;
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let sigma = Disk::<f64>::system(n);
    let room = sigma.radius - support - 1.0;
    if room < 0.0 {
        return Err(Error::Bulk(format!("D(x, {}) does not fit in Sigma_{n}", support + 1.0)));
    }
    let mut rng = stream(seed, Purpose::Probe, u64::MAX >> 16);
    let picks: Vec<(usize, usize, P)> = (0..pairs)
        .map(|k| {
            let c = Window::Disk { center: P::origin(), radius: room.max(1e-12) }.sample_uniform(&mut rng);
            (k % samples.len(), rng.random_range(0..32), if room > 0.0 { c } else { P::origin() })
        })
        .collect();
    let rows: Vec<AprioriRow> = picks
        .par_iter()
        .map(|&(s, f, c)| {
            let phi = &lipschitz_dictionary(c, support / 4.0)[f];
            let omega = Window::Disk { center: c, radius: support + 1.0 };
            let result = apriori_bound_check(&samples[s], phi, &omega, &sigma)?;
            Ok(AprioriRow { sample: s, function: phi.name.clone(), center: c, result })
        })
        .collect::<Result<_>>()?;
    let max_ratio = rows.iter().map(|r| r.result.ratio).fold(0.0, f64::max);
    Ok(AprioriScan { dictionary: DICTIONARY_VERSION.into(), rows, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_eta_values() {
        assert_eq!(f_eta(P::new(2.0, 0.0), 1.0), 0.0);
        assert!((f_eta(P::new((-1f64).exp(), 0.0), 1.0) + 1.0).abs() < 1e-15);
        assert_eq!(f_eta(P::origin(), 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn nn_conventions() {
        let one = PointConfig::from_xy(&[[0.0, 0.0]]).unwrap();
        assert_eq!(nn_distance(&one, 0), 0.25);
        let close = PointConfig::from_xy(&[[0.0, 0.0], [0.1, 0.0]]).unwrap();
        assert!((nn_distance(&close, 0) - 0.025).abs() < 1e-15);
        let far = PointConfig::from_xy(&[[0.0, 0.0], [7.0, 0.0]]).unwrap();
        assert_eq!(nn_distance(&far, 1), 0.25);
    }

    #[test]
    fn field_inside_own_disk_is_background() {
        let d = Disk::system(16);
        let x = PointConfig::from_xy(&[[0.0, 0.0]]).unwrap();
        let f = TruncatedField::new(&x, &d, EtaPolicy::Uniform(0.5)).unwrap();
        let q = P::new(0.2, -0.1);
        assert_eq!(f.eval(q).unwrap(), f.background(q));
        let empty = TruncatedField::new(&PointConfig::empty(), &d, EtaPolicy::NearestNeighbor).unwrap();
        assert_eq!(empty.eval(P::origin()).unwrap(), P::origin());
        let bare = TruncatedField::new(&x, &d, EtaPolicy::Uniform(0.0)).unwrap();
        assert!(bare.eval(P::origin()).is_err());
    }

    #[test]
    fn resolution_guard() {
        let x = PointConfig::from_xy(&[[0.0, 0.0], [0.4, 0.0]]).unwrap();
        let d = Disk::system(64);
        let w = Window::centered_disk(1.0).unwrap();
        assert!(matches!(local_electric_energy(&x, &d, &w, Some(0.1)), Err(Error::Resolution { .. })));
        assert!(local_electric_energy(&x, &d, &w, None).unwrap().value > 0.0);
    }

    #[test]
    fn arc_fraction_quarters() {
        let cell = Window::rect(P::origin(), P::new(1.0, 1.0)).unwrap();
        assert!((arc_fraction(&cell, P::origin(), 0.5) - 0.25).abs() < 1e-12);
        assert!((arc_fraction(&cell, P::new(0.5, 0.5), 0.2) - 1.0).abs() < 1e-12);
    }
}
