//! Localized translations: an area-preserving map that shifts D(L) rigidly by v and fixes
//! everything outside the square [-2L, 2L]^2 (in the frame of v), obtained as the time-one map of a
//! Hamiltonian flow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dlr::Observable;
use crate::energy::disk_background_potential;
use crate::error::{Error, Result};
use crate::geometry::{local_view, Disk, Point, PointConfig, Window};
use crate::movefn::{ExteriorField, Volume};
use crate::profile::{smoothstep_jet, Jet3};
use crate::stats::{corrected_z, exp_moment, ks_two_sample, two_sided_p, z_score, MomentEstimate, Welford};

type P = Point<f64>;
type Mat = [[f64; 2]; 2];

// Outer edge of the plateau profiles.
const EDGE: f64 = 2.0;

/// Plateau: 1 on [-1, 1], 0 off [-2, 2], with three derivatives.
pub fn h1_jet(s: f64) -> Jet3<f64> {
    let a = s.abs();
    let t = (Jet3::constant(EDGE) - Jet3::variable(a)).scale(1.0 / (EDGE - 1.0));
    let j = smoothstep_jet(t);
    if s < 0.0 {
        Jet3::new(j.v, -j.d1, j.d2, -j.d3)
    } else {
        j
    }
}

/// h2(s) = s h1(s): equals s on [-1, 1] and vanishes off [-2, 2].
pub fn h2_jet(s: f64) -> Jet3<f64> {
    Jet3::variable(s) * h1_jet(s)
}

/// Unit-scale field (h1(a) h2'(b), -h1'(a) h2(b)) and its Jacobian.
fn unit_field(a: f64, b: f64) -> ([f64; 2], Mat) {
    if a.abs() >= EDGE || b.abs() >= EDGE {
        return ([0.0; 2], [[0.0; 2]; 2]);
    }
    let h1a = h1_jet(a);
    let h2b = h2_jet(b);
    let f = [h1a.v * h2b.d1, -h1a.d1 * h2b.v];
    let j = [[h1a.d1 * h2b.d1, h1a.v * h2b.d2], [-h1a.d2 * h2b.v, -h1a.d1 * h2b.d1]];
    (f, j)
}

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for k in 0..2 {
            c[i][k] = a[i][0] * b[0][k] + a[i][1] * b[1][k];
        }
    }
    c
}

fn mat_add(a: &Mat, b: &Mat, s: f64) -> Mat {
    [[a[0][0] + s * b[0][0], a[0][1] + s * b[0][1]], [a[1][0] + s * b[1][0], a[1][1] + s * b[1][1]]]
}

pub fn det(m: &Mat) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedTranslation {
    pub l: f64,
    pub v: P,
    pub steps: usize,
}

impl LocalizedTranslation {
    pub fn new(l: f64, v: P) -> Result<Self> {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Parameter(format!("scale L must be positive, got {l}")));
        }
        if !(v.norm() <= 1.0) {
            return Err(Error::Parameter(format!("|v| must be at most 1, got {}", v.norm())));
        }
        Ok(Self { l, v, steps: 64 })
    }

    /// Radius of the smallest centered disk outside which both maps are the identity.
    pub fn support_radius(&self) -> f64 {
        EDGE * std::f64::consts::SQRT_2 * self.l
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps.max(1);
        self
    }

    // Frame with e1 along v.
    fn frame(&self) -> (f64, f64, f64) {
        let s = self.v.norm();
        if s == 0.0 {
            (0.0, 1.0, 0.0)
        } else {
            (s, self.v.x / s, self.v.y / s)
        }
    }

    /// The field v_L at x and its Jacobian.
    pub fn field_with_jacobian(&self, x: P) -> ([f64; 2], Mat) {
        let (s, c, sn) = self.frame();
        if s == 0.0 {
            return ([0.0; 2], [[0.0; 2]; 2]);
        }
        let a = (c * x.x + sn * x.y) / self.l;
        let b = (-sn * x.x + c * x.y) / self.l;
        let (f, j) = unit_field(a, b);
        let r = [[c, -sn], [sn, c]];
        let rt = [[c, sn], [-sn, c]];
        let field = [s * (c * f[0] - sn * f[1]), s * (sn * f[0] + c * f[1])];
        let jac = mat_mul(&mat_mul(&r, &j), &rt);
        let k = s / self.l;
        (field, [[k * jac[0][0], k * jac[0][1]], [k * jac[1][0], k * jac[1][1]]])
    }

    pub fn field(&self, x: P) -> P {
        let (f, _) = self.field_with_jacobian(x);
        P::new(f[0], f[1])
    }

    /// Flow for time t together with its Jacobian (variational equation).
    pub fn flow_with_jacobian(&self, x: P, t: f64) -> (P, Mat) {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        if x.norm() >= self.support_radius() || self.v.norm() == 0.0 || t == 0.0 {
            return (x, id);
        }
        let h = t / self.steps as f64;
        let mut y = x;
        let mut m = id;
        let rhs = |y: P, m: &Mat| -> (P, Mat) {
            let (f, j) = self.field_with_jacobian(y);
            (P::new(f[0], f[1]), mat_mul(&j, m))
        };
        for _ in 0..self.steps {
            let (k1, m1) = rhs(y, &m);
            let (k2, m2) = rhs(y + k1 * (0.5 * h), &mat_add(&m, &m1, 0.5 * h));
            let (k3, m3) = rhs(y + k2 * (0.5 * h), &mat_add(&m, &m2, 0.5 * h));
            let (k4, m4) = rhs(y + k3 * h, &mat_add(&m, &m3, h));
            y = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            for i in 0..2 {
                for k in 0..2 {
                    m[i][k] += h / 6.0 * (m1[i][k] + 2.0 * m2[i][k] + 2.0 * m3[i][k] + m4[i][k]);
                }
            }
        }
        (y, m)
    }

    pub fn flow_map(&self, x: P, t: f64) -> P {
        self.flow_with_jacobian(x, t).0
    }

    pub fn plus(&self, x: P) -> P {
        self.flow_map(x, 1.0)
    }

    pub fn minus(&self, x: P) -> P {
        self.flow_map(x, -1.0)
    }

    pub fn push(&self, x: &PointConfig<f64>, t: f64) -> PointConfig<f64> {
        PointConfig::new(x.iter().map(|&p| self.flow_map(p, t)).collect()).expect("the flow is injective")
    }
}

pub fn hamiltonian_field(x: P, l: f64, v: P) -> P {
    LocalizedTranslation { l, v, steps: 64 }.field(x)
}

pub fn flow_map(x: P, t: f64, l: f64, v: P) -> Result<P> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::Parameter(format!("flow time must lie in [-1, 1], got {t}")));
    }
    Ok(LocalizedTranslation::new(l, v)?.flow_map(x, t))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationReport {
    pub l: f64,
    pub v: P,
    pub steps: usize,
    pub grid: usize,
    /// L^k |psi^+|_k for k = 0..3.
    pub psi_plus: [f64; 4],
    pub psi_minus: [f64; 4],
    /// L^{k+1} |Rem_L|_k for k = 0..2.
    pub rem: [f64; 3],
    pub det_min: f64,
    pub det_max: f64,
    /// Largest |T+(T-(x)) - x| over grid nodes in D(2L).
    pub inverse_error: f64,
    /// Largest |T+(x) - x - v| over grid nodes with |x| <= L - |v|.
    pub plateau_error: f64,
    /// Largest |v_L| over grid nodes; bounds |psi^±|_0 up to grid resolution.
    pub generator_sup: f64,
}

impl TranslationReport {
    pub fn max_det_deviation(&self) -> f64 {
        (self.det_max - 1.0).abs().max((1.0 - self.det_min).abs())
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("constant,k,value\n");
        for k in 0..4 {
            s += &format!("psi_plus,{k},{:.12e}\n", self.psi_plus[k]);
            s += &format!("psi_minus,{k},{:.12e}\n", self.psi_minus[k]);
        }
        for k in 0..3 {
            s += &format!("rem,{k},{:.12e}\n", self.rem[k]);
        }
        s += &format!("det_min,,{:.12e}\ndet_max,,{:.12e}\n", self.det_min, self.det_max);
        s += &format!("inverse_error,,{:.12e}\nplateau_error,,{:.12e}\n", self.inverse_error, self.plateau_error);
        s += &format!("generator_sup,,{:.12e}\n", self.generator_sup);
        s
    }
}

// Frobenius norms over a 3x3 stencil of Jacobians with spacing d.
fn stencil_norms(js: &[[Mat; 3]; 3], d: f64, shift: f64) -> (f64, f64, f64) {
    let c = &js[1][1];
    let n1 = ((c[0][0] - shift).powi(2) + c[0][1].powi(2) + c[1][0].powi(2) + (c[1][1] - shift).powi(2)).sqrt();
    let mut n2 = 0.0;
    let mut n3 = 0.0;
    for i in 0..2 {
        for k in 0..2 {
            let dx = (js[2][1][i][k] - js[0][1][i][k]) / (2.0 * d);
            let dy = (js[1][2][i][k] - js[1][0][i][k]) / (2.0 * d);
            n2 += dx * dx + dy * dy;
            let dxx = (js[2][1][i][k] - 2.0 * c[i][k] + js[0][1][i][k]) / (d * d);
            let dyy = (js[1][2][i][k] - 2.0 * c[i][k] + js[1][0][i][k]) / (d * d);
            let dxy = (js[2][2][i][k] - js[2][0][i][k] - js[0][2][i][k] + js[0][0][i][k]) / (4.0 * d * d);
            n3 += dxx * dxx + dyy * dyy + 2.0 * dxy * dxy;
        }
    }
    (n1, n2.sqrt(), n3.sqrt())
}

#[derive(Clone, Copy, Default)]
struct NodeStats {
    psi_plus: [f64; 4],
    psi_minus: [f64; 4],
    rem: [f64; 3],
    det_min: f64,
    det_max: f64,
    inverse: f64,
    plateau: f64,
    generator: f64,
}

fn node_stats(tr: &LocalizedTranslation, x: P, d: f64) -> NodeStats {
    let mut jp = [[[[0.0; 2]; 2]; 3]; 3];
    let mut jm = jp;
    let mut js = jp;
    let (mut yp, mut ym) = (x, x);
    for a in 0..3 {
        for b in 0..3 {
            let q = x + P::new((a as f64 - 1.0) * d, (b as f64 - 1.0) * d);
            let (pp, mp) = tr.flow_with_jacobian(q, 1.0);
            let (pm, mm) = tr.flow_with_jacobian(q, -1.0);
            jp[a][b] = mp;
            jm[a][b] = mm;
            js[a][b] = mat_add(&mp, &mm, 1.0);
            if a == 1 && b == 1 {
                yp = pp;
                ym = pm;
            }
        }
    }
    let (p1, p2, p3) = stencil_norms(&jp, d, 1.0);
    let (m1, m2, m3) = stencil_norms(&jm, d, 1.0);
    let (r1, r2, _) = stencil_norms(&js, d, 2.0);
    let (dp, dm) = (det(&jp[1][1]), det(&jm[1][1]));
    let l = tr.l;
    NodeStats {
        psi_plus: [(yp - x).norm(), p1, p2, p3],
        psi_minus: [(ym - x).norm(), m1, m2, m3],
        rem: [((yp - x) + (ym - x)).norm(), r1, r2],
        det_min: dp.min(dm),
        det_max: dp.max(dm),
        inverse: if x.norm() <= 2.0 * l { (tr.plus(ym) - x).norm() } else { 0.0 },
        plateau: if x.norm() <= l - tr.v.norm() { (yp - x - tr.v).norm() } else { 0.0 },
        generator: tr.field(x).norm(),
    }
}

/// Grid certification of T^± on a grid x grid lattice over [-2L, 2L]^2.
///
/// First derivatives come from the variational equation, higher ones from central
/// differences of the Jacobian with spacing L/64.
pub fn verify_translation(tr: &LocalizedTranslation, grid: usize) -> TranslationReport {
    let l = tr.l;
    let d = l / 64.0;
    let nodes: Vec<P> = (0..grid * grid)
        .map(|k| {
            let s = |m: usize| -2.0 * l + 4.0 * l * m as f64 / (grid - 1) as f64;
            P::new(s(k / grid), s(k % grid))
        })
        .collect();
    let stats: Vec<NodeStats> = nodes.par_iter().map(|&x| node_stats(tr, x, d)).collect();
    let mut out = TranslationReport {
        l,
        v: tr.v,
        steps: tr.steps,
        grid,
        psi_plus: [0.0; 4],
        psi_minus: [0.0; 4],
        rem: [0.0; 3],
        det_min: f64::INFINITY,
        det_max: f64::NEG_INFINITY,
        inverse_error: 0.0,
        plateau_error: 0.0,
        generator_sup: 0.0,
    };
    for s in &stats {
        for k in 0..4 {
            out.psi_plus[k] = out.psi_plus[k].max(s.psi_plus[k] * l.powi(k as i32));
            out.psi_minus[k] = out.psi_minus[k].max(s.psi_minus[k] * l.powi(k as i32));
        }
        for k in 0..3 {
            out.rem[k] = out.rem[k].max(s.rem[k] * l.powi(k as i32 + 1));
        }
        out.det_min = out.det_min.min(s.det_min);
        out.det_max = out.det_max.max(s.det_max);
        out.inverse_error = out.inverse_error.max(s.inverse);
        out.plateau_error = out.plateau_error.max(s.plateau);
        out.generator_sup = out.generator_sup.max(s.generator);
    }
    out
}

/// Energy change F_Lambda(Y) - F_Lambda(X) when only the points in `moved` change.
/// Lambda is a disk centered at the origin, so the background-background term cancels.
fn energy_change(pts: &[P], new: &[P], moved: &[usize], radius: f64) -> f64 {
    let mut is_moved = vec![false; pts.len()];
    for &i in moved {
        is_moved[i] = true;
    }
    let mut d = 0.0;
    for (a, &i) in moved.iter().enumerate() {
        for (j, (&p, &q)) in pts.iter().zip(new).enumerate() {
            if j == i || (is_moved[j] && moved[..a].contains(&j)) {
                continue;
            }
            d -= 0.5 * ((new[i] - q).norm2().ln() - (pts[i] - p).norm2().ln());
        }
        d -= disk_background_potential(new[i], radius) - disk_background_potential(pts[i], radius);
    }
    d
}

fn lambda_of(tr: &LocalizedTranslation) -> Window<f64> {
    Window::Disk { center: P::origin(), radius: 10.0 * tr.l }
}

/// Diff^1(X) = (F_Lambda(T+ X) + F_Lambda(T- X))/2 - F_Lambda(X) with Lambda = D(10L).
pub fn diff1(x: &PointConfig<f64>, tr: &LocalizedTranslation) -> f64 {
    let lam = lambda_of(tr);
    let inside = x.restrict(&lam);
    let pts = inside.points();
    let moved: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].norm() < tr.support_radius()).collect();
    if moved.is_empty() || tr.v.norm() == 0.0 {
        return 0.0;
    }
    let mut half = 0.0;
    for t in [1.0, -1.0] {
        let mut new = pts.to_vec();
        for &i in &moved {
            new[i] = tr.flow_map(pts[i], t);
        }
        half += 0.5 * energy_change(pts, &new, &moved, 10.0 * tr.l);
    }
    half
}

/// Diff^2 with the truncated move function M^p as the exterior interaction.
pub fn diff2(x: &PointConfig<f64>, tr: &LocalizedTranslation, p: u32, volume: &Volume) -> Result<f64> {
    if let Volume::Infinite { coverage } = *volume {
        let need = 2f64.powi(p as i32 + 1).max(20.0 * tr.l);
        if coverage < need {
            return Err(Error::Coverage { have: coverage, need });
        }
    }
    if tr.v.norm() == 0.0 {
        return Ok(0.0);
    }
    let lam = lambda_of(tr);
    let field = ExteriorField::new(x, &lam, p, volume)?;
    let inside = x.restrict(&lam);
    let mut out = 0.0;
    for t in [1.0, -1.0] {
        // M^p(T X_Lambda, X) - M^p(X_Lambda, X): only moved points contribute.
        for &q in inside.iter().filter(|q| q.norm() < tr.support_radius()) {
            out += 0.5 * field.delta(q, tr.flow_map(q, t));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffStats {
    pub l: f64,
    pub lambda_radius: f64,
    pub p: u32,
    pub diff1: Vec<f64>,
    pub diff2: Vec<f64>,
    /// log E exp(2 beta |Diff^1|) and the same for Diff^2.
    pub exp1: MomentEstimate,
    pub exp2: MomentEstimate,
}

pub fn diff_stats(
    samples: &[PointConfig<f64>],
    tr: &LocalizedTranslation,
    p: u32,
    volume: &Volume,
    beta: f64,
    seed: u64,
) -> Result<DiffStats> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let d: Vec<(f64, f64)> = samples
        .par_iter()
        .map(|x| Ok((diff1(x, tr), diff2(x, tr, p, volume)?)))
        .collect::<Result<_>>()?;
    let d1: Vec<f64> = d.iter().map(|t| t.0).collect();
    let d2: Vec<f64> = d.iter().map(|t| t.1).collect();
    let a1: Vec<f64> = d1.iter().map(|v| v.abs()).collect();
    let a2: Vec<f64> = d2.iter().map(|v| v.abs()).collect();
    Ok(DiffStats {
        l: tr.l,
        lambda_radius: 10.0 * tr.l,
        p,
        exp1: exp_moment(&a1, 2.0 * beta, seed),
        exp2: exp_moment(&a2, 2.0 * beta, seed.wrapping_add(1)),
        diff1: d1,
        diff2: d2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceRow {
    pub name: String,
    pub ks_statistic: f64,
    pub ks_p: f64,
    pub ks_p_corrected: f64,
    /// Paired mean-difference z and its corrected equivalent.
    pub z: f64,
    pub z_corrected: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub x0: P,
    pub v: P,
    pub samples: usize,
    pub rows: Vec<InvarianceRow>,
    pub all_pass: bool,
}

/// Compares observables on the views from x0 and from x0 + v. `window` is given in view
/// coordinates; both translated copies must sit inside Sigma_N with margin 1.
pub fn translation_invariance_test(
    samples: &[PointConfig<f64>],
    n: usize,
    x0: P,
    v: P,
    window: &Window<f64>,
    battery: &[Observable],
) -> Result<InvarianceReport> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: samples.len() });
    }
    let sigma = Disk::<f64>::system(n);
    for at in [x0, x0 + v] {
        let reach = window.max_distance_from(-at);
        if reach + 1.0 > sigma.radius {
            return Err(Error::Bulk(format!("view window at ({}, {}) reaches {reach:.3} of {:.3}", at.x, at.y, sigma.radius)));
        }
    }
    let level = two_sided_p(3.0);
    let m = battery.len();
    let rows = battery
        .iter()
        .map(|o| {
            let a: Vec<f64> = samples.iter().map(|x| o.eval(&local_view(x, x0))).collect();
            let b: Vec<f64> = samples.iter().map(|x| o.eval(&local_view(x, x0 + v))).collect();
            let ks = ks_two_sample(&a, &b);
            let d: Welford = a.iter().zip(&b).map(|(p, q)| p - q).collect();
            let z = z_score(d.mean, d.std_error());
            let zc = corrected_z(z, m);
            let kp = (ks.p_value * m as f64).min(1.0);
            InvarianceRow {
                name: o.name.clone(),
                ks_statistic: ks.statistic,
                ks_p: ks.p_value,
                ks_p_corrected: kp,
                z,
                z_corrected: zc,
                pass: kp >= level && zc < 3.0,
            }
        })
        .collect::<Vec<_>>();
    Ok(InvarianceReport { x0, v, samples: samples.len(), all_pass: rows.iter().all(|r| r.pass), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_values() {
        for s in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(h1_jet(s).v, 1.0);
            assert_eq!(h2_jet(s).v, s);
            assert_eq!(h2_jet(s).d1, 1.0);
        }
        for s in [-2.5, 2.0, 3.0] {
            assert_eq!(h1_jet(s).v, 0.0);
            assert_eq!(h2_jet(s).v, 0.0);
        }
    }

    #[test]
    fn field_is_divergence_free_and_unit_on_plateau() {
        let tr = LocalizedTranslation::new(8.0, P::new(0.6, 0.8)).unwrap();
        let f = tr.field(P::new(3.0, -2.0));
        assert!((f - tr.v).norm() < 1e-15);
        let (_, j) = tr.field_with_jacobian(P::new(9.0, 4.5));
        assert!((j[0][0] + j[1][1]).abs() < 1e-12);
        assert_eq!(tr.field(P::new(20.0, 20.0)), P::origin());
    }

    #[test]
    fn translation_inside_identity_outside() {
        let tr = LocalizedTranslation::new(8.0, P::new(1.0, 0.0)).unwrap();
        let x = P::new(-2.0, 4.0);
        assert!((tr.plus(x) - x - tr.v).norm() < 1e-8);
        let far = P::new(0.0, -16.5);
        assert_eq!(tr.plus(far), far);
    }

    #[test]
    fn zero_shift_is_identity() {
        let tr = LocalizedTranslation::new(4.0, P::origin()).unwrap();
        let x = PointConfig::from_xy(&[[0.5, 0.1], [3.0, -1.0]]).unwrap();
        assert_eq!(diff1(&x, &tr), 0.0);
        assert_eq!(diff1(&PointConfig::empty(), &LocalizedTranslation::new(4.0, P::new(1.0, 0.0)).unwrap()), 0.0);
    }

    #[test]
    fn energy_change_matches_full_recompute() {
        let x = PointConfig::from_xy(&[[0.5, 0.1], [3.0, -1.0], [-2.0, 0.4], [7.0, 7.0]]).unwrap();
        let tr = LocalizedTranslation::new(2.0, P::new(0.3, -0.4)).unwrap();
        let lam = lambda_of(&tr);
        let base = crate::energy::local_energy(&x, &lam).unwrap().total;
        let want = 0.5 * (crate::energy::local_energy(&tr.push(&x, 1.0), &lam).unwrap().total - base)
            + 0.5 * (crate::energy::local_energy(&tr.push(&x, -1.0), &lam).unwrap().total - base);
        assert!((diff1(&x, &tr) - want).abs() < 1e-8, "{} vs {want}", diff1(&x, &tr));
    }
}
