//! Independent oracles. Nothing here calls into the quadrature or energy code of the crate.
#![allow(dead_code)]

use std::f64::consts::PI;

fn simpson_rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson with Richardson correction.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Simpson over [a, b] split at the given interior points.
pub fn simpson_pieces<F: Fn(f64) -> f64>(f: F, cuts: &[f64], tol: f64) -> f64 {
    let n = (cuts.len() - 1) as f64;
    cuts.windows(2).map(|w| simpson(&f, w[0], w[1], tol / n)).sum()
}

pub fn system_radius(n: usize) -> f64 {
    (n as f64 / PI).sqrt()
}

/// Integral of -log|x - y| over the disk D(0, R), in polar coordinates centered at x.
/// The inner integral of -s log s runs numerically from the singular point outward.
pub fn disk_potential(x: [f64; 2], radius: f64, tol: f64) -> f64 {
    let d = x[0].hypot(x[1]);
    assert!(d <= radius, "oracle handles interior points only");
    let phi0 = x[1].atan2(x[0]);
    let reach = |theta: f64| {
        let c = (theta - phi0).cos();
        let s = (theta - phi0).sin();
        -d * c + (radius * radius - d * d * s * s).max(0.0).sqrt()
    };
    let inner = |rho: f64| simpson(|s: f64| if s > 0.0 { -s * s.ln() } else { 0.0 }, 0.0, rho, tol * 1e-2);
    simpson(|t| inner(reach(t)), 0.0, 2.0 * PI, tol)
}

/// Half the double integral of -log|x - y| over D(0, R) squared, by radial symmetry of the potential.
pub fn disk_self_energy(radius: f64, tol: f64) -> f64 {
    0.5 * simpson(|r| 2.0 * PI * r * disk_potential([r, 0.0], radius, tol * 1e-2), 0.0, radius, tol)
}

/// F_N assembled from the oracle potentials. `self_energy` is passed in so callers can cache it per N.
pub fn energy(points: &[[f64; 2]], radius: f64, self_energy: f64, tol: f64) -> f64 {
    let mut pp = 0.0;
    for i in 0..points.len() {
        for j in 0..i {
            let d = (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
            pp -= d.ln();
        }
    }
    let pb: f64 = points.iter().map(|&p| disk_potential(p, radius, tol)).sum();
    pp - pb + self_energy
}

pub fn binomial_coeff(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Mean and variance of Binomial(n, q).
pub fn binomial_moments(n: usize, q: f64) -> (f64, f64) {
    (n as f64 * q, n as f64 * q * (1.0 - q))
}

/// Linear statistic sum f(x_i) of n iid uniform points on D(0, R), f radial: mean and variance.
pub fn iid_radial_linear_moments<F: Fn(f64) -> f64>(f: F, n: usize, radius: f64, tol: f64) -> (f64, f64) {
    let area = PI * radius * radius;
    let m1 = simpson(|r| 2.0 * PI * r * f(r), 0.0, radius, tol) / area;
    let m2 = simpson(|r| 2.0 * PI * r * f(r) * f(r), 0.0, radius, tol) / area;
    (n as f64 * m1, n as f64 * (m2 - m1 * m1))
}

/// N = 2 at inverse temperature beta on D(0, R): expectation of g(r1, r2, theta) under
/// |x1 - x2|^beta exp(-beta pi (r1^2 + r2^2) / 2), with x1 = r1 e_1 and x2 at angle theta.
/// The Gaussian factor is the disk background potential up to a constant: its Laplacian is -2 pi.
pub fn two_point_expectation<G: Fn(f64, f64, f64) -> f64>(g: G, beta: f64, radius: f64, r1_cuts: &[f64], tol: f64) -> f64 {
    let w = |r: f64| (-beta * PI * r * r / 2.0).exp();
    let integrand = |h: &dyn Fn(f64, f64, f64) -> f64| {
        let f1 = |r1: f64| {
            let f2 = |r2: f64| {
                let f3 = |t: f64| {
                    let d2 = r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * t.cos();
                    d2.max(0.0).powf(beta / 2.0) * h(r1, r2, t)
                };
                r2 * w(r2) * simpson(f3, 0.0, PI, tol * 1e-2)
            };
            r1 * w(r1) * simpson(f2, 0.0, radius, tol * 1e-1)
        };
        simpson_pieces(f1, r1_cuts, tol)
    };
    integrand(&g) / integrand(&|_, _, _| 1.0)
}
