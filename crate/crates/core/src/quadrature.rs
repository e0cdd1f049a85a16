//! Globally adaptive Gauss-Kronrod (7, 15) quadrature.

use crate::geometry::{Point, Window};
use crate::scalar::Scalar;

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_intervals: usize,
}

impl<T: Scalar> QuadOptions<T> {
    pub fn new(abs_tol: T, rel_tol: T) -> Self {
        Self { abs_tol, rel_tol, max_intervals: 400 }
    }

    pub fn abs(abs_tol: T) -> Self {
        Self::new(abs_tol, T::zero())
    }
}

fn kronrod<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> (T, T) {
    let c = T::c(0.5) * (a + b);
    let h = T::c(0.5) * (b - a);
    let fc = f(c);
    let mut gauss = fc * T::c(WG[3]);
    let mut kron = fc * T::c(WGK[7]);
    for j in 0..7 {
        let dx = h * T::c(XGK[j]);
        let s = f(c - dx) + f(c + dx);
        kron += T::c(WGK[j]) * s;
        if j % 2 == 1 {
            gauss += T::c(WG[j / 2]) * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Integrate `f` over [a, b], first splitting at the given interior breakpoints.
pub fn integrate_with_breaks<T: Scalar, F: FnMut(T) -> T>(
    mut f: F,
    a: T,
    b: T,
    breaks: &[T],
    opts: QuadOptions<T>,
) -> QuadResult<T> {
    if !(b > a) {
        return QuadResult { value: T::zero(), error: T::zero(), evaluations: 0, converged: true };
    }
    let mut nodes: Vec<T> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    nodes.push(a);
    nodes.push(b);
    nodes.sort_by(|x, y| x.partial_cmp(y).unwrap());
    nodes.dedup();
    let min_width = (b - a) * T::c(1e-12);
    let mut parts: Vec<(T, T, T, T)> = Vec::new();
    let mut evals = 0;
    for w in nodes.windows(2) {
        if w[1] - w[0] <= min_width {
            continue;
        }
        let (v, e) = kronrod(&mut f, w[0], w[1]);
        evals += 15;
        parts.push((w[0], w[1], v, e));
    }
    loop {
        let value: T = parts.iter().map(|p| p.2).sum();
        let error: T = parts.iter().map(|p| p.3).sum();
        let tol = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= tol || parts.len() >= opts.max_intervals {
            return QuadResult { value, error, evaluations: evals, converged: error <= tol };
        }
        let (k, _) = parts
            .iter()
            .enumerate()
            .fold((0, T::zero()), |best, (k, p)| if p.3 > best.1 { (k, p.3) } else { best });
        let (lo, hi, _, _) = parts[k];
        let mid = T::c(0.5) * (lo + hi);
        if hi - lo <= min_width {
            return QuadResult { value, error, evaluations: evals, converged: false };
        }
        let (v1, e1) = kronrod(&mut f, lo, mid);
        let (v2, e2) = kronrod(&mut f, mid, hi);
        evals += 30;
        parts[k] = (lo, mid, v1, e1);
        parts.push((mid, hi, v2, e2));
    }
}

pub fn integrate<T: Scalar, F: FnMut(T) -> T>(f: F, a: T, b: T, opts: QuadOptions<T>) -> QuadResult<T> {
    integrate_with_breaks(f, a, b, &[], opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x: f64| x.powi(5) - 3.0 * x, 0.0, 2.0, QuadOptions::abs(1e-12));
        assert!((r.value - (64.0 / 6.0 - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn log_singularity_at_endpoint() {
        let r = integrate(|x: f64| x.ln(), 0.0, 1.0, QuadOptions::abs(1e-10));
        assert!((r.value + 1.0).abs() < 1e-9, "{r:?}");
        assert!(r.converged);
    }

    #[test]
    fn kink_breakpoint() {
        let r = integrate_with_breaks(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], QuadOptions::abs(1e-13));
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-13);
    }
}

/// Region cut out by windows: inside every `inside` window and outside every `outside` window.
pub struct Region<'a> {
    pub inside: Vec<&'a Window<f64>>,
    pub outside: Vec<&'a Window<f64>>,
}

impl Region<'_> {
    pub fn contains(&self, p: Point<f64>) -> bool {
        self.inside.iter().all(|w| w.contains(p)) && self.outside.iter().all(|w| !w.contains(p))
    }

    fn windows(&self) -> impl Iterator<Item = &&Window<f64>> {
        self.inside.iter().chain(self.outside.iter())
    }
}

/// Integral of f over {c + r e^{i theta} : r_lo <= r <= r_hi} intersected with the region.
///
/// Radial breakpoints come from the window geometry; on each circle the angular range is split
/// at the boundary crossings and each arc is kept iff its midpoint lies in the region.
pub fn integrate_polar_region<F: Fn(Point<f64>) -> f64>(
    c: Point<f64>,
    r_lo: f64,
    r_hi: f64,
    region: &Region<'_>,
    extra_breaks: &[f64],
    f: F,
    abs_tol: f64,
) -> QuadResult<f64> {
    let mut rb: Vec<f64> = extra_breaks.to_vec();
    for w in region.windows() {
        w.radial_breaks(c, &mut rb);
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let opts_t = QuadOptions { abs_tol: abs_tol * 0.1 / (r_hi.max(1.0) * two_pi), rel_tol: 1e-11, max_intervals: 200 };
    let ring = |r: f64| -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let mut cuts = vec![-std::f64::consts::PI, std::f64::consts::PI];
        for w in region.windows() {
            w.circle_crossings(c, r, &mut cuts);
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut total = 0.0;
        for a in cuts.windows(2) {
            if a[1] - a[0] < 1e-14 {
                continue;
            }
            let mid = 0.5 * (a[0] + a[1]);
            if !region.contains(c + Point::polar(r, mid)) {
                continue;
            }
            total += integrate(|t: f64| f(c + Point::polar(r, t)), a[0], a[1], opts_t).value;
        }
        total * r
    };
    integrate_with_breaks(ring, r_lo, r_hi, &rb, QuadOptions { abs_tol, rel_tol: 1e-11, max_intervals: 400 })
}
