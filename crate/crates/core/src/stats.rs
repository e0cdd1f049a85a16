//! Mergeable estimators and the small set of tests used by the experiment layers.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::rng::{stream, Purpose};

/// Streaming mean and variance; `merge` is exact (Chan et al. pairwise update).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, o: &Self) -> Self {
        if self.count == 0 {
            return *o;
        }
        if o.count == 0 {
            return *self;
        }
        let n = self.count + o.count;
        let d = o.mean - self.mean;
        let mean = self.mean + d * o.count as f64 / n as f64;
        let m2 = self.m2 + o.m2 + d * d * (self.count as f64 * o.count as f64) / n as f64;
        Self { count: n, mean, m2 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 { 0.0 } else { self.m2 / (self.count - 1) as f64 }
    }

    pub fn std_error(&self) -> f64 {
        if self.count < 2 { 0.0 } else { (self.variance() / self.count as f64).sqrt() }
    }

    pub fn finish(&self) -> MomentEstimate {
        MomentEstimate {
            mean: self.mean,
            variance: self.variance(),
            std_error: self.std_error(),
            count: self.count as usize,
            exp_moment: None,
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        for x in iter {
            w.push(x);
        }
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpMoment {
    /// log of the empirical mean of exp(s v).
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    /// Top 1% of summands carry more than half of the mass.
    pub heavy_tail: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub count: usize,
    pub exp_moment: Option<ExpMoment>,
}

pub fn moments(values: &[f64]) -> MomentEstimate {
    values.iter().copied().collect::<Welford>().finish()
}

fn log_mean_exp(v: &[f64], s: f64) -> f64 {
    let m = v.iter().map(|&x| s * x).fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let sum: f64 = v.iter().map(|&x| (s * x - m).exp()).sum();
    m + (sum / v.len() as f64).ln()
}

/// log E exp(s V) from samples, with a 95% percentile bootstrap band and the heavy-tail flag.
pub fn exp_moment(values: &[f64], s: f64, seed: u64) -> MomentEstimate {
    assert!(!values.is_empty(), "exp_moment needs at least one value");
    let mut est = moments(values);
    let value = log_mean_exp(values, s);
    let mut boots = Vec::with_capacity(200);
    let mut rng = stream(seed, Purpose::Bootstrap, 0);
    let mut buf = vec![0.0; values.len()];
    for _ in 0..200 {
        for b in buf.iter_mut() {
            *b = values[rng.random_range(0..values.len())];
        }
        boots.push(log_mean_exp(&buf, s));
    }
    boots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let (lo, hi) = (boots[4], boots[194]);
    let mut w: Vec<f64> = values.iter().map(|&x| (s * x - value).exp()).collect();
    w.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let top = (values.len() as f64 * 0.01).ceil() as usize;
    let total: f64 = w.iter().sum();
    let head: f64 = w[..top.max(1)].iter().sum();
    let heavy_tail = values.len() > 1 && head > 0.5 * total;
    est.exp_moment = Some(ExpMoment { value, lo: lo.min(value), hi: hi.max(value), heavy_tail });
    est
}

/// Population variance with a standard error from the fourth central moment.
pub fn variance_with_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let est = moments(values);
    let m = est.mean;
    let m4 = values.iter().map(|&x| (x - m).powi(4)).sum::<f64>() / n;
    let s2 = est.variance;
    let se = ((m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    (s2, se)
}

pub fn normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn two_sided_p(z: f64) -> f64 {
    (2.0 * (1.0 - normal_cdf(z.abs()))).min(1.0)
}

/// Bonferroni-corrected p-value for one of `m` tests.
pub fn bonferroni(p: f64, m: usize) -> f64 {
    (p * m as f64).min(1.0)
}

/// Two-sided z equivalent of a corrected p-value.
pub fn corrected_z(z: f64, m: usize) -> f64 {
    let p = bonferroni(two_sided_p(z), m);
    if p >= 1.0 {
        0.0
    } else {
        normal_quantile(1.0 - p / 2.0)
    }
}

/// Mean over standard error, 0 for a degenerate zero-mean zero-spread sample.
pub fn z_score(mean: f64, se: f64) -> f64 {
    if se > 0.0 {
        mean / se
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

// Asymptotic Kolmogorov tail with the Stephens small-sample correction.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    let p = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
    KsResult { statistic: d, p_value: p }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Least-squares line through (x, y) with a two-sided CI on the slope.
///
/// `y_se`, when given, adds the per-point measurement variance to the slope variance,
/// which keeps the interval honest when only three points are available.
pub fn slope_fit(x: &[f64], y: &[f64], y_se: Option<&[f64]>, level: f64) -> SlopeFit {
    let n = x.len();
    assert!(n >= 2 && n == y.len());
    let xm = x.iter().sum::<f64>() / n as f64;
    let ym = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - xm) * (b - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let resid: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let mut var = if n > 2 { resid / (n - 2) as f64 / sxx } else { 0.0 };
    if let Some(se) = y_se {
        var += x.iter().zip(se).map(|(a, s)| ((a - xm) / sxx).powi(2) * s * s).sum::<f64>();
    }
    let se = var.sqrt();
    let q = if n > 2 {
        StudentsT::new(0.0, 1.0, (n - 2) as f64).unwrap().inverse_cdf(0.5 + level / 2.0)
    } else {
        normal_quantile(0.5 + level / 2.0)
    };
    SlopeFit { slope, intercept, slope_se: se, ci_lo: slope - q * se, ci_hi: slope + q * se }
}

/// Empirical quantile by linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_merge_matches_single_pass() {
        let v: Vec<f64> = (0..101).map(|i| ((i * 37) % 17) as f64 * 0.3 - 1.0).collect();
        let all: Welford = v.iter().copied().collect();
        let a: Welford = v[..40].iter().copied().collect();
        let b: Welford = v[40..].iter().copied().collect();
        let m = a.merge(&b);
        assert!((m.mean - all.mean).abs() < 1e-13);
        assert!((m.variance() - all.variance()).abs() < 1e-12);
    }

    #[test]
    fn exp_moment_degenerate_cases() {
        let v = vec![1.7; 50];
        let e = exp_moment(&v, 2.0, 1).exp_moment.unwrap();
        assert!((e.value - 3.4).abs() < 1e-12);
        let e0 = exp_moment(&[0.3, -2.0, 5.0], 0.0, 1).exp_moment.unwrap();
        assert_eq!(e0.value, 0.0);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        assert!(ks_two_sample(&a, &a).p_value > 0.99);
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &b).p_value < 1e-6);
    }

    #[test]
    fn corrected_z_is_monotone_and_floors_at_zero() {
        assert_eq!(corrected_z(0.0, 16), 0.0);
        let z = corrected_z(4.0, 16);
        assert!(z > 2.5 && z < 4.0);
        assert!((two_sided_p(1.959964) - 0.05).abs() < 1e-5);
    }

    #[test]
    fn slope_of_exact_line() {
        let f = slope_fit(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], None, 0.95);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!(f.ci_lo <= 2.0 && f.ci_hi >= 2.0);
    }
}
