//! Canonical DLR machinery: binomial resampling, conditional Gibbs chains inside a window with
//! the exterior frozen, truncated partition functions, truncation events and the consistency test.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{local_energy, pair_delta, window_potential};
use crate::error::{Error, Result};
use crate::geometry::{pts_count, Disk, Point, PointConfig, Window};
use crate::movefn::{ExteriorField, Volume};
use crate::observables::{fluct_with, smooth_bump, TestFunction};
use crate::rng::{stream, Purpose, StreamRng};
use crate::stats::{corrected_z, exp_moment, two_sided_p, z_score, MomentEstimate, Welford};

type P = Point<f64>;

/// n i.i.d. uniform points in the window.
pub fn binomial_sample<R: Rng + ?Sized>(window: &Window<f64>, n: usize, rng: &mut R) -> PointConfig<f64> {
    let pts: Vec<P> = (0..n).map(|_| window.sample_uniform(rng)).collect();
    PointConfig::new(pts).expect("uniform draws are almost surely distinct")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerPlan {
    pub burn_in: u64,
    /// Relocation attempts between retained samples.
    pub thinning: u64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for InnerPlan {
    fn default() -> Self {
        Self { burn_in: 0, thinning: 20, samples: 64, seed: 0 }
    }
}

/// Target exp(-beta (F_Lambda(X') + M^p(X', X))) relative to the binomial law on n-point interiors.
pub struct ConditionalChain<'a> {
    window: Window<f64>,
    beta: f64,
    field: &'a ExteriorField,
    pts: Vec<P>,
    rng: StreamRng,
    pub steps: u64,
    pub accepts: u64,
}

impl<'a> ConditionalChain<'a> {
    pub fn new(window: &Window<f64>, beta: f64, field: &'a ExteriorField, start: PointConfig<f64>, rng: StreamRng) -> Self {
        Self { window: *window, beta, field, pts: start.into_points(), rng, steps: 0, accepts: 0 }
    }

    pub fn config(&self) -> PointConfig<f64> {
        PointConfig::new(self.pts.clone()).expect("relocations keep points distinct")
    }

    /// Energy change of relocating point i to `new`.
    pub fn delta(&self, i: usize, new: P) -> f64 {
        let old = self.pts[i];
        let pp = pair_delta(&self.pts, i, new);
        let pb = window_potential(old, &self.window) - window_potential(new, &self.window);
        pp + pb + self.field.delta(old, new)
    }

    pub fn step(&mut self) -> bool {
        self.steps += 1;
        if self.pts.is_empty() {
            return true;
        }
        let i = self.rng.random_range(0..self.pts.len());
        let new = self.window.sample_uniform(&mut self.rng);
        let u: f64 = self.rng.random();
        if self.beta == 0.0 {
            self.pts[i] = new;
            self.accepts += 1;
            return true;
        }
        let d = self.delta(i, new);
        if d.is_finite() && (d <= 0.0 || u < (-self.beta * d).exp()) {
            self.pts[i] = new;
            self.accepts += 1;
            true
        } else {
            false
        }
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 { 0.0 } else { self.accepts as f64 / self.steps as f64 }
    }
}

#[derive(Clone, Debug)]
pub struct ConditionalRun {
    pub samples: Vec<PointConfig<f64>>,
    pub acceptance_rate: f64,
}

/// Conditional samples of the interior given the exterior of `x`.
///
/// The chain starts from the interior of `x` when it has `n` points, which is an exact draw from
/// the target whenever `x` itself is a draw from the finite-volume Gibbs measure.
#[allow(clippy::too_many_arguments)]
pub fn conditional_gibbs_sample(
    x: &PointConfig<f64>,
    n: usize,
    window: &Window<f64>,
    beta: f64,
    p: u32,
    volume: &Volume,
    plan: &InnerPlan,
    stream_index: u64,
) -> Result<ConditionalRun> {
    let field = ExteriorField::new(x, window, p, volume)?;
    run_conditional(x, n, window, beta, &field, plan, stream_index)
}

pub fn run_conditional(
    x: &PointConfig<f64>,
    n: usize,
    window: &Window<f64>,
    beta: f64,
    field: &ExteriorField,
    plan: &InnerPlan,
    stream_index: u64,
) -> Result<ConditionalRun> {
    let mut rng = stream(plan.seed, Purpose::Inner, stream_index);
    let inside = x.restrict(window);
    let start = if inside.n() == n { inside } else { binomial_sample(window, n, &mut rng) };
    let mut chain = ConditionalChain::new(window, beta, field, start, rng);
    for _ in 0..plan.burn_in {
        chain.step();
    }
    let mut samples = Vec::with_capacity(plan.samples);
    for _ in 0..plan.samples {
        for _ in 0..plan.thinning {
            chain.step();
        }
        let c = chain.config();
        assert_eq!(c.n(), n, "conditional chain must preserve the interior count");
        samples.push(c);
    }
    Ok(ConditionalRun { samples, acceptance_rate: chain.acceptance_rate() })
}

/// Naive Monte Carlo of the truncated partition function over binomial draws.
///
/// `reference` is the interior X_Lambda the move function is measured from.
#[allow(clippy::too_many_arguments)]
pub fn partition_function_estimate(
    field: &ExteriorField,
    reference: &PointConfig<f64>,
    n: usize,
    window: &Window<f64>,
    beta: f64,
    m: usize,
    seed: u64,
) -> Result<MomentEstimate> {
    if reference.n() != n {
        return Err(Error::Canonical { interior: reference.n(), probe: n });
    }
    let base: f64 = reference.iter().map(|&q| field.potential(q)).sum();
    let mut rng = stream(seed, Purpose::Binomial, 0);
    let mut logs = Vec::with_capacity(m);
    for _ in 0..m {
        let xp = binomial_sample(window, n, &mut rng);
        let f = local_energy(&xp, window)?.total;
        let mv: f64 = xp.iter().map(|&q| field.potential(q)).sum::<f64>() - base;
        logs.push(-beta * (f + mv));
    }
    let weights: Welford = logs.iter().map(|l| l.exp()).collect();
    let mut est = weights.finish();
    est.exp_moment = exp_moment(&logs, 1.0, seed).exp_moment;
    Ok(est)
}

/// f_Lambda^p at one exterior by self-normalized importance weights over binomial draws.
#[allow(clippy::too_many_arguments)]
pub fn importance_conditional_mean(
    x: &PointConfig<f64>,
    field: &ExteriorField,
    n: usize,
    window: &Window<f64>,
    beta: f64,
    f: &Observable,
    m: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let ext = x.exclude(window);
    let mut rng = stream(seed, Purpose::Binomial, 1);
    let mut logw = Vec::with_capacity(m);
    let mut vals = Vec::with_capacity(m);
    for _ in 0..m {
        let xp = binomial_sample(window, n, &mut rng);
        let e = local_energy(&xp, window)?.total;
        let mv: f64 = xp.iter().map(|&q| field.potential(q)).sum();
        logw.push(-beta * (e + mv));
        vals.push(f.eval(&xp.union(&ext)?));
    }
    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - mx).exp()).collect();
    let sw: f64 = w.iter().sum();
    let mean = w.iter().zip(&vals).map(|(a, b)| a * b).sum::<f64>() / sw;
    // Delta-method standard error of the ratio estimator.
    let var = w.iter().zip(&vals).map(|(a, b)| (a * (b - mean)).powi(2)).sum::<f64>() / (sw * sw);
    Ok((mean, var.sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: f64,
    pub se: f64,
    pub count: usize,
}

/// Fraction of samples where every probe X' has |M^{p_ref} - M^p| <= delta (p_ref defaults to p + 4).
#[allow(clippy::too_many_arguments)]
pub fn truncation_event_rate(
    samples: &[PointConfig<f64>],
    window: &Window<f64>,
    delta: f64,
    p: u32,
    p_ref: Option<u32>,
    volume: &Volume,
    probes: usize,
    seed: u64,
) -> Result<RateEstimate> {
    let p_ref = p_ref.unwrap_or(p + 4);
    let hits: Vec<f64> = samples
        .par_iter()
        .enumerate()
        .map(|(k, x)| -> Result<f64> {
            let inside = x.restrict(window);
            let fa = ExteriorField::new(x, window, p, volume)?;
            let fb = ExteriorField::new(x, window, p_ref, volume)?;
            let base_a: f64 = inside.iter().map(|&q| fa.potential(q)).sum();
            let base_b: f64 = inside.iter().map(|&q| fb.potential(q)).sum();
            let mut rng = stream(seed, Purpose::Probe, k as u64);
            let mut worst: f64 = 0.0;
            for _ in 0..probes {
                let xp = binomial_sample(window, inside.n(), &mut rng);
                let (mut a, mut b) = (-base_a, -base_b);
                for &q in xp.iter() {
                    a += fa.potential(q);
                    b += fb.potential(q);
                }
                worst = worst.max((b - a).abs());
            }
            Ok(if worst <= delta { 1.0 } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    let w: Welford = hits.iter().copied().collect();
    Ok(RateEstimate { rate: w.mean, se: w.std_error(), count: hits.len() })
}

/// Bounded observable of a full configuration.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    pub bound: f64,
    f: Arc<dyn Fn(&PointConfig<f64>) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Observable({}, bound={})", self.name, self.bound)
    }
}

impl Observable {
    pub fn new(name: impl Into<String>, bound: f64, f: impl Fn(&PointConfig<f64>) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), bound, f: Arc::new(f) }
    }

    #[inline]
    pub fn eval(&self, x: &PointConfig<f64>) -> f64 {
        (self.f)(x)
    }

    pub fn count_indicator(window: Window<f64>, k: usize, label: &str) -> Self {
        Self::new(format!("1{{Pts({label})={k}}}"), 1.0, move |x| (pts_count(x, &window) == k) as u8 as f64)
    }

    /// tanh of a fluctuation with background integral over `background`.
    pub fn tanh_fluct(phi: TestFunction, background: &Window<f64>) -> Self {
        let integral = phi.integral_over(background);
        Self::new(format!("tanh(Fluct[{}])", phi.name), 1.0, move |x| fluct_with(&phi, x, integral).tanh())
    }
}

/// The 16-member battery for a centered disk window of radius rho.
pub fn standard_battery(rho: f64, domain: &Disk<f64>) -> Vec<Observable> {
    let lam = Window::Disk { center: P::origin(), radius: rho };
    let inner = Window::Disk { center: P::origin(), radius: 0.5 * rho };
    let bg: Window<f64> = (*domain).into();
    let mut out: Vec<Observable> = (0..=6).map(|k| Observable::count_indicator(lam, k, "Lambda")).collect();
    out.extend((0..=2).map(|k| Observable::count_indicator(inner, k, &format!("D({})", 0.5 * rho))));
    out.push(Observable::new("1{right half of Lambda holds more points}", 1.0, move |x| {
        let (mut r, mut l) = (0, 0);
        for p in x.iter().filter(|&&p| lam.contains(p)) {
            if p.x > 0.0 { r += 1 } else { l += 1 }
        }
        (r > l) as u8 as f64
    }));
    for (c, a) in [(P::origin(), 0.35 * rho), (P::new(0.35 * rho, 0.0), 0.25 * rho), (P::new(-0.2 * rho, 0.3 * rho), 0.3 * rho)] {
        out.push(Observable::tanh_fluct(smooth_bump(c, a, 1.0), &bg));
    }
    out.push(Observable::new("1{min distance at Lambda < 0.5}", 1.0, move |x| {
        let pts = x.points();
        for (i, p) in pts.iter().enumerate() {
            if !lam.contains(*p) {
                continue;
            }
            for (j, q) in pts.iter().enumerate() {
                if i != j && p.dist(*q) < 0.5 {
                    return 1.0;
                }
            }
        }
        0.0
    }));
    out.push(Observable::new("mean radius in Lambda", rho, move |x| {
        let w: Welford = x.iter().filter(|&&p| lam.contains(p)).map(|p| p.norm()).collect();
        if w.count == 0 { 0.0 } else { w.mean }
    }));
    out
}

#[derive(Clone, Debug)]
pub struct DlrExperiment {
    pub window: Window<f64>,
    pub p: u32,
    pub delta: f64,
    pub beta: f64,
    /// Inverse temperature used by the inner chains; equal to `beta` except in power checks.
    pub inner_beta: f64,
    pub volume: Volume,
    pub battery: Vec<Observable>,
    pub inner: InnerPlan,
}

impl DlrExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.battery.is_empty() || self.battery.len() > 16 {
            return Err(Error::Parameter(format!("battery size must be 1..=16, got {}", self.battery.len())));
        }
        if let Some(o) = self.battery.iter().find(|o| !(o.bound.is_finite() && o.bound > 0.0)) {
            return Err(Error::Parameter(format!("observable {} lacks a finite bound", o.name)));
        }
        if let Volume::Finite(d) = self.volume {
            let reach = self.window.max_distance_from(d.center);
            if reach + 1.0 > d.radius {
                return Err(Error::Bulk(format!("window reaches {reach:.3}, domain radius {:.3} needs margin 1", d.radius)));
            }
        }
        if self.inner.samples < 1 {
            return Err(Error::Parameter("inner chains need at least one sample".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableResult {
    pub name: String,
    pub outer_mean: f64,
    pub inner_mean: f64,
    pub se: f64,
    pub z: f64,
    pub z_corrected: f64,
    pub p_value: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DlrReport {
    pub results: Vec<ObservableResult>,
    pub all_pass: bool,
    pub outer_samples: usize,
    pub inner_samples: usize,
    pub mean_inner_acceptance: f64,
    pub min_inner_acceptance: f64,
    /// Some inner chain accepted fewer than 1% of relocations.
    pub non_convergence: bool,
    pub note: String,
}

/// Paired test of E[f] against E[f_Lambda^p]: d_k = f(X_k) - inner mean at X_k, corrected across the battery.
pub fn dlr_consistency_test(samples: &[PointConfig<f64>], exp: &DlrExperiment) -> Result<DlrReport> {
    exp.validate()?;
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples { need: 2, got: samples.len() });
    }
    let m = exp.battery.len();
    let per_outer: Vec<(Vec<f64>, Vec<f64>, f64)> = samples
        .par_iter()
        .enumerate()
        .map(|(k, x)| -> Result<(Vec<f64>, Vec<f64>, f64)> {
            let n = pts_count(x, &exp.window);
            let run = conditional_gibbs_sample(x, n, &exp.window, exp.inner_beta, exp.p, &exp.volume, &exp.inner, k as u64)?;
            let ext = x.exclude(&exp.window);
            let mut inner = vec![0.0; m];
            for s in &run.samples {
                let full = s.union(&ext)?;
                for (acc, o) in inner.iter_mut().zip(&exp.battery) {
                    *acc += o.eval(&full);
                }
            }
            inner.iter_mut().for_each(|v| *v /= run.samples.len() as f64);
            let outer: Vec<f64> = exp.battery.iter().map(|o| o.eval(x)).collect();
            let acc = if n == 0 { 1.0 } else { run.acceptance_rate };
            Ok((outer, inner, acc))
        })
        .collect::<Result<_>>()?;
    let results: Vec<ObservableResult> = (0..m)
        .map(|j| {
            let d: Welford = per_outer.iter().map(|(o, i, _)| o[j] - i[j]).collect();
            let outer: Welford = per_outer.iter().map(|(o, _, _)| o[j]).collect();
            let inner: Welford = per_outer.iter().map(|(_, i, _)| i[j]).collect();
            let se = d.std_error();
            let z = z_score(d.mean, se);
            let zc = corrected_z(z, m);
            ObservableResult {
                name: exp.battery[j].name.clone(),
                outer_mean: outer.mean,
                inner_mean: inner.mean,
                se,
                z,
                z_corrected: zc,
                p_value: two_sided_p(z),
                pass: zc < 3.0,
            }
        })
        .collect();
    let accs: Vec<f64> = per_outer.iter().map(|t| t.2).collect();
    let min_acc = accs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DlrReport {
        all_pass: results.iter().all(|r| r.pass),
        results,
        outer_samples: samples.len(),
        inner_samples: exp.inner.samples,
        mean_inner_acceptance: accs.iter().sum::<f64>() / accs.len() as f64,
        min_inner_acceptance: min_acc,
        non_convergence: min_acc < 0.01,
        note: "truncation events use a finite probe set; the supremum over all interiors is not attained".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_trivia() {
        let mut rng = stream(3, Purpose::Synthetic, 0);
        let w = Window::centered_disk(1.0).unwrap();
        assert!(binomial_sample(&w, 0, &mut rng).is_empty());
        let x = binomial_sample(&w, 50, &mut rng);
        assert!(x.iter().all(|&p| w.contains(p)));
    }

    #[test]
    fn empty_interior_chain() {
        let w = Window::centered_disk(1.0).unwrap();
        let field = ExteriorField::empty(&w);
        let x = PointConfig::from_xy(&[[3.0, 0.0]]).unwrap();
        let run = run_conditional(&x, 0, &w, 2.0, &field, &InnerPlan::default(), 0).unwrap();
        assert!(run.samples.iter().all(|s| s.is_empty()));
    }

    #[test]
    fn zero_particle_partition_function_is_atomic() {
        let w = Window::centered_disk(1.0).unwrap();
        let field = ExteriorField::empty(&w);
        let est = partition_function_estimate(&field, &PointConfig::empty(), 0, &w, 2.0, 20, 1).unwrap();
        let bb = crate::energy::disk_self_energy(1.0f64);
        assert_eq!(est.mean, (-2.0 * bb).exp());
        assert_eq!(est.std_error, 0.0);
        let est = partition_function_estimate(&field, &PointConfig::from_xy(&[[0.1, 0.0]]).unwrap(), 1, &w, 0.0, 20, 1)
            .unwrap();
        assert_eq!(est.mean, 1.0);
    }

    #[test]
    fn constant_observable_gives_zero_z() {
        let w = Window::centered_disk(1.0).unwrap();
        let dom = Disk::system(64);
        let xs: Vec<PointConfig<f64>> = (0..4).map(|s| crate::sampler::initial_config(64, s)).collect();
        let exp = DlrExperiment {
            window: w,
            p: 3,
            delta: 0.1,
            beta: 2.0,
            inner_beta: 2.0,
            volume: Volume::Finite(dom),
            battery: vec![Observable::new("one", 1.0, |_| 1.0)],
            inner: InnerPlan { samples: 4, ..InnerPlan::default() },
        };
        let r = dlr_consistency_test(&xs, &exp).unwrap();
        assert_eq!(r.results[0].z, 0.0);
        assert!(r.all_pass);
        assert_eq!(r.results[0].outer_mean, 1.0);
        assert_eq!(r.results[0].inner_mean, 1.0);
    }

    #[test]
    fn battery_has_sixteen_bounded_members() {
        let b = standard_battery(1.5, &Disk::system(512));
        assert_eq!(b.len(), 16);
        assert!(b.iter().all(|o| o.bound.is_finite()));
    }
}
