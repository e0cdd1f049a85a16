//! Single-particle Metropolis sampling of exp(-beta F_N) on the hard-wall disk.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::energy::{disk_potential_radial, interaction_energy, pair_delta, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::geometry::{Disk, Point, PointConfig};
use crate::rng::{stream, Purpose, StreamRng};
use crate::scalar::Scalar;

pub const TARGET_ACCEPTANCE: f64 = 0.35;
const ADAPT_WINDOW: u64 = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainPlan<T> {
    pub n: usize,
    pub beta: T,
    pub seed: u64,
    /// Metropolis steps discarded before the first sample.
    pub burn_in: u64,
    /// Steps between retained samples.
    pub thinning: u64,
    /// Samples retained per chain.
    pub samples: usize,
    pub chains: usize,
    pub proposal_scale: T,
    pub adapt: bool,
    pub resync_interval: u64,
}

impl<T: Scalar> ChainPlan<T> {
    /// Defaults: 1000 sweeps of burn-in, one sweep of thinning.
    pub fn new(n: usize, beta: T, seed: u64) -> Self {
        Self {
            n,
            beta,
            seed,
            burn_in: 1000 * n as u64,
            thinning: n as u64,
            samples: 100,
            chains: 1,
            proposal_scale: T::c(0.5),
            adapt: true,
            resync_interval: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Parameter("N must be at least 1".into()));
        }
        if !(self.beta >= T::zero()) || !self.beta.is_finite() {
            return Err(Error::Parameter(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.thinning < 1 {
            return Err(Error::Parameter("thinning must be at least 1".into()));
        }
        if self.chains < 1 {
            return Err(Error::Parameter("need at least one chain".into()));
        }
        if !(self.proposal_scale > T::zero()) {
            return Err(Error::Parameter("proposal scale must be positive".into()));
        }
        if self.resync_interval < 1 {
            return Err(Error::Parameter("resync interval must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ChainState<T> {
    config: PointConfig<T>,
    domain: Disk<T>,
    energy: EnergyBreakdown<T>,
    rng: StreamRng,
    beta: T,
    step_count: u64,
    accept_count: u64,
    proposal_scale: T,
    since_resync: u64,
    resync_interval: u64,
}

impl<T: Scalar> ChainState<T> {
    pub fn new(config: PointConfig<T>, domain: Disk<T>, beta: T, proposal_scale: T, rng: StreamRng) -> Result<Self> {
        let energy = interaction_energy(&config, &domain)?;
        Ok(Self {
            config,
            domain,
            energy,
            rng,
            beta,
            step_count: 0,
            accept_count: 0,
            proposal_scale,
            since_resync: 0,
            resync_interval: 100_000,
        })
    }

    pub fn with_resync_interval(mut self, every: u64) -> Self {
        self.resync_interval = every.max(1);
        self
    }

    pub fn config(&self) -> &PointConfig<T> {
        &self.config
    }

    pub fn domain(&self) -> &Disk<T> {
        &self.domain
    }

    pub fn cached_energy(&self) -> EnergyBreakdown<T> {
        self.energy
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn accept_count(&self) -> u64 {
        self.accept_count
    }

    pub fn proposal_scale(&self) -> T {
        self.proposal_scale
    }

    pub fn set_proposal_scale(&mut self, s: T) {
        self.proposal_scale = s;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.step_count == 0 {
            0.0
        } else {
            self.accept_count as f64 / self.step_count as f64
        }
    }

    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }

    /// Recompute the cached energy from scratch.
    pub fn resync(&mut self) {
        self.energy = interaction_energy(&self.config, &self.domain).expect("chain stays inside its domain");
        self.since_resync = 0;
    }

    /// Attempt to move point `i` to `new`; `u` is the uniform variate for the accept test.
    pub fn try_move(&mut self, i: usize, new: Point<T>, u: f64) -> bool {
        self.step_count += 1;
        self.since_resync += 1;
        let accepted = self.metropolis(i, new, u);
        if self.since_resync >= self.resync_interval {
            self.resync();
        }
        accepted
    }

    fn metropolis(&mut self, i: usize, new: Point<T>, u: f64) -> bool {
        if !self.domain.contains(new) {
            return false;
        }
        let old = self.config.points()[i];
        let (c, r) = (self.domain.center, self.domain.radius);
        let dpb = disk_potential_radial((old - c).norm(), r) - disk_potential_radial((new - c).norm(), r);
        let dpp = pair_delta(self.config.points(), i, new);
        let d = dpp + dpb;
        if !d.is_finite() {
            return false;
        }
        let accept = d <= T::zero() || self.beta == T::zero() || u < (-(self.beta * d).as_f64()).exp();
        if accept {
            self.config.set(i, new);
            self.energy = EnergyBreakdown::new(
                self.energy.point_point + dpp,
                self.energy.point_background + dpb,
                self.energy.background_background,
            );
            self.accept_count += 1;
        }
        accept
    }

    /// One single-particle Gaussian-proposal Metropolis update.
    pub fn step(&mut self) -> bool {
        let n = self.config.n();
        let i = self.rng.random_range(0..n);
        let dx: f64 = self.rng.sample(StandardNormal);
        let dy: f64 = self.rng.sample(StandardNormal);
        let u: f64 = self.rng.random();
        let new = self.config.points()[i] + Point::new(T::c(dx), T::c(dy)) * self.proposal_scale;
        self.try_move(i, new, u)
    }

    pub fn run(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }

    /// Burn-in with scale adaptation toward the target acceptance; the scale is frozen on return.
    pub fn burn_in(&mut self, steps: u64, adapt: bool) {
        let max_scale = T::c(2.0) * self.domain.radius;
        let mut done = 0;
        while done < steps {
            let w = ADAPT_WINDOW.min(steps - done);
            let before = self.accept_count;
            self.run(w);
            done += w;
            if adapt {
                let rate = (self.accept_count - before) as f64 / w as f64;
                let factor = T::c(((rate - TARGET_ACCEPTANCE) * 2.0).exp());
                self.proposal_scale = (self.proposal_scale * factor).max(T::c(1e-4)).min(max_scale);
            }
        }
        self.step_count = 0;
        self.accept_count = 0;
    }
}

pub fn mcmc_step<T: Scalar>(mut state: ChainState<T>) -> ChainState<T> {
    state.step();
    state
}

/// N points on a jittered triangular lattice of unit density inside Sigma_N.
pub fn initial_config<T: Scalar>(n: usize, seed: u64) -> PointConfig<T> {
    assert!(n >= 1, "initial_config needs N >= 1");
    let domain = Disk::<T>::system(n);
    if n == 1 {
        return PointConfig::from_trusted(vec![Point::origin()]);
    }
    let r = domain.radius.as_f64();
    let a = (2.0 / 3f64.sqrt()).sqrt();
    let h = a * 3f64.sqrt() / 2.0;
    let m = (r / h).ceil() as i64 + 2;
    let mut lattice: Vec<(f64, f64)> = Vec::new();
    for j in -m..=m {
        for i in -2 * m..=2 * m {
            let x = a * (i as f64 + 0.5 * j as f64);
            let y = h * j as f64;
            let d = x.hypot(y);
            if d <= r + a {
                lattice.push((d, y.atan2(x)));
            }
        }
    }
    lattice.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap().then(p.1.partial_cmp(&q.1).unwrap()));
    let mut rng = stream(seed, Purpose::Initial, n as u64);
    let jitter = 0.05 * a;
    let mut pts: Vec<Point<f64>> = Vec::with_capacity(n);
    for &(d, th) in lattice.iter().take(n) {
        if d > r {
            break;
        }
        let base = Point::polar(d, th);
        let j = Point::polar(jitter * rng.random::<f64>().sqrt(), 2.0 * std::f64::consts::PI * rng.random::<f64>());
        let p = if (base + j).norm() <= r { base + j } else { base };
        pts.push(p);
    }
    while pts.len() < n {
        let p = Point::polar(r * rng.random::<f64>().sqrt(), 2.0 * std::f64::consts::PI * rng.random::<f64>());
        if pts.iter().all(|q| q.dist(p) > 0.2) {
            pts.push(p);
        }
    }
    let pts: Vec<Point<T>> = pts.into_iter().map(|p| p.cast::<T>()).map(|p| clamp_into(p, &domain)).collect();
    PointConfig::new(pts).expect("lattice points are distinct")
}

fn clamp_into<T: Scalar>(p: Point<T>, d: &Disk<T>) -> Point<T> {
    if d.contains(p) {
        p
    } else {
        p * (d.radius / p.norm() * T::c(1.0 - 1e-6))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub chain: usize,
    pub step: u64,
    pub config: PointConfig<T>,
}

/// Lazily burned-in, thinned sample stream of one chain.
pub struct ChainStream<T: Scalar> {
    state: ChainState<T>,
    plan: ChainPlan<T>,
    chain: usize,
    emitted: usize,
    burned: bool,
}

impl<T: Scalar> ChainStream<T> {
    pub fn new(plan: &ChainPlan<T>, chain: usize) -> Result<Self> {
        plan.validate()?;
        let init = initial_config(plan.n, plan.seed ^ (chain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let state = ChainState::new(
            init,
            Disk::system(plan.n),
            plan.beta,
            plan.proposal_scale,
            stream(plan.seed, Purpose::Chain, chain as u64),
        )?
        .with_resync_interval(plan.resync_interval);
        Ok(Self { state, plan: plan.clone(), chain, emitted: 0, burned: false })
    }

    pub fn state(&self) -> &ChainState<T> {
        &self.state
    }
}

impl<T: Scalar> Iterator for ChainStream<T> {
    type Item = Sample<T>;

    fn next(&mut self) -> Option<Sample<T>> {
        if !self.burned {
            self.state.burn_in(self.plan.burn_in, self.plan.adapt);
            self.burned = true;
        }
        if self.emitted >= self.plan.samples {
            return None;
        }
        self.state.run(self.plan.thinning);
        self.emitted += 1;
        Some(Sample { chain: self.chain, step: self.state.step_count(), config: self.state.config().clone() })
    }
}

#[derive(Clone, Debug)]
pub struct ChainRun<T> {
    pub chain: usize,
    pub samples: Vec<Sample<T>>,
    pub acceptance_rate: f64,
    pub proposal_scale: T,
    pub final_energy: EnergyBreakdown<T>,
}

pub fn run_chain<T: Scalar>(plan: &ChainPlan<T>, chain: usize) -> Result<ChainRun<T>> {
    let mut s = ChainStream::new(plan, chain)?;
    let samples: Vec<Sample<T>> = s.by_ref().collect();
    Ok(ChainRun {
        chain,
        samples,
        acceptance_rate: s.state.acceptance_rate(),
        proposal_scale: s.state.proposal_scale(),
        final_energy: s.state.cached_energy(),
    })
}

/// All chains of the plan in parallel; output ordered by chain index.
pub fn run_chains<T: Scalar>(plan: &ChainPlan<T>) -> Result<Vec<ChainRun<T>>> {
    plan.validate()?;
    (0..plan.chains).into_par_iter().map(|c| run_chain(plan, c)).collect()
}

/// Flattened configurations of all chains, chain-major.
pub fn sample_configs<T: Scalar>(plan: &ChainPlan<T>) -> Result<Vec<PointConfig<T>>> {
    Ok(run_chains(plan)?.into_iter().flat_map(|r| r.samples.into_iter().map(|s| s.config)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hard_wall_rejects() {
        let cfg = initial_config::<f64>(5, 1);
        let mut s = ChainState::new(cfg.clone(), Disk::system(5), 2.0, 0.5, stream(1, Purpose::Chain, 0)).unwrap();
        assert!(!s.try_move(0, Point::new(100.0, 0.0), 0.0));
        assert_eq!(s.config(), &cfg);
    }

    #[test]
    fn zero_beta_and_zero_delta_accept() {
        let cfg = initial_config::<f64>(5, 1);
        let mut s = ChainState::new(cfg.clone(), Disk::system(5), 0.0, 0.5, stream(1, Purpose::Chain, 0)).unwrap();
        assert!(s.try_move(1, Point::new(0.01, 0.02), 0.999_999));
        let mut s = ChainState::new(cfg.clone(), Disk::system(5), 3.0, 0.5, stream(1, Purpose::Chain, 0)).unwrap();
        let p = cfg.points()[2];
        assert!(s.try_move(2, p, 0.999_999));
    }

    #[test]
    fn initial_configs() {
        let one = initial_config::<f64>(1, 9);
        assert_eq!(one.points(), &[Point::origin()]);
        let seven = initial_config::<f64>(7, 3);
        assert_eq!(seven.n(), 7);
        let d = Disk::<f64>::system(7);
        assert!(seven.iter().all(|&p| d.contains(p)));
        let hundred = initial_config::<f64>(100, 3);
        assert!(hundred.min_distance().unwrap() > 0.1);
    }

    #[test]
    fn deterministic_streams() {
        let mut plan = ChainPlan::new(12, 2.0, 77);
        plan.burn_in = 2000;
        plan.samples = 5;
        let a = run_chain(&plan, 0).unwrap();
        let b = run_chain(&plan, 0).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = run_chain(&plan, 1).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn invalid_plans() {
        let mut p = ChainPlan::new(10, -1.0, 0);
        assert!(p.validate().is_err());
        p.beta = 1.0;
        p.thinning = 0;
        assert!(p.validate().is_err());
    }
}
