use ocp_core::energy::interaction_energy;
use ocp_core::geometry;
use ocp_core::sampler::{run_chain, run_chains, sample_configs, ChainPlan};
use ocp_core::Disk;

#[test]
fn adapted_acceptance_lands_in_band() {
    for beta in [1.0, 2.0, 10.0] {
        let mut plan = ChainPlan::<f64>::new(256, beta, 11);
        plan.burn_in = 200 * 256;
        plan.samples = 20;
        let run = run_chain(&plan, 0).unwrap();
        assert!((0.2..=0.6).contains(&run.acceptance_rate), "beta {beta}: acceptance {}", run.acceptance_rate);
    }
}

#[test]
fn same_seed_same_samples_regardless_of_thread_count() {
    let mut plan = ChainPlan::<f64>::new(64, 2.0, 5);
    plan.burn_in = 64 * 50;
    plan.samples = 5;
    plan.chains = 3;
    let a = sample_configs(&plan).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| sample_configs(&plan).unwrap());
    assert_eq!(a, b);
    plan.seed = 6;
    assert_ne!(sample_configs(&plan).unwrap(), a);
}

#[test]
fn cached_energy_tracks_recomputation() {
    let mut plan = ChainPlan::<f64>::new(128, 2.0, 9);
    plan.burn_in = 128 * 20;
    plan.samples = 3;
    for run in run_chains(&plan).unwrap() {
        let last = &run.samples.last().unwrap().config;
        let fresh = interaction_energy(last, &Disk::system(128)).unwrap().total;
        assert!((fresh - run.final_energy.total).abs() < 1e-7 * fresh.abs().max(1.0));
    }
}

#[test]
fn single_precision_chain_stays_in_the_domain() {
    let mut plan = ChainPlan::<f32>::new(64, 2.0, 3);
    plan.burn_in = 64 * 50;
    plan.samples = 10;
    let run = run_chain(&plan, 0).unwrap();
    let domain = geometry::Disk::<f32>::system(64);
    assert!(run.samples.iter().all(|s| s.config.iter().all(|&p| domain.contains(p))));
    let last = &run.samples.last().unwrap().config;
    let e32 = interaction_energy(last, &domain).unwrap().total as f64;
    let wide = ocp_core::PointConfig::new(last.iter().map(|p| p.cast::<f64>()).collect()).unwrap();
    let e64 = interaction_energy(&wide, &Disk::system(64)).unwrap().total;
    assert!((e32 - e64).abs() < 1e-3 * e64.abs().max(1.0), "{e32} vs {e64}");
}
