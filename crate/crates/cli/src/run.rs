//! Experiment lifecycle: sample, run the kind-specific analysis, write artifacts and the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value as Json};
use sha2::{Digest, Sha256};
use thiserror::Error;

use ocp_core::dlr::{binomial_sample, dlr_consistency_test, standard_battery, truncation_event_rate, DlrExperiment, InnerPlan, Observable};
use ocp_core::electric::{apriori_scan, local_law_scan};
use ocp_core::energy::interaction_energy;
use ocp_core::geometry::pts_count;
use ocp_core::loctrans::{diff_stats, translation_invariance_test, verify_translation, LocalizedTranslation};
use ocp_core::movefn::{convergence_diagnostic, Volume};
use ocp_core::observables::rigidity_variance_scan;
use ocp_core::rng::{stream, Purpose};
use ocp_core::sampler::{run_chains, ChainRun};
use ocp_core::snapshot::{write_snapshots, Snapshot};
use ocp_core::{ChainPlan, Disk, DyadicPartition, Point, PointConfig, Window};

use crate::config::{ConfigError, ExperimentSpec, Kind};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] ocp_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Other(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    /// The experiment ran but its statistical test failed.
    TestFailure(String),
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::TestFailure(_) => 1,
        }
    }
}

pub const EXIT_RUNTIME_ERROR: i32 = 2;

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub outcome: Outcome,
    pub spec_hash: String,
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes result files under one directory and records their digests.
struct Artifacts {
    dir: PathBuf,
    hash: String,
    files: BTreeMap<String, String>,
}

impl Artifacts {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<(), RunError> {
        let mut s = format!("#spec_hash={}\n{header}\n", self.hash);
        for r in rows {
            s += r;
            s.push('\n');
        }
        self.write(&format!("results/{name}.csv"), s.as_bytes())
    }

    fn json<T: Serialize>(&mut self, name: &str, body: &T) -> Result<(), RunError> {
        let mut v = serde_json::to_value(body)?;
        match v.as_object_mut() {
            Some(m) => {
                m.insert("spec_hash".into(), Json::String(self.hash.clone()));
            }
            None => v = json!({ "spec_hash": self.hash, "value": v }),
        }
        let mut bytes = serde_json::to_vec_pretty(&v)?;
        bytes.push(b'\n');
        self.write(&format!("results/{name}.json"), &bytes)
    }
}

pub fn chain_plan(spec: &ExperimentSpec) -> ChainPlan {
    let n = spec.n();
    let mut plan = ChainPlan::new(n, spec.beta(), spec.seed());
    plan.samples = spec.int("samples") as usize;
    plan.chains = spec.int("chains") as usize;
    plan.proposal_scale = spec.float("proposal_scale");
    let burn = spec.int("burn_in");
    if burn > 0 {
        plan.burn_in = burn;
    }
    let steps = spec.int("steps");
    if steps > 0 {
        plan.thinning = (steps / plan.samples as u64).max(1);
    }
    plan
}

pub fn run_experiment(spec: &ExperimentSpec, out: &Path) -> Result<RunSummary, RunError> {
    let started = Instant::now();
    fs::create_dir_all(out)?;
    let hash = spec.hash();
    let mut art = Artifacts { dir: out.to_path_buf(), hash: hash.clone(), files: BTreeMap::new() };
    art.write("spec.ini", spec.canonical().as_bytes())?;

    let plan = chain_plan(spec);
    let runs = run_chains(&plan)?;
    let mut snaps = Vec::new();
    for r in &runs {
        for s in &r.samples {
            snaps.push(Snapshot::new(&s.config, plan.beta, plan.seed, s.step));
        }
    }
    let mut buf = Vec::new();
    write_snapshots(&mut buf, &snaps)?;
    art.write("snapshots.ndjson", &buf)?;
    let samples: Vec<PointConfig> = runs.iter().flat_map(|r| r.samples.iter().map(|s| s.config.clone())).collect();

    let outcome = match spec.kind {
        Kind::Sample => run_sample(spec, &runs, &mut art)?,
        Kind::Dlr => run_dlr(spec, &samples, &mut art)?,
        Kind::Rigidity => run_rigidity(spec, &samples, &mut art)?,
        Kind::Loctrans => run_loctrans(spec, &samples, &mut art)?,
        Kind::Locallaw => run_locallaw(spec, &samples, &mut art)?,
        Kind::Movefn => run_movefn(spec, &samples, &mut art)?,
        Kind::Apriori => run_apriori(spec, &samples, &mut art)?,
    };

    let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let manifest = json!({
        "spec_hash": hash,
        "kind": spec.kind.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": ocp_core::VERSION,
        "timestamp": timestamp,
        "wall_time_s": started.elapsed().as_secs_f64(),
        "outcome": match &outcome { Outcome::Pass => "pass".to_string(), Outcome::TestFailure(m) => format!("test-failure: {m}") },
        "files": art.files,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(out.join("manifest.json"), bytes)?;
    Ok(RunSummary { outcome, spec_hash: hash, files: art.files })
}

fn run_sample(spec: &ExperimentSpec, runs: &[ChainRun<f64>], art: &mut Artifacts) -> Result<Outcome, RunError> {
    let domain = Disk::system(spec.n());
    let mut rows = Vec::new();
    let mut energies = Vec::new();
    for r in runs {
        for s in &r.samples {
            let e = interaction_energy(&s.config, &domain)?.total;
            energies.push(e);
            rows.push(format!("{},{},{e:?}", r.chain, s.step));
        }
    }
    art.csv("energies", "chain,step,energy", &rows)?;
    let chains: Vec<String> = runs
        .iter()
        .map(|r| format!("{},{:?},{:?},{:?}", r.chain, r.acceptance_rate, r.proposal_scale, r.final_energy.total))
        .collect();
    art.csv("chains", "chain,acceptance_rate,proposal_scale,final_energy", &chains)?;
    let m = ocp_core::stats::moments(&energies);
    art.json("summary", &json!({ "n": spec.n(), "beta": spec.beta(), "samples": energies.len(), "energy": m }))?;
    Ok(Outcome::Pass)
}

fn run_dlr(spec: &ExperimentSpec, samples: &[PointConfig], art: &mut Artifacts) -> Result<Outcome, RunError> {
    let rho = spec.float("dlr.rho");
    let domain = Disk::system(spec.n());
    let window = Window::Disk { center: Point::origin(), radius: rho };
    let inner_beta = match spec.float("dlr.inner_beta") {
        b if b < 0.0 => spec.beta(),
        b => b,
    };
    let p = spec.int("dlr.p") as u32;
    let exp = DlrExperiment {
        window,
        p,
        delta: spec.float("dlr.delta"),
        beta: spec.beta(),
        inner_beta,
        volume: Volume::Finite(domain),
        battery: standard_battery(rho, &domain),
        inner: InnerPlan {
            burn_in: spec.int("dlr.inner_burn_in"),
            thinning: spec.int("dlr.inner_thinning"),
            samples: spec.int("dlr.inner_samples") as usize,
            seed: spec.seed(),
        },
    };
    let report = dlr_consistency_test(samples, &exp)?;
    let p_ref = match spec.int("dlr.p_ref") {
        0 => None,
        r => Some(r as u32),
    };
    let rate = truncation_event_rate(samples, &window, exp.delta, p, p_ref, &exp.volume, spec.int("dlr.probes") as usize, spec.seed())?;
    let rows: Vec<String> = report
        .results
        .iter()
        .map(|r| {
            format!(
                "\"{}\",{:?},{:?},{:?},{:?},{:?},{:?},{}",
                r.name, r.outer_mean, r.inner_mean, r.se, r.z, r.z_corrected, r.p_value, r.pass
            )
        })
        .collect();
    art.csv("dlr", "observable,outer_mean,inner_mean,se,z,z_corrected,p_value,pass", &rows)?;
    art.json("dlr", &json!({ "report": report, "truncation_event": rate, "inner_beta": inner_beta }))?;
    Ok(if report.all_pass {
        Outcome::Pass
    } else {
        let failed: Vec<&str> = report.results.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
        Outcome::TestFailure(format!("DLR battery failed for {}", failed.join("; ")))
    })
}

fn run_rigidity(spec: &ExperimentSpec, samples: &[PointConfig], art: &mut Artifacts) -> Result<Outcome, RunError> {
    let center = Point::new(spec.float("rigidity.center_x"), spec.float("rigidity.center_y"));
    let scan = rigidity_variance_scan(samples, &spec.list("rigidity.eps"), &spec.list("rigidity.ells"), center, &Disk::system(spec.n()))?;
    let rows: Vec<String> = scan
        .rows
        .iter()
        .map(|r| format!("{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}", r.eps, r.ell, r.support_radius, r.mean, r.variance, r.variance_se, r.dirichlet, r.count))
        .collect();
    art.csv("rigidity", "eps,ell,support_radius,mean,variance,variance_se,dirichlet,count", &rows)?;
    art.json("rigidity", &scan)?;
    Ok(Outcome::Pass)
}

fn run_loctrans(spec: &ExperimentSpec, samples: &[PointConfig], art: &mut Artifacts) -> Result<Outcome, RunError> {
    let v = Point::new(spec.float("loctrans.v_x"), spec.float("loctrans.v_y"));
    let domain = Disk::system(spec.n());
    let p = spec.int("loctrans.p") as u32;
    let mut constants = Vec::new();
    let mut diffs = Vec::new();
    let mut stats = Vec::new();
    let mut reports = Vec::new();
    for l in spec.list("loctrans.L") {
        let tr = LocalizedTranslation::new(l, v)?.with_steps(spec.int("loctrans.steps") as usize);
        let rep = verify_translation(&tr, spec.int("loctrans.grid") as usize);
        for line in rep.csv().lines().skip(1) {
            constants.push(format!("{l:?},{line}"));
        }
        let ds = diff_stats(samples, &tr, p, &Volume::Finite(domain), spec.beta(), spec.seed())?;
        for (k, (a, b)) in ds.diff1.iter().zip(&ds.diff2).enumerate() {
            diffs.push(format!("{l:?},{k},{a:?},{b:?}"));
        }
        stats.push(json!({ "L": l, "lambda_radius": ds.lambda_radius, "p": p, "exp_diff1": ds.exp1, "exp_diff2": ds.exp2 }));
        reports.push(rep);
    }
    art.csv("loctrans_constants", "L,constant,k,value", &constants)?;
    art.csv("diff", "L,sample,diff1,diff2", &diffs)?;
    art.json("diff", &json!({ "stats": stats }))?;
    art.json("loctrans", &json!({ "reports": reports }))?;
    let r = spec.float("loctrans.view_radius");
    let w = Window::Disk { center: Point::origin(), radius: r };
    let n = spec.n();
    let battery = vec![Observable::new(format!("Pts(D(0,{r}))"), n as f64, move |x| pts_count(x, &w) as f64)];
    let inv = translation_invariance_test(samples, n, Point::origin(), v, &w, &battery)?;
    art.json("invariance", &inv)?;
    Ok(Outcome::Pass)
}

fn run_locallaw(spec: &ExperimentSpec, samples: &[PointConfig], art: &mut Artifacts) -> Result<Outcome, RunError> {
    let center = Point::new(spec.float("locallaw.center_x"), spec.float("locallaw.center_y"));
    let table = local_law_scan(samples, spec.n(), &[center], &spec.list("locallaw.ells"))?;
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{:?},{},{:?},{:?},{:?},{:?},{:?}", r.ell, r.count, r.mean, r.se, r.q10, r.q50, r.q90))
        .collect();
    art.csv("locallaw", "ell,count,mean,se,q10,q50,q90", &rows)?;
    art.json("locallaw", &table)?;
    Ok(Outcome::Pass)
}

fn run_movefn(spec: &ExperimentSpec, samples: &[PointConfig], art: &mut Artifacts) -> Result<Outcome, RunError> {
    let window = Window::Disk { center: Point::origin(), radius: spec.float("movefn.rho") };
    let volume = Volume::Finite(Disk::system(spec.n()));
    let part = DyadicPartition::default();
    let p_max = spec.int("movefn.p_max") as u32;
    let tol = spec.float("movefn.tolerance");
    let pairs = spec.int("movefn.pairs") as usize;
    let mut rows = Vec::new();
    let mut converged = 0;
    let mut incr = vec![0.0; p_max as usize];
    for k in 0..pairs {
        let x = &samples[k % samples.len()];
        let mut rng = stream(spec.seed(), Purpose::Probe, k as u64);
        let xp = binomial_sample(&window, pts_count(x, &window), &mut rng);
        let ev = convergence_diagnostic(&xp, x, &window, p_max, &volume, &part, tol)?;
        converged += ev.converged as usize;
        for (a, b) in incr.iter_mut().zip(&ev.increments) {
            *a += b / pairs as f64;
        }
        let inc: Vec<String> = ev.increments.iter().map(|v| format!("{v:?}")).collect();
        rows.push(format!("{k},{},{:?},{}", ev.converged, ev.values.last().copied().unwrap_or(f64::NAN), inc.join(";")));
    }
    art.csv("movefn", "pair,converged,value,increments", &rows)?;
    art.json(
        "movefn",
        &json!({ "pairs": pairs, "converged_fraction": converged as f64 / pairs as f64, "mean_increments": incr, "tolerance": tol }),
    )?;
    Ok(Outcome::Pass)
}

fn run_apriori(spec: &ExperimentSpec, samples: &[PointConfig], art: &mut Artifacts) -> Result<Outcome, RunError> {
    let scan = apriori_scan(samples, spec.n(), spec.float("apriori.support"), spec.int("apriori.pairs") as usize, spec.seed())?;
    let rows: Vec<String> = scan
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},\"{}\",{:?},{:?},{:?},{:?},{:?},{:?}",
                r.sample, r.function, r.center.x, r.center.y, r.result.fluct, r.result.lipschitz, r.result.ener_pts, r.result.ratio
            )
        })
        .collect();
    art.csv("apriori", "sample,function,center_x,center_y,fluct,lipschitz,ener_pts,ratio", &rows)?;
    art.json("apriori", &json!({ "dictionary": scan.dictionary, "max_ratio": scan.max_ratio, "pairs": scan.rows.len() }))?;
    Ok(Outcome::Pass)
}
