use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ocp_cli::{parse_spec, run_experiment, verify_dir, Kind, RunError, EXIT_RUNTIME_ERROR};

#[derive(Parser)]
#[command(name = "ocp", version, about = "Two-dimensional one-component plasma experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (INI-style key = value)
    #[arg(long)]
    spec: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the spec's master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    Sample(RunArgs),
    Dlr(RunArgs),
    Rigidity(RunArgs),
    Loctrans(RunArgs),
    Locallaw(RunArgs),
    Movefn(RunArgs),
    Apriori(RunArgs),
    /// Re-hash a run directory against its manifest
    Verify {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(kind: Kind, args: RunArgs) -> Result<i32, RunError> {
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| RunError::Other(e.to_string()))?;
    }
    let text = std::fs::read_to_string(&args.spec)?;
    let mut spec = parse_spec(&text)?;
    if spec.kind != kind {
        return Err(RunError::Other(format!("spec is for `{}` but the `{kind}` subcommand was used", spec.kind)));
    }
    if let Some(s) = args.seed {
        spec.set_seed(s);
    }
    let summary = run_experiment(&spec, &args.out)?;
    match &summary.outcome {
        ocp_cli::Outcome::Pass => eprintln!("ok: {} ({} files, spec {})", kind, summary.files.len(), &summary.spec_hash[..12]),
        ocp_cli::Outcome::TestFailure(m) => eprintln!("test failure: {m}"),
    }
    Ok(summary.outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(a) => run(Kind::Sample, a),
        Command::Dlr(a) => run(Kind::Dlr, a),
        Command::Rigidity(a) => run(Kind::Rigidity, a),
        Command::Loctrans(a) => run(Kind::Loctrans, a),
        Command::Locallaw(a) => run(Kind::Locallaw, a),
        Command::Movefn(a) => run(Kind::Movefn, a),
        Command::Apriori(a) => run(Kind::Apriori, a),
        Command::Verify { out } => verify_dir(&out).map(|r| {
            for p in &r.problems {
                eprintln!("{p}");
            }
            if r.ok() {
                eprintln!("verified {} files against spec {}", r.checked, &r.spec_hash[..12]);
                0
            } else {
                1
            }
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME_ERROR as u8)
        }
    }
}
