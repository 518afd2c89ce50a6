use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atmpc::config::{Problem, RunConfig};
use atmpc::output::{self, Format};
use atmpc::sweep::{sweep_theta_error, sweep_theta_set, SweepKind, SweepSpec};
use atmpc::{bounds, report, simulate, HarnessError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "atmpc", version, about = "Adaptive tube MPC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Output directory for CSV/JSON files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the config and of sweep specs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// One closed-loop run from the configured initial state.
    Simulate { config: PathBuf },
    /// A priori performance bound.
    Bound { config: PathBuf },
    /// Terminal-weight and stability certificates.
    Verify { config: PathBuf },
    /// Prior-set volume sweep.
    SweepSet { config: PathBuf, spec: PathBuf },
    /// Initial estimation error sweep.
    SweepError { config: PathBuf, spec: PathBuf },
    /// verify + bound + one simulation.
    Report { config: PathBuf },
}

fn load(path: &Path, seed: Option<u64>) -> Result<Problem, HarnessError> {
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Problem::new(cfg)
}

fn load_spec(path: &Path, kind: SweepKind, seed: Option<u64>) -> Result<SweepSpec, HarnessError> {
    let mut spec = SweepSpec::from_path(path)?;
    if spec.kind != kind {
        return Err(HarnessError::Config(format!(
            "{}: expected a {kind:?} sweep, found {:?}",
            path.display(),
            spec.kind
        )));
    }
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let Common { out, seed, format } = cli.common;
    match cli.command {
        Command::Simulate { config } => {
            let p = load(&config, seed)?;
            let r = simulate(&p)?;
            output::write_run(&out, &r, format)?;
            println!(
                "steps = {}  converged = {}  J = {:.6e}",
                r.log.inputs.len(),
                r.converged,
                r.cost
            );
            let v = r.invariants.violations();
            if !v.is_empty() {
                return Err(HarnessError::InvariantViolated(v.join("; ")));
            }
        }
        Command::Bound { config } => {
            let p = load(&config, seed)?;
            let k = bounds::constants(&p)?;
            let err = (&p.theta_star - &p.theta_hat0).norm();
            let b = bounds::report(&p, &k, err)?;
            output::write_bound(&out, &b, format)?;
            print!("{}", output::bound_text(&b));
        }
        Command::Verify { config } => {
            let p = load(&config, seed)?;
            let c = report::certificates(&p)?;
            let text = report::certificates_text(&c);
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("certificates.txt"), &text)?;
            print!("{text}");
        }
        Command::SweepSet { config, spec } => {
            let p = load(&config, seed)?;
            let spec = load_spec(&spec, SweepKind::ThetaSetVolume, seed)?;
            let s = sweep_theta_set(&p, &spec)?;
            output::write_sweep(&out, &s, format)?;
            for (i, l) in spec.levels.iter().enumerate() {
                println!("volume {l:e}: median J = {:.6e}", s.median_cost(i));
            }
            sweep_status(&s)?;
        }
        Command::SweepError { config, spec } => {
            let p = load(&config, seed)?;
            let spec = load_spec(&spec, SweepKind::ThetaErrorNorm, seed)?;
            let s = sweep_theta_error(&p, &spec)?;
            output::write_sweep(&out, &s, format)?;
            for (i, l) in spec.levels.iter().enumerate() {
                println!("error {l}: worst J = {:.6e}", s.worst_cost(i));
            }
            sweep_status(&s)?;
        }
        Command::Report { config } => {
            let p = load(&config, seed)?;
            let r = report::build(&p)?;
            report::write(&out, &r, format)?;
            print!("{}", r.text());
            for c in [&r.certificates.lyapunov, &r.certificates.robust] {
                if !c.passes() {
                    eprintln!("warning: {:?} certificate {:?}", c.kind, c.verdict());
                }
            }
            let v = r.sim.invariants.violations();
            if !v.is_empty() {
                return Err(HarnessError::InvariantViolated(v.join("; ")));
            }
        }
    }
    Ok(())
}

fn sweep_status(s: &atmpc::sweep::SweepResult) -> Result<(), HarnessError> {
    if let Some(r) = s.records.iter().find(|r| r.recursive_feasibility_violated) {
        return Err(HarnessError::InvariantViolated(format!(
            "level {} sample {}: {}",
            r.level, r.sample, r.status
        )));
    }
    if let Some(r) = s.records.iter().find(|r| !r.violations.is_empty()) {
        return Err(HarnessError::InvariantViolated(format!(
            "level {} sample {}: {}",
            r.level,
            r.sample,
            r.violations.join("; ")
        )));
    }
    let failed = s.records.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        eprintln!("warning: {failed} runs failed; see the runs table");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
