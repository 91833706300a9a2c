//! `phs`: structural checks, symbolic power balance and structure-preserving simulation of
//! port-Hamiltonian field models.

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use phs_core::discrete::{discrete_stokes_check, no_input, Closure, DiscreteSystem, Grid1D};
use phs_core::dsl::{builtin, emit, parse_candidate, parse_model, parse_model_unchecked, BuiltinOptions, ModelError, BUILTIN_NAMES};
use phs_core::phs::{PHSystem, Verdict};
use phs_core::report;
use rand::{Rng, SeedableRng};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "phs", version, about = "Port-Hamiltonian field models: checks, power balance, simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structural checks of J, R and G.
    Verify { model: String },
    /// Variational derivative and boundary operator of the Hamiltonian.
    Vardiff { model: String },
    /// Symbolic decomposition of the rate of change of the energy.
    Balance { model: String },
    /// Casimir conditions for a first-order candidate density.
    Casimir {
        model: String,
        #[arg(long)]
        candidate: String,
    },
    /// Implicit-midpoint simulation of a 1-D model.
    Simulate {
        model: String,
        #[arg(long, default_value_t = 101)]
        nx: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1.0)]
        tend: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Keep every n-th state in the trajectory.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, value_enum, default_value_t = ClosureArg::Sbp)]
        closure: ClosureArg,
    },
    /// Discrete Stokes identity on random nodal vectors.
    StokesCheck {
        #[arg(long)]
        nx: usize,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Writes a built-in model file.
    Builtin {
        name: String,
        /// Output path; standard output when absent.
        #[arg(long)]
        emit: Option<PathBuf>,
        /// Base dimension of the MHD model.
        #[arg(long, default_value_t = 3)]
        dim: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ClosureArg {
    Sbp,
    OneSided2,
}

/// A check failed (exit 1) or the invocation was unusable (exit 2).
enum Failure {
    Check(String),
    Usage(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.into())
    }
}

type Outcome = Result<Verdict, Failure>;

/// A model argument is a file path, or the name of a built-in when no such file exists.
fn load(arg: &str, strict: bool) -> Result<PHSystem, Failure> {
    let path = Path::new(arg);
    if !path.exists() && BUILTIN_NAMES.contains(&arg) {
        return Ok(builtin(arg, BuiltinOptions::default())?);
    }
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read `{arg}`"))?;
    let parsed = if strict { parse_model(&text) } else { parse_model_unchecked(&text) };
    match parsed {
        Ok(sys) => Ok(sys),
        Err(ModelError::Structural(msg)) => Err(Failure::Check(format!("{arg}: structural check failed: {msg}"))),
        Err(e) => Err(Failure::Usage(anyhow::anyhow!("{arg}: {e}"))),
    }
}

fn verdict_exit(v: Verdict) -> ExitCode {
    match v {
        Verdict::Pass => ExitCode::SUCCESS,
        _ => ExitCode::from(1),
    }
}

fn run(cli: Cli) -> Outcome {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Verify { model } => {
            let sys = load(&model, false)?;
            let r = sys.verify()?;
            write!(stdout, "{}", report::verify_report(&sys, &r))?;
            Ok(r.verdict())
        }
        Command::Vardiff { model } => {
            let sys = load(&model, true)?;
            write!(stdout, "{}", report::vardiff_report(&sys)?)?;
            Ok(Verdict::Pass)
        }
        Command::Balance { model } => {
            let sys = load(&model, true)?;
            let pb = sys.power_balance()?;
            write!(stdout, "{}", report::balance_report(&sys, &pb))?;
            Ok(Verdict::from_bool(pb.closure_residual.is_zero()))
        }
        Command::Casimir { model, candidate } => {
            let sys = load(&model, true)?;
            let c = parse_candidate(&sys, &candidate)?;
            let v = sys.casimir_check(&c)?;
            write!(stdout, "{}", report::casimir_report(&sys, &c, &v))?;
            Ok(v.verdict)
        }
        Command::Simulate {
            model,
            nx,
            dt,
            tend,
            out,
            ledger,
            stride,
            closure,
        } => {
            let sys = load(&model, true)?;
            if sys.dim() != 1 {
                return Err(Failure::Usage(anyhow::anyhow!(
                    "not numerically supported: model `{}` has dimension {}; simulation is 1-D only",
                    sys.name,
                    sys.dim()
                )));
            }
            if dt.is_nan() || dt <= 0.0 || tend.is_nan() || tend < 0.0 {
                return Err(Failure::Usage(anyhow::anyhow!("--dt must be positive and --tend non-negative")));
            }
            let (lo, hi) = sys.domain[0];
            let closure = match closure {
                ClosureArg::Sbp => Closure::Sbp,
                ClosureArg::OneSided2 => Closure::OneSided2,
            };
            let grid = Grid1D::new(nx, lo, hi)?.with_closure(closure);
            let ds = DiscreteSystem::new(&sys, grid.clone())?;
            let x0 = ds.initial_state()?;
            let result = ds.run(&x0, dt, tend, &no_input, stride)?;
            let mut w = BufWriter::new(File::create(&out).with_context(|| format!("cannot create {}", out.display()))?);
            report::write_trajectory_csv(&mut w, ds.field_names(), &grid.nodes(), &result.trajectory)?;
            w.flush()?;
            if let Some(path) = ledger {
                let mut w = BufWriter::new(File::create(&path).with_context(|| format!("cannot create {}", path.display()))?);
                report::write_ledger_csv(&mut w, &result.ledger)?;
                w.flush()?;
            }
            let h0 = ds.hamiltonian().value(&x0.x)?;
            let worst = result.ledger.iter().map(|r| r.residual.abs()).fold(0.0, f64::max);
            let h_end = result.ledger.last().map_or(h0, |r| r.h);
            writeln!(stdout, "steps = {}", result.ledger.len())?;
            writeln!(stdout, "H(0) = {h0:.16e}")?;
            writeln!(stdout, "H(end) = {h_end:.16e}")?;
            let tol = 1e-9 * h0.max(1.0);
            let v = Verdict::from_bool(worst <= tol);
            writeln!(stdout, "{v} ledger closure: max |residual| {worst:.3e} (tolerance {tol:.1e})")?;
            Ok(v)
        }
        Command::StokesCheck { nx, samples, seed } => {
            let grid = Grid1D::new(nx, 0.0, 1.0)?;
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let mut worst: Option<phs_core::discrete::StokesDefect> = None;
            let mut ok = true;
            for _ in 0..samples.max(1) {
                let w: Vec<f64> = (0..nx).map(|_| rng.random_range(-1.0..1.0)).collect();
                let d = discrete_stokes_check(&grid, &w);
                ok &= d.within_bound();
                if worst.is_none_or(|m| d.defect.abs() / d.bound > m.defect.abs() / m.bound) {
                    worst = Some(d);
                }
            }
            let d = worst.expect("at least one sample");
            writeln!(stdout, "defect = {:.6e}", d.defect)?;
            writeln!(stdout, "bound = {:.6e}", d.bound)?;
            let v = Verdict::from_bool(ok);
            writeln!(stdout, "{v} discrete Stokes identity on {} random vectors, N = {nx}", samples.max(1))?;
            Ok(v)
        }
        Command::Builtin { name, emit: path, dim } => {
            let sys = builtin(&name, BuiltinOptions { mhd_dim: dim })?;
            let text = emit(&sys);
            match path {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))?,
                None => write!(stdout, "{text}")?,
            }
            Ok(Verdict::Pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => verdict_exit(v),
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
