use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dmm_core::basis::{Quadrature, DEFAULT_POINTS_PER_HALF};
use dmm_core::bench::{
    compare_profiles, parse_basis, parse_models, parse_moments, parse_profile, solve, Norm, RunManifest,
    DEFAULT_CELLS,
};
use dmm_core::closure::{EntropyClosure, SolverOptions};
use dmm_core::eigen::{scan, ScanMode};
use dmm_core::fvsolver::DEFAULT_CFL;
use dmm_core::realizability::{check, MomentVector, DEFAULT_TOLERANCE};
use dmm_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_UNREALIZABLE: u8 = 4;

#[derive(Parser)]
#[command(name = "dmm", version, about = "Entropy-based mixed-moment transport models in slab geometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run benchmark problems and write density profiles.
    Solve(SolveArgs),
    /// Tabulate DMM2 flux Jacobian eigenvalues over the realizable set.
    EigenScan(ScanArgs),
    Realizability {
        #[command(subcommand)]
        action: RealizabilityAction,
    },
    Closure {
        #[command(subcommand)]
        action: ClosureAction,
    },
    /// Distance between the densities of two profile CSVs.
    Compare(CompareArgs),
}

#[derive(Args)]
struct SolveArgs {
    /// Builtin name (plane_source, source_beam) or JSON file.
    #[arg(long)]
    config: String,
    /// Comma-separated model ids, e.g. DMM2,MM1,P99.
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = DEFAULT_CELLS)]
    cells: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CFL)]
    cfl: f64,
    /// Gauss-Legendre points per half interval.
    #[arg(long, default_value_t = DEFAULT_POINTS_PER_HALF)]
    quad: usize,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScanKind {
    Mean,
    Boundary,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long, value_enum)]
    mode: ScanKind,
    /// Isotropic blend for boundary scans.
    #[arg(long, default_value_t = 0.05)]
    reg: f64,
    #[arg(long, default_value_t = 101)]
    resolution: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MomentArgs {
    #[arg(long)]
    basis: String,
    /// Comma-separated moments, density first.
    #[arg(long, allow_hyphen_values = true)]
    moments: String,
}

#[derive(Subcommand)]
enum RealizabilityAction {
    /// Exit status 4 when the moments are not realizable.
    Check(MomentArgs),
}

#[derive(Subcommand)]
enum ClosureAction {
    /// Solve the dual problem and print multipliers, flux and residual.
    Solve {
        #[command(flatten)]
        moments: MomentArgs,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// l1, rel-l1 or linf.
    #[arg(long, default_value = "l1")]
    norm: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_CONFIG })
        }
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.12e}")).collect::<Vec<_>>().join(",")
}

fn moment_vector(args: &MomentArgs) -> Result<MomentVector, Error> {
    MomentVector::new(parse_basis(&args.basis)?, parse_moments(&args.moments)?)
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Solve(a) => {
            let manifest = RunManifest {
                config: a.config,
                models: parse_models(&a.model)?.iter().map(|m| m.to_string()).collect(),
                out_dir: a.out,
                n_cells: a.cells,
                cfl: a.cfl,
                quadrature_points: a.quad,
                gradient_tol: a.tol,
                seed: a.seed,
            };
            for run in solve(&manifest)? {
                println!(
                    "{}: mass {:.10e}, outflow {:.10e}, ledger defect {:.2e}, safeguard {}, regularized closures {}",
                    run.model,
                    run.final_mass,
                    run.ledger.boundary_outflow,
                    run.max_ledger_defect,
                    run.safeguard_events,
                    run.ladder_events
                );
            }
            println!("wrote {} (manifest {})", manifest.out_dir.display(), manifest.hash());
        }
        Command::EigenScan(a) => {
            let mode = match a.mode {
                ScanKind::Mean => ScanMode::MeanCut,
                ScanKind::Boundary => ScanMode::Boundary(a.reg),
            };
            let table = scan(mode, a.resolution)?;
            table.write_csv(BufWriter::new(fs::File::create(&a.out)?))?;
            println!("{} rows, {} failed closures, wrote {}", table.rows.len(), table.failures(), a.out.display());
        }
        Command::Realizability { action: RealizabilityAction::Check(m) } => {
            let verdict = check(&moment_vector(&m)?, DEFAULT_TOLERANCE)?;
            println!("realizable={} margin={:.6e}", verdict.realizable, verdict.margin);
            if !verdict.realizable {
                return Ok(ExitCode::from(EXIT_UNREALIZABLE));
            }
        }
        Command::Closure { action: ClosureAction::Solve { moments, tol } } => {
            let u = moment_vector(&moments)?;
            let quad = Quadrature::default();
            let closure = EntropyClosure::new(u.basis, quad);
            let sol = closure.solve_dual(&u, &SolverOptions::with_tol(tol), None)?;
            println!("alpha={}", join(&sol.alpha.0));
            println!("flux={}", join(&sol.flux_moments));
            println!("residual={:.3e}", sol.residual_norm);
            println!("iterations={}", sol.iterations);
            println!("regularization={:e}", sol.regularization_used);
        }
        Command::Compare(a) => {
            let norm: Norm = a.norm.parse()?;
            let pa = parse_profile(&fs::read_to_string(&a.a)?)?;
            let pb = parse_profile(&fs::read_to_string(&a.b)?)?;
            println!("{:.12e}", compare_profiles(&pa, &pb, norm)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}
