use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phi4::{run, run_simulation, ExperimentSpec, HarnessError, Kind, Report, SimulationSpec};

#[derive(Parser)]
#[command(name = "phi4", version, about = "Lattice Phi^4 experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Write DOT files of the diagrams involved here.
    #[arg(long, global = true)]
    dot_dir: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Zero-dimensional integral against its divergent series.
    Toy,
    /// Symbolic expansion of a correlation function.
    Expand,
    /// Identity battery on the quadrature oracle.
    Oracle,
    /// Remainder scaling of the truncated two-point expansion.
    Asymptoticity,
    /// Short-distance behaviour of S^2 - C.
    TwoPoint,
    /// Connected four-point function against the star diagram.
    FourPoint,
    /// A single Langevin chain with a resumable checkpoint.
    Simulate {
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
}

impl Command {
    fn kind(self) -> Option<Kind> {
        Some(match self {
            Command::Toy => Kind::Toy,
            Command::Expand => Kind::Expand,
            Command::Oracle => Kind::Oracle,
            Command::Asymptoticity => Kind::Asymptoticity,
            Command::TwoPoint => Kind::TwoPoint,
            Command::FourPoint => Kind::FourPoint,
            Command::Simulate { .. } => return None,
        })
    }
}

fn execute(cli: &Cli) -> Result<Report, HarnessError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    let (report, out) = match cli.command.kind() {
        Some(kind) => {
            let mut spec = match &cli.config {
                Some(p) => ExperimentSpec::from_file(p, kind)?,
                None => ExperimentSpec::defaults(kind),
            };
            if let Some(s) = cli.seed {
                spec.sim.seed = s;
            }
            let out = cli.out.clone().unwrap_or_else(|| spec.output_dir.clone());
            (run(&spec)?, out)
        }
        None => {
            let Command::Simulate { resume } = cli.command else { unreachable!() };
            let mut spec = match &cli.config {
                Some(p) => SimulationSpec::from_file(p)?,
                None => SimulationSpec::from_toml_str("")?,
            };
            if let Some(s) = cli.seed {
                spec.sim.seed = s;
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results/simulate"));
            (run_simulation(&spec, &out, resume)?, out)
        }
    };
    report.write(&out, cli.dot_dir.as_deref())?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(report) => {
            print!("{}", report.summary());
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
