use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vorotc_cli::{
    cmd_cusp_cut, cmd_grid, cmd_lcu, cmd_qcpe, cmd_scan_convergence, cmd_scan_dissociation, cmd_solve, cmd_voronoi_stats,
    CliError, CommonArgs, RunConfig, EXIT_CONFIG,
};

/// Real-space electronic structure on Voronoi finite-volume grids.
#[derive(Parser)]
#[command(name = "vorotc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: the config's "out", else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random choice (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Ground-state energy of the configured molecule.
    Solve,
    /// Total and binding energies of a diatomic over a list of distances.
    ScanDissociation,
    /// Energy error over a list of radial grid sizes.
    ScanConvergence,
    /// Pauli LCU coefficients and one-norm.
    Lcu,
    /// Chebyshev phase estimation on a small matrix.
    Qcpe,
    /// Electron-electron cusp cuts of a two-electron atom.
    CuspCut,
    /// Write the molecular grid.
    Grid,
    /// Voronoi diagram statistics.
    VoronoiStats,
}

fn run(cli: &Cli) -> Result<serde_json::Value, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let args = CommonArgs::resolve(&cfg, cli.out.clone(), cli.seed);
    match cli.command {
        Command::Solve => cmd_solve(&cfg, &args),
        Command::ScanDissociation => cmd_scan_dissociation(&cfg, &args),
        Command::ScanConvergence => cmd_scan_convergence(&cfg, &args),
        Command::Lcu => cmd_lcu(&cfg, &args),
        Command::Qcpe => cmd_qcpe(&cfg, &args),
        Command::CuspCut => cmd_cusp_cut(&cfg, &args),
        Command::Grid => cmd_grid(&cfg, &args),
        Command::VoronoiStats => cmd_voronoi_stats(&cfg, &args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Partial { report, .. } = &e {
                println!("{}", serde_json::to_string_pretty(report).expect("report serialises"));
            }
            eprintln!("vorotc: {e}");
            let code = e.exit_code();
            debug_assert!(code == EXIT_CONFIG || code == vorotc_cli::EXIT_NUMERICAL);
            ExitCode::from(code as u8)
        }
    }
}
