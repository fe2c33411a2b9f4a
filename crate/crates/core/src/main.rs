use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bemlap::cli::{
    apply_overrides, convergence_csv, load_config, run_convergence, run_dtn, run_mesh_info,
    run_ntd, run_solve, CliError, MeshSpec,
};

#[derive(Parser)]
#[command(
    name = "bemlap",
    version,
    about = "Boundary-element solver for double-sided Laplace boundary value problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Size of the assembly thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the regular quadrature order (singular/near orders follow).
    #[arg(long, global = true)]
    quad_order: Option<usize>,
    /// Override the linear-solver relative residual tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem described by a JSON config.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Apply the Dirichlet-to-Neumann map to the configured Dirichlet pair.
    Dtn {
        #[arg(long)]
        config: PathBuf,
    },
    /// Apply the Neumann-to-Dirichlet map to the configured Neumann pair.
    Ntd {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the configured preset across icosphere levels and emit a CSV
    /// error table.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_level: u32,
        #[arg(long, default_value_t = 3)]
        max_level: u32,
        /// CSV output path; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print statistics of a mesh (from a config's mesh spec or a mesh file).
    MeshInfo {
        #[arg(long, conflicts_with = "mesh")]
        config: Option<PathBuf>,
        /// Mesh file (.off or .obj).
        #[arg(long)]
        mesh: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Schema("--threads must be at least 1".into()));
        }
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Solve { config } => {
            let mut config = load_config(&config)?;
            apply_overrides(&mut config, cli.quad_order, cli.tol)?;
            let out = run_solve(&config)?;
            println!("{out:#}");
        }
        Command::Dtn { config } => {
            let mut config = load_config(&config)?;
            apply_overrides(&mut config, cli.quad_order, cli.tol)?;
            let out = run_dtn(&config)?;
            println!("{out:#}");
        }
        Command::Ntd { config } => {
            let mut config = load_config(&config)?;
            apply_overrides(&mut config, cli.quad_order, cli.tol)?;
            let out = run_ntd(&config)?;
            println!("{out:#}");
        }
        Command::Convergence {
            config,
            min_level,
            max_level,
            output,
        } => {
            let mut config = load_config(&config)?;
            apply_overrides(&mut config, cli.quad_order, cli.tol)?;
            let rows = run_convergence(&config, min_level, max_level)?;
            let csv = convergence_csv(&rows);
            match output {
                Some(path) => std::fs::write(&path, &csv).map_err(|e| CliError::Run {
                    code: "io_error",
                    message: format!("cannot write {}: {e}", path.display()),
                })?,
                None => print!("{csv}"),
            }
        }
        Command::MeshInfo { config, mesh } => {
            let spec = match (config, mesh) {
                (Some(path), None) => load_config(&path)?.mesh,
                (None, Some(path)) => MeshSpec::File { path },
                _ => {
                    return Err(CliError::Schema(
                        "mesh-info needs exactly one of --config or --mesh".into(),
                    ))
                }
            };
            let out = run_mesh_info(&spec)?;
            println!("{out:#}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Keep clap's rendering but remap its exit code: help/version are
            // success, everything else is a usage error (exit 1).
            let success = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if success {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{:#}", e.to_json());
            ExitCode::from(code as u8)
        }
    }
}
