use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lel_cli::{CliError, Command, Lab, Overrides, RunConfig, ScanWindow, SolveInit};

#[derive(Parser)]
#[command(name = "lel", version, about = "Radial Lane-Emden system laboratory")]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Global {
    /// Flat key = value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true, value_name = "K")]
    jobs: Option<usize>,

    #[arg(long, global = true)]
    tol_curve: Option<f64>,

    /// Relative local error tolerance of the radial integrator.
    #[arg(long, global = true)]
    tol_rel: Option<f64>,

    /// Absolute local error tolerance of the radial integrator.
    #[arg(long, global = true)]
    tol_abs: Option<f64>,

    /// Stopping tolerance of the eigensolver.
    #[arg(long, global = true)]
    tol_eig: Option<f64>,

    /// Output nodes of a radial profile.
    #[arg(long, global = true)]
    grid_nodes: Option<usize>,

    /// Ignore and do not fill the result cache.
    #[arg(long, global = true)]
    no_cache: bool,
}

#[derive(Subcommand)]
enum Sub {
    /// Region verdict and scaling data of one triple.
    Classify { p: f64, q: f64, n: u32 },
    /// Trace the critical curve q(p) and the Sobolev hyperbola.
    Curve {
        n: u32,
        #[arg(long, default_value_t = 1.0)]
        p_min: f64,
        #[arg(long, default_value_t = 50.0)]
        p_max: f64,
        #[arg(long, default_value_t = 256)]
        points: usize,
    },
    /// Classify every cell of a (p, q) window.
    Scan {
        n: u32,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [1.0, 12.0])]
        p_window: Vec<f64>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [1.0, 12.0])]
        q_window: Vec<f64>,
        /// Cells per axis.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Integrate a regular radial solution, or shoot for an entire one when --v0 is omitted.
    Solve {
        p: f64,
        q: f64,
        n: u32,
        #[arg(long, default_value_t = 1.0)]
        u0: f64,
        #[arg(long)]
        v0: Option<f64>,
        /// Shooting bracket for v0.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.01, 100.0])]
        bracket: Vec<f64>,
    },
    /// Compare a stored profile (.json or .csv from `solve`) with the singular solution.
    Compare { profile: PathBuf },
    /// Annulus ladder of principal eigenvalues and the stability verdict.
    Eig {
        p: f64,
        q: f64,
        n: u32,
        /// Number of ladder levels.
        #[arg(long)]
        ladder: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let base = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let (resolution, ladder_levels) = match &cli.command {
        Sub::Scan { resolution, .. } => (*resolution, None),
        Sub::Eig { ladder, .. } => (None, *ladder),
        _ => (None, None),
    };
    let config = base.with_overrides(&Overrides {
        tol_curve: g.tol_curve,
        tol_rel: g.tol_rel,
        tol_abs: g.tol_abs,
        tol_eig: g.tol_eig,
        grid_nodes: g.grid_nodes,
        resolution,
        ladder_levels,
        out_dir: g.out,
        no_cache: g.no_cache,
        jobs: g.jobs,
    })?;
    let command = match cli.command {
        Sub::Classify { p, q, n } => Command::Classify { p, q, n },
        Sub::Curve { n, p_min, p_max, points } => Command::Curve {
            n,
            p_range: (p_min, p_max),
            points,
        },
        Sub::Scan { n, p_window, q_window, .. } => Command::Scan {
            n,
            window: ScanWindow {
                p: (p_window[0], p_window[1]),
                q: (q_window[0], q_window[1]),
            },
        },
        Sub::Solve { p, q, n, u0, v0, bracket } => Command::Solve {
            p,
            q,
            n,
            init: match v0 {
                Some(v0) => SolveInit::Fixed { u0, v0 },
                None => SolveInit::Shoot {
                    u0,
                    bracket: (bracket[0], bracket[1]),
                },
            },
        },
        Sub::Compare { profile } => Command::Compare { profile },
        Sub::Eig { p, q, n, .. } => Command::Eig { p, q, n },
    };
    let lab = Lab::new(config);
    let outcome = lab.run(&command)?;
    print!("{}", outcome.artifact.stdout);
    for path in &outcome.written {
        eprintln!("wrote {}", path.display());
    }
    if outcome.cache_hit {
        eprintln!("cache hit in {}", lab.cache.root().display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
