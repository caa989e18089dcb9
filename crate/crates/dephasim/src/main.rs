use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dephasim::cli::{recipes, resolve_out_root, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "dephasim",
    about = "Pure-dephasing qubit dynamics under sub-Ohmic and Ohmic baths",
    version
)]
struct Args {
    /// Output root directory (overrides config and environment).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for the data-parallel sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Tolerance overrides as key=value (repeatable): quad_abs,
    /// quad_rel, expansion_tol, expansion_k_max.
    #[arg(long = "tol-override", global = true, value_name = "KEY=VALUE")]
    tol_override: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one experiment described by a TOML config.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
    },
    /// Execute a named multi-run recipe: table1, fig1, fig2, fig3d.
    Recipe { name: String },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn init_threads(threads: usize) -> dephasim::Result<()> {
    #[cfg(feature = "parallel")]
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| dephasim::Error::Config(format!("thread pool: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    if threads > 1 {
        eprintln!("note: built without the `parallel` feature; --threads ignored");
    }
    Ok(())
}

fn run(args: Args) -> dephasim::Result<()> {
    init_threads(args.threads)?;
    match args.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            for kv in &args.tol_override {
                cfg.tolerances.apply_override(kv)?;
            }
            let root = resolve_out_root(args.out.as_deref(), cfg.output_dir.as_deref());
            let stem = config
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "run".into());
            let dir = root.join(stem);
            run_experiment(&cfg, &dir)?;
            println!("wrote {}", dir.display());
        }
        Command::Recipe { name } => {
            let root = resolve_out_root(args.out.as_deref(), None);
            let dir = root.join(&name);
            recipes::run_recipe(&name, &dir)?;
            println!("wrote {}", dir.display());
        }
        Command::Validate { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            for kv in &args.tol_override {
                cfg.tolerances.apply_override(kv)?;
            }
            cfg.validate()?;
            println!("ok: {}", config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
