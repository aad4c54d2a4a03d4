mod commands;
mod config;
mod error;
mod formats;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "lrtrack", version, about = "Variational registration and low-rank motion tracking")]
struct Cli {
    /// Worker threads for the solvers; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic phantom described by a config file.
    Synth {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Register a source image onto a target image.
    Register {
        source: PathBuf,
        target: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Track every frame of a directory onto a target image.
    Track {
        frames: PathBuf,
        target: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Low-rank plus sparse decomposition of a matrix file or frame directory.
    Rpca {
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Print a JSON measurement to stdout.
    Eval {
        #[command(subcommand)]
        metric: Metric,
    },
    /// Render a flow field file as a PNG.
    Render {
        #[command(subcommand)]
        style: Style,
    },
}

#[derive(Debug, Subcommand)]
pub enum Metric {
    /// Per-label Dice overlap of two label images.
    Dice {
        a: PathBuf,
        b: PathBuf,
        /// Binarize both inputs at this intensity instead of reading raw labels.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Numerical rank of a matrix file or frame directory.
    Rank {
        input: PathBuf,
        #[arg(long, default_value_t = lrtrack::eval::DEFAULT_RANK_TOL)]
        rel_tol: f64,
    },
    /// Endpoint error of a flow field against a reference.
    Epe {
        flow: PathBuf,
        truth: PathBuf,
        #[arg(long, default_value_t = 0)]
        margin: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum Style {
    Hsv {
        field: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    Grid {
        field: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 8)]
        spacing: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot start {} threads: {e}", cli.threads)))?;
    }
    match cli.command {
        Command::Synth { config, output } => commands::synth(&config, &output),
        Command::Register { source, target, config, output } => {
            commands::register(&source, &target, config.as_deref(), &output)
        }
        Command::Track { frames, target, config, output } => {
            commands::track(&frames, &target, config.as_deref(), &output)
        }
        Command::Rpca { input, config, output } => commands::rpca(&input, config.as_deref(), &output),
        Command::Eval { metric } => commands::eval(metric),
        Command::Render { style } => commands::render(style),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lrtrack: error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
