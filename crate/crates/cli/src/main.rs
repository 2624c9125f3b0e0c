//! `ha2`: training, evaluation, replay and live play for the kitchen gridworld.

mod commands;
mod protocol;
mod server;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "ha2", version, about = "Cooperative kitchen agents: train, evaluate, replay, serve")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TrainKind {
    /// A method recipe (`variant = ...`).
    Variant,
    /// The self-play population used by FCP partners.
    Population,
    /// Two behavior-cloned models from an imported dataset.
    Bc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Render {
    /// An ASCII board per tick.
    Text,
    /// Final score and state hash only.
    None,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train from a TOML or JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "variant")]
        kind: TrainKind,
    },
    /// Score methods against held-out teammates and write the report CSV.
    Eval {
        /// `NAME=SPEC[,SPEC...]`, one entry per seed; SPEC is a bundle dir, a
        /// `.ckpt` file, `random` or `scripted`.
        #[arg(long = "bundle", required = true)]
        bundles: Vec<String>,
        /// `NAME=SPEC` or `SPEC`; `{layout}` in SPEC is replaced per layout.
        #[arg(long, num_args = 1.., required = true)]
        teammates: Vec<String>,
        #[arg(long, num_args = 1..)]
        layouts: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        horizon: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Act greedily instead of sampling.
        #[arg(long)]
        greedy: bool,
    },
    /// Re-simulate a replay log.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum, default_value = "none")]
        render: Render,
    },
    /// Swap two tiles of a bundled layout and print the result.
    Perturb {
        #[arg(long)]
        layout: String,
        /// Two cells as `row,col`.
        #[arg(long, num_args = 2, value_parser = commands::parse_cell, required = true)]
        swap: Vec<(i32, i32)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve live rounds over a websocket.
    Serve(server::ServeArgs),
    /// Convert raw human gameplay rows into a trajectory dataset.
    BcImport {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    let result = match cli.command {
        Command::Train { config, kind } => commands::train(&config, kind),
        Command::Eval {
            bundles,
            teammates,
            layouts,
            out,
            trials,
            horizon,
            seed,
            greedy,
        } => commands::eval(&commands::EvalArgs {
            bundles,
            teammates,
            layouts,
            out,
            trials,
            horizon,
            seed,
            greedy,
        }),
        Command::Replay { log, render } => commands::replay(&log, render),
        Command::Perturb { layout, swap, out } => commands::perturb(&layout, swap[0], swap[1], out.as_deref()),
        Command::Serve(args) => server::run(args),
        Command::BcImport { raw, out } => commands::bc_import(&raw, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
