//! `ic`: command-line front end for intrinsic-domain compositing.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ic", version, about = "Intrinsic-domain image compositing")]
struct Cli {
    /// Display gamma used to decode PNG inputs and encode PNG outputs.
    #[arg(long, global = true)]
    gamma: Option<f64>,

    /// Longest side after loading; inputs are only ever shrunk.
    #[arg(long, global = true)]
    resolution: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the background light of a scene and print the fit report as JSON.
    FitLight {
        /// Scene manifest (JSON listing the layer files).
        manifest: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Composite the foreground into the background in the intrinsic domain.
    Harmonize {
        /// Scene manifest (JSON listing the layer files).
        manifest: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Light override: inline JSON or a JSON file, as {lx,ly,lz,c} or
        /// {azimuth,elevation,intensity,ambient}.
        #[arg(long)]
        light: Option<String>,
        /// Albedo edits: inline JSON or a JSON file, or `stats` to fit edits that match the
        /// background's colour statistics.
        #[arg(long)]
        edits: Option<String>,
        /// identity, smooth, or external:<command>.
        #[arg(long, default_value = "identity", value_parser = commands::parse_refiner)]
        refiner: commands::RefinerChoice,
        /// Write only composite.png and light.json.
        #[arg(long)]
        no_intermediates: bool,
    },
    /// Build self-supervised re-shading pairs from a corpus directory.
    GenPairs {
        /// Directory with one subdirectory per corpus entry.
        corpus: PathBuf,
        /// Output directory; one subdirectory per entry.
        #[arg(long)]
        out: PathBuf,
        /// Base seed mixed with each entry id.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rank methods from a CSV of forced-choice responses.
    BtRank {
        /// CSV with columns item_id, method_a, method_b, choice.
        csv: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Add half a win to every ordered pair.
        #[arg(long)]
        smoothing: bool,
    },
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Unconstrained least squares instead of the constrained fit.
    #[arg(long)]
    lstsq: bool,
    /// Constrain every light component to be non-negative.
    #[arg(long)]
    octant_constraint: bool,
    /// Accept a degenerate fit instead of failing.
    #[arg(long)]
    allow_degenerate: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let globals = commands::Globals {
        gamma: cli.gamma,
        resolution: cli.resolution,
    };
    match cli.command {
        Command::FitLight { manifest, fit, out } => {
            commands::fit_light(&globals, &manifest, &fit.into(), out.as_deref())
        }
        Command::Harmonize {
            manifest,
            fit,
            out,
            light,
            edits,
            refiner,
            no_intermediates,
        } => commands::harmonize(
            &globals,
            &commands::HarmonizeArgs {
                manifest,
                fit: fit.into(),
                out,
                light,
                edits,
                refiner,
                intermediates: !no_intermediates,
            },
        ),
        Command::GenPairs { corpus, out, seed } => commands::gen_pairs(&globals, &corpus, &out, seed),
        Command::BtRank { csv, json, smoothing } => commands::bt_rank(&csv, json, smoothing),
    }
}

impl From<FitArgs> for commands::FitFlags {
    fn from(a: FitArgs) -> Self {
        Self {
            lstsq: a.lstsq,
            octant: a.octant_constraint,
            allow_degenerate: a.allow_degenerate,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IC_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
