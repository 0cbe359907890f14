//! `patchbag`: synthesise bags, preprocess images, train, evaluate and export
//! attention rankings.
//!
//! Exit codes: 0 success, 2 configuration, 3 I/O, 4 numeric or data
//! integrity failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use patchbag::model::Variant;
use patchbag::ErrorKind;

use crate::config::Part;

#[derive(Debug, Parser)]
#[command(name = "patchbag", version, about = "Multi-tag patch-bag classification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic bag directory.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train a model on a bag directory.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Gated or dot-product heads in front of the tag attention; 0 disables
        /// the patch transformation.
        #[arg(long)]
        heads: Option<usize>,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
    },
    /// Write a metrics report and confusion-matrix plots.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        split: Option<Part>,
    },
    /// Write per-bag patch rankings by tag attention.
    ExportAttention {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        split: Option<Part>,
        /// Skip the SVG bar charts.
        #[arg(long)]
        no_svg: bool,
    },
    /// Turn a directory of PPM/PGM slide rasters into a bag directory.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: patchbag::Error| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PATCHBAG_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { common, seed, out } => commands::synth(&common, seed, out),
        Command::Train {
            common,
            data,
            out,
            seed,
            heads,
            variant,
        } => commands::train(&common, data, out, seed, heads, variant),
        Command::Eval {
            common,
            checkpoint,
            data,
            out,
            split,
        } => commands::eval(&common, checkpoint, data, out, split),
        Command::ExportAttention {
            common,
            checkpoint,
            data,
            out,
            split,
            no_svg,
        } => commands::export(&common, checkpoint, data, out, split, no_svg),
        Command::Preprocess {
            common,
            data,
            out,
            seed,
        } => commands::preprocess(&common, data, out, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Io => 3,
                ErrorKind::Data => 4,
            })
        }
    }
}
