//! `pairvox`: dataset ingestion, training, generation, evaluation and export.

mod ingest;
mod inspect;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "pairvox", version, about = "Paired conditional 3D voxel GANs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert voxel files into the dataset layout used for training.
    Ingest(ingest::IngestArgs),
    /// Train a model; writes a run directory with a manifest, log and checkpoints.
    Train(run::TrainArgs),
    /// Generate grids from a checkpoint.
    Generate(inspect::GenerateArgs),
    /// Score pair consistency (AAD / AVAR) of one or more checkpoints.
    Evaluate(inspect::EvaluateArgs),
    /// Convert a grid to an OBJ mesh or binvox file.
    Export(inspect::ExportArgs),
}

/// Output root shared by commands that create run directories.
#[derive(Args, Debug, Clone)]
pub struct OutRoot {
    /// Parent directory for new run directories.
    #[arg(long, env = "PAIRVOX_OUT", default_value = "runs")]
    pub out_root: PathBuf,
}

/// Process exit status by failure class.
fn exit_code(err: &anyhow::Error) -> u8 {
    use pairvox::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Contract(_) | E::Config { .. } => 1,
                E::Numeric { .. } => 2,
                E::Format { .. } | E::Version { .. } | E::Io { .. } => 3,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if cause.downcast_ref::<run::ValidationError>().is_some() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest::run(&a),
        Command::Train(a) => run::run(&a),
        Command::Generate(a) => inspect::generate(&a),
        Command::Evaluate(a) => inspect::evaluate(&a),
        Command::Export(a) => inspect::export(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
