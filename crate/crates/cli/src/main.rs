//! `ltsgat`: synthesise or load EEG recordings, extract features, train,
//! cross-validate and inspect attention.

mod commands;
mod error;

use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use log::LevelFilter;
use serde_json::json;

use commands::{CvArgs, EvalArgs, ExportArgs, ExtractArgs, GradcheckArgs, SynthArgs, TrainArgs};
use error::{CliError, EXIT_USAGE};
use ltsgat::eval::Paradigm;

#[derive(Parser, Debug)]
#[command(name = "ltsgat", version, about = "EEG emotion recognition with temporal, spatial and graph attention")]
struct Cli {
    /// Log level for the JSON-lines records on standard error.
    #[arg(long, global = true, default_value = "info")]
    log_level: LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labelled synthetic dataset.
    Synth(SynthArgs),
    /// Compute differential-entropy features from a raw dataset.
    Extract(ExtractArgs),
    /// Train one model on a feature directory and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on labelled features.
    Eval(EvalArgs),
    /// Within-participant k-fold cross-validation.
    CvDependent(CvArgs),
    /// Leave-one-participant-out cross-validation.
    CvIndependent(CvArgs),
    /// Write temporal and region importance tables.
    ExportAttention(ExportArgs),
    /// Finite-difference check of every primitive and of the full loss.
    Gradcheck(GradcheckArgs),
}

fn init_logger(level: LevelFilter) {
    env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, record| {
            let line = json!({
                "timestamp": buf.timestamp_millis().to_string(),
                "level": record.level().as_str(),
                "module": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .init();
}

fn run(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => commands::synth(a),
        Command::Extract(a) => commands::extract(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::CvDependent(a) => commands::cross_validate(a, Paradigm::Dependent),
        Command::CvIndependent(a) => commands::cross_validate(a, Paradigm::Independent),
        Command::ExportAttention(a) => commands::export(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    init_logger(cli.log_level);
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
