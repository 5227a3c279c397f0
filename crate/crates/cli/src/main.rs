//! `facepipe` command-line front end.
//!
//! Every subcommand prints one JSON object on stdout when it succeeds. On
//! failure a single JSON line `{"error": <kind>, "message": <text>}` goes to
//! stderr and the exit code is 1.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use facepipe::pipeline::{self, ExperimentConfig};
use facepipe::synthetic::{write_face_dataset, FaceSetParams};
use facepipe::EvalReport;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "facepipe", version, about = "Multiview face verification pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write geometrically and photometrically normalized images as PGM.
    Preprocess(Common),
    /// Write the Gabor feature dump for the selected images.
    Extract(Common),
    /// Train on the training partition and save the model bundle.
    Train(Common),
    /// Score the test partition with a saved model and write reports.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Model bundle to load instead of the one in the run directory.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// All stages in one go.
    Run(Common),
    /// Print the default configuration.
    Defaults,
    /// Write a small synthetic image dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        subjects: usize,
        #[arg(long, default_value_t = 6)]
        per_view: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Skip eye-based registration and only resize.
    #[arg(long)]
    no_register: bool,
    /// Use frequencies π/2^i instead of the cycles-per-pixel default.
    #[arg(long)]
    literal_frequencies: bool,
    /// Override a configuration key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> facepipe::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| facepipe::Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            config.set(k.trim(), v.trim())?;
        }
        if self.no_register {
            config.register = false;
        }
        if self.literal_frequencies {
            config.gabor.literal_frequencies = true;
        }
        config.validate()?;
        Ok(config)
    }
}

fn report_json(report: &EvalReport) -> Value {
    json!({
        "method": report.method,
        "protocol": report.protocol.to_string(),
        "eer": report.eer,
        "far_at_eer": report.far_at_eer,
        "frr_at_eer": report.frr_at_eer,
        "recognition_rate": report.recognition_rate,
        "eer_threshold": report.eer_threshold,
    })
}

fn execute(command: Command) -> facepipe::Result<Value> {
    Ok(match command {
        Command::Preprocess(c) => {
            let config = c.load()?;
            json!({ "command": "preprocess", "output": pipeline::preprocess_stage(&config)? })
        }
        Command::Extract(c) => {
            let config = c.load()?;
            json!({ "command": "extract", "output": pipeline::extract_stage(&config)? })
        }
        Command::Train(c) => {
            let config = c.load()?;
            json!({ "command": "train", "model": pipeline::train_stage(&config)? })
        }
        Command::Evaluate { common, model } => {
            let config = common.load()?;
            let report = pipeline::evaluate_stage(&config, model.as_deref())?;
            json!({ "command": "evaluate", "run_dir": config.run_dir(), "report": report_json(&report) })
        }
        Command::Run(c) => {
            let config = c.load()?;
            let out = pipeline::run_experiment(&config)?;
            json!({ "command": "run", "run_dir": out.run_dir, "report": report_json(&out.report) })
        }
        Command::Defaults => {
            print!("{}", ExperimentConfig::default().canonical());
            return Ok(Value::Null);
        }
        Command::Synth {
            out,
            subjects,
            per_view,
            seed,
        } => {
            let params = FaceSetParams {
                subjects,
                per_view,
                ..FaceSetParams::default()
            };
            write_face_dataset(&out, &params, seed)?;
            json!({ "command": "synth", "output": out })
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
