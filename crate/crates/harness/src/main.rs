use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use seqmed_core::datagen::{batch_file_name, read_batch_csv, read_batch_dir, write_batch_csv};
use seqmed_core::{load_model, save_model, AnyModel};
use seqmed_harness::config::{ExperimentConfig, Scenario};
use seqmed_harness::experiment::{accuracy, build_kernel, new_model, trial_stream, write_atomic};
use seqmed_harness::{emit_plot, run_experiment, HarnessError, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "seqmed", version, about = "Sequential MED classifiers on streamed batches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated stream as batch CSV files plus test.csv.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// categorical or sphere
        #[arg(long)]
        scenario: Option<String>,
    },
    /// Run an experiment and write results.csv, summary.csv and timing.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the configured model on a directory of batch files.
    Fit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a saved model; only batches after its time index are used.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Decision values and labels for every row of a batch file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy on the labeled rows of a batch file.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Render summary.csv as an SVG accuracy plot.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn config_or_default(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn execute(cmd: Command) -> Result<serde_json::Value> {
    match cmd {
        Command::Simulate { config, out, seed, scenario } => {
            let mut cfg = config_or_default(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = scenario {
                cfg.scenario = match s.as_str() {
                    "categorical" => Scenario::Categorical,
                    "sphere" => Scenario::Sphere,
                    other => return Err(HarnessError::Config(format!("cannot simulate scenario {other:?}"))),
                };
            }
            if !matches!(cfg.scenario, Scenario::Categorical | Scenario::Sphere) {
                return Err(HarnessError::Config("simulate supports the categorical and sphere scenarios".into()));
            }
            std::fs::create_dir_all(&out)?;
            let stream = trial_stream(&cfg, 0, None)?;
            for b in &stream.batches {
                write_batch_csv(&out.join(batch_file_name(b.t)), b)?;
            }
            write_batch_csv(&out.join("test.csv"), &stream.test)?;
            Ok(json!({"status": "ok", "batches": stream.batches.len(), "dir": out}))
        }
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let table = run_experiment(&cfg)?;
            Ok(json!({"status": "ok", "rows": table.rows.len(), "output_dir": cfg.output_dir}))
        }
        Command::Fit { config, data, out, init } => {
            let cfg = config_or_default(&config)?;
            let batches = read_batch_dir::<f64>(&data)?;
            let mut model = match &init {
                Some(p) => load_model(p)?,
                None => new_model(&cfg, build_kernel(&cfg, &batches[0])?)?,
            };
            let mut fitted = 0;
            let mut degenerate = Vec::new();
            let start = model.t();
            for b in batches.iter().filter(|b| b.t > start) {
                if model.partial_fit(b)?.degenerate() {
                    degenerate.push(b.t);
                }
                fitted += 1;
            }
            save_model(&model, &out)?;
            Ok(json!({
                "status": "ok",
                "model": model.name(),
                "t": model.t(),
                "batches_fitted": fitted,
                "degenerate": degenerate,
                "n_support": model.n_support(),
            }))
        }
        Command::Predict { model, data, out } => {
            let m: AnyModel<f64> = load_model(&model)?;
            let batch = read_batch_csv::<f64>(&data, 0)?;
            let dv = m.decision_values(&batch.x)?;
            let labels = m.predict(&batch.x)?;
            let mut s = String::from("decision,label\n");
            for (d, l) in dv.iter().zip(&labels) {
                let _ = writeln!(s, "{d},{l}");
            }
            match out {
                Some(p) => {
                    write_atomic(&p, &s)?;
                    Ok(json!({"status": "ok", "rows": labels.len(), "out": p}))
                }
                None => {
                    print!("{s}");
                    Ok(serde_json::Value::Null)
                }
            }
        }
        Command::Eval { model, data } => {
            let m: AnyModel<f64> = load_model(&model)?;
            let batch = read_batch_csv::<f64>(&data, 0)?;
            let acc = accuracy(&m, &batch)?;
            Ok(json!({"status": "ok", "accuracy": acc, "n_labeled": batch.n_labeled()}))
        }
        Command::Plot { summary, out } => {
            emit_plot(&summary, &out)?;
            Ok(json!({"status": "ok", "out": out}))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(v) => {
            if !v.is_null() {
                println!("{v}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({"error": {"kind": e.kind(), "message": e.to_string()}}));
            ExitCode::FAILURE
        }
    }
}
