use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use neuroscore::harness::config::{ExperimentConfig, Regime};
use neuroscore::harness::dataset::{export_dataset, import_dataset};
use neuroscore::harness::experiment::{
    random_eeg_seed, run_experiment, shuffle_split, shuffle_train_config, test_groups, test_truth,
};
use neuroscore::harness::report::{read_report, table1_tsv, table2_tsv, write_report};
use neuroscore::nn::checkpoint::{load_params, save_params};
use neuroscore::nn::{
    predict_synthetic_neuroscore, shuffle_eeg_within_category, train_baseline, train_two_stage, TrainingSet,
};
use neuroscore::signal::neuroscore_error;
use neuroscore::synthgen::gen_dataset;
use neuroscore::{Error, Result};

/// Neurally supervised image-quality scoring on synthetic RSVP data.
#[derive(Parser)]
#[command(name = "neuroscore", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one regime on the training part of split `seed`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        regime: Regime,
        #[arg(long, default_value_t = 0)]
        seed: usize,
        #[arg(long)]
        out: PathBuf,
        /// Training settings; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the initial and post-stage-1 checkpoints here.
        #[arg(long)]
        snapshot_dir: Option<PathBuf>,
    },
    /// Score a checkpoint on the test part of split `seed`.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the full shuffle protocol and write dataset and report.
    Experiment {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the tables of a finished experiment.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Format { .. } => 3,
        Error::Diverged { .. } => 4,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let ds = gen_dataset(&cfg.gen)?;
            export_dataset(&ds, &out)?;
            println!("{}", json!({ "samples": ds.samples.len(), "out": out }));
        }
        Command::Train {
            data,
            regime,
            seed,
            out,
            config,
            snapshot_dir,
        } => {
            let cfg = load_config(config.as_deref())?;
            let ds = import_dataset(&data)?;
            let split = shuffle_split(&ds, &cfg, seed)?;
            let train = TrainingSet::from_dataset(&ds, &split.train, cfg.amplitude_mode)?;
            let tcfg = shuffle_train_config(&cfg, seed);
            let (params, summary) = match regime {
                Regime::NoEeg => {
                    if snapshot_dir.is_some() {
                        return Err(Error::Config("the no-EEG regime has no stage snapshots".into()));
                    }
                    let (p, trace) = train_baseline(&train, &tcfg)?;
                    (p, json!({ "loss": trace }))
                }
                Regime::WithEeg | Regime::RandomEeg => {
                    let set = if regime == Regime::RandomEeg {
                        shuffle_eeg_within_category(&train, random_eeg_seed(ds.config.master_seed, seed))
                    } else {
                        train
                    };
                    let outcome = train_two_stage(&set, &tcfg)?;
                    if let Some(dir) = &snapshot_dir {
                        std::fs::create_dir_all(dir)?;
                        save_params(&dir.join("init.nsk"), &outcome.initial)?;
                        save_params(&dir.join("stage1.nsk"), &outcome.after_stage1)?;
                    }
                    (outcome.params, json!({ "stage1_loss": outcome.trace.stage1, "stage2_loss": outcome.trace.stage2 }))
                }
            };
            save_params(&out, &params)?;
            println!(
                "{}",
                json!({ "regime": regime, "seed": seed, "n_train": split.train.len(), "trace": summary })
            );
        }
        Command::Evaluate {
            data,
            ckpt,
            seed,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let ds = import_dataset(&data)?;
            let params = load_params(&ckpt)?;
            let split = shuffle_split(&ds, &cfg, seed)?;
            let test = TrainingSet::from_dataset(&ds, &split.test, cfg.amplitude_mode)?;
            let k = ds.n_categories();
            let predicted = predict_synthetic_neuroscore(&params, &test_groups(&test, k))?;
            let truth = test_truth(&test, k)?;
            let error = neuroscore_error(&predicted, &truth)?;
            println!(
                "{}",
                json!({ "categories": ds.config.category_names, "predicted": predicted, "truth": truth, "error": error })
            );
        }
        Command::Experiment { config, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            let (ds, report) = run_experiment(&cfg)?;
            export_dataset(&ds, &cfg.output_dir.join("dataset"))?;
            write_report(&report, &cfg.output_dir)?;
            print!("{}", table1_tsv(&report));
        }
        Command::Report { input } => {
            let report = read_report(&input)?;
            print!("{}\n{}", table1_tsv(&report), table2_tsv(&report));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
