//! Command-line front end for the full pipeline: data generation, the two
//! training stages, evaluation, the cross-lingual protocol matrix, and the
//! gradient-check harness.
//!
//! Exit codes: 0 success, 2 config/input validation, 3 numeric failure,
//! 4 undefined metric, 5 gradient-check failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use xmodal::config::{ConfigError, RunConfig};
use xmodal::data::{generate_corpus, language_counts, load_manifest, write_manifest, Split};
use xmodal::evalkit::{
    metrics_report, score_dataset, train_cell, Ablation, MetricError, ProtocolMode,
};
use xmodal::gradcheck::{run_gradcheck, GRADCHECK_TOL};
use xmodal::report::{rows_from_report, write_csv, write_json, ReportRow};
use xmodal::trainer::{
    finetune, load_checkpoint, pretrain, save_checkpoint, CheckpointError, ModelBundle,
    TrainError,
};

#[derive(Parser)]
#[command(
    name = "xmodal",
    about = "Two-stage contrastive audio/text alignment pipeline",
    long_about = "Generates synthetic paired-feature corpora, pre-trains cross-modal \
encoders contrastively, fine-tunes a classifier with a cross-language triplet \
objective, and evaluates in-set and zero-shot cross-set cells.\n\n\
All commands read one JSON config with sections {data, train, contrastive, \
downstream, protocol}; every section is optional, unknown keys are rejected, \
and the top-level \"schema\": 1 field is required. Defaults: data {latent_dim 8, \
d_a 24, d_t 20, six languages, 400+400 records each, class_separation 3.0, \
language_perturbation 0.15, observation_noise 0.3, train_fraction 0.5, seed 42}, \
train {learning_rate 0.0001, batch_size 32, epochs 5, seed 42}, contrastive \
{temperature 0.1}, downstream {alpha 0.5, margin 0.5, triplet_mode \
paper_faithful, renormalize_fused true}, protocol {Set-A = mr,bn,ta vs Set-B = \
en,hi,te, all three ablations, eval_full_target false}."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AblationArg {
    Multimodal,
    TextOnly,
    AudioOnly,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Ablation {
        match a {
            AblationArg::Multimodal => Ablation::Multimodal,
            AblationArg::TextOnly => Ablation::TextOnly,
            AblationArg::AudioOnly => Ablation::AudioOnly,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus manifest and print per-language counts.
    GenData {
        /// Run config (JSON); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output manifest path (JSON-lines).
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 1: contrastive pre-training of both encoders.
    Pretrain {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Input manifest.
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 2: classifier + triplet fine-tuning from a checkpoint.
    Finetune {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint to continue from (output of pretrain).
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a manifest's test split and write JSON + CSV reports.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Modality ablation applied at scoring time.
        #[arg(long, value_enum, default_value_t = AblationArg::Multimodal)]
        ablation: AblationArg,
        /// Report base path; writes <out>.json and <out>.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run all four protocol cells × configured ablations into one matrix.
    Protocol {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Output directory for protocol.csv and protocol.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify every analytic gradient against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 1234)]
        seed: u64,
        /// Negative-control hook: deliberately corrupt one gradient.
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Numeric(String),
    UndefinedMetric(String),
    GradCheck,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::UndefinedMetric(_) => 4,
            CliError::GradCheck => 5,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Validation(m) | CliError::Numeric(m) | CliError::UndefinedMetric(m) => {
                m.clone()
            }
            CliError::GradCheck => "gradient check failed".to_string(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<xmodal::data::DataError> for CliError {
    fn from(e: xmodal::data::DataError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Empty | MetricError::SingleClass(_) => {
                CliError::UndefinedMetric(format!("{e} (EER/AUC need both classes)"))
            }
            MetricError::Train(t) => t.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn cmd_gen_data(config: &Option<PathBuf>, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let records = generate_corpus(&cfg.data)?;
    write_manifest(&records, out)?;
    println!("{:<10} {:>8} {:>10} {:>8}", "Language", "Hate", "Non-Hate", "Total");
    let counts = language_counts(&records);
    let mut total = 0;
    for (language, (hate, nonhate)) in &counts {
        println!("{language:<10} {hate:>8} {nonhate:>10} {:>8}", hate + nonhate);
        total += hate + nonhate;
    }
    println!("Total: {total}");
    println!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn cmd_pretrain(config: &Option<PathBuf>, data: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let records: Vec<_> = load_manifest(data)?
        .into_iter()
        .filter(|r| r.split == Split::Train)
        .collect();
    if records.is_empty() {
        return Err(CliError::Validation("manifest has no train records".into()));
    }
    let d_a = records[0].audio_features.len();
    let d_t = records[0].text_features.len();
    let mut bundle =
        ModelBundle::init(d_a, d_t, cfg.train.seed).map_err(CliError::from)?;
    let trace = pretrain(&mut bundle, &records, &cfg.train, &cfg.contrastive)?;
    for (epoch, loss) in trace.iter().enumerate() {
        println!("epoch {epoch}: contrastive loss {loss:.6}");
    }
    save_checkpoint(&bundle, out)?;
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn cmd_finetune(
    config: &Option<PathBuf>,
    data: &Path,
    init: &Path,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let records: Vec<_> = load_manifest(data)?
        .into_iter()
        .filter(|r| r.split == Split::Train)
        .collect();
    if records.is_empty() {
        return Err(CliError::Validation("manifest has no train records".into()));
    }
    let mut bundle = load_checkpoint(init)?;
    let d_a = records[0].audio_features.len();
    let d_t = records[0].text_features.len();
    if bundle.audio_cfg.input_dim != d_a || bundle.text_cfg.input_dim != d_t {
        return Err(CliError::Validation(format!(
            "checkpoint dims ({}, {}) do not match manifest features ({d_a}, {d_t})",
            bundle.audio_cfg.input_dim, bundle.text_cfg.input_dim
        )));
    }
    println!(
        "finetune: alpha = {}, margin = {}, init fingerprint = {:016x}",
        cfg.downstream.alpha,
        cfg.downstream.margin,
        bundle.fingerprint()
    );
    let trace = finetune(&mut bundle, &records, &cfg.train, &cfg.downstream)?;
    for epoch in 0..trace.total.len() {
        println!(
            "epoch {epoch}: total {:.6}  bce {:.6}  triplet {:.6}",
            trace.total[epoch], trace.bce[epoch], trace.triplet[epoch]
        );
    }
    save_checkpoint(&bundle, out)?;
    println!("checkpoint written to {}", out.display());
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    data: &Path,
    ablation: Ablation,
    out: &Path,
) -> Result<(), CliError> {
    let bundle = load_checkpoint(checkpoint)?;
    let records: Vec<_> = load_manifest(data)?
        .into_iter()
        .filter(|r| r.split == Split::Test)
        .collect();
    if records.is_empty() {
        return Err(CliError::Validation("manifest has no test records".into()));
    }
    let scored = score_dataset(&bundle, &records, ablation).map_err(CliError::from)?;
    let report = metrics_report(&scored)?;
    println!(
        "input = {}: acc {:.4}  eer {:.4}  f1 {:.4}  auc {:.4}",
        ablation.input_label(),
        report.acc,
        report.eer,
        report.f1,
        report.auc
    );
    let rows = rows_from_report(ablation.input_label(), "manifest", "manifest-test", &report);
    write_json(&rows, &out.with_extension("json"))?;
    write_csv(&rows, &out.with_extension("csv"))?;
    println!("reports written to {}.{{json,csv}}", out.display());
    Ok(())
}

fn cmd_protocol(config: &Option<PathBuf>, data: &Path, out_dir: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let corpus = load_manifest(data)?;
    std::fs::create_dir_all(out_dir)?;
    let mut rows: Vec<ReportRow> = Vec::new();
    for mode in ProtocolMode::ALL {
        let (bundle, eval_records) = train_cell(
            &corpus,
            mode,
            &cfg.protocol.sets,
            cfg.protocol.eval_full_target,
            &cfg.train,
            &cfg.contrastive,
            &cfg.downstream,
        )?;
        for &ablation in &cfg.protocol.ablations {
            let scored = score_dataset(&bundle, &eval_records, ablation).map_err(CliError::from)?;
            let report = metrics_report(&scored)?;
            let train_set = ProtocolMode::set_label(mode.train_set());
            let eval_set = ProtocolMode::set_label(mode.eval_set());
            println!(
                "{:<13} {:<13} {:<13} acc {:.4}  eer {:.4}",
                mode.name(),
                ablation.input_label(),
                format!("{train_set}->{eval_set}"),
                report.acc,
                report.eer
            );
            rows.extend(rows_from_report(ablation.input_label(), train_set, eval_set, &report));
        }
    }
    write_csv(&rows, &out_dir.join("protocol.csv"))?;
    write_json(&rows, &out_dir.join("protocol.json"))?;
    println!("protocol matrix written to {}", out_dir.display());
    Ok(())
}

fn cmd_gradcheck(seed: u64, corrupt: bool) -> Result<(), CliError> {
    let outcomes = run_gradcheck(seed, 10, corrupt);
    println!("{:<32} {:>14} {:>6}", "component", "max rel err", "pass");
    let mut all_pass = true;
    for o in &outcomes {
        println!(
            "{:<32} {:>14.3e} {:>6}",
            o.component,
            o.max_rel_err,
            if o.passed() { "ok" } else { "FAIL" }
        );
        all_pass &= o.passed();
    }
    println!("tolerance: {GRADCHECK_TOL:.0e}");
    if all_pass {
        Ok(())
    } else {
        Err(CliError::GradCheck)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenData { config, out } => cmd_gen_data(config, out),
        Command::Pretrain { config, data, out } => cmd_pretrain(config, data, out),
        Command::Finetune {
            config,
            data,
            init,
            out,
        } => cmd_finetune(config, data, init, out),
        Command::Eval {
            checkpoint,
            data,
            ablation,
            out,
        } => cmd_eval(checkpoint, data, (*ablation).into(), out),
        Command::Protocol { config, data, out } => cmd_protocol(config, data, out),
        Command::Gradcheck { seed, corrupt } => cmd_gradcheck(*seed, *corrupt),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
