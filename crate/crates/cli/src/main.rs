mod args;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use fcn_selaug::checkpoint::{load_checkpoint, save_checkpoint};
use fcn_selaug::data::{load_ucr, preprocess, save_ucr, split_test, Dataset};
use fcn_selaug::pipeline::{
    augment_selected, parse_thresholds, run_baseline, run_selective, select_low_confidence, sweep, ExperimentData,
    ExperimentReport, Progress, Silent,
};
use fcn_selaug::report::{
    curve_csv, curve_svg, report_csv, sweep_table_csv, Metric, ReportDocument, SweepDocument, TOOL_VERSION,
};
use fcn_selaug::train::{evaluate, EpochRecord, TrainedModel};
use serde::Serialize;

use args::{AugmentArgs, Cli, Command, EvaluateArgs, Format, Part};
use config::{check_alpha, existing_file, Output, RunConfig};

/// Invalid invocation or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

struct EveryN(usize);

impl Progress for EveryN {
    fn epoch(&self, phase: &str, r: &EpochRecord) {
        if r.epoch.is_multiple_of(self.0) {
            eprintln!(
                "[{phase}] epoch {:>4}  train {:.4}  val {:.4}  acc {:.3}  lr {:.1e}",
                r.epoch, r.train_loss, r.val_loss, r.val_accuracy, r.lr
            );
        }
    }
}

fn progress_sink(every: Option<usize>) -> Box<dyn Progress> {
    match every {
        Some(n) if n > 0 => Box::new(EveryN(n)),
        _ => Box::new(Silent),
    }
}

fn timestamp(out: &Output) -> Option<String> {
    out.timestamp
        .then(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn prepare_out(out: &Output) -> Result<()> {
    std::fs::create_dir_all(&out.dir).with_context(|| format!("creating {}", out.dir.display()))
}

fn load_experiment(cfg: &RunConfig) -> Result<ExperimentData> {
    let train = load_ucr(&cfg.train).with_context(|| format!("loading {}", cfg.train.display()))?;
    let test = load_ucr(&cfg.test).with_context(|| format!("loading {}", cfg.test.display()))?;
    Ok(ExperimentData::prepare(train, test)?)
}

fn write_report(out: &Output, stem: &str, report: &ExperimentReport) -> Result<PathBuf> {
    match out.format {
        Format::Json => write_file(
            &out.dir,
            &format!("{stem}.report.json"),
            ReportDocument::new(report.clone(), timestamp(out)).to_json(),
        ),
        Format::Csv => write_file(&out.dir, &format!("{stem}.report.csv"), report_csv(report)),
    }
}

fn write_model(out: &Output, stem: &str, model: &TrainedModel) -> Result<()> {
    let path = out.dir.join(format!("{stem}.checkpoint.json"));
    save_checkpoint(model, &path).with_context(|| format!("writing {}", path.display()))?;
    write_file(&out.dir, &format!("{stem}.history.csv"), model.history_csv())?;
    Ok(())
}

fn summary(r: &ExperimentReport) -> String {
    let alpha = r.alpha_threshold.map(|a| format!(" alpha {a}")).unwrap_or_default();
    format!(
        "{:?}{alpha}: accuracy {:.4} loss {:.4} (best epoch {}, {} training samples, {} selected)",
        r.mode, r.accuracy, r.loss, r.best_epoch, r.train_size_final, r.selected_count
    )
    .to_lowercase()
}

fn cmd_baseline(args: &args::ExperimentArgs) -> Result<()> {
    let cfg = RunConfig::resolve(args, false)?;
    let data = load_experiment(&cfg)?;
    prepare_out(&cfg.output)?;
    let outcome = run_baseline(&cfg.experiment, &data, progress_sink(cfg.progress).as_ref())?;
    write_model(&cfg.output, "baseline", &outcome.model)?;
    write_report(&cfg.output, "baseline", &outcome.report)?;
    println!("{}", summary(&outcome.report));
    Ok(())
}

fn cmd_selective(args: &args::ExperimentArgs, alpha: Option<f64>) -> Result<()> {
    let cfg = RunConfig::resolve(args, false)?;
    let alpha = alpha
        .or(cfg.alpha)
        .ok_or_else(|| UsageError("--alpha is required".into()))?;
    check_alpha(alpha)?;
    let data = load_experiment(&cfg)?;
    prepare_out(&cfg.output)?;
    let o = run_selective(&cfg.experiment, &data, alpha, progress_sink(cfg.progress).as_ref())?;
    write_model(&cfg.output, "initial", &o.initial)?;
    write_model(&cfg.output, "selective", &o.model)?;
    save_ucr(&o.expanded_train, cfg.output.dir.join("expanded_train.tsv")).context("writing expanded training set")?;
    write_report(&cfg.output, "selective", &o.report)?;
    if o.selection.is_empty() {
        eprintln!("warning: no probe sample has a margin below {alpha}; retrained on the original set");
    }
    println!(
        "initial model: accuracy {:.4} loss {:.4}",
        o.initial_eval.accuracy, o.initial_eval.loss
    );
    println!("{}", summary(&o.report));
    Ok(())
}

fn cmd_sweep(args: &args::ExperimentArgs, alphas: Option<&str>, share_initial: bool, no_svg: bool) -> Result<()> {
    let cfg = RunConfig::resolve(args, share_initial)?;
    let spec = alphas.or(cfg.alphas.as_deref()).unwrap_or("0.1:0.8:0.1");
    let thresholds = parse_thresholds(spec).map_err(|e| UsageError(format!("--alphas: {e}")))?;
    let data = load_experiment(&cfg)?;
    prepare_out(&cfg.output)?;
    let o = sweep(
        &cfg.experiment,
        &data,
        &thresholds,
        progress_sink(cfg.progress).as_ref(),
    )?;
    let out = &cfg.output;
    let table = sweep_table_csv(&o);
    write_file(&out.dir, "table.csv", &table)?;
    write_file(&out.dir, "accuracy.csv", curve_csv(&o, Metric::Accuracy))?;
    write_file(&out.dir, "loss.csv", curve_csv(&o, Metric::Loss))?;
    if !no_svg {
        write_file(&out.dir, "accuracy.svg", curve_svg(&o, Metric::Accuracy))?;
        write_file(&out.dir, "loss.svg", curve_svg(&o, Metric::Loss))?;
    }
    if out.format == Format::Json {
        write_file(&out.dir, "sweep.json", SweepDocument::new(&o, timestamp(out)).to_json())?;
    }
    print!("{table}");
    Ok(())
}

fn load_part(path: &Path, part: Part) -> Result<Dataset> {
    let raw = load_ucr(path).with_context(|| format!("loading {}", path.display()))?;
    let (data, _) = preprocess(raw)?;
    Ok(match part {
        Part::All => data,
        Part::A => split_test(&data)?.0,
        Part::B => split_test(&data)?.1,
    })
}

fn cmd_augment(a: &AugmentArgs) -> Result<()> {
    existing_file(&a.checkpoint, "checkpoint")?;
    existing_file(&a.probe, "probe set")?;
    check_alpha(a.alpha)?;
    if !(a.fraction > 0.0 && a.fraction <= 1.0) {
        return Err(UsageError(format!("--fraction {} is outside (0, 1]", a.fraction)).into());
    }
    let out = Output::resolve(&a.output, &Default::default());
    let model = load_checkpoint(&a.checkpoint)?;
    let probe = load_part(&a.probe, a.part)?;
    let selection = select_low_confidence(&model.params, &probe, a.alpha)?;
    let augmented = augment_selected(&probe, &selection, a.fraction, a.seed)?;
    prepare_out(&out)?;
    let mut listing = String::from("index,alpha\n");
    for (i, alpha) in selection.indices.iter().zip(&selection.alphas) {
        listing.push_str(&format!("{i},{alpha}\n"));
    }
    write_file(&out.dir, "selection.csv", listing)?;
    let count = augmented.len();
    let text = if augmented.is_empty() {
        String::new()
    } else {
        Dataset::with_classes(augmented.into_iter().map(|a| a.sample).collect(), 2)?.to_ucr_text()
    };
    write_file(&out.dir, "augmented.tsv", &text)?;
    if selection.is_empty() {
        eprintln!(
            "warning: no probe sample has a margin below {}; augmented set is empty",
            a.alpha
        );
    }
    println!(
        "selected {} of {} probe samples, wrote {} augmented series",
        selection.len(),
        probe.len(),
        count
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluationDocument {
    tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<String>,
    checkpoint: String,
    data: String,
    samples: usize,
    accuracy: f64,
    loss: f64,
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    existing_file(&a.checkpoint, "checkpoint")?;
    existing_file(&a.data, "dataset")?;
    let out = Output::resolve(&a.output, &Default::default());
    let model = load_checkpoint(&a.checkpoint)?;
    let data = load_part(&a.data, a.part)?;
    if data.series_len() != model.params.config.series_len {
        anyhow::bail!(
            "dataset series have {} points but the model expects {}",
            data.series_len(),
            model.params.config.series_len
        );
    }
    let eval = evaluate(&model.params, &data)?;
    prepare_out(&out)?;
    match out.format {
        Format::Json => {
            let doc = EvaluationDocument {
                tool_version: TOOL_VERSION.into(),
                timestamp: timestamp(&out),
                checkpoint: a.checkpoint.display().to_string(),
                data: a.data.display().to_string(),
                samples: data.len(),
                accuracy: eval.accuracy,
                loss: eval.loss,
            };
            let json = serde_json::to_string(&doc)?;
            write_file(&out.dir, "evaluation.json", format!("{json}\n"))?;
            println!("{json}");
        }
        Format::Csv => {
            let csv = format!(
                "samples,accuracy,loss\n{},{},{}\n",
                data.len(),
                eval.accuracy,
                eval.loss
            );
            write_file(&out.dir, "evaluation.csv", &csv)?;
            print!("{csv}");
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Baseline(a) => cmd_baseline(&a),
        Command::Selective { common, alpha } => cmd_selective(&common, alpha),
        Command::Sweep {
            common,
            alphas,
            share_initial,
            no_svg,
        } => cmd_sweep(&common, alphas.as_deref(), share_initial, no_svg),
        Command::Augment(a) => cmd_augment(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
