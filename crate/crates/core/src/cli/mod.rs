//! Command-line front end.
//!
//! Exit status: 0 success, 2 usage or configuration error, 3 runtime or
//! training failure, 4 I/O error.

pub mod config;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

pub use config::{ExperimentConfig, Paths, OUT_DIR_ENV};

use crate::bitcodec::{crc_check, crc_compute, format_bits, parse_bits, parse_hex_bits, CrcSpec};
use crate::error::{Error, Result};
use crate::neural_codec::Part;
use crate::pipeline::eval::EvalTiming;
use crate::pipeline::plot::{bler_chart, loss_chart};
use crate::pipeline::train::{BEST_CHECKPOINT, LAST_CHECKPOINT, TRAIN_LOG};
use crate::pipeline::{
    baseline_uncoded, evaluate_codec, run_schedule, Checkpoint, EvalMode, EvalReport,
};

#[derive(Debug, Parser)]
#[command(
    name = "listae",
    version,
    about = "List autoencoders for channel coding over AWGN"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a codec; writes checkpoints and the training log.
    Train(RunArgs),
    /// Monte-Carlo BER/BLER sweep of a trained checkpoint.
    Eval(EvalArgs),
    /// Render SVG charts from reports and checkpoints.
    Plot(PlotArgs),
    /// Compute or check a CRC.
    Crc(CrcArgs),
    /// Print checkpoint metadata.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Machine-readable summary on stdout.
    #[arg(long)]
    pub json: bool,
    /// Also write SVG charts.
    #[arg(long)]
    pub plot: bool,
    /// Continue from `last.ckpt` in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub plot: bool,
    /// Write one CSV row per selection.
    #[arg(long)]
    pub trial_log: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Report (`.json`) and checkpoint (`.ckpt`) files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CrcAction {
    Compute,
    Check,
}

#[derive(Debug, Args)]
pub struct CrcArgs {
    pub action: CrcAction,
    /// Bits as a `0`/`1` string, or hex digits with `--hex`.
    pub bits: String,
    #[arg(long)]
    pub hex: bool,
    /// Generator coefficients in ascending order.
    #[arg(long, default_value = "101010111")]
    pub poly: String,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub json: bool,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Messages go to `out` and `err`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Plot(a) => cmd_plot(&a, out),
        Command::Crc(a) => cmd_crc(&a, out),
        Command::Inspect(a) => cmd_inspect(&a, out),
    }
}

fn say(out: &mut dyn Write, text: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<S: serde::Serialize>(v: &S) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

pub const RESOLVED_CONFIG: &str = "config.toml";

pub fn cmd_train(a: &RunArgs, out: &mut dyn Write) -> Result<()> {
    let mut exp = ExperimentConfig::load(&a.config)?;
    let Some(train) = exp.train.as_mut() else {
        return Err(Error::Config(format!(
            "{} has no [train] section",
            a.config.display()
        )));
    };
    if let Some(s) = a.seed {
        train.seed = s;
    }
    let cfg = train.clone();
    let dir = exp.out_dir(a.out_dir.as_deref());
    let resume = if a.resume {
        let path = dir.join(LAST_CHECKPOINT);
        let ckpt = Checkpoint::load(&path)?;
        match &ckpt.train {
            Some(t) if t.seed == cfg.seed && t.codec == cfg.codec => {}
            _ => {
                return Err(Error::Config(format!(
                    "{} was trained with a different codec or seed",
                    path.display()
                )))
            }
        }
        Some(ckpt.into_train_state()?)
    } else {
        None
    };
    create_dir(&dir)?;
    write_file(&dir.join(RESOLVED_CONFIG), &exp.to_toml()?)?;
    let outcome = run_schedule(&cfg, resume, Some(&dir))?;
    let progress = outcome.last.progress.clone();
    if a.plot {
        loss_chart(&outcome.last.history).write(&dir.join("loss.svg"))?;
    }
    if a.json {
        say(
            out,
            to_json(&json!({
                "name": exp.name,
                "seed": cfg.seed,
                "epochs": progress.epochs_done,
                "best_epoch": progress.best_epoch,
                "best_test_loss": progress.best_test_loss,
                "final_stage": progress.stage,
                "checkpoint": dir.join(BEST_CHECKPOINT),
                "log": dir.join(TRAIN_LOG),
            })),
        )
    } else {
        for r in &outcome.last.history {
            say(
                out,
                format!(
                    "epoch {:>4}  stage {}  enc {:.6}  dec {:.6}  test {:.6}",
                    r.epoch, r.stage, r.encoder_loss, r.decoder_loss, r.test_loss
                ),
            )?;
        }
        say(
            out,
            format!(
                "best test loss {:.6} at epoch {}; wrote {}",
                progress.best_test_loss.unwrap_or(f64::NAN),
                progress.best_epoch.unwrap_or(0),
                dir.display()
            ),
        )
    }
}

pub fn report_stem(mode: EvalMode) -> String {
    format!("report_{}", mode_name(mode))
}

fn mode_name(mode: EvalMode) -> &'static str {
    match mode {
        EvalMode::Ga => "ga",
        EvalMode::Ca => "ca",
    }
}

pub fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let mut exp = ExperimentConfig::load(&a.config)?;
    let Some(eval) = exp.eval.as_mut() else {
        return Err(Error::Config(format!(
            "{} has no [eval] section",
            a.config.display()
        )));
    };
    if let Some(s) = a.seed {
        eval.seed = s;
    }
    let cfg = eval.clone();
    let dir = exp.out_dir(a.out_dir.as_deref());
    let ckpt_path = a
        .checkpoint
        .clone()
        .or_else(|| exp.paths.checkpoint.clone())
        .unwrap_or_else(|| dir.join(BEST_CHECKPOINT));
    let ckpt = Checkpoint::load(&ckpt_path)?;
    create_dir(&dir)?;
    let stem = report_stem(cfg.mode);
    let trial_log = (a.trial_log || exp.paths.trial_log)
        .then(|| dir.join(format!("trials_{}.csv", mode_name(cfg.mode))));
    let (report, timing): (EvalReport, EvalTiming) =
        evaluate_codec(&ckpt.codec, &cfg, trial_log.as_deref())?;
    write_file(&dir.join(format!("{stem}.json")), &report.to_json()?)?;
    report.write_csv(&dir.join(format!("{stem}.csv")))?;
    write_file(
        &dir.join(format!("timing_{}.json", mode_name(cfg.mode))),
        &to_json(&timing),
    )?;
    if a.plot {
        let eb: Vec<f64> = report.points.iter().map(|p| p.eb_db).collect();
        let mut base_cfg = cfg.clone();
        base_cfg.snr_db = eb;
        let base = baseline_uncoded(&base_cfg, report.k)?;
        let name = exp.name.as_str();
        bler_chart(&[(name, &report), ("uncoded", &base)])
            .write(&dir.join(format!("bler_{}.svg", mode_name(cfg.mode))))?;
    }
    if a.json {
        return say(out, report.to_json()?);
    }
    say(
        out,
        "snr_db\teb_db\tprefix_L\ttrials\tblock_errors\tbler\tber",
    )?;
    for p in &report.points {
        for r in &p.results {
            say(
                out,
                format!(
                    "{}\t{:.3}\t{}\t{}\t{}\t{:.4e}\t{:.4e}",
                    p.snr_db, p.eb_db, r.prefix_l, r.trials, r.block_errors, r.bler, r.ber
                ),
            )?;
        }
    }
    Ok(())
}

pub fn cmd_plot(a: &PlotArgs, out: &mut dyn Write) -> Result<()> {
    let dir = a.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut reports = Vec::new();
    let mut histories = Vec::new();
    for p in &a.inputs {
        match p.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let label = p
                    .file_stem()
                    .map_or("report".into(), |s| s.to_string_lossy().into_owned());
                reports.push((label, EvalReport::from_json(&text)?));
            }
            Some("ckpt") => histories.push((p.clone(), Checkpoint::load(p)?.history)),
            _ => {
                return Err(Error::invalid(format!(
                    "{}: expected a .json report or a .ckpt file",
                    p.display()
                )))
            }
        }
    }
    create_dir(&dir)?;
    if !reports.is_empty() {
        let refs: Vec<(&str, &EvalReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
        let path = dir.join("bler.svg");
        bler_chart(&refs).write(&path)?;
        say(out, format!("wrote {}", path.display()))?;
    }
    for (i, (src, h)) in histories.iter().enumerate() {
        let path = if histories.len() == 1 {
            dir.join("loss.svg")
        } else {
            dir.join(format!("loss_{i}.svg"))
        };
        let mut chart = loss_chart(h);
        chart.title = format!("Training loss ({})", src.display());
        chart.write(&path)?;
        say(out, format!("wrote {}", path.display()))?;
    }
    Ok(())
}

pub fn cmd_crc(a: &CrcArgs, out: &mut dyn Write) -> Result<()> {
    let spec: CrcSpec = a.poly.parse()?;
    let bits = if a.hex {
        parse_hex_bits(&a.bits)?
    } else {
        parse_bits(&a.bits)?
    };
    match a.action {
        CrcAction::Compute => {
            let crc = format_bits(&crc_compute(&bits, &spec)?);
            if a.json {
                say(
                    out,
                    json!({ "poly": spec.to_string(), "crc": crc, "word": format!("{}{crc}", format_bits(&bits)) }),
                )
            } else {
                say(out, crc)
            }
        }
        CrcAction::Check => {
            let pass = crc_check(&bits, &spec)?;
            if a.json {
                say(out, json!({ "poly": spec.to_string(), "pass": pass }))
            } else {
                say(out, if pass { "pass" } else { "fail" })
            }
        }
    }
}

pub fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    let c = Checkpoint::load(&a.checkpoint)?;
    let codec = &c.codec;
    let norm = codec.norm_stats();
    let info = json!({
        "codec": codec.config(),
        "interleaver_seed": codec.interleaver().seed(),
        "interleaver": codec.interleaver().map(),
        "encoder_parameters": codec.parameter_count(Part::Encoder),
        "decoder_parameters": codec.parameter_count(Part::Decoder),
        "norm": norm.map(|n| json!({ "mu": n.mu, "gamma": n.gamma })),
        "loss_eps": codec.loss_eps(),
        "train": c.train,
        "epochs": c.history.len(),
        "progress": c.progress,
        "resumable": c.optimizer.is_some(),
    });
    if a.json {
        return say(out, to_json(&info));
    }
    let cfg = codec.config();
    say(
        out,
        format!(
            "{} K={} L={} I={} channels={} kernel={} layers={} crc={}",
            cfg.variant,
            cfg.k,
            cfg.list_size,
            cfg.iterations,
            cfg.hidden_channels,
            cfg.kernel_size,
            cfg.conv_layers,
            cfg.crc
                .as_ref()
                .map_or("none".to_string(), |c| c.to_string())
        ),
    )?;
    say(
        out,
        format!(
            "parameters: encoder {} decoder {}",
            codec.parameter_count(Part::Encoder),
            codec.parameter_count(Part::Decoder)
        ),
    )?;
    say(
        out,
        match norm {
            Some(n) => format!("normalization: mu {} gamma {}", n.mu, n.gamma),
            None => "normalization: not frozen".to_string(),
        },
    )?;
    say(
        out,
        format!("interleaver seed: {:?}", codec.interleaver().seed()),
    )?;
    if let Some(p) = &c.progress {
        say(
            out,
            format!(
                "epochs {} stage {} best test loss {:?} at epoch {:?}",
                p.epochs_done, p.stage, p.best_test_loss, p.best_epoch
            ),
        )?;
    }
    say(out, format!("resumable: {}", c.optimizer.is_some()))
}
