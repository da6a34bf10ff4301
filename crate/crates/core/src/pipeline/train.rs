//! Alternating encoder/decoder training.
//!
//! Each epoch runs `enc_steps` encoder updates with the decoder frozen at a
//! fixed SNR, then `dec_steps` decoder updates with the encoder frozen and
//! one SNR drawn per example from the decoder range, then measures the test
//! loss on a fresh batch. The `(lr, batch)` schedule advances one stage
//! whenever the test loss has not improved for `patience` epochs.

use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::optim::Adam;
use super::seeds::derive_seed;
use crate::channel::{sample_training_snr, SnrRange};
use crate::error::{Error, Result};
use crate::neural_codec::{Codec, CodecConfig, Part, PowerCheck};
use crate::objective::CLAMP_EPS;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleStage {
    pub lr: f64,
    pub batch: usize,
}

fn one_db() -> f64 {
    1.0
}

fn default_dec_range() -> SnrRange {
    SnrRange::new(-1.5, 2.0).expect("valid")
}

fn default_patience() -> usize {
    10
}

fn default_eps() -> f64 {
    CLAMP_EPS
}

fn default_calibration() -> usize {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub codec: CodecConfig,
    #[serde(default)]
    pub seed: u64,
    /// Encoder steps per epoch (`T_enc`).
    pub enc_steps: usize,
    /// Decoder steps per epoch (`T_dec`).
    pub dec_steps: usize,
    #[serde(default = "one_db")]
    pub enc_snr_db: f64,
    #[serde(default = "default_dec_range")]
    pub dec_snr_range: SnrRange,
    #[serde(default = "one_db")]
    pub test_snr_db: f64,
    /// `(lr, batch)` stages, traversed in order.
    pub schedule: Vec<ScheduleStage>,
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_eps")]
    pub loss_eps: f64,
    /// Words used to freeze the normalization statistics of saved models.
    #[serde(default = "default_calibration")]
    pub calibration_words: usize,
}

impl TrainConfig {
    /// The `K = 100` reference hyperparameters for a given list size and variant.
    pub fn reference(variant: crate::neural_codec::Variant, list_size: usize) -> Self {
        TrainConfig {
            codec: CodecConfig {
                k: 100,
                list_size,
                iterations: 6,
                variant,
                hidden_channels: 100,
                kernel_size: 5,
                conv_layers: 5,
                crc: None,
            },
            seed: 0,
            enc_steps: 100,
            dec_steps: 500,
            enc_snr_db: 1.0,
            dec_snr_range: default_dec_range(),
            test_snr_db: 1.0,
            schedule: vec![
                ScheduleStage {
                    lr: 1e-4,
                    batch: 500,
                },
                ScheduleStage {
                    lr: 1e-5,
                    batch: 2000,
                },
                ScheduleStage {
                    lr: 1e-6,
                    batch: 10_000,
                },
            ],
            max_epochs: 500,
            patience: default_patience(),
            loss_eps: CLAMP_EPS,
            calibration_words: default_calibration(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.enc_steps == 0 || self.dec_steps == 0 {
            return bad("enc_steps and dec_steps must be at least 1".into());
        }
        if self.schedule.is_empty() {
            return bad("schedule needs at least one (lr, batch) stage".into());
        }
        for s in &self.schedule {
            if !(s.lr > 0.0 && s.lr.is_finite()) {
                return bad(format!("learning rate {} must be positive", s.lr));
            }
            if s.batch < 2 {
                return bad(format!("batch size {} must be at least 2", s.batch));
            }
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1".into());
        }
        if !(self.loss_eps > 0.0 && self.loss_eps < 0.5) {
            return bad(format!("loss_eps {} outside (0, 0.5)", self.loss_eps));
        }
        if self.calibration_words < 1000 {
            return bad("calibration_words must be at least 1000".into());
        }
        if !self.enc_snr_db.is_finite() || !self.test_snr_db.is_finite() {
            return bad("training SNRs must be finite".into());
        }
        Ok(())
    }
}

/// Worst-case deviation of the normalized symbols over the batches of an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub max_abs_mean: f64,
    pub max_std_error: f64,
    pub max_mean_square_error: f64,
    pub batches: usize,
}

impl PowerSummary {
    fn add(&mut self, p: &PowerCheck) {
        self.max_abs_mean = self.max_abs_mean.max(p.mean.abs());
        self.max_std_error = self.max_std_error.max((p.std - 1.0).abs());
        self.max_mean_square_error = self.max_mean_square_error.max((p.mean_square - 1.0).abs());
        self.batches += 1;
    }

    fn merge(&mut self, o: &PowerSummary) {
        self.max_abs_mean = self.max_abs_mean.max(o.max_abs_mean);
        self.max_std_error = self.max_std_error.max(o.max_std_error);
        self.max_mean_square_error = self.max_mean_square_error.max(o.max_mean_square_error);
        self.batches += o.batches;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based epoch number.
    pub epoch: usize,
    pub stage: usize,
    pub lr: f64,
    pub batch: usize,
    pub encoder_loss: f64,
    pub decoder_loss: f64,
    pub test_loss: f64,
    pub power: PowerSummary,
}

/// Schedule bookkeeping carried across epochs (and checkpoints).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub epochs_done: usize,
    pub stage: usize,
    pub since_improvement: usize,
    pub best_test_loss: Option<f64>,
    pub best_epoch: Option<usize>,
}

impl Progress {
    /// Records an epoch's test loss; returns true when it is a new best.
    pub fn record(&mut self, epoch: usize, test_loss: f64, cfg: &TrainConfig) -> bool {
        self.epochs_done = epoch;
        let improved = self.best_test_loss.is_none_or(|b| test_loss < b);
        if improved {
            self.best_test_loss = Some(test_loss);
            self.best_epoch = Some(epoch);
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
            if self.since_improvement >= cfg.patience && self.stage + 1 < cfg.schedule.len() {
                self.stage += 1;
                self.since_improvement = 0;
            }
        }
        improved
    }
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState<T> {
    pub codec: Codec<T>,
    pub adam_encoder: Adam<T>,
    pub adam_decoder: Adam<T>,
    pub progress: Progress,
    pub history: Vec<EpochRecord>,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut codec = Codec::new(cfg.codec.clone(), cfg.seed)?;
        codec.set_loss_eps(cfg.loss_eps)?;
        Ok(Self::from_codec(codec, cfg.schedule[0].lr))
    }

    pub fn from_codec(codec: Codec<T>, lr: f64) -> Self {
        TrainState {
            adam_encoder: Adam::new(lr, codec.parameter_count(Part::Encoder)),
            adam_decoder: Adam::new(lr, codec.parameter_count(Part::Decoder)),
            codec,
            progress: Progress::default(),
            history: Vec::new(),
        }
    }
}

fn failure(epoch: usize, part: &str, step: usize, detail: String) -> Error {
    Error::TrainingFailure {
        epoch,
        phase: part.to_string(),
        step,
        detail,
    }
}

/// Runs `steps` updates of one network; returns the mean training loss.
pub fn train_phase<T: Scalar>(
    state: &mut TrainState<T>,
    cfg: &TrainConfig,
    part: Part,
    steps: usize,
    batch: usize,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, PowerSummary)> {
    let mut total = 0.0;
    let mut power = PowerSummary::default();
    let mut last_finite = None;
    for step in 0..steps {
        let b = match part {
            Part::Encoder => state.codec.sample_batch(batch, |_| cfg.enc_snr_db, rng),
            Part::Decoder => {
                state
                    .codec
                    .sample_batch(batch, |r| sample_training_snr(&cfg.dec_snr_range, r), rng)
            }
        };
        let name = match part {
            Part::Encoder => "encoder",
            Part::Decoder => "decoder",
        };
        let report = state
            .codec
            .loss_and_gradients(&b, part)
            .map_err(|e| failure(epoch, name, step, e.to_string()))?;
        let loss = report.loss.as_f64();
        if !loss.is_finite() {
            return Err(failure(
                epoch,
                name,
                step,
                format!("non-finite loss {loss}; last finite loss {last_finite:?}"),
            ));
        }
        last_finite = Some(loss);
        power.add(&report.power);
        total += loss;
        match part {
            Part::Encoder => state.adam_encoder.step(&mut state.codec, part),
            Part::Decoder => state.adam_decoder.step(&mut state.codec, part),
        }
    }
    Ok((total / steps as f64, power))
}

/// Test loss on a fresh batch at the test SNR.
pub fn test_loss<T: Scalar>(
    codec: &Codec<T>,
    cfg: &TrainConfig,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let b = codec.sample_batch(batch, |_| cfg.test_snr_db, rng);
    Ok(codec.batch_loss(&b)?.as_f64())
}

/// One epoch: encoder phase, decoder phase, test loss. Appends to the
/// state's history; schedule bookkeeping is left to the caller.
pub fn train_epoch<T: Scalar>(state: &mut TrainState<T>, cfg: &TrainConfig) -> Result<EpochRecord> {
    let epoch = state.progress.epochs_done + 1;
    let stage_idx = state.progress.stage.min(cfg.schedule.len() - 1);
    let stage = cfg.schedule[stage_idx];
    state.adam_encoder.set_lr(stage.lr);
    state.adam_decoder.set_lr(stage.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "epoch", epoch as u64));

    let (encoder_loss, mut power) = train_phase(
        state,
        cfg,
        Part::Encoder,
        cfg.enc_steps,
        stage.batch,
        epoch,
        &mut rng,
    )?;
    let (decoder_loss, p2) = train_phase(
        state,
        cfg,
        Part::Decoder,
        cfg.dec_steps,
        stage.batch,
        epoch,
        &mut rng,
    )?;
    power.merge(&p2);
    let test = test_loss(&state.codec, cfg, stage.batch, &mut rng)?;
    if !test.is_finite() {
        return Err(failure(
            epoch,
            "test",
            0,
            format!("non-finite test loss {test}"),
        ));
    }
    let rec = EpochRecord {
        epoch,
        stage: stage_idx,
        lr: stage.lr,
        batch: stage.batch,
        encoder_loss,
        decoder_loss,
        test_loss: test,
        power,
    };
    state.history.push(rec.clone());
    state.progress.epochs_done = epoch;
    Ok(rec)
}

/// CSV training log: `epoch,phase,lr,batch,train_loss,test_loss`, one row
/// per phase, flushed after every epoch.
pub struct TrainLog {
    writer: csv::Writer<File>,
    path: PathBuf,
}

pub const TRAIN_LOG_HEADER: [&str; 6] =
    ["epoch", "phase", "lr", "batch", "train_loss", "test_loss"];

impl TrainLog {
    pub fn create(path: &Path, append: bool) -> Result<Self> {
        let exists = append && path.exists();
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .append(append)
            .truncate(!append)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        if !exists {
            writer
                .write_record(TRAIN_LOG_HEADER)
                .map_err(|e| csv_err(path, e))?;
        }
        let mut log = TrainLog {
            writer,
            path: path.to_path_buf(),
        };
        log.flush()?;
        Ok(log)
    }

    pub fn append(&mut self, rec: &EpochRecord) -> Result<()> {
        for (phase, loss) in [("encoder", rec.encoder_loss), ("decoder", rec.decoder_loss)] {
            self.writer
                .write_record([
                    rec.epoch.to_string(),
                    phase.to_string(),
                    rec.lr.to_string(),
                    rec.batch.to_string(),
                    loss.to_string(),
                    rec.test_loss.to_string(),
                ])
                .map_err(|e| csv_err(&self.path, e))?;
        }
        self.flush()
    }

    fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    }
}

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const TRAIN_LOG: &str = "train_log.csv";

pub struct ScheduleOutcome {
    /// Lowest-test-loss model with frozen normalization statistics.
    pub best: Checkpoint,
    /// Final state, resumable.
    pub last: TrainState<f32>,
}

fn calibrated(codec: &Codec<f32>, cfg: &TrainConfig, epoch: usize) -> Result<Codec<f32>> {
    let mut c = codec.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "calibration", epoch as u64));
    let stats = c.calibrate_norm(cfg.calibration_words, &mut rng)?;
    c.set_norm_stats(Some(stats));
    Ok(c)
}

/// Trains up to `cfg.max_epochs`, optionally resuming from a saved state.
///
/// With an output directory, the training log is appended and flushed each
/// epoch, the best model is written whenever the test loss improves, and
/// the resumable last state is written after every epoch.
pub fn run_schedule(
    cfg: &TrainConfig,
    resume: Option<TrainState<f32>>,
    out_dir: Option<&Path>,
) -> Result<ScheduleOutcome> {
    cfg.validate()?;
    let resuming = resume.is_some();
    let mut state = match resume {
        Some(s) => {
            if s.codec.config() != &cfg.codec {
                return Err(Error::Config(
                    "resumed checkpoint was trained with a different codec config".into(),
                ));
            }
            s
        }
        None => TrainState::new(cfg)?,
    };
    state.codec.set_loss_eps(cfg.loss_eps)?;
    let mut log = match out_dir {
        Some(dir) => Some(TrainLog::create(&dir.join(TRAIN_LOG), resuming)?),
        None => None,
    };
    let mut best: Option<Checkpoint> = None;
    while state.progress.epochs_done < cfg.max_epochs {
        let rec = train_epoch(&mut state, cfg)?;
        if let Some(log) = log.as_mut() {
            log.append(&rec)?;
        }
        if state.progress.record(rec.epoch, rec.test_loss, cfg) {
            let ckpt = Checkpoint::from_model(
                calibrated(&state.codec, cfg, rec.epoch)?,
                Some(cfg.clone()),
                state.history.clone(),
                Some(state.progress.clone()),
            );
            if let Some(dir) = out_dir {
                ckpt.save(&dir.join(BEST_CHECKPOINT))?;
            }
            best = Some(ckpt);
        }
        if let Some(dir) = out_dir {
            Checkpoint::from_state(&state, cfg).save(&dir.join(LAST_CHECKPOINT))?;
        }
    }
    let best = match best {
        Some(b) => b,
        None => {
            // resumed past max_epochs, or no new best in the resumed span
            match out_dir
                .map(|d| d.join(BEST_CHECKPOINT))
                .filter(|p| p.exists())
            {
                Some(p) => Checkpoint::load(&p)?,
                None => Checkpoint::from_model(
                    calibrated(&state.codec, cfg, state.progress.epochs_done)?,
                    Some(cfg.clone()),
                    state.history.clone(),
                    Some(state.progress.clone()),
                ),
            }
        }
    };
    if let Some(dir) = out_dir {
        let mut last = Checkpoint::from_state(&state, cfg);
        last.codec = calibrated(&state.codec, cfg, state.progress.epochs_done)?;
        last.save(&dir.join(LAST_CHECKPOINT))?;
    }
    Ok(ScheduleOutcome { best, last: state })
}
