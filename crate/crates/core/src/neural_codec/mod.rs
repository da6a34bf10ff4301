//! Trainable rate-1/3 encoder and iterative list decoder.
//!
//! Batches travel through the networks in channel-major form
//! `(channels, batch * K)`; the public API uses `(batch, streams, K)` and
//! `(batch, L, K)` arrays.

mod decoder;
mod encoder;
pub mod layers;
pub mod norm;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use decoder::{DecoderNet, DecodingBlock};
pub use encoder::EncoderNet;
pub use norm::{batch_statistics, normalize_batch, NormStats};

use crate::bitcodec::{attach_crc, CrcSpec, Layout, MessageWord};
use crate::channel::{snr_to_sigma, standard_normal};
use crate::error::{Error, Result};
use crate::interleaver::{gather_segments, Permutation};
use crate::objective::{batch_list_loss_logits, logit_bound, sigmoid, CLAMP_EPS};
use crate::pipeline::seeds::derive_seed;
use crate::scalar::Scalar;

/// Number of encoder branches (code rate 1/3).
pub const BRANCHES: usize = 3;

/// Decoder architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Two rate-1/2 blocks per stage reading `{y1, y2}` and `{y1, y3}`.
    TurboAe,
    /// Blocks of rates `(1/2, 1/2, 1/2, 1/3)` reading `{y1, y2}`, `{y1, y3}`,
    /// `{y2, y3}` and `{y1, y2, y3}`.
    IrAe,
}

impl Variant {
    pub fn block_streams(&self) -> &'static [&'static [usize]] {
        match self {
            Variant::TurboAe => &[&[0, 1], &[0, 2]],
            Variant::IrAe => &[&[0, 1], &[0, 2], &[1, 2], &[0, 1, 2]],
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::TurboAe => "turbo-ae",
            Variant::IrAe => "ir-ae",
        })
    }
}

fn default_hidden() -> usize {
    100
}

fn default_kernel() -> usize {
    5
}

fn default_conv_layers() -> usize {
    5
}

/// Architecture hyperparameters. Defaults follow the `K = 100` reference
/// model: 5 conv layers of 100 channels with kernel 5.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodecConfig {
    /// Message length `K`.
    pub k: usize,
    /// Number of candidates `L`.
    pub list_size: usize,
    /// Decoder stages `I`.
    pub iterations: usize,
    pub variant: Variant,
    #[serde(default = "default_hidden")]
    pub hidden_channels: usize,
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
    #[serde(default = "default_conv_layers")]
    pub conv_layers: usize,
    /// When set, messages are `payload || CRC` instead of raw bits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crc: Option<CrcSpec>,
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("K = {} must be at least 2", self.k)));
        }
        if self.list_size == 0 {
            return Err(Error::Config("list size must be at least 1".into()));
        }
        if self.hidden_channels == 0 {
            return Err(Error::Config(
                "hidden channel count must be positive".into(),
            ));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel size {} must be odd",
                self.kernel_size
            )));
        }
        if let Some(crc) = &self.crc {
            crc.validate_for(self.k)?;
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        match &self.crc {
            None => Layout::Raw,
            Some(c) => Layout::PayloadCrc {
                crc_bits: c.degree(),
            },
        }
    }

    /// Code length `N = 3K`.
    pub fn code_len(&self) -> usize {
        BRANCHES * self.k
    }

    /// Information rate `(K - Z) / N`.
    pub fn effective_rate(&self) -> f64 {
        self.layout().payload_len(self.k) as f64 / self.code_len() as f64
    }
}

/// A codeword (or received word): `3` branch streams of `K` reals.
#[derive(Clone, Debug, PartialEq)]
pub struct Codeword<T> {
    pub streams: Array2<T>,
}

pub type ReceivedWord<T> = Codeword<T>;

impl<T: Scalar> Codeword<T> {
    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    /// Concatenated symbols `[x1, x2, x3]`.
    pub fn symbols(&self) -> Vec<T> {
        self.streams.iter().copied().collect()
    }
}

/// Which statistics power-normalize the encoder output.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormMode<T> {
    /// Statistics of the batch being encoded.
    Batch,
    Frozen(NormStats<T>),
}

/// Which parameter set receives gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Encoder,
    Decoder,
}

/// Inputs of one training or evaluation step with the noise drawn up front.
#[derive(Clone, Debug)]
pub struct TrainBatch<T> {
    /// `(B, K)` message bits.
    pub messages: Array2<u8>,
    /// `(3, B * K)` standard normal samples.
    pub noise: Array2<T>,
    /// Per-example noise standard deviation.
    pub sigmas: Vec<T>,
}

impl<T: Scalar> TrainBatch<T> {
    pub fn len(&self) -> usize {
        self.messages.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.nrows() == 0
    }
}

/// Moments of the normalized code symbols of a training batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerCheck {
    pub mean: f64,
    pub std: f64,
    /// `sum(x^2) / (B * N)`, which is 1 on the radius-`sqrt(B N)` sphere.
    pub mean_square: f64,
}

impl PowerCheck {
    fn of<T: Scalar>(x: &[T]) -> Self {
        let n = x.len() as f64;
        let mean = x.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let mean_square = x.iter().map(|v| v.as_f64().powi(2)).sum::<f64>() / n;
        let var = x.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
        PowerCheck {
            mean,
            std: var.sqrt(),
            mean_square,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport<T> {
    pub loss: T,
    pub stats: NormStats<T>,
    pub power: PowerCheck,
}

/// Encoder, decoder, interleaver and frozen normalization statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Codec<T> {
    config: CodecConfig,
    pub(crate) encoder: EncoderNet<T>,
    pub(crate) decoder: DecoderNet<T>,
    interleaver: Permutation,
    norm: Option<NormStats<T>>,
    loss_eps: f64,
}

impl<T: Scalar> Codec<T> {
    /// Fresh codec; weights and interleaver are deterministic in `seed`.
    pub fn new(config: CodecConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let interleaver = Permutation::generate(config.k, derive_seed(seed, "interleaver", 0))?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "weights", 0));
        let encoder = EncoderNet::new(&config, &mut rng);
        let decoder = DecoderNet::new(&config, &mut rng);
        Ok(Codec {
            config,
            encoder,
            decoder,
            interleaver,
            norm: None,
            loss_eps: CLAMP_EPS,
        })
    }

    pub fn with_interleaver(mut self, interleaver: Permutation) -> Result<Self> {
        if interleaver.len() != self.config.k {
            return Err(Error::invalid("interleaver length differs from K"));
        }
        self.interleaver = interleaver;
        Ok(self)
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn list_size(&self) -> usize {
        self.config.list_size
    }

    pub fn interleaver(&self) -> &Permutation {
        &self.interleaver
    }

    pub fn encoder(&self) -> &EncoderNet<T> {
        &self.encoder
    }

    pub fn decoder(&self) -> &DecoderNet<T> {
        &self.decoder
    }

    pub fn norm_stats(&self) -> Option<NormStats<T>> {
        self.norm
    }

    pub fn set_norm_stats(&mut self, stats: Option<NormStats<T>>) {
        self.norm = stats;
    }

    /// Probability clamp of the training loss.
    pub fn set_loss_eps(&mut self, eps: f64) -> Result<()> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::invalid(format!("loss clamp {eps} outside (0, 0.5)")));
        }
        self.loss_eps = eps;
        Ok(())
    }

    pub fn loss_eps(&self) -> f64 {
        self.loss_eps
    }

    fn bound(&self) -> T {
        T::of(logit_bound(self.loss_eps))
    }

    /// Clears the gradient buffers of both networks.
    pub fn zero_grad(&mut self) {
        for part in [Part::Encoder, Part::Decoder] {
            self.visit_params_mut(part, &mut |_, g| g.fill(T::zero()));
        }
    }

    /// Same weights in another scalar type.
    pub fn cast<U: Scalar>(&self) -> Codec<U> {
        Codec {
            config: self.config.clone(),
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
            interleaver: self.interleaver.clone(),
            norm: self.norm.map(|s| s.cast()),
            loss_eps: self.loss_eps,
        }
    }

    /// `B` random messages following the configured layout.
    pub fn random_messages<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Array2<u8> {
        let k = self.config.k;
        let mut m = Array2::zeros((batch, k));
        match &self.config.crc {
            None => m.mapv_inplace(|_: u8| rng.random_range(0..2u8)),
            Some(crc) => {
                let z = crc.degree();
                for mut row in m.outer_iter_mut() {
                    let payload: Vec<u8> = (0..k - z).map(|_| rng.random_range(0..2u8)).collect();
                    let word = attach_crc(&payload, crc, k).expect("validated CRC");
                    row.assign(&ndarray::ArrayView1::from(word.bits()));
                }
            }
        }
        m
    }

    /// Bits `{0, 1}` to symbols `{-1, +1}` as a `(1, B * K)` row, plus its interleaved copy.
    fn message_symbols(&self, messages: ArrayView2<'_, u8>) -> Result<(Array2<T>, Array2<T>)> {
        if messages.ncols() != self.config.k {
            return Err(Error::invalid(format!(
                "message length {} != K = {}",
                messages.ncols(),
                self.config.k
            )));
        }
        if messages.iter().any(|&b| b > 1) {
            return Err(Error::invalid("message bits must be 0 or 1"));
        }
        let sym: Vec<T> = messages
            .iter()
            .map(|&b| if b == 0 { -T::one() } else { T::one() })
            .collect();
        let u = Array2::from_shape_vec((1, sym.len()), sym).expect("shape");
        let up = gather_segments(u.view(), self.interleaver.map());
        Ok((u, up))
    }

    /// Raw (unnormalized) encoder output `(3, B * K)`.
    fn encode_raw(&self, messages: ArrayView2<'_, u8>) -> Result<Array2<T>> {
        let (u, up) = self.message_symbols(messages)?;
        Ok(self.encoder.forward(u.view(), up.view(), self.config.k))
    }

    fn encode_cm(
        &self,
        messages: ArrayView2<'_, u8>,
        mode: NormMode<T>,
    ) -> Result<(Array2<T>, NormStats<T>)> {
        let mut b = self.encode_raw(messages)?;
        let slice = b.as_slice_mut().expect("standard layout");
        let stats = match mode {
            NormMode::Batch => normalize_batch(slice)?,
            NormMode::Frozen(s) => {
                s.apply(slice);
                s
            }
        };
        Ok((b, stats))
    }

    /// Encodes a `(B, K)` batch to `(B, 3, K)` codewords.
    pub fn encode_batch(
        &self,
        messages: ArrayView2<'_, u8>,
        mode: NormMode<T>,
    ) -> Result<(Array3<T>, NormStats<T>)> {
        let (x, stats) = self.encode_cm(messages, mode)?;
        Ok((
            from_channel_major(x, messages.nrows(), self.config.k),
            stats,
        ))
    }

    fn frozen(&self) -> Result<NormStats<T>> {
        self.norm
            .ok_or_else(|| Error::Config("codec has no frozen normalization statistics".into()))
    }

    /// Encodes one word with the frozen statistics.
    pub fn encode(&self, u: &MessageWord) -> Result<Codeword<T>> {
        let m = ArrayView2::from_shape((1, u.len()), u.bits())
            .map_err(|e| Error::invalid(e.to_string()))?;
        let (x, _) = self.encode_cm(m, NormMode::Frozen(self.frozen()?))?;
        Ok(Codeword { streams: x })
    }

    /// Pre-computes `mu` and `gamma` from `num_words` random messages.
    pub fn calibrate_norm<R: Rng + ?Sized>(
        &self,
        num_words: usize,
        rng: &mut R,
    ) -> Result<NormStats<T>> {
        if num_words < 1000 {
            return Err(Error::invalid(format!(
                "calibration needs >= 1000 words, got {num_words}"
            )));
        }
        // chunked to bound memory; statistics are pooled exactly
        let chunk = 1000;
        let (mut n, mut sum, mut sum_sq) = (0usize, 0f64, 0f64);
        let mut done = 0;
        while done < num_words {
            let b = chunk.min(num_words - done);
            let m = self.random_messages(b, rng);
            let raw = self.encode_raw(m.view())?;
            for v in raw.iter() {
                let v = v.as_f64();
                sum += v;
                sum_sq += v * v;
            }
            n += raw.len();
            done += b;
        }
        let mean = sum / n as f64;
        let var = (sum_sq / n as f64 - mean * mean).max(0.0);
        if var.is_nan() || var <= 0.0 || !var.is_finite() {
            return Err(Error::DegenerateBatch(
                "zero variance in calibration batch".into(),
            ));
        }
        NormStats::new(T::of(mean), T::of(var.sqrt()))
    }

    fn check_received(&self, y: ArrayView3<'_, T>) -> Result<()> {
        let (_, n, k) = y.dim();
        if n != BRANCHES || k != self.config.k {
            return Err(Error::invalid(format!(
                "received batch has shape (_, {n}, {k}), expected (_, {BRANCHES}, {})",
                self.config.k
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite received symbols"));
        }
        Ok(())
    }

    /// Soft candidate lists `(B, L, K)` in `(0, 1)` for received words `(B, 3, K)`.
    pub fn decode_batch(&self, y: ArrayView3<'_, T>) -> Result<Array3<T>> {
        self.check_received(y)?;
        let batch = y.dim().0;
        let ycm = to_channel_major(y);
        let mut logits = self.decoder.forward(ycm.view(), &self.interleaver);
        logits.mapv_inplace(sigmoid);
        Ok(from_channel_major(logits, batch, self.config.k))
    }

    /// `L x K` soft candidates for one received word.
    pub fn decode_list(&self, y: &ReceivedWord<T>) -> Result<Array2<T>> {
        let y3 = y.streams.view().insert_axis(Axis(0));
        Ok(self.decode_batch(y3)?.index_axis_move(Axis(0), 0))
    }

    /// Encode with frozen statistics, add AWGN at `snr_db`, decode.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        messages: ArrayView2<'_, u8>,
        snr_db: f64,
        rng: &mut R,
    ) -> Result<Array3<T>> {
        let (mut x, _) = self.encode_cm(messages, NormMode::Frozen(self.frozen()?))?;
        let sigma = snr_to_sigma(snr_db);
        if sigma > 0.0 {
            let sigma = T::of(sigma);
            x.mapv_inplace(|v| v + sigma * standard_normal::<T, _>(rng));
        }
        let mut logits = self.decoder.forward(x.view(), &self.interleaver);
        logits.mapv_inplace(sigmoid);
        Ok(from_channel_major(logits, messages.nrows(), self.config.k))
    }

    /// Draws messages and noise for one step; `snr_db` gives each example's SNR.
    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        batch: usize,
        mut snr_db: impl FnMut(&mut R) -> f64,
        rng: &mut R,
    ) -> TrainBatch<T> {
        let messages = self.random_messages(batch, rng);
        let sigmas = (0..batch)
            .map(|_| T::of(snr_to_sigma(snr_db(rng))))
            .collect();
        let noise = Array2::from_shape_simple_fn((BRANCHES, batch * self.config.k), || {
            standard_normal::<T, _>(rng)
        });
        TrainBatch {
            messages,
            noise,
            sigmas,
        }
    }

    fn add_noise(&self, x: &Array2<T>, batch: &TrainBatch<T>) -> Array2<T> {
        let k = self.config.k;
        let mut y = x.clone();
        for (mut yr, wr) in y.outer_iter_mut().zip(batch.noise.outer_iter()) {
            let ys = yr.as_slice_mut().expect("standard layout");
            let ws = wr.to_slice().expect("standard layout");
            for ((yc, wc), &s) in ys
                .chunks_exact_mut(k)
                .zip(ws.chunks_exact(k))
                .zip(&batch.sigmas)
            {
                for (yv, &wv) in yc.iter_mut().zip(wc) {
                    *yv += s * wv;
                }
            }
        }
        y
    }

    fn check_batch(&self, batch: &TrainBatch<T>) -> Result<()> {
        let b = batch.messages.nrows();
        if batch.sigmas.len() != b || batch.noise.dim() != (BRANCHES, b * self.config.k) {
            return Err(Error::invalid("training batch components disagree in size"));
        }
        Ok(())
    }

    /// Batch loss with batch-statistics normalization, no gradients.
    pub fn batch_loss(&self, batch: &TrainBatch<T>) -> Result<T> {
        self.check_batch(batch)?;
        let (x, _) = self.encode_cm(batch.messages.view(), NormMode::Batch)?;
        let y = self.add_noise(&x, batch);
        let logits = self.decoder.forward(y.view(), &self.interleaver);
        batch_list_loss_logits(logits.view(), batch.messages.view(), self.bound(), None)
    }

    /// Forward and backward pass. Gradients of the parameters of `part` are
    /// overwritten; the other network is untouched.
    pub fn loss_and_gradients(
        &mut self,
        batch: &TrainBatch<T>,
        part: Part,
    ) -> Result<StepReport<T>> {
        self.check_batch(batch)?;
        let k = self.config.k;
        let (u, up) = self.message_symbols(batch.messages.view())?;
        let train_encoder = part == Part::Encoder;
        let (mut x, enc_tape) = if train_encoder {
            let (b, t) = self.encoder.forward_tape(u.view(), up.view(), k);
            (b, Some(t))
        } else {
            (self.encoder.forward(u.view(), up.view(), k), None)
        };
        let stats = normalize_batch(x.as_slice_mut().expect("standard layout"))?;
        let power = PowerCheck::of(x.as_slice().expect("standard layout"));
        let y = self.add_noise(&x, batch);
        let (logits, dec_tape) = self.decoder.forward_tape(y.view(), &self.interleaver);
        let mut d_logits = Array2::zeros(logits.raw_dim());
        let loss = batch_list_loss_logits(
            logits.view(),
            batch.messages.view(),
            self.bound(),
            Some(&mut d_logits),
        )?;
        match part {
            Part::Decoder => {
                self.decoder.zero_grad();
                self.decoder
                    .backward(&dec_tape, d_logits, &self.interleaver, true, false);
            }
            Part::Encoder => {
                self.encoder.zero_grad();
                let dy = self
                    .decoder
                    .backward(&dec_tape, d_logits, &self.interleaver, false, true)
                    .expect("requested");
                let db = norm::normalize_backward(dy.view(), x.view(), stats.gamma);
                self.encoder
                    .backward(enc_tape.as_ref().expect("taped"), db.view(), k);
            }
        }
        Ok(StepReport { loss, stats, power })
    }

    pub fn parameter_count(&self, part: Part) -> usize {
        match part {
            Part::Encoder => self.encoder.parameter_count(),
            Part::Decoder => self.decoder.parameter_count(),
        }
    }

    /// Visits `(value, grad)` slices of one network in a fixed order.
    pub fn visit_params_mut(&mut self, part: Part, f: &mut dyn FnMut(&mut [T], &mut [T])) {
        match part {
            Part::Encoder => self.encoder.visit_mut(f),
            Part::Decoder => self.decoder.visit_mut(f),
        }
    }

    pub fn visit_params(&self, part: Part, f: &mut dyn FnMut(&[T])) {
        match part {
            Part::Encoder => self.encoder.visit(f),
            Part::Decoder => self.decoder.visit(f),
        }
    }

    /// All parameters of one network, flattened in visiting order.
    pub fn flat_params(&self, part: Part) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count(part));
        self.visit_params(part, &mut |v| out.extend_from_slice(v));
        out
    }

    pub fn flat_grads(&mut self, part: Part) -> Vec<T> {
        let mut out = Vec::with_capacity(self.parameter_count(part));
        self.visit_params_mut(part, &mut |_, g| out.extend_from_slice(g));
        out
    }

    pub fn set_flat_params(&mut self, part: Part, values: &[T]) -> Result<()> {
        if values.len() != self.parameter_count(part) {
            return Err(Error::invalid(format!(
                "{} values for {} parameters",
                values.len(),
                self.parameter_count(part)
            )));
        }
        let mut offset = 0;
        self.visit_params_mut(part, &mut |v, _| {
            v.copy_from_slice(&values[offset..offset + v.len()]);
            offset += v.len();
        });
        Ok(())
    }
}

/// `(B, C, K)` -> `(C, B * K)`.
pub fn to_channel_major<T: Scalar>(a: ArrayView3<'_, T>) -> Array2<T> {
    let (b, c, k) = a.dim();
    a.permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((c, b * k))
        .expect("contiguous")
}

/// `(C, B * K)` -> `(B, C, K)`.
pub fn from_channel_major<T: Scalar>(a: Array2<T>, batch: usize, k: usize) -> Array3<T> {
    let c = a.nrows();
    a.into_shape_with_order((c, batch, k))
        .expect("contiguous")
        .permuted_axes([1, 0, 2])
        .as_standard_layout()
        .into_owned()
}

#[cfg(test)]
mod tests;
