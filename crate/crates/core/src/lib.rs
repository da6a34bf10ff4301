//! List autoencoders for channel coding over AWGN.
//!
//! A neural encoder maps a `K`-bit message to three real branch streams
//! (rate 1/3). The iterative decoder threads a `K x L` list matrix through a
//! sequence of convolutional decoding blocks and emits `L` soft candidates
//! for the transmitted word. Candidates are reduced to one word either by a
//! genie (the transmitted word is known) or by a CRC check.
//!
//! The numerical core is generic over the floating point [`Scalar`] type.
//! Training and checkpoints use `f32`; gradient checks run in `f64`. The
//! aliases at the crate root name the two concrete instantiations.

pub mod bitcodec;
pub mod channel;
pub mod cli;
pub mod error;
pub mod interleaver;
pub mod neural_codec;
pub mod objective;
pub mod pipeline;
pub mod scalar;
pub mod selection;

pub use bitcodec::{attach_crc, crc_check, crc_compute, CrcSpec, Layout, MessageWord};
pub use channel::{
    ebsigma_from_snr, sample_training_snr, snr_to_sigma, Awgn, Channel, ChannelSpec, SnrRange,
};
pub use error::{Error, Result};
pub use interleaver::Permutation;
pub use neural_codec::{Codec, CodecConfig, DecoderNet, EncoderNet, NormStats, Variant};
pub use objective::{batch_list_loss, bce_avg, list_loss, LossValue};
pub use pipeline::{EvalConfig, EvalMode, EvalReport, TrainConfig};
pub use scalar::Scalar;
pub use selection::{
    harden, is_block_error, select_ca, select_ga, HardCandidateList, SelectionOutcome, Status,
};

/// Single precision codec, the type used for training and checkpoints.
pub type CodecF32 = Codec<f32>;
/// Double precision codec, used for finite-difference gradient checks.
pub type CodecF64 = Codec<f64>;
/// Single precision normalization statistics.
pub type NormStatsF32 = NormStats<f32>;
