//! Single-file model checkpoints.
//!
//! Layout: the 8-byte magic `LISTAECK`, a little-endian `u32` format
//! version, a little-endian `u64` header length, a JSON header, then the
//! `f32` little-endian payload sections listed in the header. Weights,
//! normalization statistics and optimizer moments live in the payload so a
//! save/load round trip is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::{Adam, AdamParams};
use super::train::{EpochRecord, Progress, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::interleaver::Permutation;
use crate::neural_codec::{Codec, CodecConfig, NormStats, Part};

pub const MAGIC: &[u8; 8] = b"LISTAECK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Section {
    name: String,
    len: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    codec: CodecConfig,
    interleaver: Permutation,
    loss_eps: f64,
    #[serde(default)]
    train: Option<TrainConfig>,
    #[serde(default)]
    history: Vec<EpochRecord>,
    #[serde(default)]
    progress: Option<Progress>,
    #[serde(default)]
    adam: Option<[AdamParams; 2]>,
    sections: Vec<Section>,
}

/// A saved model plus whatever training context came with it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub codec: Codec<f32>,
    pub train: Option<TrainConfig>,
    pub history: Vec<EpochRecord>,
    pub progress: Option<Progress>,
    /// Encoder and decoder optimizers; present only in resumable checkpoints.
    pub optimizer: Option<(Adam<f32>, Adam<f32>)>,
}

impl Checkpoint {
    pub fn from_model(
        mut codec: Codec<f32>,
        train: Option<TrainConfig>,
        history: Vec<EpochRecord>,
        progress: Option<Progress>,
    ) -> Self {
        codec.zero_grad();
        Checkpoint {
            codec,
            train,
            history,
            progress,
            optimizer: None,
        }
    }

    pub fn from_state(state: &TrainState<f32>, cfg: &TrainConfig) -> Self {
        let mut codec = state.codec.clone();
        codec.zero_grad();
        Checkpoint {
            codec,
            train: Some(cfg.clone()),
            history: state.history.clone(),
            progress: Some(state.progress.clone()),
            optimizer: Some((state.adam_encoder.clone(), state.adam_decoder.clone())),
        }
    }

    /// Rebuilds a resumable training state.
    pub fn into_train_state(self) -> Result<TrainState<f32>> {
        let (adam_encoder, adam_decoder) = self.optimizer.ok_or_else(|| {
            Error::Checkpoint("checkpoint has no optimizer state; cannot resume".into())
        })?;
        Ok(TrainState {
            codec: self.codec,
            adam_encoder,
            adam_decoder,
            progress: self.progress.unwrap_or_default(),
            history: self.history,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut sections = Vec::new();
        let mut payload: Vec<f32> = Vec::new();
        let mut push = |name: &str, data: &[f32]| {
            sections.push(Section {
                name: name.into(),
                len: data.len(),
            });
            payload.extend_from_slice(data);
        };
        push("encoder", &self.codec.flat_params(Part::Encoder));
        push("decoder", &self.codec.flat_params(Part::Decoder));
        if let Some(n) = self.codec.norm_stats() {
            push("norm", &[n.mu, n.gamma]);
        }
        if let Some((e, d)) = &self.optimizer {
            push("adam_encoder_m", &e.m);
            push("adam_encoder_v", &e.v);
            push("adam_decoder_m", &d.m);
            push("adam_decoder_v", &d.v);
        }
        let header = Header {
            codec: self.codec.config().clone(),
            interleaver: self.codec.interleaver().clone(),
            loss_eps: self.codec.loss_eps(),
            train: self.train.clone(),
            history: self.history.clone(),
            progress: self.progress.clone(),
            adam: self.optimizer.as_ref().map(|(e, d)| [e.params, d.params]),
            sections,
        };
        let json =
            serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let mut out = Vec::with_capacity(20 + json.len() + 4 * payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for x in payload {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if hlen > body.len() {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let raw = &body[hlen..];
        let total: usize = header.sections.iter().map(|s| s.len).sum();
        if raw.len() != 4 * total {
            return Err(Error::Checkpoint(format!(
                "payload has {} bytes, header describes {}",
                raw.len(),
                4 * total
            )));
        }
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let take = |name: &str| -> Option<&[f32]> {
            let mut start = 0;
            for s in &header.sections {
                if s.name == name {
                    return Some(&values[start..start + s.len]);
                }
                start += s.len;
            }
            None
        };

        let map_err = |e: Error| Error::Checkpoint(e.to_string());
        let mut codec = Codec::<f32>::new(header.codec.clone(), 0)
            .map_err(map_err)?
            .with_interleaver(header.interleaver.clone())
            .map_err(map_err)?;
        codec.set_loss_eps(header.loss_eps).map_err(map_err)?;
        let enc = take("encoder").ok_or_else(|| bad("missing encoder weights"))?;
        codec.set_flat_params(Part::Encoder, enc).map_err(map_err)?;
        let dec = take("decoder").ok_or_else(|| bad("missing decoder weights"))?;
        codec.set_flat_params(Part::Decoder, dec).map_err(map_err)?;
        if let Some(n) = take("norm") {
            if n.len() != 2 {
                return Err(bad("norm section must hold (mu, gamma)"));
            }
            codec.set_norm_stats(Some(NormStats::new(n[0], n[1]).map_err(map_err)?));
        }
        let optimizer = match header.adam {
            Some([pe, pd]) => {
                let get = |name: &str, part: Part| -> Result<Vec<f32>> {
                    let s =
                        take(name).ok_or_else(|| Error::Checkpoint(format!("missing {name}")))?;
                    if s.len() != codec.parameter_count(part) {
                        return Err(Error::Checkpoint(format!("{name} has the wrong length")));
                    }
                    Ok(s.to_vec())
                };
                let e = Adam::from_parts(
                    pe,
                    get("adam_encoder_m", Part::Encoder)?,
                    get("adam_encoder_v", Part::Encoder)?,
                );
                let d = Adam::from_parts(
                    pd,
                    get("adam_decoder_m", Part::Decoder)?,
                    get("adam_decoder_v", Part::Decoder)?,
                );
                Some((e, d))
            }
            None => None,
        };
        Ok(Checkpoint {
            codec,
            train: header.train,
            history: header.history,
            progress: header.progress,
            optimizer,
        })
    }

    /// Writes through a temporary file and a rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("ckpt.tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcodec::CrcSpec;
    use crate::neural_codec::Variant;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(crc: Option<CrcSpec>) -> CodecConfig {
        CodecConfig {
            k: 12,
            list_size: 3,
            iterations: 1,
            variant: Variant::IrAe,
            hidden_channels: 4,
            kernel_size: 3,
            conv_layers: 2,
            crc,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut codec =
            Codec::<f32>::new(small(Some("1011".parse::<CrcSpec>().unwrap())), 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stats = codec.calibrate_norm(1000, &mut rng).unwrap();
        codec.set_norm_stats(Some(stats));
        let n = codec.parameter_count(Part::Encoder);
        let m = codec.parameter_count(Part::Decoder);
        let mut e = Adam::new(1e-3, n);
        e.m = (0..n).map(|i| i as f32 * 1e-7).collect();
        e.params.steps = 7;
        let d = Adam::new(1e-4, m);
        let ckpt = Checkpoint {
            codec,
            train: None,
            history: vec![],
            progress: Some(Progress {
                epochs_done: 3,
                ..Default::default()
            }),
            optimizer: Some((e, d)),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        ckpt.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back, ckpt);
        let y = ckpt
            .codec
            .simulate(
                ckpt.codec.random_messages(4, &mut rng).view(),
                1.0,
                &mut rng,
            )
            .unwrap();
        assert_eq!(
            ckpt.codec.decode_batch(y.view()).unwrap(),
            back.codec.decode_batch(y.view()).unwrap()
        );
        // the zero-based interleaver map is part of the file
        assert_eq!(
            back.codec.interleaver().map(),
            ckpt.codec.interleaver().map()
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(
            Checkpoint::from_bytes(b"hello"),
            Err(Error::Checkpoint(_))
        ));
        let codec = Codec::<f32>::new(small(None), 1).unwrap();
        let mut bytes = Checkpoint::from_model(codec, None, vec![], None)
            .to_bytes()
            .unwrap();
        bytes.pop();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::Checkpoint(_))
        ));
        bytes[8] = 9;
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    #[test]
    fn resume_needs_optimizer() {
        let codec = Codec::<f32>::new(small(None), 1).unwrap();
        let c = Checkpoint::from_model(codec, None, vec![], None);
        assert!(matches!(c.into_train_state(), Err(Error::Checkpoint(_))));
    }
}
