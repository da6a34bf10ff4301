//! Monte-Carlo BER/BLER evaluation over an SNR grid.
//!
//! Each SNR point owns two random streams derived from the evaluation seed:
//! one for messages and channel noise, one for selector tie-breaking. Runs
//! that differ only in selection mode therefore see identical trials.

use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::float_serde;
use super::seeds::derive_seed;
use super::train::csv_err;
use crate::bitcodec::{CrcSpec, Layout};
use crate::channel::{ebsigma_from_snr, snr_to_sigma};
use crate::error::{Error, Result};
use crate::neural_codec::{Codec, CodecConfig};
use crate::scalar::Scalar;
use crate::selection::{is_block_error, select_ca, select_ga, HardCandidateList, Status};

pub use crate::selection::Mode as EvalMode;

fn default_min_errors() -> u64 {
    100
}

fn default_max_trials() -> u64 {
    10_000_000
}

fn default_batch() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// SNR grid in dB; `inf` is the noiseless sentinel.
    #[serde(with = "float_serde::vec")]
    pub snr_db: Vec<f64>,
    pub mode: EvalMode,
    /// List prefix sizes to report; empty means `1..=L`.
    #[serde(default)]
    pub prefixes: Vec<usize>,
    #[serde(default = "default_min_errors")]
    pub min_block_errors: u64,
    #[serde(default = "default_max_trials")]
    pub max_trials: u64,
    /// Rate for the `Eb/sigma^2` axis; defaults to the codec's effective rate.
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Words simulated per decoder call.
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Expected CRC; must match the checkpoint's when given.
    #[serde(default)]
    pub crc: Option<CrcSpec>,
}

impl EvalConfig {
    pub fn new(snr_db: Vec<f64>, mode: EvalMode) -> Self {
        EvalConfig {
            snr_db,
            mode,
            prefixes: Vec::new(),
            min_block_errors: default_min_errors(),
            max_trials: default_max_trials(),
            rate: None,
            seed: 0,
            batch: default_batch(),
            crc: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.snr_db.is_empty() {
            return bad("snr_db grid is empty".into());
        }
        if self
            .snr_db
            .iter()
            .any(|s| s.is_nan() || *s == f64::NEG_INFINITY)
        {
            return bad("snr_db values must be numbers (inf allowed)".into());
        }
        if self.min_block_errors == 0 {
            return bad("min_block_errors must be at least 1".into());
        }
        if self.max_trials == 0 || self.batch == 0 {
            return bad("max_trials and batch must be at least 1".into());
        }
        if let Some(r) = self.rate {
            if !(r > 0.0 && r <= 1.0) {
                return bad(format!("rate {r} outside (0, 1]"));
            }
        }
        let mut seen = self.prefixes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.prefixes.len() || seen.first() == Some(&0) {
            return bad("prefixes must be distinct and positive".into());
        }
        Ok(())
    }

    /// Prefix sizes to report for a list of size `l`, ascending.
    pub fn resolved_prefixes(&self, l: usize) -> Result<Vec<usize>> {
        if self.prefixes.is_empty() {
            return Ok((1..=l).collect());
        }
        if let Some(&p) = self.prefixes.iter().find(|&&p| p > l) {
            return Err(Error::Config(format!(
                "prefix size {p} exceeds the list size {l}"
            )));
        }
        let mut p = self.prefixes.clone();
        p.sort_unstable();
        Ok(p)
    }
}

/// Anything that can turn messages into hard candidate lists.
pub trait LinkSimulator: Sync {
    fn k(&self) -> usize;
    fn list_size(&self) -> usize;
    fn layout(&self) -> Layout;
    fn crc(&self) -> Option<&CrcSpec>;
    /// Rate used for the `Eb/sigma^2` axis when the config gives none.
    fn rate(&self) -> f64;
    fn random_messages(&self, batch: usize, rng: &mut ChaCha8Rng) -> Array2<u8>;
    /// Encode, transmit at `snr_db`, decode and harden: `(B, L, K)` bits.
    fn hard_candidates(
        &self,
        messages: ArrayView2<'_, u8>,
        snr_db: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Array3<u8>>;
}

impl<T: Scalar> LinkSimulator for Codec<T> {
    fn k(&self) -> usize {
        self.config().k
    }

    fn list_size(&self) -> usize {
        self.config().list_size
    }

    fn layout(&self) -> Layout {
        self.config().layout()
    }

    fn crc(&self) -> Option<&CrcSpec> {
        self.config().crc.as_ref()
    }

    fn rate(&self) -> f64 {
        self.config().effective_rate()
    }

    fn random_messages(&self, batch: usize, rng: &mut ChaCha8Rng) -> Array2<u8> {
        Codec::random_messages(self, batch, rng)
    }

    fn hard_candidates(
        &self,
        messages: ArrayView2<'_, u8>,
        snr_db: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Array3<u8>> {
        let half = T::of(0.5);
        Ok(self
            .simulate(messages, snr_db, rng)?
            .mapv(|c| u8::from(c >= half)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixResult {
    pub prefix_l: usize,
    pub trials: u64,
    pub bit_errors: u64,
    pub block_errors: u64,
    pub ber: f64,
    pub bler: f64,
    /// CA only: selections whose status was `CRC_PASS`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crc_pass: Option<u64>,
    /// CA only: `CRC_PASS` selections that differ from the sent word.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undetected: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    #[serde(with = "float_serde")]
    pub snr_db: f64,
    #[serde(with = "float_serde")]
    pub eb_db: f64,
    pub results: Vec<PrefixResult>,
}

impl SnrPoint {
    pub fn prefix(&self, l: usize) -> Option<&PrefixResult> {
        self.results.iter().find(|r| r.prefix_l == l)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub k: usize,
    pub list_size: usize,
    /// Bits per word counted by the BER denominator.
    pub ber_bits: usize,
    pub rate: f64,
    pub seed: u64,
    pub config: EvalConfig,
    /// Codec that produced the report; absent for closed-form baselines.
    #[serde(default)]
    pub codec: Option<CodecConfig>,
    pub points: Vec<SnrPoint>,
}

pub const CSV_HEADER: [&str; 9] = [
    "snr_db",
    "eb_db",
    "prefix_L",
    "trials",
    "bit_errors",
    "block_errors",
    "ber",
    "bler",
    "seed",
];

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("report serialization: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::invalid(format!("report parse: {e}")))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
        for p in &self.points {
            for r in &p.results {
                w.write_record([
                    float_serde::format(p.snr_db),
                    float_serde::format(p.eb_db),
                    r.prefix_l.to_string(),
                    r.trials.to_string(),
                    r.bit_errors.to_string(),
                    r.block_errors.to_string(),
                    r.ber.to_string(),
                    r.bler.to_string(),
                    self.seed.to_string(),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Wall-clock time per SNR point, kept apart from the report so reports
/// stay bit-identical across reruns.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalTiming {
    pub seconds_per_point: Vec<f64>,
    pub total_seconds: f64,
}

/// One selection, for the optional per-trial log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub snr_index: usize,
    pub trial: u64,
    pub prefix_l: usize,
    pub status: Status,
    pub index: usize,
    pub block_error: bool,
}

pub const TRIAL_LOG_HEADER: [&str; 7] = [
    "snr_db",
    "trial",
    "prefix_L",
    "status",
    "index",
    "block_error",
    "seed",
];

struct Counter {
    bit_errors: u64,
    block_errors: u64,
    crc_pass: u64,
    undetected: u64,
}

fn run_point<S: LinkSimulator + ?Sized>(
    sim: &S,
    cfg: &EvalConfig,
    prefixes: &[usize],
    snr_index: usize,
    rate: f64,
    mut log: Option<&mut dyn FnMut(TrialRecord) -> Result<()>>,
) -> Result<SnrPoint> {
    let snr = cfg.snr_db[snr_index];
    let mut data_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "eval-data", snr_index as u64));
    let mut sel_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "eval-select", snr_index as u64));
    let ber_bits = ber_bits(sim, cfg.mode);
    let crc = sim.crc().cloned();
    let mut counters: Vec<Counter> = prefixes
        .iter()
        .map(|_| Counter {
            bit_errors: 0,
            block_errors: 0,
            crc_pass: 0,
            undetected: 0,
        })
        .collect();
    let largest = prefixes.len() - 1;
    let mut trials = 0u64;
    'outer: while trials < cfg.max_trials {
        let b = (cfg.max_trials - trials).min(cfg.batch as u64) as usize;
        let msgs = sim.random_messages(b, &mut data_rng);
        let hard = sim.hard_candidates(msgs.view(), snr, &mut data_rng)?;
        for (u, cand) in msgs.outer_iter().zip(hard.axis_iter(Axis(0))) {
            let u = u.as_slice().expect("standard layout");
            let list = HardCandidateList::new(cand.to_owned())?;
            for (c, &l) in counters.iter_mut().zip(prefixes) {
                let sub = list.prefix(l)?;
                let out = match cfg.mode {
                    EvalMode::Ga => select_ga(&sub, u, &mut sel_rng)?,
                    EvalMode::Ca => select_ca(&sub, crc.as_ref().expect("checked"), &mut sel_rng)?,
                };
                let err = is_block_error(&out, u)?;
                c.block_errors += u64::from(err);
                c.bit_errors += out.chosen[..ber_bits]
                    .iter()
                    .zip(&u[..ber_bits])
                    .filter(|(a, b)| a != b)
                    .count() as u64;
                if out.status == Status::CrcPass {
                    c.crc_pass += 1;
                    c.undetected += u64::from(err);
                }
                if let Some(f) = log.as_mut() {
                    f(TrialRecord {
                        snr_index,
                        trial: trials,
                        prefix_l: l,
                        status: out.status,
                        index: out.index,
                        block_error: err,
                    })?;
                }
            }
            trials += 1;
            if counters[largest].block_errors >= cfg.min_block_errors {
                break 'outer;
            }
        }
    }
    let ca = cfg.mode == EvalMode::Ca;
    let results = counters
        .iter()
        .zip(prefixes)
        .map(|(c, &l)| PrefixResult {
            prefix_l: l,
            trials,
            bit_errors: c.bit_errors,
            block_errors: c.block_errors,
            ber: c.bit_errors as f64 / (trials as f64 * ber_bits as f64),
            bler: c.block_errors as f64 / trials as f64,
            crc_pass: ca.then_some(c.crc_pass),
            undetected: ca.then_some(c.undetected),
        })
        .collect();
    Ok(SnrPoint {
        snr_db: snr,
        eb_db: ebsigma_from_snr(snr, rate)?,
        results,
    })
}

fn ber_bits<S: LinkSimulator + ?Sized>(sim: &S, mode: EvalMode) -> usize {
    match mode {
        EvalMode::Ga => sim.k(),
        EvalMode::Ca => sim.layout().payload_len(sim.k()),
    }
}

/// Runs the configured sweep. SNR points run in parallel unless a trial log
/// is requested, in which case they run in order and each selection is
/// written to `trial_log` as CSV.
pub fn evaluate<S: LinkSimulator + ?Sized>(
    sim: &S,
    cfg: &EvalConfig,
    codec: Option<CodecConfig>,
    trial_log: Option<&Path>,
) -> Result<(EvalReport, EvalTiming)> {
    cfg.validate()?;
    let prefixes = cfg.resolved_prefixes(sim.list_size())?;
    if cfg.mode == EvalMode::Ca {
        let Some(spec) = sim.crc() else {
            return Err(Error::Config(
                "CA evaluation needs a model trained with a CRC-protected message layout".into(),
            ));
        };
        spec.validate_for(sim.k())?;
    }
    if let (Some(want), have) = (&cfg.crc, sim.crc()) {
        if have != Some(want) {
            return Err(Error::Config(format!(
                "evaluation CRC {want} does not match the model's {}",
                have.map_or("none".to_string(), |c| c.to_string())
            )));
        }
    }
    let rate = cfg.rate.unwrap_or_else(|| sim.rate());
    let start = Instant::now();
    let timed = |i: usize,
                 log: Option<&mut dyn FnMut(TrialRecord) -> Result<()>>|
     -> Result<(SnrPoint, f64)> {
        let t = Instant::now();
        let p = run_point(sim, cfg, &prefixes, i, rate, log)?;
        Ok((p, t.elapsed().as_secs_f64()))
    };
    let results: Vec<(SnrPoint, f64)> = match trial_log {
        None => (0..cfg.snr_db.len())
            .into_par_iter()
            .map(|i| timed(i, None))
            .collect::<Result<_>>()?,
        Some(path) => {
            let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
            w.write_record(TRIAL_LOG_HEADER)
                .map_err(|e| csv_err(path, e))?;
            let mut out = Vec::new();
            for i in 0..cfg.snr_db.len() {
                let mut write = |r: TrialRecord| -> Result<()> {
                    w.write_record([
                        float_serde::format(cfg.snr_db[r.snr_index]),
                        r.trial.to_string(),
                        r.prefix_l.to_string(),
                        r.status.to_string(),
                        r.index.to_string(),
                        u8::from(r.block_error).to_string(),
                        cfg.seed.to_string(),
                    ])
                    .map_err(|e| csv_err(path, e))
                };
                out.push(timed(i, Some(&mut write))?);
            }
            w.flush().map_err(|e| Error::io(path, e))?;
            out
        }
    };
    let timing = EvalTiming {
        seconds_per_point: results.iter().map(|r| r.1).collect(),
        total_seconds: start.elapsed().as_secs_f64(),
    };
    let report = EvalReport {
        mode: cfg.mode,
        k: sim.k(),
        list_size: sim.list_size(),
        ber_bits: ber_bits(sim, cfg.mode),
        rate,
        seed: cfg.seed,
        config: cfg.clone(),
        codec,
        points: results.into_iter().map(|r| r.0).collect(),
    };
    Ok((report, timing))
}

/// Evaluates a trained codec; normalization statistics must be frozen.
pub fn evaluate_codec<T: Scalar>(
    codec: &Codec<T>,
    cfg: &EvalConfig,
    trial_log: Option<&Path>,
) -> Result<(EvalReport, EvalTiming)> {
    if codec.norm_stats().is_none() {
        return Err(Error::Config(
            "model has no frozen normalization statistics".into(),
        ));
    }
    evaluate(codec, cfg, Some(codec.config().clone()), trial_log)
}

/// Standard normal upper tail probability.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Closed-form uncoded BPSK over AWGN for `k`-bit words: per-bit error
/// `p = Q(1/sigma)` and `BLER = 1 - (1 - p)^k` at each grid SNR. The
/// `Eb/sigma^2` axis uses rate 1.
pub fn baseline_uncoded(cfg: &EvalConfig, k: usize) -> Result<EvalReport> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    let points = cfg
        .snr_db
        .iter()
        .map(|&snr| {
            let sigma = snr_to_sigma(snr);
            let p = if sigma == 0.0 {
                0.0
            } else {
                q_function(1.0 / sigma)
            };
            let bler = -libm::expm1(k as f64 * libm::log1p(-p));
            Ok(SnrPoint {
                snr_db: snr,
                eb_db: ebsigma_from_snr(snr, 1.0)?,
                results: vec![PrefixResult {
                    prefix_l: 1,
                    trials: 0,
                    bit_errors: 0,
                    block_errors: 0,
                    ber: p,
                    bler,
                    crc_pass: None,
                    undetected: None,
                }],
            })
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport {
        mode: EvalMode::Ga,
        k,
        list_size: 1,
        ber_bits: k,
        rate: 1.0,
        seed: cfg.seed,
        config: cfg.clone(),
        codec: None,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitcodec::attach_crc;
    use rand::Rng;

    /// Candidate rows: row 0 is `u` with probability `1 - p_miss`, else
    /// every row is a fresh random word. Bits pass through at infinite SNR.
    struct Stub {
        k: usize,
        l: usize,
        p_miss: f64,
        crc: Option<CrcSpec>,
    }

    impl LinkSimulator for Stub {
        fn k(&self) -> usize {
            self.k
        }
        fn list_size(&self) -> usize {
            self.l
        }
        fn layout(&self) -> Layout {
            match &self.crc {
                Some(c) => Layout::PayloadCrc {
                    crc_bits: c.degree(),
                },
                None => Layout::Raw,
            }
        }
        fn crc(&self) -> Option<&CrcSpec> {
            self.crc.as_ref()
        }
        fn rate(&self) -> f64 {
            1.0 / 3.0
        }
        fn random_messages(&self, batch: usize, rng: &mut ChaCha8Rng) -> Array2<u8> {
            let z = self.crc.as_ref().map_or(0, |c| c.degree());
            let mut m = Array2::zeros((batch, self.k));
            for mut row in m.outer_iter_mut() {
                let payload: Vec<u8> = (0..self.k - z).map(|_| rng.random_range(0..2u8)).collect();
                let bits = match &self.crc {
                    Some(c) => attach_crc(&payload, c, self.k).unwrap().into_bits(),
                    None => payload,
                };
                row.assign(&ndarray::ArrayView1::from(&bits));
            }
            m
        }
        fn hard_candidates(
            &self,
            m: ArrayView2<'_, u8>,
            snr_db: f64,
            rng: &mut ChaCha8Rng,
        ) -> Result<Array3<u8>> {
            let mut out = Array3::zeros((m.nrows(), self.l, self.k));
            for (b, u) in m.outer_iter().enumerate() {
                let miss = snr_db.is_finite() && rng.random_bool(self.p_miss);
                for r in 0..self.l {
                    for j in 0..self.k {
                        out[[b, r, j]] = if !miss && r == 0 {
                            u[j]
                        } else {
                            rng.random_range(0..2u8)
                        };
                    }
                }
            }
            Ok(out)
        }
    }

    fn stub(p: f64) -> Stub {
        Stub {
            k: 16,
            l: 4,
            p_miss: p,
            crc: None,
        }
    }

    #[test]
    fn noiseless_passthrough_has_zero_bler() {
        let mut cfg = EvalConfig::new(vec![f64::INFINITY], EvalMode::Ga);
        cfg.max_trials = 500;
        let (r, _) = evaluate(&stub(0.5), &cfg, None, None).unwrap();
        for res in &r.points[0].results {
            assert_eq!(res.block_errors, 0);
            assert_eq!(res.bler, 0.0);
            assert_eq!(res.trials, 500);
        }
        assert_eq!(r.points[0].eb_db, f64::INFINITY);
        let json = r.to_json().unwrap();
        assert_eq!(EvalReport::from_json(&json).unwrap(), r);
    }

    #[test]
    fn bler_estimate_is_consistent() {
        let p = 0.2;
        let mut cfg = EvalConfig::new(vec![0.0], EvalMode::Ga);
        cfg.min_block_errors = u64::MAX;
        cfg.max_trials = 20_000;
        cfg.prefixes = vec![1];
        let (r, _) = evaluate(&stub(p), &cfg, None, None).unwrap();
        let res = &r.points[0].results[0];
        let sd = (p * (1.0 - p) / res.trials as f64).sqrt();
        assert!((res.bler - p).abs() < 3.0 * sd, "bler {} vs {p}", res.bler);
    }

    #[test]
    fn stops_at_error_target_and_arithmetic_recomputes() {
        let mut cfg = EvalConfig::new(vec![0.0, 1.0], EvalMode::Ga);
        cfg.min_block_errors = 25;
        cfg.batch = 7;
        let (r, t) = evaluate(&stub(0.3), &cfg, None, None).unwrap();
        assert_eq!(t.seconds_per_point.len(), 2);
        for pt in &r.points {
            let last = pt.results.last().unwrap();
            assert_eq!(last.block_errors, 25);
            for res in &pt.results {
                assert_eq!(res.bler, res.block_errors as f64 / res.trials as f64);
                assert_eq!(
                    res.ber,
                    res.bit_errors as f64 / (res.trials as f64 * r.ber_bits as f64)
                );
            }
            // prefix nesting
            for w in pt.results.windows(2) {
                assert!(w[0].block_errors >= w[1].block_errors);
            }
        }
    }

    #[test]
    fn deterministic_and_parallel_equals_sequential() {
        let mut cfg = EvalConfig::new(vec![0.0, 1.0, 2.0], EvalMode::Ga);
        cfg.min_block_errors = 40;
        cfg.seed = 9;
        let s = stub(0.25);
        let (a, _) = evaluate(&s, &cfg, None, None).unwrap();
        let (b, _) = evaluate(&s, &cfg, None, None).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("trials.csv");
        let (c, _) = evaluate(&s, &cfg, None, Some(&log)).unwrap();
        assert_eq!(a, c);
        let text = std::fs::read_to_string(&log).unwrap();
        assert!(text.starts_with("snr_db,trial,prefix_L,status,index,block_error,seed"));
        assert!(text.contains("MISS_RANDOM") && text.contains("HIT"));
    }

    #[test]
    fn ca_counts_payload_bits_and_dominates_ga() {
        let s = Stub {
            k: 24,
            l: 4,
            p_miss: 0.3,
            crc: Some(CrcSpec::crc8_default()),
        };
        let mut cfg = EvalConfig::new(vec![0.0], EvalMode::Ca);
        cfg.min_block_errors = u64::MAX;
        cfg.max_trials = 3000;
        let (ca, _) = evaluate(&s, &cfg, None, None).unwrap();
        assert_eq!(ca.ber_bits, 16);
        cfg.mode = EvalMode::Ga;
        let (ga, _) = evaluate(&s, &cfg, None, None).unwrap();
        assert_eq!(ga.ber_bits, 24);
        for (c, g) in ca.points[0].results.iter().zip(&ga.points[0].results) {
            assert_eq!(c.trials, g.trials);
            assert!(c.block_errors >= g.block_errors);
            assert!(c.undetected.unwrap() <= c.crc_pass.unwrap());
        }
    }

    #[test]
    fn config_errors() {
        let cfg = EvalConfig::new(vec![0.0], EvalMode::Ca);
        assert!(matches!(
            evaluate(&stub(0.1), &cfg, None, None),
            Err(Error::Config(_))
        ));
        let mut cfg = EvalConfig::new(vec![0.0], EvalMode::Ga);
        cfg.prefixes = vec![5];
        assert!(matches!(
            evaluate(&stub(0.1), &cfg, None, None),
            Err(Error::Config(_))
        ));
        cfg.prefixes = vec![];
        cfg.crc = Some(CrcSpec::crc8_default());
        assert!(matches!(
            evaluate(&stub(0.1), &cfg, None, None),
            Err(Error::Config(_))
        ));
        assert!(EvalConfig::new(vec![], EvalMode::Ga).validate().is_err());
        let mut c = EvalConfig::new(vec![1.0], EvalMode::Ga);
        c.min_block_errors = 0;
        assert!(c.validate().is_err());
        // Z >= K
        let s = Stub {
            k: 8,
            l: 2,
            p_miss: 0.0,
            crc: Some(CrcSpec::crc8_default()),
        };
        assert!(matches!(
            evaluate(&s, &EvalConfig::new(vec![0.0], EvalMode::Ca), None, None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn uncoded_baseline_closed_form() {
        assert!((q_function(1.0) - 0.158_655_253_931_457_05).abs() < 1e-15);
        let r =
            baseline_uncoded(&EvalConfig::new(vec![0.0, f64::INFINITY], EvalMode::Ga), 1).unwrap();
        assert!((r.points[0].results[0].ber - 0.158_655_253_931_457_05).abs() < 1e-15);
        assert!((r.points[0].results[0].bler - r.points[0].results[0].ber).abs() < 1e-15);
        assert_eq!(r.points[1].results[0].bler, 0.0);
        let r = baseline_uncoded(&EvalConfig::new(vec![0.0], EvalMode::Ga), 16).unwrap();
        let p: f64 = 0.158_655_253_931_457_05;
        assert!((r.points[0].results[0].bler - (1.0 - (1.0 - p).powi(16))).abs() < 1e-14);
    }

    #[test]
    fn csv_columns() {
        let mut cfg = EvalConfig::new(vec![0.0], EvalMode::Ga);
        cfg.max_trials = 10;
        let (r, _) = evaluate(&stub(0.5), &cfg, None, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        r.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(lines.count(), 4);
    }
}
