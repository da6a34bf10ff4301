//! Message words and the CRC used for CRC-aided list selection.
//!
//! Bit convention: bit 0 of a word is the coefficient of the highest power
//! (MSB-first long division). The CRC is the plain remainder of
//! `payload(x) * x^Z` modulo `g(x)`, with no initial value or final XOR.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported CRC degree; the division register is a `u64`.
pub const MAX_CRC_DEGREE: usize = 64;

/// Generator polynomial `g(x) = g_0 + g_1 x + ... + g_Z x^Z`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CrcSpec {
    /// `g_0..=g_Z`, ascending powers.
    coeffs: Vec<u8>,
}

impl CrcSpec {
    /// Builds a spec from ascending-power coefficients `g_0..=g_Z`.
    pub fn new(coeffs: Vec<u8>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::invalid("CRC polynomial needs degree >= 1"));
        }
        if coeffs.len() - 1 > MAX_CRC_DEGREE {
            return Err(Error::invalid(format!(
                "CRC degree {} exceeds {MAX_CRC_DEGREE}",
                coeffs.len() - 1
            )));
        }
        if coeffs.iter().any(|&c| c > 1) {
            return Err(Error::invalid("CRC coefficients must be 0 or 1"));
        }
        if coeffs[0] != 1 || coeffs[coeffs.len() - 1] != 1 {
            return Err(Error::invalid("CRC polynomial needs g_0 = 1 and g_Z = 1"));
        }
        Ok(CrcSpec { coeffs })
    }

    /// `1 + x^2 + x^4 + x^6 + x^7 + x^8`, the 8-bit CRC used with `K = 100`.
    pub fn crc8_default() -> Self {
        CrcSpec::new(vec![1, 0, 1, 0, 1, 0, 1, 1, 1]).expect("valid polynomial")
    }

    /// Degree `Z`, i.e. the number of CRC bits.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coefficients(&self) -> &[u8] {
        &self.coeffs
    }

    /// Checks `Z < K` for a message length `K`.
    pub fn validate_for(&self, k: usize) -> Result<()> {
        if self.degree() >= k {
            return Err(Error::Config(format!(
                "CRC degree {} must be smaller than message length {k}",
                self.degree()
            )));
        }
        Ok(())
    }

    /// `g_0..g_{Z-1}` in register order: bit `i` holds the coefficient of `x^i`.
    fn low_mask(&self) -> u64 {
        self.coeffs[..self.degree()]
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &c)| m | (u64::from(c) << i))
    }

    /// Remainder of `bits(x) * x^Z mod g(x)` as a register value.
    fn remainder(&self, bits: &[u8]) -> u64 {
        let z = self.degree();
        let top = 1u64 << (z - 1);
        let mask = if z == 64 { u64::MAX } else { (1u64 << z) - 1 };
        let poly = self.low_mask();
        let mut reg = 0u64;
        for &b in bits {
            let feedback = (u64::from(b) & 1) ^ u64::from(reg & top != 0);
            reg = (reg << 1) & mask;
            if feedback != 0 {
                reg ^= poly;
            }
        }
        reg
    }
}

impl Default for CrcSpec {
    fn default() -> Self {
        CrcSpec::crc8_default()
    }
}

impl fmt::Display for CrcSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &c in &self.coeffs {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for CrcSpec {
    type Err = Error;

    /// Parses an ascending-power bit string such as `"101010111"`.
    fn from_str(s: &str) -> Result<Self> {
        CrcSpec::new(parse_bits(s)?)
    }
}

impl Serialize for CrcSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CrcSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a string of `0`/`1` characters.
pub fn parse_bits(s: &str) -> Result<Vec<u8>> {
    let s = s.trim();
    if s.is_empty() {
        return Err(Error::invalid("empty bit string"));
    }
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::invalid(format!("invalid bit character {other:?}"))),
        })
        .collect()
}

/// Parses a hexadecimal string, 4 bits per digit, most significant first.
pub fn parse_hex_bits(s: &str) -> Result<Vec<u8>> {
    let s = s.trim().trim_start_matches("0x").trim_start_matches("0X");
    if s.is_empty() {
        return Err(Error::invalid("empty hex string"));
    }
    let mut bits = Vec::with_capacity(4 * s.len());
    for c in s.chars() {
        let v = c
            .to_digit(16)
            .ok_or_else(|| Error::invalid(format!("invalid hex digit {c:?}")))?;
        bits.extend((0..4).rev().map(|i| ((v >> i) & 1) as u8));
    }
    Ok(bits)
}

pub fn format_bits(bits: &[u8]) -> String {
    bits.iter()
        .map(|&b| if b == 0 { '0' } else { '1' })
        .collect()
}

fn check_binary(bits: &[u8]) -> Result<()> {
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::invalid("bit vector entries must be 0 or 1"));
    }
    Ok(())
}

/// Computes the `Z` CRC bits of a payload.
pub fn crc_compute(payload: &[u8], spec: &CrcSpec) -> Result<Vec<u8>> {
    if payload.is_empty() {
        return Err(Error::invalid("CRC payload must be non-empty"));
    }
    check_binary(payload)?;
    let z = spec.degree();
    let reg = spec.remainder(payload);
    Ok((0..z).rev().map(|i| ((reg >> i) & 1) as u8).collect())
}

/// True iff `word(x)` is divisible by `g(x)`, i.e. the trailing `Z` bits are
/// the CRC of the leading ones.
pub fn crc_check(word: &[u8], spec: &CrcSpec) -> Result<bool> {
    if word.len() < spec.degree() + 1 {
        return Err(Error::invalid(format!(
            "word of length {} is too short for a degree-{} CRC",
            word.len(),
            spec.degree()
        )));
    }
    check_binary(word)?;
    // gcd(x^Z, g) = 1 because g_0 = 1, so word * x^Z = 0 mod g iff word = 0 mod g.
    Ok(spec.remainder(word) == 0)
}

/// Appends the CRC to a payload of length `k - Z`.
pub fn attach_crc(payload: &[u8], spec: &CrcSpec, k: usize) -> Result<MessageWord> {
    spec.validate_for(k)
        .map_err(|e| Error::invalid(e.to_string()))?;
    let z = spec.degree();
    if payload.len() != k - z {
        return Err(Error::invalid(format!(
            "payload length {} != K - Z = {}",
            payload.len(),
            k - z
        )));
    }
    let mut bits = payload.to_vec();
    bits.extend(crc_compute(payload, spec)?);
    Ok(MessageWord {
        bits,
        layout: Layout::PayloadCrc { crc_bits: z },
    })
}

/// How the bits of a message word are used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// All `K` bits carry information.
    Raw,
    /// First `K - Z` bits are payload, last `Z` bits are its CRC.
    PayloadCrc { crc_bits: usize },
}

impl Layout {
    pub fn payload_len(&self, k: usize) -> usize {
        match *self {
            Layout::Raw => k,
            Layout::PayloadCrc { crc_bits } => k - crc_bits,
        }
    }
}

/// A length-`K` binary message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageWord {
    bits: Vec<u8>,
    layout: Layout,
}

impl MessageWord {
    pub fn raw(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::invalid("message word must be non-empty"));
        }
        check_binary(&bits)?;
        Ok(MessageWord {
            bits,
            layout: Layout::Raw,
        })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn payload(&self) -> &[u8] {
        &self.bits[..self.layout.payload_len(self.bits.len())]
    }

    pub fn into_bits(self) -> Vec<u8> {
        self.bits
    }
}
