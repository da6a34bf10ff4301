//! Reducing a candidate list to one decoded word.
//!
//! Genie-aided (GA) selection returns the transmitted word whenever it is a
//! row of the hardened list and a uniformly random row otherwise. CRC-aided
//! (CA) selection picks uniformly among the rows that pass the CRC, falling
//! back to a uniformly random row when none does.

use std::fmt;

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitcodec::{crc_check, CrcSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Selection rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ga,
    Ca,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ga => "ga",
            Mode::Ca => "ca",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Hit,
    MissRandom,
    CrcPass,
    CrcNonePassed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Hit => "HIT",
            Status::MissRandom => "MISS_RANDOM",
            Status::CrcPass => "CRC_PASS",
            Status::CrcNonePassed => "CRC_NONE_PASSED",
        })
    }
}

/// `L x K` bit matrix of rounded candidates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HardCandidateList {
    rows: Array2<u8>,
}

impl HardCandidateList {
    pub fn new(rows: Array2<u8>) -> Result<Self> {
        if rows.nrows() == 0 {
            return Err(Error::invalid("candidate list must have at least one row"));
        }
        if rows.iter().any(|&b| b > 1) {
            return Err(Error::invalid("hard candidates must be bits"));
        }
        Ok(HardCandidateList { rows })
    }

    pub fn rows(&self) -> ArrayView2<'_, u8> {
        self.rows.view()
    }

    pub fn list_size(&self) -> usize {
        self.rows.nrows()
    }

    pub fn k(&self) -> usize {
        self.rows.ncols()
    }

    /// The first `n` candidates.
    pub fn prefix(&self, n: usize) -> Result<HardCandidateList> {
        if n == 0 || n > self.list_size() {
            return Err(Error::invalid(format!(
                "prefix {n} outside 1..={}",
                self.list_size()
            )));
        }
        Ok(HardCandidateList {
            rows: self.rows.slice(s![..n, ..]).to_owned(),
        })
    }

    /// Index of the first row equal to `u`.
    pub fn position(&self, u: &[u8]) -> Option<usize> {
        let u = ArrayView1::from(u);
        self.rows.outer_iter().position(|r| r == u)
    }
}

/// Rounds soft candidates at 0.5; exactly 0.5 becomes 1.
pub fn harden<T: Scalar>(candidates: ArrayView2<'_, T>) -> HardCandidateList {
    let half = T::of(0.5);
    HardCandidateList {
        rows: candidates.mapv(|c| u8::from(c >= half)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelectionOutcome {
    pub chosen: Vec<u8>,
    pub mode: Mode,
    pub status: Status,
    /// Zero-based row index of the chosen candidate.
    pub index: usize,
}

fn check_k(list: &HardCandidateList, k: usize) -> Result<()> {
    if list.k() != k {
        return Err(Error::invalid(format!(
            "message length {k} != candidate length {}",
            list.k()
        )));
    }
    Ok(())
}

fn random_row<R: Rng + ?Sized>(list: &HardCandidateList, rng: &mut R) -> (usize, Vec<u8>) {
    let r = rng.random_range(0..list.list_size());
    (r, list.rows.row(r).to_vec())
}

/// Genie-aided selection.
pub fn select_ga<R: Rng + ?Sized>(
    list: &HardCandidateList,
    u: &[u8],
    rng: &mut R,
) -> Result<SelectionOutcome> {
    check_k(list, u.len())?;
    Ok(match list.position(u) {
        Some(index) => SelectionOutcome {
            chosen: u.to_vec(),
            mode: Mode::Ga,
            status: Status::Hit,
            index,
        },
        None => {
            let (index, chosen) = random_row(list, rng);
            SelectionOutcome {
                chosen,
                mode: Mode::Ga,
                status: Status::MissRandom,
                index,
            }
        }
    })
}

/// CRC-aided selection.
pub fn select_ca<R: Rng + ?Sized>(
    list: &HardCandidateList,
    spec: &CrcSpec,
    rng: &mut R,
) -> Result<SelectionOutcome> {
    spec.validate_for(list.k())?;
    let mut passing = Vec::with_capacity(list.list_size());
    for (i, row) in list.rows.outer_iter().enumerate() {
        if crc_check(row.as_slice().expect("standard layout"), spec)? {
            passing.push(i);
        }
    }
    Ok(if passing.is_empty() {
        let (index, chosen) = random_row(list, rng);
        SelectionOutcome {
            chosen,
            mode: Mode::Ca,
            status: Status::CrcNonePassed,
            index,
        }
    } else {
        let index = passing[rng.random_range(0..passing.len())];
        SelectionOutcome {
            chosen: list.rows.row(index).to_vec(),
            mode: Mode::Ca,
            status: Status::CrcPass,
            index,
        }
    })
}

/// GA: the word is absent from the list. CA: the chosen word differs from `u`.
pub fn is_block_error(outcome: &SelectionOutcome, u: &[u8]) -> Result<bool> {
    if outcome.chosen.len() != u.len() {
        return Err(Error::invalid("outcome and message lengths differ"));
    }
    Ok(match outcome.mode {
        Mode::Ga => outcome.status != Status::Hit,
        Mode::Ca => outcome.chosen != u,
    })
}
