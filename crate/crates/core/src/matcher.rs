//! Masked Hamming distance between iris codes and the accept/reject rule.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::codec::IrisCode;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchError {
    #[error("codes differ in shape: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("no jointly valid bits to compare")]
    EmptyJointMask,
    #[error("location ({0}, {1}) is outside the code")]
    OutOfBounds(usize, usize),
    #[error("location ({0}, {1}) appears twice")]
    Duplicate(usize, usize),
}

/// The bit positions `v` a scenario-2/3 verifier compares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitLocationSet {
    locations: Vec<(usize, usize)>,
}

pub const DEFAULT_SUBSET_SIZE: usize = 1024;

impl BitLocationSet {
    pub fn new(locations: Vec<(usize, usize)>, rows: usize, cols: usize) -> Result<Self, MatchError> {
        let mut seen = vec![false; rows * cols];
        for &(r, c) in &locations {
            if r >= rows || c >= cols {
                return Err(MatchError::OutOfBounds(r, c));
            }
            if std::mem::replace(&mut seen[r * cols + c], true) {
                return Err(MatchError::Duplicate(r, c));
            }
        }
        Ok(Self { locations })
    }

    /// `count` distinct locations drawn uniformly (capped at `rows·cols`).
    pub fn random<R: Rng + ?Sized>(rng: &mut R, count: usize, rows: usize, cols: usize) -> Self {
        let total = rows * cols;
        let mut picks = index::sample(rng, total, count.min(total)).into_vec();
        picks.sort_unstable();
        Self {
            locations: picks.into_iter().map(|i| (i / cols, i % cols)).collect(),
        }
    }

    pub fn locations(&self) -> &[(usize, usize)] {
        &self.locations
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Flat indices into a `cols`-wide code.
    pub fn flat_indices(&self, cols: usize) -> impl Iterator<Item = usize> + '_ {
        self.locations.iter().map(move |&(r, c)| r * cols + c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HammingScore {
    pub hd: f64,
    pub compared_bits: usize,
}

fn check_shapes(a: &IrisCode, b: &IrisCode) -> Result<(), MatchError> {
    if a.bits.dims() != b.bits.dims() {
        return Err(MatchError::ShapeMismatch(a.bits.dims(), b.bits.dims()));
    }
    Ok(())
}

fn score(differing: usize, compared: usize) -> Result<HammingScore, MatchError> {
    if compared == 0 {
        return Err(MatchError::EmptyJointMask);
    }
    Ok(HammingScore {
        hd: differing as f64 / compared as f64,
        compared_bits: compared,
    })
}

/// Fraction of disagreeing bits among bits valid in both codes.
pub fn masked_hamming(a: &IrisCode, b: &IrisCode) -> Result<HammingScore, MatchError> {
    check_shapes(a, b)?;
    let (mut diff, mut compared) = (0, 0);
    let iter = a
        .bits
        .bits()
        .iter()
        .zip(b.bits.bits())
        .zip(a.mask.bits().iter().zip(b.mask.bits()));
    for ((x, y), (ma, mb)) in iter {
        if *ma && *mb {
            compared += 1;
            diff += usize::from(x != y);
        }
    }
    score(diff, compared)
}

/// Hamming fraction over the locations of `v` that are valid in both codes.
pub fn subset_hamming(
    a: &IrisCode,
    b: &IrisCode,
    v: &BitLocationSet,
) -> Result<HammingScore, MatchError> {
    check_shapes(a, b)?;
    let (rows, cols) = a.bits.dims();
    let (mut diff, mut compared) = (0, 0);
    for &(r, c) in v.locations() {
        if r >= rows || c >= cols {
            return Err(MatchError::OutOfBounds(r, c));
        }
        let i = r * cols + c;
        if a.mask.bits()[i] && b.mask.bits()[i] {
            compared += 1;
            diff += usize::from(a.bits.bits()[i] != b.bits.bits()[i]);
        }
    }
    score(diff, compared)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchDecision {
    pub hd: f64,
    pub threshold: f64,
    pub accepted: bool,
    pub compared_bits: usize,
}

/// Accepts strictly below the threshold.
pub fn verify(score: HammingScore, threshold: f64) -> MatchDecision {
    MatchDecision {
        hd: score.hd,
        threshold,
        accepted: score.hd < threshold,
        compared_bits: score.compared_bits,
    }
}

/// Threshold giving a false-match rate near 1e-6 for independent codes.
pub const VERIFICATION_THRESHOLD: f64 = 0.32;
