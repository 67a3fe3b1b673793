//! Seeded synthetic normalized irises with genuine/impostor code separation.
//!
//! An eye's texture is a sum of sinusoids with integer angular cycle counts
//! (so it wraps cleanly around the angular axis), wavelengths in [4, 64] px
//! and slow radial drift. Samples of the same eye add an independent texture
//! of the same kind scaled by the noise level, faint white sensor noise, a
//! smooth illumination ramp and eyelid-like occlusions at the outer-radius
//! rows.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{encode, FilterBank, IrisSample};
use crate::image::{BinaryImage, GrayImage};
use crate::io::netpbm::quantize;
use crate::matcher::{masked_hamming, VERIFICATION_THRESHOLD};
use crate::surrogate::TrainingPair;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("corpus needs at least one identity, eye and sample")]
    EmptyCorpus,
    #[error("calibration failed: {0}")]
    Calibration(Box<CorpusStats>),
    #[error("invalid generator setting: {0}")]
    Invalid(String),
}

/// Mixes `parent`, `tag` and `index` into an independent child seed.
pub fn derive_seed(parent: u64, tag: u64, index: u64) -> u64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&parent.to_le_bytes());
    key[8..16].copy_from_slice(&tag.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key).next_u64()
}

const TAG_EYE: u64 = 1;
const TAG_SAMPLE: u64 = 2;
const TAG_PAIRS: u64 = 3;

pub const TEXTURE_COMPONENTS: usize = 48;
pub const MIN_WAVELENGTH: f64 = 4.0;
pub const MAX_WAVELENGTH: f64 = 64.0;
pub const CONTRAST_RANGE: (f64, f64) = (0.08, 0.14);
/// Occlusions never cover more than this fraction of the image.
pub const MAX_OCCLUSION: f64 = 0.3;
pub const EYELID_LEVEL: f64 = 0.25;
/// Absolute std of the per-pixel noise added whenever the noise level is nonzero.
pub const SENSOR_NOISE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    /// Whole cycles around the angular axis.
    pub angular_cycles: u32,
    /// Cycles per pixel along the radial axis.
    pub radial_frequency: f64,
    pub phase: f64,
}

/// Texture of one eye.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityParams {
    pub seed: u64,
    pub components: Vec<Sinusoid>,
    pub contrast: f64,
}

impl IdentityParams {
    pub fn from_seed(seed: u64, width: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (MIN_WAVELENGTH.ln(), MAX_WAVELENGTH.min(width as f64).ln());
        let components = (0..TEXTURE_COMPONENTS)
            .map(|_| {
                let lambda = rng.random_range(lo..=hi).exp();
                Sinusoid {
                    amplitude: rng.random_range(0.5..1.0),
                    angular_cycles: ((width as f64 / lambda).round() as u32).max(1),
                    radial_frequency: rng.random_range(-1.0 / 16.0..1.0 / 16.0),
                    phase: rng.random_range(0.0..2.0 * PI),
                }
            })
            .collect();
        Self {
            seed,
            components,
            contrast: rng.random_range(CONTRAST_RANGE.0..CONTRAST_RANGE.1),
        }
    }

    /// Zero-mean, unit-variance texture on an `h × w` grid.
    pub fn texture(&self, height: usize, width: usize) -> GrayImage {
        let mut img = GrayImage::from_fn(height, width, |r, c| {
            self.components
                .iter()
                .map(|s| {
                    let arg = 2.0 * PI * (s.angular_cycles as f64 * c as f64 / width as f64
                        + s.radial_frequency * r as f64)
                        + s.phase;
                    s.amplitude * arg.cos()
                })
                .sum()
        });
        let n = img.data().len() as f64;
        let mean = img.data().iter().sum::<f64>() / n;
        let std = (img.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let std = if std > 0.0 { std } else { 1.0 };
        img.data_mut().iter_mut().for_each(|v| *v = (*v - mean) / std);
        img
    }
}

/// Eyelid-like cutout hanging from the last (outer-radius) row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionArc {
    pub center_col: f64,
    pub half_width: f64,
    /// Rows covered at the arc's apex.
    pub depth: f64,
}

impl OcclusionArc {
    fn covers(&self, r: usize, c: usize, height: usize, width: usize) -> bool {
        let w = width as f64;
        let mut dc = (c as f64 - self.center_col).rem_euclid(w);
        if dc > w / 2.0 {
            dc = w - dc;
        }
        if dc >= self.half_width {
            return false;
        }
        let t = dc / self.half_width;
        let reach = self.depth * (1.0 - t * t).sqrt();
        ((height - 1 - r) as f64) < reach
    }
}

/// Per-sample nuisance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleNoise {
    pub seed: u64,
    /// Std of the additive sample texture relative to the eye's texture.
    pub level: f64,
    /// Intensity change from the first to the last row.
    pub radial_ramp: f64,
    /// Amplitude and phase of a one-cycle angular illumination swing.
    pub angular_swing: (f64, f64),
    pub occlusions: Vec<OcclusionArc>,
}

impl SampleNoise {
    /// No noise, no illumination change, no occlusion.
    pub fn none() -> Self {
        Self {
            seed: 0,
            level: 0.0,
            radial_ramp: 0.0,
            angular_swing: (0.0, 0.0),
            occlusions: Vec::new(),
        }
    }

    pub fn from_seed(seed: u64, level: f64, height: usize, width: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let radial_ramp = rng.random_range(-0.06..0.06);
        let angular_swing = (rng.random_range(0.0..0.03), rng.random_range(0.0..2.0 * PI));
        let count = rng.random_range(0..=2);
        let mut occlusions: Vec<OcclusionArc> = (0..count)
            .map(|_| OcclusionArc {
                center_col: rng.random_range(0.0..width as f64),
                half_width: rng.random_range(0.05..0.2) * width as f64,
                depth: rng.random_range(0.15..0.5) * height as f64,
            })
            .collect();
        // shrink until the occluded area respects the cap
        while occluded_fraction(&occlusions, height, width) > MAX_OCCLUSION {
            occlusions.iter_mut().for_each(|a| a.depth *= 0.8);
        }
        Self {
            seed,
            level,
            radial_ramp,
            angular_swing,
            occlusions,
        }
    }
}

fn occlusion_mask(arcs: &[OcclusionArc], height: usize, width: usize) -> BinaryImage {
    BinaryImage::from_fn(height, width, |r, c| {
        !arcs.iter().any(|a| a.covers(r, c, height, width))
    })
}

fn occluded_fraction(arcs: &[OcclusionArc], height: usize, width: usize) -> f64 {
    let mask = occlusion_mask(arcs, height, width);
    1.0 - mask.count_ones() as f64 / (height * width) as f64
}

/// Deterministic in `(id, noise)`.
pub fn render_sample(id: &IdentityParams, noise: &SampleNoise, height: usize, width: usize) -> IrisSample {
    let texture = id.texture(height, width);
    let perturbation = (noise.level > 0.0).then(|| {
        IdentityParams::from_seed(derive_seed(noise.seed, TAG_SAMPLE, 0), width).texture(height, width)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mask = occlusion_mask(&noise.occlusions, height, width);
    let (swing, swing_phase) = noise.angular_swing;
    let iris = GrayImage::from_fn(height, width, |r, c| {
        let sensor = if noise.level > 0.0 {
            SENSOR_NOISE * normal.sample(&mut rng)
        } else {
            0.0
        };
        if !mask.get(r, c) {
            return (EYELID_LEVEL + sensor).clamp(0.0, 1.0);
        }
        let n = perturbation.as_ref().map_or(0.0, |p| noise.level * p.get(r, c));
        let ramp = if height > 1 {
            noise.radial_ramp * (r as f64 / (height - 1) as f64 - 0.5)
        } else {
            0.0
        };
        let angle = 2.0 * PI * c as f64 / width as f64 + swing_phase;
        let v = 0.5 + id.contrast * (texture.get(r, c) + n) + ramp + swing * angle.cos() + sensor;
        v.clamp(0.0, 1.0)
    });
    IrisSample { iris, mask }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub identities: usize,
    /// 1 or 2; each eye has its own texture.
    pub eyes: usize,
    pub samples_per_eye: usize,
    pub noise_level: f64,
    pub seed: u64,
}

/// Bisection result for a genuine mean of 0.175 on the desk corpus and bank.
pub const DEFAULT_NOISE_LEVEL: f64 = 0.42;

impl SynthConfig {
    /// 100 identities × 2 eyes × 5 samples at 16×128.
    pub fn desk() -> Self {
        Self {
            height: 16,
            width: 128,
            identities: 100,
            eyes: 2,
            samples_per_eye: 5,
            noise_level: DEFAULT_NOISE_LEVEL,
            seed: 2019,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.identities == 0 || self.eyes == 0 || self.samples_per_eye == 0 {
            return Err(SynthError::EmptyCorpus);
        }
        if self.eyes > 2 {
            return Err(SynthError::Invalid(format!("{} eyes per identity", self.eyes)));
        }
        if self.height == 0 || self.width == 0 {
            return Err(SynthError::Invalid("zero image extent".into()));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(SynthError::Invalid(format!("noise level {}", self.noise_level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Eye {
    Left,
    Right,
}

impl Eye {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Eye::Left),
            1 => Some(Eye::Right),
            _ => None,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Eye::Left => "L",
            Eye::Right => "R",
        }
    }
}

impl std::str::FromStr for Eye {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "L" => Ok(Eye::Left),
            "R" => Ok(Eye::Right),
            other => Err(format!("unknown eye `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusRecord {
    pub identity: usize,
    pub eye: Eye,
    pub sample: usize,
    pub pair: TrainingPair,
}

impl CorpusRecord {
    pub fn same_eye(&self, other: &CorpusRecord) -> bool {
        self.identity == other.identity && self.eye == other.eye
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusStats {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub genuine_mean: f64,
    pub impostor_mean: f64,
    /// Genuine pairs rejected at the verification threshold.
    pub fnmr: f64,
    /// Impostor pairs accepted at the verification threshold.
    pub fmr: f64,
}

impl CorpusStats {
    pub fn overlap(&self) -> f64 {
        self.fnmr + self.fmr
    }

    /// Genuine mean in [0.10, 0.25], impostor mean in [0.45, 0.55], overlap < 5%.
    pub fn check(&self) -> Result<(), SynthError> {
        let ok = (0.10..=0.25).contains(&self.genuine_mean)
            && (0.45..=0.55).contains(&self.impostor_mean)
            && self.overlap() < 0.05;
        if ok {
            Ok(())
        } else {
            Err(SynthError::Calibration(Box::new(self.clone())))
        }
    }
}

impl std::fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "genuine mean {:.4} over {} pairs, impostor mean {:.4} over {} pairs, FNMR {:.4}, FMR {:.4}",
            self.genuine_mean,
            self.genuine.len(),
            self.impostor_mean,
            self.impostor.len(),
            self.fnmr,
            self.fmr
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<CorpusRecord>,
}

/// Impostor pairs are subsampled to at most this many.
pub const MAX_IMPOSTOR_PAIRS: usize = 20_000;

/// Renders, quantizes to 16 bits and encodes every sample. Records are ordered by identity, eye,
/// sample. Does not run the calibration check; see [`Corpus::stats`].
pub fn generate_corpus(config: &SynthConfig, bank: &FilterBank) -> Result<Corpus, SynthError> {
    config.validate()?;
    let (h, w) = (config.height, config.width);
    let keys: Vec<(usize, usize, usize)> = (0..config.identities)
        .flat_map(|id| {
            (0..config.eyes).flat_map(move |e| (0..config.samples_per_eye).map(move |s| (id, e, s)))
        })
        .collect();
    let records = keys
        .into_par_iter()
        .map(|(id, e, s)| {
            let eye_seed = derive_seed(config.seed, TAG_EYE, (id * 2 + e) as u64);
            let params = IdentityParams::from_seed(eye_seed, w);
            let noise = SampleNoise::from_seed(
                derive_seed(eye_seed, TAG_SAMPLE, s as u64),
                config.noise_level,
                h,
                w,
            );
            let mut sample = render_sample(&params, &noise, h, w);
            // stored irises are 16-bit; encode what a reload will see
            sample.iris = quantize(&sample.iris);
            let code = encode(&sample, bank);
            CorpusRecord {
                identity: id,
                eye: Eye::from_index(e).expect("at most two eyes"),
                sample: s,
                pair: TrainingPair { sample, code },
            }
        })
        .collect();
    Ok(Corpus { records })
}

impl Corpus {
    pub fn find(&self, identity: usize, eye: Eye, sample: usize) -> Option<&CorpusRecord> {
        self.records
            .iter()
            .find(|r| r.identity == identity && r.eye == eye && r.sample == sample)
    }

    /// Genuine and impostor masked-HD distributions. Pairs with no jointly
    /// valid bits are left out.
    pub fn stats(&self) -> CorpusStats {
        let n = self.records.len();
        let mut genuine_pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.records[i].same_eye(&self.records[j]) {
                    genuine_pairs.push((i, j));
                }
            }
        }
        let impostor_total = n * n.saturating_sub(1) / 2 - genuine_pairs.len();
        let impostor_pairs: Vec<(usize, usize)> = if impostor_total <= MAX_IMPOSTOR_PAIRS {
            (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| !self.records[i].same_eye(&self.records[j]))
                .collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(n as u64, TAG_PAIRS, 0));
            let mut picked = Vec::with_capacity(MAX_IMPOSTOR_PAIRS);
            while picked.len() < MAX_IMPOSTOR_PAIRS {
                let i = rng.random_range(0..n);
                let j = rng.random_range(0..n);
                if i != j && !self.records[i].same_eye(&self.records[j]) {
                    picked.push((i.min(j), i.max(j)));
                }
            }
            picked
        };
        let hd = |pairs: &[(usize, usize)]| -> Vec<f64> {
            pairs
                .par_iter()
                .filter_map(|&(i, j)| {
                    masked_hamming(&self.records[i].pair.code, &self.records[j].pair.code)
                        .ok()
                        .map(|s| s.hd)
                })
                .collect()
        };
        let genuine = hd(&genuine_pairs);
        let impostor = hd(&impostor_pairs);
        let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let rate = |v: &[f64], f: &dyn Fn(f64) -> bool| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().filter(|&&x| f(x)).count() as f64 / v.len() as f64
            }
        };
        CorpusStats {
            genuine_mean: mean(&genuine),
            impostor_mean: mean(&impostor),
            fnmr: rate(&genuine, &|x| x >= VERIFICATION_THRESHOLD),
            fmr: rate(&impostor, &|x| x < VERIFICATION_THRESHOLD),
            genuine,
            impostor,
        }
    }

    /// Identity-disjoint split: identities with `id % 5 == 0` are held out.
    pub fn split(&self) -> (Vec<&CorpusRecord>, Vec<&CorpusRecord>) {
        self.records.iter().partition(|r| r.identity % 5 != 0)
    }

    pub fn training_pairs(&self) -> (Vec<TrainingPair>, Vec<TrainingPair>) {
        let (train, test) = self.split();
        (
            train.into_iter().map(|r| r.pair.clone()).collect(),
            test.into_iter().map(|r| r.pair.clone()).collect(),
        )
    }
}

/// Generates and accepts a corpus only if its statistics pass the check.
/// A singleton corpus has no pairs and is accepted.
pub fn generate_calibrated_corpus(
    config: &SynthConfig,
    bank: &FilterBank,
) -> Result<(Corpus, CorpusStats), SynthError> {
    let corpus = generate_corpus(config, bank)?;
    let stats = corpus.stats();
    if !stats.genuine.is_empty() && !stats.impostor.is_empty() {
        stats.check()?;
    }
    Ok((corpus, stats))
}

/// Bisects the noise level so the genuine mean lands near `target`
/// (within `tolerance`). Returns the level and its statistics.
pub fn calibrate_noise(
    base: &SynthConfig,
    bank: &FilterBank,
    target: f64,
    tolerance: f64,
) -> Result<(f64, CorpusStats), SynthError> {
    let (mut lo, mut hi) = (0.0, 4.0);
    let mut best = None;
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let stats = generate_corpus(&SynthConfig { noise_level: mid, ..base.clone() }, bank)?.stats();
        let g = stats.genuine_mean;
        best = Some((mid, stats));
        if (g - target).abs() <= tolerance {
            break;
        }
        if g < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.expect("at least one bisection step"))
}
