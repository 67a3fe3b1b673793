//! Flat `key = value` experiment configuration.
//!
//! Recognized keys (anything else is rejected):
//!
//! | key | meaning |
//! |---|---|
//! | `profile` | `desk` or `full` |
//! | `data_dir` | corpus directory (manifest, images, `bank.txt`) |
//! | `bank` | filter-bank file; defaults to `<data_dir>/bank.txt` |
//! | `checkpoint` | IRSG surrogate file |
//! | `out_dir` | where reports and images go |
//! | `epsilons` | comma list, strictly positive and descending |
//! | `caps` | comma list of iteration caps, ascending |
//! | `scenarios` | comma list of 1, 2, 3 |
//! | `modes` | comma list of `non-targeted`, `targeted` |
//! | `trials` | trials per sweep cell |
//! | `seed` | master seed (corpus, training, trial draws) |
//! | `subset_size` | bit locations in `v` and in the verifier's hidden set |
//! | `identities`, `samples_per_eye`, `noise_level` | corpus generation |
//! | `epochs` | training epochs (profile default when unset) |
//! | `epsilon`, `max_iterations`, `scenario`, `mode` | single attack |
//! | `sample`, `target`, `gallery` | selectors `identity:eye:sample`, e.g. `15:L:2` |
//! | `subset_seed`, `verifier_seed` | seeds for `v` and the hidden set |
//!
//! Lines starting with `#` and blank lines are ignored.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::attack::{AttackMode, Scenario};
use crate::codec::FilterBank;
use crate::matcher::DEFAULT_SUBSET_SIZE;
use crate::surrogate::SurrogateConfig;
use crate::synth::{Eye, SynthConfig, DEFAULT_NOISE_LEVEL};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

/// Eleven step sizes from 0.03 down to 0.0001.
pub const DEFAULT_EPSILONS: [f64; 11] =
    [0.03, 0.01, 0.005, 0.004, 0.003, 0.002, 0.001, 0.0008, 0.0005, 0.0003, 0.0001];
pub const DEFAULT_CAPS: [usize; 8] = [10, 20, 30, 40, 50, 100, 200, 300];
/// `v` size at desk scale, where the code has 4096 bits.
pub const DESK_SUBSET_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Full,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Full => "full",
        }
    }

    pub fn extents(self) -> (usize, usize) {
        let c = self.surrogate_config();
        (c.height, c.width)
    }

    pub fn surrogate_config(self) -> SurrogateConfig {
        match self {
            Profile::Desk => SurrogateConfig::desk_scale(),
            Profile::Full => SurrogateConfig::full_scale(),
        }
    }

    pub fn bank(self) -> FilterBank {
        match self {
            Profile::Desk => FilterBank::desk_scale(),
            Profile::Full => FilterBank::full_scale(),
        }
    }

    pub fn subset_size(self) -> usize {
        match self {
            Profile::Desk => DESK_SUBSET_SIZE,
            Profile::Full => DEFAULT_SUBSET_SIZE,
        }
    }
}

impl FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            _ => Err("expected desk or full".into()),
        }
    }
}

/// Names one corpus sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Selector {
    pub identity: usize,
    pub eye: Eye,
    pub sample: usize,
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.identity, self.eye.tag(), self.sample)
    }
}

impl FromStr for Selector {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [id, eye, sample] = parts.as_slice() else {
            return Err("expected identity:eye:sample".into());
        };
        Ok(Selector {
            identity: id.parse().map_err(|_| format!("bad identity `{id}`"))?,
            eye: eye.parse().map_err(|_| format!("bad eye `{eye}`"))?,
            sample: sample.parse().map_err(|_| format!("bad sample `{sample}`"))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub profile: Profile,
    pub data_dir: PathBuf,
    pub bank: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub out_dir: PathBuf,
    pub epsilons: Vec<f64>,
    pub caps: Vec<usize>,
    pub scenarios: Vec<Scenario>,
    pub modes: Vec<AttackMode>,
    pub trials: usize,
    pub seed: u64,
    pub subset_size: usize,
    pub identities: usize,
    pub samples_per_eye: usize,
    pub noise_level: f64,
    pub epochs: Option<usize>,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub scenario: Scenario,
    pub mode: AttackMode,
    pub sample: Option<Selector>,
    pub target: Option<Selector>,
    /// Enrolled sample a non-targeted result is verified against.
    pub gallery: Option<Selector>,
    pub subset_seed: u64,
    pub verifier_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Desk)
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: s.into(),
                reason: "unparseable list item".into(),
            })
        })
        .collect()
}

fn one<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let synth = SynthConfig::desk();
        Self {
            profile,
            data_dir: PathBuf::from("data"),
            bank: None,
            checkpoint: PathBuf::from("surrogate.irsg"),
            out_dir: PathBuf::from("out"),
            epsilons: DEFAULT_EPSILONS.to_vec(),
            caps: DEFAULT_CAPS.to_vec(),
            scenarios: Scenario::ALL.to_vec(),
            modes: vec![AttackMode::NonTargeted, AttackMode::Targeted],
            trials: 30,
            seed: synth.seed,
            subset_size: profile.subset_size(),
            identities: synth.identities,
            samples_per_eye: synth.samples_per_eye,
            noise_level: DEFAULT_NOISE_LEVEL,
            epochs: None,
            epsilon: 0.03,
            max_iterations: 50,
            scenario: Scenario::WholeCode,
            mode: AttackMode::NonTargeted,
            sample: None,
            target: None,
            gallery: None,
            subset_seed: 1,
            verifier_seed: 2,
        }
    }

    /// Sets one key. Changing `profile` resets `subset_size` to that
    /// profile's default.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "profile" => {
                self.profile = one(key, value)?;
                self.subset_size = self.profile.subset_size();
            }
            "data_dir" => self.data_dir = value.into(),
            "bank" => self.bank = Some(value.into()),
            "checkpoint" => self.checkpoint = value.into(),
            "out_dir" => self.out_dir = value.into(),
            "epsilons" => self.epsilons = list(key, value)?,
            "caps" => self.caps = list(key, value)?,
            "scenarios" => self.scenarios = list(key, value)?,
            "modes" => self.modes = list(key, value)?,
            "trials" => self.trials = one(key, value)?,
            "seed" => self.seed = one(key, value)?,
            "subset_size" => self.subset_size = one(key, value)?,
            "identities" => self.identities = one(key, value)?,
            "samples_per_eye" => self.samples_per_eye = one(key, value)?,
            "noise_level" => self.noise_level = one(key, value)?,
            "epochs" => self.epochs = Some(one(key, value)?),
            "epsilon" => self.epsilon = one(key, value)?,
            "max_iterations" => self.max_iterations = one(key, value)?,
            "scenario" => self.scenario = one(key, value)?,
            "mode" => self.mode = one(key, value)?,
            "sample" => self.sample = Some(one(key, value)?),
            "target" => self.target = Some(one(key, value)?),
            "gallery" => self.gallery = Some(one(key, value)?),
            "subset_seed" => self.subset_seed = one(key, value)?,
            "verifier_seed" => self.verifier_seed = one(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        // profile first so an explicit subset_size anywhere in the file wins
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    reason: "expected key = value".into(),
                });
            };
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        pairs.sort_by_key(|(k, _)| k != "profile");
        for (k, v) in pairs {
            config.set(&k, &v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("profile = {}", self.profile.name()),
            format!("data_dir = {}", self.data_dir.display()),
        ];
        if let Some(b) = &self.bank {
            lines.push(format!("bank = {}", b.display()));
        }
        lines.extend([
            format!("checkpoint = {}", self.checkpoint.display()),
            format!("out_dir = {}", self.out_dir.display()),
            format!("epsilons = {}", join(&self.epsilons)),
            format!("caps = {}", join(&self.caps)),
            format!("scenarios = {}", join(&self.scenarios.iter().map(|s| s.number()).collect::<Vec<_>>())),
            format!("modes = {}", join(&self.modes.iter().map(|m| m.name()).collect::<Vec<_>>())),
            format!("trials = {}", self.trials),
            format!("seed = {}", self.seed),
            format!("subset_size = {}", self.subset_size),
            format!("identities = {}", self.identities),
            format!("samples_per_eye = {}", self.samples_per_eye),
            format!("noise_level = {}", self.noise_level),
        ]);
        if let Some(e) = self.epochs {
            lines.push(format!("epochs = {e}"));
        }
        lines.extend([
            format!("epsilon = {}", self.epsilon),
            format!("max_iterations = {}", self.max_iterations),
            format!("scenario = {}", self.scenario.number()),
            format!("mode = {}", self.mode.name()),
        ]);
        if let Some(s) = self.sample {
            lines.push(format!("sample = {s}"));
        }
        if let Some(t) = self.target {
            lines.push(format!("target = {t}"));
        }
        if let Some(g) = self.gallery {
            lines.push(format!("gallery = {g}"));
        }
        lines.push(format!("subset_seed = {}", self.subset_seed));
        lines.push(format!("verifier_seed = {}", self.verifier_seed));
        lines.join("\n") + "\n"
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.epsilons.is_empty() {
            return bad("epsilon list is empty".into());
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return bad(format!("epsilon {e} is not strictly positive"));
        }
        if self.epsilons.windows(2).any(|w| w[0] <= w[1]) {
            return bad("epsilon list must be strictly descending".into());
        }
        if self.caps.is_empty() || self.caps[0] == 0 {
            return bad("caps must be non-empty and positive".into());
        }
        if self.caps.windows(2).any(|w| w[0] >= w[1]) {
            return bad("caps must be strictly ascending".into());
        }
        if self.scenarios.is_empty() || self.modes.is_empty() {
            return bad("need at least one scenario and one mode".into());
        }
        if self.trials == 0 || self.subset_size == 0 {
            return bad("trials and subset_size must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} is not strictly positive", self.epsilon));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        Ok(())
    }

    pub fn bank_path(&self) -> PathBuf {
        self.bank.clone().unwrap_or_else(|| self.data_dir.join("bank.txt"))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.data_dir.join(crate::io::manifest::MANIFEST_FILE)
    }

    pub fn synth_config(&self) -> SynthConfig {
        let (height, width) = self.profile.extents();
        SynthConfig {
            height,
            width,
            identities: self.identities,
            eyes: 2,
            samples_per_eye: self.samples_per_eye,
            noise_level: self.noise_level,
            seed: self.seed,
        }
    }

    pub fn surrogate_config(&self) -> SurrogateConfig {
        let mut c = self.profile.surrogate_config();
        if let Some(e) = self.epochs {
            c.epochs = e;
        }
        c
    }
}
