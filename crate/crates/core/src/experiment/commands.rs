//! The harness commands, as library functions. The CLI is a thin wrapper.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::attack::{AttackError, AttackMode, AttackResult};
use crate::codec::{encode, FilterBank, IrisCode, IrisSample};
use crate::io::bankfile::{read_bank, write_bank, BankFileError};
use crate::io::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use crate::io::manifest::{load_corpus, write_corpus, ManifestError};
use crate::io::netpbm::{read_pbm, read_pgm, write_pbm, write_pgm, NetpbmError};
use crate::io::write_file;
use crate::matcher::{masked_hamming, subset_hamming, verify, MatchDecision, MatchError, VERIFICATION_THRESHOLD};
use crate::surrogate::{bit_error_rate, train_surrogate, BitErrorReport, SurrogateError, SurrogateWeights};
use crate::synth::{derive_seed, generate_corpus, Corpus, CorpusStats, SynthError};

use super::config::{ConfigError, ExperimentConfig, Selector};
use super::sweep::{location_set, run_sweep, run_trial, CorpusIndex, SweepError, SweepReport, TrialPlan, TrialRun};

/// Exit code for an attack that ran but did not succeed.
pub const EXIT_ATTACK_FAILED: i32 = 2;
pub const EXIT_CALIBRATION: i32 = 3;
pub const EXIT_IO: i32 = 4;
/// Anything else: invalid input that parsed fine.
pub const EXIT_OTHER: i32 = 1;

const TAG_TRAIN: u64 = 201;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("corpus failed calibration\n{0}")]
    Calibration(Box<CorpusStats>),
    #[error("corpus extents {corpus:?} do not match the {profile} profile's {expected:?}")]
    ExtentMismatch {
        corpus: (usize, usize),
        expected: (usize, usize),
        profile: &'static str,
    },
    #[error("filter bank has {bank} filters, the surrogate expects {expected}")]
    PlaneMismatch { bank: usize, expected: usize },
    #[error("missing `{0}`")]
    Missing(&'static str),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error(transparent)]
    Bank(#[from] BankFileError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Image(#[from] NetpbmError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error("{0}")]
    Io(String),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Calibration(_) | CommandError::Synth(SynthError::Calibration(_)) => EXIT_CALIBRATION,
            CommandError::Config(_)
            | CommandError::Manifest(_)
            | CommandError::Bank(_)
            | CommandError::Checkpoint(_)
            | CommandError::Image(_)
            | CommandError::Io(_) => EXIT_IO,
            _ => EXIT_OTHER,
        }
    }
}

type Result<T> = std::result::Result<T, CommandError>;

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_file(path, text.as_bytes()).map_err(CommandError::Io)
}

#[derive(Debug, Clone)]
pub struct GenDataSummary {
    pub manifest: PathBuf,
    pub bank: PathBuf,
    pub samples: usize,
    pub stats: CorpusStats,
}

/// Generates the corpus, checks its genuine/impostor separation and writes
/// manifest, images, the filter bank and a statistics file. Nothing is
/// written when the check fails.
pub fn gen_data(config: &ExperimentConfig) -> Result<GenDataSummary> {
    let bank = match &config.bank {
        Some(p) => read_bank(p)?,
        None => config.profile.bank(),
    };
    let corpus = generate_corpus(&config.synth_config(), &bank)?;
    let stats = corpus.stats();
    if !stats.genuine.is_empty() && !stats.impostor.is_empty() && stats.check().is_err() {
        return Err(CommandError::Calibration(Box::new(stats)));
    }
    let manifest = write_corpus(&config.data_dir, &corpus)?;
    let bank_path = config.data_dir.join("bank.txt");
    write_bank(&bank_path, &bank)?;
    write_text(&config.data_dir.join("stats.txt"), &format!("{stats}\n"))?;
    Ok(GenDataSummary {
        manifest,
        bank: bank_path,
        samples: corpus.records.len(),
        stats,
    })
}

/// Bank and corpus named by the config, checked against the profile.
pub fn load_inputs(config: &ExperimentConfig) -> Result<(FilterBank, Corpus)> {
    let bank = read_bank(&config.bank_path())?;
    let corpus = load_corpus(&config.manifest_path(), &bank)?;
    let expected = config.profile.extents();
    if let Some(r) = corpus.records.iter().find(|r| r.pair.sample.dims() != expected) {
        return Err(CommandError::ExtentMismatch {
            corpus: r.pair.sample.dims(),
            expected,
            profile: config.profile.name(),
        });
    }
    let planes = config.profile.surrogate_config().planes;
    if bank.len() != planes {
        return Err(CommandError::PlaneMismatch { bank: bank.len(), expected: planes });
    }
    Ok((bank, corpus))
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
    pub curve: Vec<f64>,
    /// Held-out bit error of the checkpoint as reloaded from disk.
    pub bit_error: BitErrorReport,
}

/// Trains on the training split, writes the checkpoint and loss curve, then
/// reloads the checkpoint and evaluates it on the held-out split.
pub fn train(config: &ExperimentConfig) -> Result<TrainSummary> {
    let (bank, corpus) = load_inputs(config)?;
    let (train_set, test_set) = corpus.training_pairs();
    let seed = derive_seed(config.seed, TAG_TRAIN, 0);
    let (weights, curve) = train_surrogate(&config.surrogate_config(), &train_set, &bank, seed)?;
    save_checkpoint(&config.checkpoint, &weights)?;
    let reloaded = load_checkpoint(&config.checkpoint)?;
    let bit_error = bit_error_rate(&reloaded, &test_set)?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in curve.iter().enumerate() {
        writeln!(csv, "{e},{l}").expect("string write");
    }
    let loss_csv = config.out_dir.join("loss.csv");
    write_text(&loss_csv, &csv)?;
    write_text(
        &config.out_dir.join("train_report.txt"),
        &format!(
            "checkpoint = {}\nepochs = {}\nbit_error = {}\nevaluated = {}\nskipped = {}\n",
            config.checkpoint.display(),
            curve.len(),
            bit_error.rate,
            bit_error.evaluated,
            bit_error.skipped.len()
        ),
    )?;
    Ok(TrainSummary {
        checkpoint: config.checkpoint.clone(),
        loss_csv,
        curve,
        bit_error,
    })
}

#[derive(Debug, Clone)]
pub struct AttackSummary {
    pub plan: TrialPlan,
    pub run: TrialRun,
    /// HD of the written adversarial images, re-encoded from disk, against
    /// the enrolled code (gallery or target).
    pub reloaded: MatchDecision,
    pub report: String,
    pub out_dir: PathBuf,
}

impl AttackSummary {
    pub fn result(&self) -> &AttackResult {
        &self.run.result
    }

    pub fn exit_code(&self) -> i32 {
        if self.run.result.success {
            0
        } else {
            EXIT_ATTACK_FAILED
        }
    }
}

fn default_gallery(corpus: &Corpus, s: Selector) -> Selector {
    corpus
        .records
        .iter()
        .find(|r| r.identity == s.identity && r.eye == s.eye && r.sample != s.sample)
        .map_or(s, |r| Selector {
            identity: r.identity,
            eye: r.eye,
            sample: r.sample,
        })
}

fn trace_csv(result: &AttackResult) -> String {
    let mut out = String::from("# irisadv attack trace v1\niteration,loss,hd,mask_popcount,flipped_bits\n");
    for t in &result.trace {
        writeln!(out, "{},{},{},{},{}", t.iteration, t.loss, t.hd, t.mask_popcount, t.flipped_bits)
            .expect("string write");
    }
    out
}

/// Runs one attack, writes the adversarial iris, mask and code, the trace
/// and a verification report. A failed attack is still an `Ok` summary;
/// see [`AttackSummary::exit_code`].
pub fn attack(config: &ExperimentConfig) -> Result<AttackSummary> {
    let sample = config.sample.ok_or(CommandError::Missing("sample"))?;
    if config.mode == AttackMode::Targeted && config.target.is_none() {
        return Err(CommandError::Missing("target"));
    }
    let (bank, corpus) = load_inputs(config)?;
    let weights = load_checkpoint(&config.checkpoint)?;
    attack_with(config, &bank, &corpus, &weights, sample)
}

/// [`attack`] with inputs already loaded.
pub fn attack_with(
    config: &ExperimentConfig,
    bank: &FilterBank,
    corpus: &Corpus,
    weights: &SurrogateWeights,
    sample: Selector,
) -> Result<AttackSummary> {
    let index = CorpusIndex::new(corpus);
    index.get(sample)?;
    let plan = TrialPlan {
        trial: 0,
        seed: config.seed,
        benign: sample,
        gallery: config.gallery.unwrap_or_else(|| default_gallery(corpus, sample)),
        target: config.target,
        subset_seed: config.subset_seed,
        verifier_seed: config.verifier_seed,
    };
    let run = run_trial(
        &plan,
        &index,
        weights,
        bank,
        config.epsilon,
        config.scenario,
        config.mode,
        config.max_iterations,
        config.subset_size,
    )?;
    let out = &config.out_dir;
    let (iris_path, mask_path, code_path) =
        (out.join("adversarial_iris.pgm"), out.join("adversarial_mask.pbm"), out.join("adversarial_code.pbm"));
    write_pgm(&iris_path, &run.result.adversarial.iris)?;
    write_pbm(&mask_path, &run.result.adversarial.mask)?;
    write_pbm(&code_path, &run.result.code.bits)?;
    write_text(&out.join("trace.csv"), &trace_csv(&run.result))?;

    // independent check: reload what was written and run the codec again
    let reloaded_sample = IrisSample::new(read_pgm(&iris_path)?, read_pbm(&mask_path)?)
        .map_err(|e| CommandError::Io(e.to_string()))?;
    let reloaded_code = encode(&reloaded_sample, bank);
    let enrolled_key = match config.mode {
        AttackMode::NonTargeted => plan.gallery,
        AttackMode::Targeted => config.target.expect("checked above"),
    };
    let enrolled = &index.get(enrolled_key)?.pair.code;
    let reloaded = verify(masked_hamming(enrolled, &reloaded_code)?, VERIFICATION_THRESHOLD);

    let r = &run.result;
    let benign = &index.get(sample)?.pair.code;
    let benign_hd = masked_hamming(benign, &r.code).map_or(f64::NAN, |s| s.hd);
    let mut report = String::new();
    let mut line = |k: &str, v: String| writeln!(report, "{k} = {v}").expect("string write");
    line("sample", sample.to_string());
    line("mode", config.mode.name().into());
    line("scenario", config.scenario.number().to_string());
    line("epsilon", config.epsilon.to_string());
    line("max_iterations", config.max_iterations.to_string());
    line("gallery", plan.gallery.to_string());
    if let Some(t) = config.target {
        line("target", t.to_string());
    }
    line("subset_size", config.subset_size.to_string());
    line("subset_seed", config.subset_seed.to_string());
    line("verifier_seed", config.verifier_seed.to_string());
    line("success", r.success.to_string());
    line("stop", r.stop.name().into());
    line("iterations", r.iterations.to_string());
    line("dist", r.dist.to_string());
    line("termination_hd", r.hd.to_string());
    line("reference_hd", r.full_hd.to_string());
    line("benign_hd", benign_hd.to_string());
    line("enrolled_hd", run.verification.hd.map_or("NA".into(), |h| h.to_string()));
    line("enrolled_accepted", run.verification.accepted.to_string());
    line("enrolled_fooled", run.verification.fooled.to_string());
    line("reloaded_enrolled_hd", reloaded.hd.to_string());
    line("reloaded_accepted", reloaded.accepted.to_string());
    write_text(&out.join("report.txt"), &report)?;
    Ok(AttackSummary {
        plan,
        run,
        reloaded,
        report,
        out_dir: out.clone(),
    })
}

/// Paths of the three sweep CSVs under `out_dir`.
pub fn sweep_paths(out_dir: &Path) -> [PathBuf; 3] {
    [out_dir.join("sweep_table.csv"), out_dir.join("sweep_success.csv"), out_dir.join("sweep_trials.csv")]
}

pub fn sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    let (bank, corpus) = load_inputs(config)?;
    let weights = load_checkpoint(&config.checkpoint)?;
    sweep_with(config, &bank, &corpus, &weights)
}

/// [`sweep`] with inputs already loaded; writes the three CSVs.
pub fn sweep_with(
    config: &ExperimentConfig,
    bank: &FilterBank,
    corpus: &Corpus,
    weights: &SurrogateWeights,
) -> Result<SweepReport> {
    let report = run_sweep(config, corpus, weights, bank)?;
    let [table, success, trials] = sweep_paths(&config.out_dir);
    write_text(&table, &report.table_csv()?)?;
    write_text(&success, &report.success_csv()?)?;
    write_text(&trials, &report.trials_csv()?)?;
    Ok(report)
}

/// Encodes an iris/mask pair; writes the code bits and the code mask.
pub fn encode_files(bank: &Path, iris: &Path, mask: &Path, code_out: &Path, mask_out: &Path) -> Result<IrisCode> {
    let bank = read_bank(bank)?;
    let sample = IrisSample::new(read_pgm(iris)?, read_pbm(mask)?).map_err(|e| CommandError::Io(e.to_string()))?;
    let code = encode(&sample, &bank);
    write_pbm(code_out, &code.bits)?;
    write_pbm(mask_out, &code.mask)?;
    Ok(code)
}

/// Encodes two samples and matches them, over the whole code or over a
/// seeded location set of `subset` bits.
pub fn match_files(
    bank: &Path,
    a: (&Path, &Path),
    b: (&Path, &Path),
    subset: Option<(u64, usize)>,
) -> Result<MatchDecision> {
    let bank = read_bank(bank)?;
    let load = |(iris, mask): (&Path, &Path)| -> Result<IrisCode> {
        let s = IrisSample::new(read_pgm(iris)?, read_pbm(mask)?).map_err(|e| CommandError::Io(e.to_string()))?;
        Ok(encode(&s, &bank))
    };
    let (ca, cb) = (load(a)?, load(b)?);
    let score = match subset {
        None => masked_hamming(&ca, &cb)?,
        Some((seed, size)) => {
            let (rows, cols) = ca.bits.dims();
            subset_hamming(&ca, &cb, &location_set(seed, size, rows, cols))?
        }
    };
    Ok(verify(score, VERIFICATION_THRESHOLD))
}
