//! Seeded ε sweeps over scenarios and attack modes.
//!
//! Every trial draws its benign sample, gallery sample, target and location
//! sets from one per-trial seed, so all cells of a sweep see the same
//! trials. Three CSV reports come out of a [`SweepReport`]:
//!
//! * the distance/iteration table: one row per (ε, mode); per scenario the
//!   mean distance, mean iterations, its 95% half-width and the number of
//!   successful trials those means are over (`NA` when there are none);
//! * the success table: one row per (ε, mode, scenario), success percentage
//!   for every iteration cap;
//! * the per-trial log, with every seed and selector needed to replay a
//!   trial through the single-attack command.
//!
//! The first line of each CSV names its schema and version.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::attack::{run_attack, AttackConfig, AttackError, AttackMode, AttackResult, Scenario, StopReason};
use crate::codec::IrisCode;
use crate::codec::FilterBank;
use crate::matcher::{masked_hamming, subset_hamming, BitLocationSet, VERIFICATION_THRESHOLD};
use crate::surrogate::SurrogateWeights;
use crate::synth::{derive_seed, Corpus, CorpusRecord};

use super::config::{ExperimentConfig, Selector};

pub const TABLE_SCHEMA: &str = "# irisadv distance-iteration table v1";
pub const SUCCESS_SCHEMA: &str = "# irisadv success-rate table v1";
pub const TRIALS_SCHEMA: &str = "# irisadv trials v1";

const TAG_TRIAL: u64 = 101;
const TAG_SUBSET: u64 = 102;
const TAG_VERIFIER: u64 = 103;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("the held-out split is empty")]
    NoTestSamples,
    #[error("no sample {0} in the corpus")]
    MissingSample(Selector),
    #[error("trial {trial} has no same-eye sample of another identity to target")]
    NoTarget { trial: usize },
    #[error("trial {trial}, epsilon {epsilon}, scenario {scenario}, {mode}: {source}")]
    Attack {
        trial: usize,
        epsilon: f64,
        scenario: u8,
        mode: &'static str,
        source: AttackError,
    },
    #[error("csv: {0}")]
    Csv(String),
}

/// `count` distinct code locations drawn from `seed` (at most the code size).
pub fn location_set(seed: u64, count: usize, rows: usize, cols: usize) -> BitLocationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    BitLocationSet::random(&mut rng, count.min(rows * cols), rows, cols)
}

/// Everything a trial needs besides ε, scenario and mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialPlan {
    pub trial: usize,
    pub seed: u64,
    pub benign: Selector,
    /// Same identity and eye, different sample; the benign sample itself
    /// when the corpus has one sample per eye.
    pub gallery: Selector,
    /// Same eye, different identity.
    pub target: Option<Selector>,
    pub subset_seed: u64,
    pub verifier_seed: u64,
}

fn selector(r: &CorpusRecord) -> Selector {
    Selector {
        identity: r.identity,
        eye: r.eye,
        sample: r.sample,
    }
}

/// Draws trials with replacement from `pool`.
pub fn plan_trials(pool: &[&CorpusRecord], trials: usize, master: u64) -> Result<Vec<TrialPlan>, SweepError> {
    if pool.is_empty() {
        return Err(SweepError::NoTestSamples);
    }
    Ok((0..trials)
        .map(|t| {
            let seed = derive_seed(master, TAG_TRIAL, t as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let benign = pool[rng.random_range(0..pool.len())];
            let gallery: Vec<_> = pool
                .iter()
                .filter(|r| r.same_eye(benign) && r.sample != benign.sample)
                .collect();
            let targets: Vec<_> = pool
                .iter()
                .filter(|r| r.eye == benign.eye && r.identity != benign.identity)
                .collect();
            // always consume both draws so later trials don't depend on pool shape
            let gi = rng.random_range(0..gallery.len().max(1));
            let ti = rng.random_range(0..targets.len().max(1));
            TrialPlan {
                trial: t,
                seed,
                benign: selector(benign),
                gallery: gallery.get(gi).map_or(selector(benign), |r| selector(r)),
                target: targets.get(ti).map(|r| selector(r)),
                subset_seed: derive_seed(seed, TAG_SUBSET, 0),
                verifier_seed: derive_seed(seed, TAG_VERIFIER, 0),
            }
        })
        .collect())
}

/// The verifier's own decision on an adversarial code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    /// `None` when no location was valid in both codes.
    pub hd: Option<f64>,
    pub accepted: bool,
    /// Whether the decision is the one the attacker wanted.
    pub fooled: bool,
}

/// Matches `adversarial` against `enrolled` the way the scenario's verifier
/// would: whole code, the attacker-known set `v`, or the secret set.
pub fn verify_adversarial(
    enrolled: &IrisCode,
    adversarial: &IrisCode,
    scenario: Scenario,
    mode: AttackMode,
    v: &BitLocationSet,
    hidden: &BitLocationSet,
) -> Verification {
    let score = match scenario {
        Scenario::WholeCode => masked_hamming(enrolled, adversarial),
        Scenario::KnownSubset => subset_hamming(enrolled, adversarial, v),
        Scenario::HiddenSubset => subset_hamming(enrolled, adversarial, hidden),
    };
    let hd = score.ok().map(|s| s.hd);
    let accepted = hd.is_some_and(|h| h < VERIFICATION_THRESHOLD);
    Verification {
        hd,
        accepted,
        fooled: match mode {
            AttackMode::NonTargeted => !accepted,
            AttackMode::Targeted => accepted,
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub plan: TrialPlan,
    pub epsilon_index: usize,
    pub epsilon: f64,
    pub scenario: Scenario,
    pub mode: AttackMode,
    /// The attacker's own termination test fired.
    pub success: bool,
    pub stop: StopReason,
    pub iterations: usize,
    pub dist: f64,
    pub hd: f64,
    pub full_hd: f64,
    /// Verifier decision against the gallery (non-targeted) or target
    /// code. Reported only; success is the termination test.
    pub verification: Verification,
}

impl TrialOutcome {
    /// Counted as a success for a run capped at `cap` iterations. The attack
    /// is deterministic, so this equals rerunning with that cap.
    pub fn succeeded_within(&self, cap: usize) -> bool {
        self.success && self.iterations <= cap
    }
}

/// Sample lookup by selector.
pub struct CorpusIndex<'a> {
    by_key: HashMap<Selector, &'a CorpusRecord>,
}

impl<'a> CorpusIndex<'a> {
    pub fn new(corpus: &'a Corpus) -> Self {
        Self {
            by_key: corpus.records.iter().map(|r| (selector(r), r)).collect(),
        }
    }

    pub fn get(&self, s: Selector) -> Result<&'a CorpusRecord, SweepError> {
        self.by_key.get(&s).copied().ok_or(SweepError::MissingSample(s))
    }
}

/// One attack for one trial, plus the verifier's view of its output.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRun {
    pub result: AttackResult,
    pub verification: Verification,
}

/// Replays a trial plan through the attack.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    plan: &TrialPlan,
    index: &CorpusIndex<'_>,
    weights: &SurrogateWeights,
    bank: &FilterBank,
    epsilon: f64,
    scenario: Scenario,
    mode: AttackMode,
    max_iterations: usize,
    subset_size: usize,
) -> Result<TrialRun, SweepError> {
    let benign = index.get(plan.benign)?;
    let (rows, cols) = benign.pair.code.bits.dims();
    let v = location_set(plan.subset_seed, subset_size, rows, cols);
    let hidden = location_set(plan.verifier_seed, subset_size, rows, cols);
    let target = match mode {
        AttackMode::NonTargeted => None,
        AttackMode::Targeted => {
            let t = plan.target.ok_or(SweepError::NoTarget { trial: plan.trial })?;
            Some(index.get(t)?)
        }
    };
    let mut config = AttackConfig::new(epsilon, scenario, mode, max_iterations);
    config.hidden_subset_size = subset_size;
    if scenario == Scenario::KnownSubset {
        config = config.with_subset(v.clone());
    }
    let result = run_attack(&benign.pair.sample, weights, bank, config, target.map(|t| &t.pair.sample))
        .map_err(|source| SweepError::Attack {
            trial: plan.trial,
            epsilon,
            scenario: scenario.number(),
            mode: mode.name(),
            source,
        })?;
    let enrolled = match target {
        Some(t) => &t.pair.code,
        None => &index.get(plan.gallery)?.pair.code,
    };
    let verification = verify_adversarial(enrolled, &result.code, scenario, mode, &v, &hidden);
    Ok(TrialRun { result, verification })
}

/// Mean and 95% half-width over successful trials of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub trials: usize,
    pub successes: usize,
    pub mean_dist: Option<f64>,
    pub mean_iterations: Option<f64>,
    pub iterations_ci95: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub seed: u64,
    pub epsilons: Vec<f64>,
    pub caps: Vec<usize>,
    pub scenarios: Vec<Scenario>,
    pub modes: Vec<AttackMode>,
    pub subset_size: usize,
    pub plans: Vec<TrialPlan>,
    pub outcomes: Vec<TrialOutcome>,
}

/// Runs every (trial, ε, scenario, mode) at the largest cap. Cells run in
/// parallel; results are assembled in a fixed order.
pub fn run_sweep(
    config: &ExperimentConfig,
    corpus: &Corpus,
    weights: &SurrogateWeights,
    bank: &FilterBank,
) -> Result<SweepReport, SweepError> {
    let (_, test) = corpus.split();
    let plans = plan_trials(&test, config.trials, config.seed)?;
    let index = CorpusIndex::new(corpus);
    let cap = *config.caps.last().expect("validated caps are non-empty");
    let mut jobs = Vec::new();
    for (ei, &eps) in config.epsilons.iter().enumerate() {
        for &mode in &config.modes {
            for &scenario in &config.scenarios {
                for plan in &plans {
                    jobs.push((ei, eps, mode, scenario, plan));
                }
            }
        }
    }
    let outcomes = jobs
        .into_par_iter()
        .map(|(ei, eps, mode, scenario, plan)| {
            let run = run_trial(plan, &index, weights, bank, eps, scenario, mode, cap, config.subset_size)?;
            Ok(TrialOutcome {
                plan: *plan,
                epsilon_index: ei,
                epsilon: eps,
                scenario,
                mode,
                success: run.result.success,
                stop: run.result.stop,
                iterations: run.result.iterations,
                dist: run.result.dist,
                hd: run.result.hd,
                full_hd: run.result.full_hd,
                verification: run.verification,
            })
        })
        .collect::<Result<Vec<_>, SweepError>>()?;
    Ok(SweepReport {
        seed: config.seed,
        epsilons: config.epsilons.clone(),
        caps: config.caps.clone(),
        scenarios: config.scenarios.clone(),
        modes: config.modes.clone(),
        subset_size: config.subset_size,
        plans,
        outcomes,
    })
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.digits$}"))
}

fn finish_csv(header: &str, w: csv::Writer<Vec<u8>>) -> Result<String, SweepError> {
    let bytes = w.into_inner().map_err(|e| SweepError::Csv(e.to_string()))?;
    Ok(format!("{header}\n{}", String::from_utf8(bytes).expect("csv output is utf-8")))
}

impl SweepReport {
    pub fn cell(&self, epsilon_index: usize, scenario: Scenario, mode: AttackMode) -> Vec<&TrialOutcome> {
        self.outcomes
            .iter()
            .filter(|o| o.epsilon_index == epsilon_index && o.scenario == scenario && o.mode == mode)
            .collect()
    }

    pub fn summary(&self, epsilon_index: usize, scenario: Scenario, mode: AttackMode) -> CellSummary {
        let cell = self.cell(epsilon_index, scenario, mode);
        let ok: Vec<_> = cell.iter().filter(|o| o.success).collect();
        let n = ok.len();
        let mean = |f: &dyn Fn(&TrialOutcome) -> f64| (n > 0).then(|| ok.iter().map(|o| f(o)).sum::<f64>() / n as f64);
        let mean_iterations = mean(&|o| o.iterations as f64);
        let iterations_ci95 = mean_iterations.filter(|_| n > 1).map(|m| {
            let var = ok.iter().map(|o| (o.iterations as f64 - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        });
        CellSummary {
            trials: cell.len(),
            successes: n,
            mean_dist: mean(&|o| o.dist),
            mean_iterations,
            iterations_ci95,
        }
    }

    /// Percentage of trials that succeeded within `cap` iterations.
    pub fn success_rate(&self, epsilon_index: usize, scenario: Scenario, mode: AttackMode, cap: usize) -> Option<f64> {
        let cell = self.cell(epsilon_index, scenario, mode);
        (!cell.is_empty()).then(|| {
            100.0 * cell.iter().filter(|o| o.succeeded_within(cap)).count() as f64 / cell.len() as f64
        })
    }

    pub fn table_csv(&self) -> Result<String, SweepError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["epsilon".to_string(), "mode".to_string()];
        for s in &self.scenarios {
            let k = s.number();
            header.extend([format!("s{k}_dist"), format!("s{k}_itr"), format!("s{k}_itr_ci95"), format!("s{k}_n")]);
        }
        w.write_record(&header).map_err(|e| SweepError::Csv(e.to_string()))?;
        for (ei, eps) in self.epsilons.iter().enumerate() {
            for &mode in &self.modes {
                let mut row = vec![eps.to_string(), mode.name().to_string()];
                for &s in &self.scenarios {
                    let c = self.summary(ei, s, mode);
                    row.extend([
                        fmt_opt(c.mean_dist, 6),
                        fmt_opt(c.mean_iterations, 2),
                        fmt_opt(c.iterations_ci95, 2),
                        c.successes.to_string(),
                    ]);
                }
                w.write_record(&row).map_err(|e| SweepError::Csv(e.to_string()))?;
            }
        }
        finish_csv(TABLE_SCHEMA, w)
    }

    pub fn success_csv(&self) -> Result<String, SweepError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["epsilon".to_string(), "mode".to_string(), "scenario".to_string()];
        header.extend(self.caps.iter().map(|c| format!("cap_{c}")));
        w.write_record(&header).map_err(|e| SweepError::Csv(e.to_string()))?;
        for (ei, eps) in self.epsilons.iter().enumerate() {
            for &mode in &self.modes {
                for &s in &self.scenarios {
                    let mut row = vec![eps.to_string(), mode.name().to_string(), s.number().to_string()];
                    row.extend(self.caps.iter().map(|&c| fmt_opt(self.success_rate(ei, s, mode, c), 1)));
                    w.write_record(&row).map_err(|e| SweepError::Csv(e.to_string()))?;
                }
            }
        }
        finish_csv(SUCCESS_SCHEMA, w)
    }

    pub fn trials_csv(&self) -> Result<String, SweepError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "trial", "trial_seed", "epsilon", "scenario", "mode", "sample", "gallery", "target",
            "subset_size", "subset_seed", "verifier_seed", "success", "stop", "iterations", "dist",
            "hd", "full_hd", "enrolled_hd", "enrolled_fooled",
        ])
        .map_err(|e| SweepError::Csv(e.to_string()))?;
        for o in &self.outcomes {
            let p = &o.plan;
            w.write_record([
                p.trial.to_string(),
                p.seed.to_string(),
                o.epsilon.to_string(),
                o.scenario.number().to_string(),
                o.mode.name().to_string(),
                p.benign.to_string(),
                p.gallery.to_string(),
                p.target.map_or("NA".into(), |t| t.to_string()),
                self.subset_size.to_string(),
                p.subset_seed.to_string(),
                p.verifier_seed.to_string(),
                o.success.to_string(),
                o.stop.name().to_string(),
                o.iterations.to_string(),
                o.dist.to_string(),
                o.hd.to_string(),
                o.full_hd.to_string(),
                o.verification.hd.map_or("NA".into(), |h| h.to_string()),
                o.verification.fooled.to_string(),
            ])
            .map_err(|e| SweepError::Csv(e.to_string()))?;
        }
        finish_csv(TRIALS_SCHEMA, w)
    }
}
