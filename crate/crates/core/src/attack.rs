//! Clipped iterative gradient-sign attacks through the surrogate.
//!
//! Each iteration runs the surrogate on the current adversarial pair, builds
//! the restricted loss, takes one signed step on the iris (transformation P),
//! drops saturated pixels from the mask (transformation Q) and re-encodes the
//! result with the conventional codec to test termination.

use autodiff::{AutodiffError, Graph, NodeId, Tensor};
use thiserror::Error;

use crate::codec::{encode, FilterBank, IrisCode, IrisSample};
use crate::image::{BinaryImage, GrayImage};
use crate::matcher::{
    masked_hamming, subset_hamming, BitLocationSet, MatchError, DEFAULT_SUBSET_SIZE,
    VERIFICATION_THRESHOLD,
};
use crate::surrogate::{
    sample_inputs, Mode, SoftCode, SurrogateError, SurrogateWeights, BINARIZATION_THRESHOLD,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttackError {
    #[error("invalid attack config: {0}")]
    Config(String),
    #[error("non-finite input gradient at iteration {iteration}, pixel {index}")]
    NonFiniteGradient { iteration: usize, index: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("distance denominator is empty: no valid mask pixels")]
    EmptyDenominator,
    #[error("targeted attack needs a target sample")]
    MissingTarget,
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

pub type Result<T> = std::result::Result<T, AttackError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    /// Verifier compares the whole code.
    WholeCode = 1,
    /// Verifier compares a location set the attacker knows.
    KnownSubset = 2,
    /// Verifier compares a secret location set.
    HiddenSubset = 3,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::WholeCode, Scenario::KnownSubset, Scenario::HiddenSubset];

    pub fn number(self) -> u8 {
        self as u8
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "1" => Ok(Scenario::WholeCode),
            "2" => Ok(Scenario::KnownSubset),
            "3" => Ok(Scenario::HiddenSubset),
            other => Err(format!("unknown scenario `{other}` (expected 1, 2 or 3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackMode {
    NonTargeted,
    Targeted,
}

impl AttackMode {
    pub fn name(self) -> &'static str {
        match self {
            AttackMode::NonTargeted => "non-targeted",
            AttackMode::Targeted => "targeted",
        }
    }

    /// `direction` for [`igsm_step`]: ascend the loss when evading, descend
    /// it when impersonating.
    pub fn direction(self) -> f64 {
        match self {
            AttackMode::NonTargeted => -1.0,
            AttackMode::Targeted => 1.0,
        }
    }
}

impl std::str::FromStr for AttackMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "non-targeted" | "nontargeted" => Ok(AttackMode::NonTargeted),
            "targeted" => Ok(AttackMode::Targeted),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

pub const NON_TARGETED_DELTA: f64 = VERIFICATION_THRESHOLD;
pub const TARGETED_DELTA: f64 = 0.25;
/// One-sided 99% normal quantile.
pub const HIDDEN_SUBSET_Z: f64 = 2.326;

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub epsilon: f64,
    /// Termination threshold: HD must exceed it (non-targeted) or fall
    /// below it (targeted).
    pub delta: f64,
    pub max_iterations: usize,
    pub scenario: Scenario,
    /// Attacker-known locations; required for scenario 2 only.
    pub subset: Option<BitLocationSet>,
    pub mode: AttackMode,
    pub binarization_threshold: f64,
    /// Size of the verifier's secret set in scenario 3; sets the safety margin.
    pub hidden_subset_size: usize,
}

impl AttackConfig {
    pub fn new(epsilon: f64, scenario: Scenario, mode: AttackMode, max_iterations: usize) -> Self {
        Self {
            epsilon,
            delta: match mode {
                AttackMode::NonTargeted => NON_TARGETED_DELTA,
                AttackMode::Targeted => TARGETED_DELTA,
            },
            max_iterations,
            scenario,
            subset: None,
            mode,
            binarization_threshold: BINARIZATION_THRESHOLD,
            hidden_subset_size: DEFAULT_SUBSET_SIZE,
        }
    }

    pub fn with_subset(mut self, subset: BitLocationSet) -> Self {
        self.subset = Some(subset);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(AttackError::Config(format!("epsilon {} must be positive", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(AttackError::Config(format!("delta {} must lie in (0,1)", self.delta)));
        }
        if self.max_iterations == 0 {
            return Err(AttackError::Config("max_iterations must be at least 1".into()));
        }
        match (self.scenario, &self.subset) {
            (Scenario::KnownSubset, None) => {
                Err(AttackError::Config("scenario 2 needs the attacker's location set".into()))
            }
            (Scenario::KnownSubset, Some(v)) if v.is_empty() => {
                Err(AttackError::Config("scenario 2 location set is empty".into()))
            }
            (Scenario::WholeCode | Scenario::HiddenSubset, Some(_)) => Err(AttackError::Config(
                format!("scenario {} takes no location set", self.scenario.number()),
            )),
            _ => Ok(()),
        }?;
        if self.scenario == Scenario::HiddenSubset && self.hidden_subset_size == 0 {
            return Err(AttackError::Config("hidden subset size must be positive".into()));
        }
        Ok(())
    }

    /// Threshold the attacker stops at. In scenario 3 the full-code HD is a
    /// proxy for an unseen subset's HD, so the attacker overshoots by `z`
    /// binomial standard errors of a subset that size.
    pub fn stopping_threshold(&self) -> f64 {
        if self.scenario != Scenario::HiddenSubset {
            return self.delta;
        }
        let margin = HIDDEN_SUBSET_Z
            * (self.delta * (1.0 - self.delta) / self.hidden_subset_size as f64).sqrt();
        match self.mode {
            AttackMode::NonTargeted => self.delta + margin,
            AttackMode::Targeted => self.delta - margin,
        }
    }
}

/// `1` where the binarized soft code still agrees with the reference.
pub fn unflipped_bits(soft: &SoftCode, reference: &BinaryImage, threshold: f64) -> Result<BinaryImage> {
    if soft.values.dims() != reference.dims() {
        return Err(AttackError::Shape(format!(
            "soft code {:?} vs code {:?}",
            soft.values.dims(),
            reference.dims()
        )));
    }
    let bits = soft
        .values
        .data()
        .iter()
        .zip(reference.bits())
        .map(|(&s, &r)| (s > threshold) == r)
        .collect();
    let (h, w) = reference.dims();
    Ok(BinaryImage::new(h, w, bits))
}

/// Records `||(reference − soft) ⊙ restriction||₂` on `g`; `soft` is
/// `[1, rows, cols]` (or any shape with the same element count).
pub fn adversarial_loss(
    g: &mut Graph,
    soft: NodeId,
    reference: &BinaryImage,
    restriction: &BinaryImage,
) -> Result<NodeId> {
    let shape = g.shape(soft).to_vec();
    let n: usize = shape.iter().product();
    if reference.bits().len() != n || restriction.bits().len() != n {
        return Err(AttackError::Shape(format!(
            "soft code has {n} values, reference {} and restriction {}",
            reference.bits().len(),
            restriction.bits().len()
        )));
    }
    let reference = g.constant(Tensor::new(shape.clone(), reference.to_reals())?);
    let keep = g.constant(Tensor::new(shape, restriction.to_reals())?);
    let diff = g.sub(reference, soft)?;
    let kept = g.mul(diff, keep)?;
    Ok(g.l2_norm(kept)?)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `clip(x − direction·ε·sign(grad), 0, 1)` elementwise.
pub fn igsm_step(x: &[f64], grad: &[f64], epsilon: f64, direction: f64) -> Result<Vec<f64>> {
    if x.len() != grad.len() {
        return Err(AttackError::Shape(format!(
            "{} pixels vs {} gradient entries",
            x.len(),
            grad.len()
        )));
    }
    Ok(x.iter()
        .zip(grad)
        .map(|(&p, &g)| (p - direction * epsilon * sign(g)).clamp(0.0, 1.0))
        .collect())
}

/// Drops pixels that were already invalid or that the latest step drove to
/// 0 or 1 away from their benign value.
pub fn update_mask(prev: &BinaryImage, current: &GrayImage, benign: &GrayImage) -> Result<BinaryImage> {
    if prev.dims() != current.dims() || current.dims() != benign.dims() {
        return Err(AttackError::Shape(format!(
            "mask {:?}, iris {:?}, benign {:?}",
            prev.dims(),
            current.dims(),
            benign.dims()
        )));
    }
    let bits = prev
        .bits()
        .iter()
        .zip(current.data().iter().zip(benign.data()))
        .map(|(&m, (&x, &b))| m && !(x == 0.0 && b != 0.0) && !(x == 1.0 && b != 1.0))
        .collect();
    let (h, w) = prev.dims();
    Ok(BinaryImage::new(h, w, bits))
}

/// `||I − I*||₂ / popcount(mask)`; pass `I_M ∧ I_M_tar` for targeted runs.
pub fn attack_distance(benign: &GrayImage, adversarial: &GrayImage, mask: &BinaryImage) -> Result<f64> {
    if benign.dims() != adversarial.dims() || benign.dims() != mask.dims() {
        return Err(AttackError::Shape(format!(
            "benign {:?}, adversarial {:?}, mask {:?}",
            benign.dims(),
            adversarial.dims(),
            mask.dims()
        )));
    }
    let count = mask.count_ones();
    if count == 0 {
        return Err(AttackError::EmptyDenominator);
    }
    let norm = benign
        .data()
        .iter()
        .zip(adversarial.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(norm / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Succeeded,
    /// Iteration cap reached first.
    Exhausted,
    /// The loss restriction set became empty.
    NothingLeftToFlip,
    /// Saturation masking left no bit comparable with the reference.
    NoComparableBits,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::Succeeded => "succeeded",
            StopReason::Exhausted => "exhausted",
            StopReason::NothingLeftToFlip => "nothing-left-to-flip",
            StopReason::NoComparableBits => "no-comparable-bits",
        }
    }
}

/// One line of the per-iteration trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    /// Termination operand after this iteration's step.
    pub hd: f64,
    pub mask_popcount: usize,
    /// Valid bits where the binarized surrogate output disagrees with the benign code.
    pub flipped_bits: usize,
}

/// Mutable state of one run after `iteration` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackState {
    pub iteration: usize,
    pub iris: GrayImage,
    pub mask: BinaryImage,
    /// Surrogate output that produced the latest step.
    pub soft: Option<SoftCode>,
    /// Restriction set used by the latest step.
    pub restriction: Option<BinaryImage>,
    /// Conventional code of the current adversarial pair.
    pub code: IrisCode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub success: bool,
    pub stop: StopReason,
    pub iterations: usize,
    pub adversarial: IrisSample,
    pub code: IrisCode,
    pub soft: Option<SoftCode>,
    pub dist: f64,
    /// Termination operand at the end of the run; NaN when no bit is comparable.
    pub hd: f64,
    /// Whole-code masked HD to the reference (benign or target) code.
    pub full_hd: f64,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Continue,
    Stopped(StopReason),
}

/// Step-wise attack. `AttackRun::new` validates inputs; each [`AttackRun::step`]
/// performs one full iteration and updates [`AttackRun::state`].
pub struct AttackRun<'a> {
    weights: &'a SurrogateWeights,
    bank: &'a FilterBank,
    config: AttackConfig,
    benign: &'a IrisSample,
    benign_code: IrisCode,
    /// Code the termination test and loss are measured against.
    reference: IrisCode,
    target_mask: Option<&'a BinaryImage>,
    state: AttackState,
    trace: Vec<TraceRow>,
    stopped: Option<StopReason>,
    last_gradient: Option<Vec<f64>>,
}

impl<'a> AttackRun<'a> {
    pub fn new(
        benign: &'a IrisSample,
        weights: &'a SurrogateWeights,
        bank: &'a FilterBank,
        config: AttackConfig,
        target: Option<&'a IrisSample>,
    ) -> Result<Self> {
        config.validate()?;
        let cfg = weights.config();
        if benign.dims() != (cfg.height, cfg.width) || bank.len() != cfg.planes {
            return Err(AttackError::Shape(format!(
                "sample {:?} with {} filters vs network {}x{} with {} planes",
                benign.dims(),
                bank.len(),
                cfg.height,
                cfg.width,
                cfg.planes
            )));
        }
        let benign_code = encode(benign, bank);
        let (reference, target_mask) = match (config.mode, target) {
            (AttackMode::NonTargeted, _) => (benign_code.clone(), None),
            (AttackMode::Targeted, None) => return Err(AttackError::MissingTarget),
            (AttackMode::Targeted, Some(t)) => {
                if t.dims() != benign.dims() {
                    return Err(AttackError::Shape(format!(
                        "target {:?} vs benign {:?}",
                        t.dims(),
                        benign.dims()
                    )));
                }
                (encode(t, bank), Some(&t.mask))
            }
        };
        if let Some(v) = &config.subset {
            let (rows, cols) = benign_code.bits.dims();
            BitLocationSet::new(v.locations().to_vec(), rows, cols)?;
        }
        let state = AttackState {
            iteration: 0,
            iris: benign.iris.clone(),
            mask: benign.mask.clone(),
            soft: None,
            restriction: None,
            code: benign_code.clone(),
        };
        Ok(Self {
            weights,
            bank,
            config,
            benign,
            benign_code,
            reference,
            target_mask,
            state,
            trace: Vec::new(),
            stopped: None,
            last_gradient: None,
        })
    }

    pub fn state(&self) -> &AttackState {
        &self.state
    }

    pub fn config(&self) -> &AttackConfig {
        &self.config
    }

    pub fn benign_code(&self) -> &IrisCode {
        &self.benign_code
    }

    pub fn reference_code(&self) -> &IrisCode {
        &self.reference
    }

    /// Input-image gradient of the latest step's loss.
    pub fn last_gradient(&self) -> Option<&[f64]> {
        self.last_gradient.as_deref()
    }

    pub fn stopped(&self) -> Option<StopReason> {
        self.stopped
    }

    /// HD the termination test looks at, for an arbitrary candidate code.
    pub fn termination_hd(&self, code: &IrisCode) -> Result<f64> {
        Ok(match (&self.config.subset, self.config.scenario) {
            (Some(v), Scenario::KnownSubset) => subset_hamming(&self.reference, code, v)?.hd,
            _ => masked_hamming(&self.reference, code)?.hd,
        })
    }

    pub fn is_terminal(&self, hd: f64) -> bool {
        let t = self.config.stopping_threshold();
        match self.config.mode {
            AttackMode::NonTargeted => hd > t,
            AttackMode::Targeted => hd < t,
        }
    }

    /// Bits the loss is allowed to see: the unflipped ones when evading,
    /// all of them when impersonating, narrowed to `v` in scenario 2.
    fn restriction(&self, soft: &SoftCode) -> Result<BinaryImage> {
        let mut keep = match self.config.mode {
            AttackMode::NonTargeted => {
                unflipped_bits(soft, &self.benign_code.bits, self.config.binarization_threshold)?
            }
            AttackMode::Targeted => {
                let (rows, cols) = self.benign_code.bits.dims();
                BinaryImage::filled(rows, cols, true)
            }
        };
        if let Some(v) = &self.config.subset {
            let (rows, cols) = keep.dims();
            let mut in_v = vec![false; rows * cols];
            v.flat_indices(cols).for_each(|i| in_v[i] = true);
            keep.bits_mut().iter_mut().zip(in_v).for_each(|(k, i)| *k &= i);
        }
        Ok(keep)
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        if let Some(reason) = self.stopped {
            return Ok(StepOutcome::Stopped(reason));
        }
        let n = self.state.iteration + 1;
        let current = IrisSample {
            iris: self.state.iris.clone(),
            mask: self.state.mask.clone(),
        };
        let cfg = self.weights.config();
        let mut g = Graph::new();
        let (iris, mask) = sample_inputs(&mut g, std::slice::from_ref(&current), cfg, true)?;
        let pass = self.weights.forward(&mut g, iris, mask, Mode::Eval, false)?;
        let (rows, cols) = self.benign_code.bits.dims();
        let soft = SoftCode::from_values(cfg.planes, rows, cols, g.value(pass.soft).values().to_vec());
        let restriction = self.restriction(&soft)?;
        let flipped_bits = {
            let valid = self.state.code.mask.and(&self.benign_code.mask);
            let agree = unflipped_bits(&soft, &self.benign_code.bits, self.config.binarization_threshold)?;
            valid.bits().iter().zip(agree.bits()).filter(|(v, a)| **v && !**a).count()
        };
        if restriction.count_ones() == 0 {
            self.state.soft = Some(soft);
            self.state.restriction = Some(restriction);
            self.stopped = Some(StopReason::NothingLeftToFlip);
            return Ok(StepOutcome::Stopped(StopReason::NothingLeftToFlip));
        }
        let loss = adversarial_loss(&mut g, pass.soft, &self.reference.bits, &restriction)?;
        let loss_value = g.value(loss).values()[0];
        g.backward(loss)?;
        let grad = g.take_grad(iris).unwrap_or_else(|| vec![0.0; rows * cols]);
        if let Some(index) = grad.iter().position(|v| !v.is_finite()) {
            return Err(AttackError::NonFiniteGradient { iteration: n, index });
        }
        let (h, w) = self.state.iris.dims();
        let stepped = igsm_step(
            self.state.iris.data(),
            &grad,
            self.config.epsilon,
            self.config.mode.direction(),
        )?;
        let iris_next = GrayImage::new(h, w, stepped);
        let mask_next = update_mask(&self.state.mask, &iris_next, &self.benign.iris)?;
        let code = encode(
            &IrisSample {
                iris: iris_next.clone(),
                mask: mask_next.clone(),
            },
            self.bank,
        );
        let hd = match self.termination_hd(&code) {
            Ok(hd) => hd,
            Err(AttackError::Match(MatchError::EmptyJointMask)) => f64::NAN,
            Err(e) => return Err(e),
        };
        self.trace.push(TraceRow {
            iteration: n,
            loss: loss_value,
            hd,
            mask_popcount: mask_next.count_ones(),
            flipped_bits,
        });
        self.state = AttackState {
            iteration: n,
            iris: iris_next,
            mask: mask_next,
            soft: Some(soft),
            restriction: Some(restriction),
            code,
        };
        self.last_gradient = Some(grad);
        if hd.is_nan() {
            self.stopped = Some(StopReason::NoComparableBits);
        } else if self.is_terminal(hd) {
            self.stopped = Some(StopReason::Succeeded);
        } else if n >= self.config.max_iterations {
            self.stopped = Some(StopReason::Exhausted);
        }
        Ok(match self.stopped {
            Some(r) => StepOutcome::Stopped(r),
            None => StepOutcome::Continue,
        })
    }

    /// Steps until a stop condition holds.
    pub fn run(mut self) -> Result<AttackResult> {
        while let StepOutcome::Continue = self.step()? {}
        self.finish()
    }

    pub fn finish(self) -> Result<AttackResult> {
        let stop = self.stopped.unwrap_or(StopReason::Exhausted);
        let denominator = match self.target_mask {
            Some(t) => self.benign.mask.and(t),
            None => self.benign.mask.clone(),
        };
        let dist = attack_distance(&self.benign.iris, &self.state.iris, &denominator)?;
        let hd = self.termination_hd(&self.state.code).unwrap_or(f64::NAN);
        let full_hd = masked_hamming(&self.reference, &self.state.code).map_or(f64::NAN, |s| s.hd);
        Ok(AttackResult {
            success: stop == StopReason::Succeeded,
            stop,
            iterations: self.state.iteration,
            adversarial: IrisSample {
                iris: self.state.iris,
                mask: self.state.mask,
            },
            code: self.state.code,
            soft: self.state.soft,
            dist,
            hd,
            full_hd,
            trace: self.trace,
        })
    }
}

/// Runs an attack to completion. Targeted runs need `target`.
pub fn run_attack(
    benign: &IrisSample,
    weights: &SurrogateWeights,
    bank: &FilterBank,
    config: AttackConfig,
    target: Option<&IrisSample>,
) -> Result<AttackResult> {
    AttackRun::new(benign, weights, bank, config, target)?.run()
}
