//! U-Net surrogate of the Gabor encoder: (iris, mask) → soft code in [0,1].
//!
//! Encoder `conv1..convL` halves both extents with stride-2 separable 4×4
//! convolutions. Decoder `deconv{L-1}..deconv0` upsamples ×2 (nearest) and
//! applies a stride-1 separable 4×4 convolution; every decoder layer below
//! the top one sees its predecessor concatenated in depth with the encoder
//! output of matching resolution. Each convolution is followed by batch
//! norm, then ReLU, except `deconv0` which ends in tanh mapped to [0,1].

use autodiff::{AdamState, AutodiffError, BatchNormMode, Graph, NamedTensor, NodeId, Padding, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::codec::{encode, FilterBank, IrisCode, IrisSample};
use crate::image::{BinaryImage, GrayImage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("{layer}: input extent {height}x{width} cannot be halved")]
    IndivisibleExtent {
        layer: String,
        height: usize,
        width: usize,
    },
    #[error("invalid surrogate config: {0}")]
    Config(String),
    #[error("sample is {got:?} but the network expects {expected:?}")]
    ExtentMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {got:?}, expected {expected:?}")]
    ParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

pub type Result<T> = std::result::Result<T, SurrogateError>;

/// Output channels of conv1..conv5. conv4 keeps 256 so the deconv3 skip concat is 512 + 256.
pub const ENCODER_SCHEDULE: [usize; 5] = [64, 128, 256, 256, 512];
/// Output channels of deconv1..deconv4.
pub const DECODER_SCHEDULE: [usize; 4] = [64, 128, 256, 512];
pub const KERNEL: usize = 4;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateConfig {
    pub height: usize,
    pub width: usize,
    /// Filter count `F`; the decoder emits this many channels.
    pub planes: usize,
    pub levels: usize,
    /// conv1..conv{levels}
    pub encoder_channels: Vec<usize>,
    /// deconv1..deconv{levels-1}
    pub decoder_channels: Vec<usize>,
    /// Depthwise kernels per input channel in every layer but conv1.
    pub depth_multiplier: usize,
    /// Depthwise kernels per input channel in conv1, whose two input
    /// channels would otherwise pass through only two spatial filters.
    pub input_depth_multiplier: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Largest amplitude of the random ±a pixel noise added to half of the
    /// training samples, with labels re-encoded by the conventional codec.
    /// Zero disables it.
    pub augmentation: f64,
}

impl SurrogateConfig {
    /// Full channel schedule truncated to `levels` and divided by `divisor`.
    pub fn scaled(
        height: usize,
        width: usize,
        planes: usize,
        levels: usize,
        divisor: usize,
    ) -> Self {
        let levels_clamped = levels.clamp(1, ENCODER_SCHEDULE.len());
        Self {
            height,
            width,
            planes,
            levels,
            encoder_channels: ENCODER_SCHEDULE[..levels_clamped]
                .iter()
                .map(|c| (c / divisor).max(1))
                .collect(),
            decoder_channels: DECODER_SCHEDULE[..levels_clamped - 1]
                .iter()
                .map(|c| (c / divisor).max(1))
                .collect(),
            depth_multiplier: 1,
            input_depth_multiplier: 1,
            batch_size: 64,
            learning_rate: 1e-4,
            epochs: 20,
            augmentation: 0.0,
        }
    }

    /// 64×512 input, six planes, five levels, full channel counts.
    pub fn full_scale() -> Self {
        Self::scaled(64, 512, 6, 5, 1)
    }

    /// 16×128 input, one quadrature pair, four levels, channels ÷ 8.
    pub fn desk_scale() -> Self {
        Self {
            batch_size: 16,
            learning_rate: DESK_LEARNING_RATE,
            epochs: 20,
            augmentation: DESK_AUGMENTATION,
            ..Self::scaled(16, 128, 2, 4, 8)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.planes == 0 || self.levels == 0 || self.depth_multiplier == 0 || self.input_depth_multiplier == 0 {
            return Err(SurrogateError::Config(
                "planes, levels and depth multiplier must be positive".into(),
            ));
        }
        if self.encoder_channels.len() != self.levels
            || self.decoder_channels.len() + 1 != self.levels
        {
            return Err(SurrogateError::Config(format!(
                "{} levels need {} encoder and {} decoder channel counts",
                self.levels,
                self.levels,
                self.levels - 1
            )));
        }
        if self.encoder_channels.iter().chain(&self.decoder_channels).any(|&c| c == 0) {
            return Err(SurrogateError::Config("channel counts must be positive".into()));
        }
        if !(self.augmentation >= 0.0 && self.augmentation <= 1.0) {
            return Err(SurrogateError::Config("augmentation must lie in [0,1]".into()));
        }
        if !(self.learning_rate >= 0.0) {
            return Err(SurrogateError::Config("learning rate must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(SurrogateError::Config("batch size must be positive".into()));
        }
        let (mut h, mut w) = (self.height, self.width);
        for i in 1..=self.levels {
            if h == 0 || w == 0 || h % 2 != 0 || w % 2 != 0 {
                return Err(SurrogateError::IndivisibleExtent {
                    layer: format!("conv{i}"),
                    height: h,
                    width: w,
                });
            }
            h /= 2;
            w /= 2;
        }
        Ok(())
    }

    /// Name, input channels, output channels of every layer in execution order.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let enc = &self.encoder_channels;
        let dec = &self.decoder_channels;
        let mut out = Vec::new();
        for i in 0..self.levels {
            out.push(LayerSpec {
                name: format!("conv{}", i + 1),
                in_channels: if i == 0 { 2 } else { enc[i - 1] },
                out_channels: enc[i],
                decoder: false,
            });
        }
        for i in (0..self.levels).rev() {
            let in_channels = if i + 1 == self.levels {
                enc[self.levels - 1]
            } else {
                dec[i] + enc[i]
            };
            let out_channels = if i == 0 { self.planes } else { dec[i - 1] };
            out.push(LayerSpec {
                name: format!("deconv{i}"),
                in_channels,
                out_channels,
                decoder: true,
            });
        }
        out
    }

    /// Output shape `[C, H, W]` of every layer, by convolution arithmetic alone.
    pub fn layer_output_shapes(&self) -> Result<Vec<(String, [usize; 3])>> {
        self.validate()?;
        let mut shapes = Vec::new();
        let (mut h, mut w) = (self.height, self.width);
        for spec in self.layers() {
            if spec.decoder {
                h *= 2;
                w *= 2;
            } else {
                h /= 2;
                w /= 2;
            }
            shapes.push((spec.name, [spec.out_channels, h, w]));
        }
        Ok(shapes)
    }
}

/// Desk-profile rate. With ~1000 steps in total, 1e-4 stalls far above the
/// bit-error target.
pub const DESK_LEARNING_RATE: f64 = 1e-2;
/// Sign-noise augmentation for the desk profile. Without it the network is
/// sensitive to pixel-level sign patterns the band-pass filters ignore, and
/// gradient-sign steps fool it without changing the real code.
pub const DESK_AUGMENTATION: f64 = 0.1;

impl SurrogateConfig {
    fn multiplier_for(&self, spec: &LayerSpec) -> usize {
        if spec.name == "conv1" {
            self.input_depth_multiplier
        } else {
            self.depth_multiplier
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub decoder: bool,
}

impl LayerSpec {
    fn param_shapes(&self, multiplier: usize) -> Vec<(String, Vec<usize>)> {
        let mid = self.in_channels * multiplier;
        vec![
            (format!("{}.depthwise", self.name), vec![mid, 1, KERNEL, KERNEL]),
            (format!("{}.pointwise", self.name), vec![self.out_channels, mid, 1, 1]),
            (format!("{}.bn.gamma", self.name), vec![self.out_channels]),
            (format!("{}.bn.beta", self.name), vec![self.out_channels]),
            (format!("{}.bn.running_mean", self.name), vec![self.out_channels]),
            (format!("{}.bn.running_var", self.name), vec![self.out_channels]),
        ]
    }
}

fn is_running_stat(name: &str) -> bool {
    name.contains(".running_")
}

/// Ordered named parameters of one surrogate network.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateWeights {
    config: SurrogateConfig,
    params: Vec<NamedTensor>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Node handles produced by one forward pass.
#[derive(Debug)]
pub struct ForwardPass {
    /// Soft code, `[N, F·H, W]`.
    pub soft: NodeId,
    /// Parameter index → graph node, for collecting gradients.
    pub param_nodes: Vec<NodeId>,
    /// Layer name → batch-norm node.
    pub bn_nodes: Vec<(String, NodeId)>,
}

/// Fresh network with fan-in-scaled uniform weights; values are rounded to
/// `f32` so checkpoints reproduce them exactly.
pub fn build_surrogate(config: &SurrogateConfig, seed: u64) -> Result<SurrogateWeights> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for spec in config.layers() {
        for (name, shape) in spec.param_shapes(config.multiplier_for(&spec)) {
            let tensor = if name.ends_with(".depthwise") || name.ends_with(".pointwise") {
                let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                let bound = (6.0 / fan_in).sqrt();
                Tensor::from_fn(&shape, |_| rng.random_range(-bound..bound) as f32 as f64)
            } else if name.ends_with(".gamma") || name.ends_with(".running_var") {
                Tensor::full(&shape, 1.0)
            } else {
                Tensor::zeros(&shape)
            };
            params.push(NamedTensor::new(name, tensor));
        }
    }
    Ok(SurrogateWeights {
        config: config.clone(),
        params,
    })
}

impl SurrogateWeights {
    /// Reassembles weights (e.g. from a checkpoint), checking every shape.
    pub fn from_params(config: SurrogateConfig, params: Vec<NamedTensor>) -> Result<Self> {
        config.validate()?;
        let expected: Vec<(String, Vec<usize>)> = config
            .layers()
            .iter()
            .flat_map(|l| l.param_shapes(config.multiplier_for(l)))
            .collect();
        if params.len() != expected.len() {
            return Err(SurrogateError::Config(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        let mut ordered = Vec::with_capacity(expected.len());
        for (name, shape) in expected {
            let p = params
                .iter()
                .find(|p| p.name == name)
                .ok_or_else(|| SurrogateError::MissingParam(name.clone()))?;
            if p.tensor.shape() != shape.as_slice() {
                return Err(SurrogateError::ParamShape {
                    name,
                    expected: shape,
                    got: p.tensor.shape().to_vec(),
                });
            }
            if !p.tensor.all_finite() {
                return Err(SurrogateError::Config(format!("parameter `{name}` is not finite")));
            }
            ordered.push(p.clone());
        }
        Ok(Self {
            config,
            params: ordered,
        })
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    pub fn params(&self) -> &[NamedTensor] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    fn index_of(&self, name: &str) -> Result<usize> {
        self.params
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| SurrogateError::MissingParam(name.to_string()))
    }

    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            p.tensor
                .values_mut()
                .iter_mut()
                .for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// Records the network on `g`. `iris` and `mask` are `[N, 1, H, W]`.
    /// Parameters become gradient-carrying leaves when `trainable` is set.
    pub fn forward(
        &self,
        g: &mut Graph,
        iris: NodeId,
        mask: NodeId,
        mode: Mode,
        trainable: bool,
    ) -> Result<ForwardPass> {
        let cfg = &self.config;
        let shape = g.shape(iris).to_vec();
        if shape.len() != 4 || (shape[2], shape[3]) != (cfg.height, cfg.width) {
            return Err(SurrogateError::ExtentMismatch {
                expected: (cfg.height, cfg.width),
                got: (
                    shape.get(2).copied().unwrap_or(0),
                    shape.get(3).copied().unwrap_or(0),
                ),
            });
        }
        let batch = shape[0];
        let param_nodes: Vec<NodeId> = self
            .params
            .iter()
            .map(|p| {
                let learn = trainable && !is_running_stat(&p.name);
                g.leaf(p.tensor.clone().with_requires_grad(learn))
            })
            .collect();

        let mut x = g.concat(&[iris, mask])?;
        let mut skips = Vec::with_capacity(cfg.levels);
        let mut bn_nodes = Vec::new();
        for spec in cfg.layers() {
            let name = &spec.name;
            let node = |suffix: &str| -> Result<NodeId> {
                Ok(param_nodes[self.index_of(&format!("{name}.{suffix}"))?])
            };
            let (input, stride, padding) = if spec.decoder {
                let level: usize = name["deconv".len()..].parse().expect("layer names are generated");
                let input = if level + 1 == cfg.levels {
                    x
                } else {
                    g.concat(&[x, skips[level]])?
                };
                (g.upsample2x(input)?, 1, Padding::same(KERNEL))
            } else {
                (x, 2, Padding::uniform(1))
            };
            let conv = g.separable_conv2d(input, node("depthwise")?, node("pointwise")?, stride, padding)?;
            let bn_mode = match mode {
                Mode::Train => BatchNormMode::Train,
                Mode::Eval => BatchNormMode::Eval {
                    mean: self.params[self.index_of(&format!("{name}.bn.running_mean"))?]
                        .tensor
                        .values()
                        .to_vec(),
                    var: self.params[self.index_of(&format!("{name}.bn.running_var"))?]
                        .tensor
                        .values()
                        .to_vec(),
                },
            };
            let bn = g.batch_norm(conv, node("bn.gamma")?, node("bn.beta")?, &bn_mode)?;
            bn_nodes.push((name.clone(), bn));
            x = if name == "deconv0" { g.tanh(bn)? } else { g.relu(bn)? };
            if !spec.decoder {
                skips.push(x);
            }
        }
        let unit = g.affine(x, 0.5, 0.5)?;
        let soft = g.reshape(unit, &[batch, cfg.planes * cfg.height, cfg.width])?;
        Ok(ForwardPass {
            soft,
            param_nodes,
            bn_nodes,
        })
    }

    /// Eval-mode soft code for a single sample.
    pub fn predict(&self, sample: &IrisSample) -> Result<SoftCode> {
        let mut g = Graph::new();
        let (iris, mask) = sample_inputs(&mut g, std::slice::from_ref(sample), &self.config, false)?;
        let pass = self.forward(&mut g, iris, mask, Mode::Eval, false)?;
        Ok(SoftCode::from_values(
            self.config.planes,
            self.config.planes * self.config.height,
            self.config.width,
            g.value(pass.soft).values().to_vec(),
        ))
    }

    fn update_running_stats(&mut self, g: &Graph, pass: &ForwardPass) -> Result<()> {
        for (name, node) in &pass.bn_nodes {
            let Some((mean, var)) = g.batch_stats(*node) else {
                continue;
            };
            let shape = g.shape(*node);
            let count = (shape[0] * shape[2..].iter().product::<usize>()) as f64;
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let mi = self.index_of(&format!("{name}.bn.running_mean"))?;
            for (r, m) in self.params[mi].tensor.values_mut().iter_mut().zip(mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
            }
            let vi = self.index_of(&format!("{name}.bn.running_var"))?;
            for (r, v) in self.params[vi].tensor.values_mut().iter_mut().zip(var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbias;
            }
        }
        Ok(())
    }
}

/// Stacks samples into `[N,1,H,W]` iris and mask leaves.
pub fn sample_inputs(
    g: &mut Graph,
    samples: &[IrisSample],
    config: &SurrogateConfig,
    iris_requires_grad: bool,
) -> Result<(NodeId, NodeId)> {
    let (h, w) = (config.height, config.width);
    let mut iris = Vec::with_capacity(samples.len() * h * w);
    let mut mask = Vec::with_capacity(samples.len() * h * w);
    for s in samples {
        if s.dims() != (h, w) {
            return Err(SurrogateError::ExtentMismatch {
                expected: (h, w),
                got: s.dims(),
            });
        }
        iris.extend_from_slice(s.iris.data());
        mask.extend(s.mask.to_reals());
    }
    let n = samples.len();
    let iris = Tensor::new(vec![n, 1, h, w], iris)?.with_requires_grad(iris_requires_grad);
    let mask = Tensor::new(vec![n, 1, h, w], mask)?;
    Ok((g.leaf(iris), g.constant(mask)))
}

/// Real-valued code in [0,1], same plane-major layout as [`IrisCode`].
#[derive(Debug, Clone, PartialEq)]
pub struct SoftCode {
    pub planes: usize,
    pub values: GrayImage,
}

impl SoftCode {
    pub fn from_values(planes: usize, rows: usize, cols: usize, values: Vec<f64>) -> Self {
        Self {
            planes,
            values: GrayImage::new(rows, cols, values),
        }
    }

    pub fn binarize(&self, threshold: f64) -> BinaryImage {
        let (r, c) = self.values.dims();
        BinaryImage::new(r, c, self.values.data().iter().map(|&v| v > threshold).collect())
    }
}

/// Threshold turning a soft code into bits.
pub const BINARIZATION_THRESHOLD: f64 = 0.5;

/// One training example: a sample and its conventional code.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub sample: IrisSample,
    pub code: IrisCode,
}

/// Reconstruction loss `||T_a − T_s||₂` averaged over the batch.
pub fn reconstruction_loss(g: &mut Graph, soft: NodeId, codes: &[&IrisCode]) -> Result<NodeId> {
    let shape = g.shape(soft).to_vec();
    let mut target = Vec::with_capacity(shape.iter().product());
    for c in codes {
        target.extend(c.bits.to_reals());
    }
    let target = g.constant(Tensor::new(shape, target)?);
    let residual = g.sub(target, soft)?;
    let norms = g.row_norms(residual)?;
    Ok(g.mean(norms)?)
}

/// Mini-batch ADAM on the reconstruction loss. Returns the per-epoch mean
/// batch loss; `on_epoch` sees `(epoch, mean_loss)` as each epoch ends.
pub fn fit(
    weights: &mut SurrogateWeights,
    data: &[TrainingPair],
    bank: &FilterBank,
    seed: u64,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(SurrogateError::EmptyDataset);
    }
    let cfg = weights.config.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7a1e);
    let mut adam = AdamState::new(cfg.learning_rate);
    let trainable: Vec<usize> = (0..weights.params.len())
        .filter(|&i| !is_running_stat(&weights.params[i].name))
        .collect();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut samples = Vec::with_capacity(chunk.len());
            let mut codes = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let pair = &data[i];
                if cfg.augmentation > 0.0 && rng.random_bool(0.5) {
                    let a = rng.random_range(0.0..cfg.augmentation);
                    let mut sample = pair.sample.clone();
                    for p in sample.iris.data_mut() {
                        let s = if rng.random_bool(0.5) { a } else { -a };
                        *p = (*p + s).clamp(0.0, 1.0);
                    }
                    codes.push(encode(&sample, bank));
                    samples.push(sample);
                } else {
                    samples.push(pair.sample.clone());
                    codes.push(pair.code.clone());
                }
            }
            let codes: Vec<&IrisCode> = codes.iter().collect();
            let mut g = Graph::new();
            let (iris, mask) = sample_inputs(&mut g, &samples, &cfg, false)?;
            let pass = weights.forward(&mut g, iris, mask, Mode::Train, true)?;
            let loss = reconstruction_loss(&mut g, pass.soft, &codes)?;
            let value = g.value(loss).values()[0];
            if !value.is_finite() {
                return Err(SurrogateError::NonFiniteLoss { epoch, batch: bi });
            }
            g.backward(loss)?;
            let grads: Vec<Vec<f64>> = trainable
                .iter()
                .map(|&i| g.take_grad(pass.param_nodes[i]).unwrap_or_default())
                .collect();
            let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            let mut params: Vec<&mut NamedTensor> = weights
                .params
                .iter_mut()
                .enumerate()
                .filter(|(i, _)| trainable.contains(i))
                .map(|(_, p)| p)
                .collect();
            adam.step(&mut params, &grad_refs)?;
            weights.update_running_stats(&g, &pass)?;
            total += value;
            batches += 1;
        }
        let mean = total / batches as f64;
        curve.push(mean);
        on_epoch(epoch, mean);
    }
    weights.round_to_f32();
    Ok(curve)
}

/// Builds a network from `seed` and trains it for `config.epochs` epochs.
pub fn train_surrogate(
    config: &SurrogateConfig,
    data: &[TrainingPair],
    bank: &FilterBank,
    seed: u64,
) -> Result<(SurrogateWeights, Vec<f64>)> {
    let mut weights = build_surrogate(config, seed)?;
    let curve = fit(&mut weights, data, bank, seed, |_, _| {})?;
    Ok((weights, curve))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BitErrorReport {
    /// Mean per-sample fraction of masked bits that disagree.
    pub rate: f64,
    pub evaluated: usize,
    /// Indices of samples whose code mask is empty.
    pub skipped: Vec<usize>,
}

/// Per-sample masked mismatch fraction between binarized `soft` and `code`.
pub fn code_error(soft: &BinaryImage, code: &IrisCode) -> Option<f64> {
    let mut wrong = 0usize;
    let mut valid = 0usize;
    for ((s, t), m) in soft.bits().iter().zip(code.bits.bits()).zip(code.mask.bits()) {
        if *m {
            valid += 1;
            wrong += usize::from(s != t);
        }
    }
    (valid > 0).then(|| wrong as f64 / valid as f64)
}

pub fn bit_error_rate(weights: &SurrogateWeights, data: &[TrainingPair]) -> Result<BitErrorReport> {
    let per_sample: Vec<Option<f64>> = data
        .par_iter()
        .map(|pair| {
            let soft = weights.predict(&pair.sample)?;
            Ok(code_error(&soft.binarize(BINARIZATION_THRESHOLD), &pair.code))
        })
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    let mut evaluated = 0;
    let mut skipped = Vec::new();
    for (i, e) in per_sample.into_iter().enumerate() {
        match e {
            Some(e) => {
                sum += e;
                evaluated += 1;
            }
            None => skipped.push(i),
        }
    }
    Ok(BitErrorReport {
        rate: if evaluated > 0 { sum / evaluated as f64 } else { 0.0 },
        evaluated,
        skipped,
    })
}
