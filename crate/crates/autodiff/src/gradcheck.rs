use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{AutodiffError, Result};
use crate::graph::{BatchNormMode, Graph, NodeId};
use crate::kernels::{Conv2dAttrs, Padding};
use crate::layer::{LayerAttrs, LayerKind};
use crate::tensor::Tensor;

/// Compares backward-pass gradients against central differences.
///
/// `build` receives a fresh graph and the leaf ids of `params` (in order)
/// and returns the scalar loss node. The result is the maximum over all
/// coordinates of `|analytic - numeric| / max(1, |analytic|)`.
pub fn finite_diff_check<F>(build: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    assert!(h > 0.0, "finite difference step must be positive");

    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|t| g.constant(t.clone())).collect();
        let loss = build(&mut g, &ids)?;
        Ok(g.value(loss).values()[0])
    };

    let mut g = Graph::new();
    let ids: Vec<NodeId> = params.iter().map(|t| g.param(t.clone())).collect();
    let loss = build(&mut g, &ids)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| g.grad(id).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for j in 0..params[pi].len() {
            let orig = params[pi].values()[j];
            probe[pi].values_mut()[j] = orig + h;
            let up = eval(&probe)?;
            probe[pi].values_mut()[j] = orig - h;
            let down = eval(&probe)?;
            probe[pi].values_mut()[j] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(AutodiffError::NonFiniteProbe {
                    param: pi,
                    index: j,
                });
            }
            let numeric = (up - down) / (2.0 * h);
            let err = (grad[j] - numeric).abs() / grad[j].abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

pub(crate) fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Contracts an arbitrary output with a fixed random tensor so every output
/// coordinate carries a distinct weight into the scalar loss.
fn weighted_sum(g: &mut Graph, out: NodeId, weights: &Tensor) -> Result<NodeId> {
    let w = g.constant(weights.clone());
    let prod = g.mul(out, w)?;
    g.sum(prod)
}

type Build = Box<dyn Fn(&mut Graph, &[NodeId]) -> Result<NodeId> + Send + Sync>;

/// A small randomly shaped instance of one layer kind, reduced to a scalar
/// by a fixed random contraction.
pub struct LayerCase {
    pub kind: LayerKind,
    pub seed: u64,
    pub params: Vec<Tensor>,
    build: Build,
}

impl LayerCase {
    /// Max relative error of the backward pass against central differences.
    pub fn check(&self, h: f64) -> Result<f64> {
        finite_diff_check(&self.build, &self.params, h)
    }
}

/// Builds the case for `kind` from `seed`. Shapes stay tiny (batch ≤ 2,
/// channels ≤ 3, extents ≤ 6).
pub fn layer_case(kind: LayerKind, seed: u64) -> LayerCase {
    let (params, build) = case_parts(kind, seed);
    LayerCase { kind, seed, params, build }
}

fn case_parts(kind: LayerKind, seed: u64) -> (Vec<Tensor>, Build) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..3);
    let c = rng.random_range(1..4);
    let h = rng.random_range(3..7);
    let w = rng.random_range(3..7);
    let x = random_tensor(&mut rng, &[n, c, h, w]);
    match kind {
        LayerKind::Conv2d => {
            let cout = rng.random_range(1..4);
            let k = rng.random_range(1..4);
            let stride = rng.random_range(1..3);
            let pad = rng.random_range(0..2);
            let attrs = Conv2dAttrs {
                stride,
                padding: Padding::uniform(pad),
                groups: 1,
            };
            let wt = random_tensor(&mut rng, &[cout, c, k, k]);
            let probe = {
                let mut g = Graph::new();
                let a = g.constant(x.clone());
                let b = g.constant(wt.clone());
                let o = g.conv2d(a, b, attrs).unwrap();
                g.shape(o).to_vec()
            };
            let r = random_tensor(&mut rng, &probe);
            (
                vec![x, wt],
                Box::new(move |g, p| {
                    let o = g.layer_forward(LayerKind::Conv2d, &[p[0]], &[p[1]], &LayerAttrs::Conv(attrs))?;
                    weighted_sum(g, o, &r)
                }),
            )
        }
        LayerKind::SeparableConv2d => {
            let cout = rng.random_range(1..4);
            let mult = rng.random_range(1..3);
            let k = 4;
            let (stride, padding) = if rng.random_bool(0.5) {
                (2, Padding::uniform(1))
            } else {
                (1, Padding::same(k))
            };
            let dw = random_tensor(&mut rng, &[c * mult, 1, k, k]);
            let pw = random_tensor(&mut rng, &[cout, c * mult, 1, 1]);
            let attrs = LayerAttrs::Separable { stride, padding };
            let probe = {
                let mut g = Graph::new();
                let ids = [g.constant(x.clone()), g.constant(dw.clone()), g.constant(pw.clone())];
                let o = g.layer_forward(LayerKind::SeparableConv2d, &ids[..1], &ids[1..], &attrs).unwrap();
                g.shape(o).to_vec()
            };
            let r = random_tensor(&mut rng, &probe);
            (
                vec![x, dw, pw],
                Box::new(move |g, p| {
                    let o = g.layer_forward(LayerKind::SeparableConv2d, &p[..1], &p[1..], &attrs)?;
                    weighted_sum(g, o, &r)
                }),
            )
        }
        LayerKind::Upsample2x => {
            let r = random_tensor(&mut rng, &[n, c, 2 * h, 2 * w]);
            (
                vec![x],
                Box::new(move |g, p| {
                    let o = g.layer_forward(LayerKind::Upsample2x, p, &[], &LayerAttrs::None)?;
                    weighted_sum(g, o, &r)
                }),
            )
        }
        LayerKind::BatchNorm => {
            let gamma = random_tensor(&mut rng, &[c]);
            let beta = random_tensor(&mut rng, &[c]);
            let r = random_tensor(&mut rng, &[n, c, h, w]);
            let mode = if seed.is_multiple_of(2) {
                BatchNormMode::Train
            } else {
                BatchNormMode::Eval {
                    mean: (0..c).map(|_| rng.random_range(-0.5..0.5)).collect(),
                    var: (0..c).map(|_| rng.random_range(0.5..2.0)).collect(),
                }
            };
            let attrs = LayerAttrs::BatchNorm(mode);
            (
                vec![x, gamma, beta],
                Box::new(move |g, p| {
                    let o = g.layer_forward(LayerKind::BatchNorm, &p[..1], &p[1..], &attrs)?;
                    weighted_sum(g, o, &r)
                }),
            )
        }
        LayerKind::Relu | LayerKind::Tanh => {
            // keep inputs away from relu's kink at 0
            let x = Tensor::from_fn(x.shape(), |i| {
                let v = x.values()[i];
                if v.abs() < 1e-3 { 0.5 } else { v }
            });
            let r = random_tensor(&mut rng, x.shape());
            (
                vec![x],
                Box::new(move |g, p| {
                    let o = g.layer_forward(kind, p, &[], &LayerAttrs::None)?;
                    weighted_sum(g, o, &r)
                }),
            )
        }
        LayerKind::Concat => {
            let c2 = rng.random_range(1..4);
            let y = random_tensor(&mut rng, &[n, c2, h, w]);
            let r = random_tensor(&mut rng, &[n, c + c2, h, w]);
            (
                vec![x, y],
                Box::new(move |g, p| {
                    let o = g.layer_forward(LayerKind::Concat, p, &[], &LayerAttrs::None)?;
                    weighted_sum(g, o, &r)
                }),
            )
        }
        LayerKind::Reshape => {
            let target = vec![n * c, h * w];
            let r = random_tensor(&mut rng, &target);
            (
                vec![x],
                Box::new(move |g, p| {
                    let o = g.layer_forward(LayerKind::Reshape, p, &[], &LayerAttrs::Reshape(target.clone()))?;
                    weighted_sum(g, o, &r)
                }),
            )
        }
        LayerKind::L2Norm => (
            vec![x],
            Box::new(|g, p| g.layer_forward(LayerKind::L2Norm, p, &[], &LayerAttrs::None)),
        ),
        LayerKind::Sub | LayerKind::Mul => {
            let y = random_tensor(&mut rng, x.shape());
            let r = random_tensor(&mut rng, x.shape());
            (
                vec![x, y],
                Box::new(move |g, p| {
                    let o = g.layer_forward(kind, p, &[], &LayerAttrs::None)?;
                    weighted_sum(g, o, &r)
                }),
            )
        }
    }
}
