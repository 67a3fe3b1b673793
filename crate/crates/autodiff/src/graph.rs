//! Tape-style computation graph. Nodes are appended in execution order, so the
//! node index is already a topological order and `backward` walks it in reverse.

use crate::error::{AutodiffError, Result};
use crate::kernels::{self, Conv2dAttrs, ConvGeom};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchNormMode {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with frozen running statistics.
    Eval { mean: Vec<f64>, var: Vec<f64> },
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: NodeId,
        weight: NodeId,
        geom: ConvGeom,
    },
    Upsample2x {
        input: NodeId,
    },
    BatchNorm {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_mean: Vec<f64>,
        batch_var: Vec<f64>,
        train: bool,
    },
    Relu {
        input: NodeId,
    },
    Tanh {
        input: NodeId,
    },
    Concat {
        inputs: Vec<NodeId>,
    },
    Reshape {
        input: NodeId,
    },
    L2Norm {
        input: NodeId,
    },
    RowNorms {
        input: NodeId,
    },
    Sum {
        input: NodeId,
    },
    Mean {
        input: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Affine {
        input: NodeId,
        scale: f64,
    },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d { input, weight, .. } => vec![*input, *weight],
            Op::BatchNorm {
                input, gamma, beta, ..
            } => vec![*input, *gamma, *beta],
            Op::Concat { inputs } => inputs.clone(),
            Op::Add { a, b } | Op::Sub { a, b } | Op::Mul { a, b } => vec![*a, *b],
            Op::Upsample2x { input }
            | Op::Relu { input }
            | Op::Tanh { input }
            | Op::Reshape { input }
            | Op::L2Norm { input }
            | Op::RowNorms { input }
            | Op::Sum { input }
            | Op::Mean { input }
            | Op::Affine { input, .. } => vec![*input],
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Records a forward computation and replays it backwards.
///
/// A graph is single-use: build it, call [`Graph::backward`] once, read gradients.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf; its `requires_grad` flag decides whether gradients reach it.
    pub fn leaf(&mut self, tensor: Tensor) -> NodeId {
        self.push(Op::Leaf, tensor)
    }

    pub fn constant(&mut self, tensor: Tensor) -> NodeId {
        self.leaf(tensor.with_requires_grad(false))
    }

    pub fn param(&mut self, tensor: Tensor) -> NodeId {
        self.leaf(tensor.with_requires_grad(true))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].value.grad()
    }

    pub fn take_grad(&mut self, id: NodeId) -> Option<Vec<f64>> {
        self.nodes[id.0].value.take_grad()
    }

    /// Batch mean and biased variance seen by a train-mode batch-norm node.
    pub fn batch_stats(&self, id: NodeId) -> Option<(&[f64], &[f64])> {
        match &self.nodes[id.0].op {
            Op::BatchNorm {
                batch_mean,
                batch_var,
                train: true,
                ..
            } => Some((batch_mean, batch_var)),
            _ => None,
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        let requires_grad = value.requires_grad()
            || op
                .inputs()
                .iter()
                .any(|i| self.nodes[i.0].value.requires_grad());
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            value: value.with_requires_grad(requires_grad),
        });
        id
    }

    fn derived(&mut self, op: Op, shape: Vec<usize>, values: Vec<f64>) -> NodeId {
        let t = Tensor::new(shape, values).expect("kernel produced a buffer matching its shape");
        self.push(op, t)
    }

    fn same_shape(&self, layer: &str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::ShapeMismatch {
                layer: layer.to_string(),
                expected: self.shape(a).to_vec(),
                got: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn conv2d(&mut self, input: NodeId, weight: NodeId, attrs: Conv2dAttrs) -> Result<NodeId> {
        let geom = ConvGeom::new("conv2d", self.shape(input), self.shape(weight), &attrs)?;
        let out = kernels::conv_forward(
            &geom,
            self.value(input).values(),
            self.value(weight).values(),
        );
        Ok(self.derived(
            Op::Conv2d {
                input,
                weight,
                geom,
            },
            geom.out_shape(),
            out,
        ))
    }

    /// Depthwise convolution (`depthwise` is `[C·m, 1, k, k]`) followed by a
    /// pointwise 1×1 mix (`pointwise` is `[C_out, C·m, 1, 1]`).
    pub fn separable_conv2d(
        &mut self,
        input: NodeId,
        depthwise: NodeId,
        pointwise: NodeId,
        stride: usize,
        padding: kernels::Padding,
    ) -> Result<NodeId> {
        let channels = *self.shape(input).get(1).ok_or_else(|| AutodiffError::ShapeMismatch {
            layer: "separable_conv2d".into(),
            expected: vec![0, 0, 0, 0],
            got: self.shape(input).to_vec(),
        })?;
        let dw = self.conv2d(
            input,
            depthwise,
            Conv2dAttrs {
                stride,
                padding,
                groups: channels,
            },
        )?;
        self.conv2d(dw, pointwise, Conv2dAttrs::default())
    }

    pub fn upsample2x(&mut self, input: NodeId) -> Result<NodeId> {
        let shape = self.shape(input).to_vec();
        if shape.len() != 4 {
            return Err(AutodiffError::ShapeMismatch {
                layer: "upsample2x".into(),
                expected: vec![0, 0, 0, 0],
                got: shape,
            });
        }
        let out = kernels::upsample2x_forward(&shape, self.value(input).values());
        Ok(self.derived(
            Op::Upsample2x { input },
            vec![shape[0], shape[1], shape[2] * 2, shape[3] * 2],
            out,
        ))
    }

    pub fn batch_norm(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        mode: &BatchNormMode,
    ) -> Result<NodeId> {
        let shape = self.shape(input).to_vec();
        if shape.len() < 2 {
            return Err(AutodiffError::ShapeMismatch {
                layer: "batch_norm".into(),
                expected: vec![0, 0],
                got: shape,
            });
        }
        let c = shape[1];
        for p in [gamma, beta] {
            if self.shape(p) != [c] {
                return Err(AutodiffError::ShapeMismatch {
                    layer: "batch_norm".into(),
                    expected: vec![c],
                    got: self.shape(p).to_vec(),
                });
            }
        }
        let stats = match mode {
            BatchNormMode::Train => None,
            BatchNormMode::Eval { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(AutodiffError::ShapeMismatch {
                        layer: "batch_norm running stats".into(),
                        expected: vec![c],
                        got: vec![mean.len(), var.len()],
                    });
                }
                Some((mean.as_slice(), var.as_slice()))
            }
        };
        let fwd = kernels::batch_norm_forward(
            &shape,
            self.value(input).values(),
            self.value(gamma).values(),
            self.value(beta).values(),
            stats,
        );
        let train = stats.is_none();
        Ok(self.derived(
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat: fwd.xhat,
                inv_std: fwd.inv_std,
                batch_mean: fwd.mean,
                batch_var: fwd.var,
                train,
            },
            shape,
            fwd.out,
        ))
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        let out = self.value(input).values().iter().map(|&v| v.max(0.0)).collect();
        let shape = self.shape(input).to_vec();
        Ok(self.derived(Op::Relu { input }, shape, out))
    }

    pub fn tanh(&mut self, input: NodeId) -> Result<NodeId> {
        let out = self.value(input).values().iter().map(|v| v.tanh()).collect();
        let shape = self.shape(input).to_vec();
        Ok(self.derived(Op::Tanh { input }, shape, out))
    }

    /// Concatenation along axis 1 (depth).
    pub fn concat(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        let first = *inputs.first().ok_or_else(|| AutodiffError::InvalidAttrs {
            layer: "concat".into(),
            reason: "no inputs".into(),
        })?;
        let base = self.shape(first).to_vec();
        if base.len() < 2 {
            return Err(AutodiffError::ShapeMismatch {
                layer: "concat".into(),
                expected: vec![0, 0],
                got: base,
            });
        }
        let mut depth = 0;
        for &i in inputs {
            let s = self.shape(i);
            if s.len() != base.len() || s[0] != base[0] || s[2..] != base[2..] {
                let mut expected = base.clone();
                expected[1] = s.get(1).copied().unwrap_or(0);
                return Err(AutodiffError::ShapeMismatch {
                    layer: "concat".into(),
                    expected,
                    got: s.to_vec(),
                });
            }
            depth += s[1];
        }
        let inner: usize = base[2..].iter().product();
        let mut out = Vec::with_capacity(base[0] * depth * inner);
        for b in 0..base[0] {
            for &i in inputs {
                let c = self.shape(i)[1];
                out.extend_from_slice(&self.value(i).values()[b * c * inner..][..c * inner]);
            }
        }
        let mut shape = base;
        shape[1] = depth;
        Ok(self.derived(
            Op::Concat {
                inputs: inputs.to_vec(),
            },
            shape,
            out,
        ))
    }

    pub fn reshape(&mut self, input: NodeId, shape: &[usize]) -> Result<NodeId> {
        let t = self
            .value(input)
            .reshaped(shape)
            .map_err(|_| AutodiffError::ShapeMismatch {
                layer: "reshape".into(),
                expected: shape.to_vec(),
                got: self.shape(input).to_vec(),
            })?;
        Ok(self.push(Op::Reshape { input }, t))
    }

    /// Euclidean norm of the whole tensor.
    pub fn l2_norm(&mut self, input: NodeId) -> Result<NodeId> {
        let n = self.value(input).values().iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(self.derived(Op::L2Norm { input }, vec![1], vec![n]))
    }

    /// Euclidean norm of each slice along axis 0, giving a `[N]` vector.
    pub fn row_norms(&mut self, input: NodeId) -> Result<NodeId> {
        let rows = self.shape(input)[0];
        let width = self.value(input).len() / rows;
        let out = self
            .value(input)
            .values()
            .chunks(width)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        Ok(self.derived(Op::RowNorms { input }, vec![rows], out))
    }

    pub fn sum(&mut self, input: NodeId) -> Result<NodeId> {
        let s = self.value(input).values().iter().sum();
        Ok(self.derived(Op::Sum { input }, vec![1], vec![s]))
    }

    pub fn mean(&mut self, input: NodeId) -> Result<NodeId> {
        let t = self.value(input);
        let m = t.values().iter().sum::<f64>() / t.len() as f64;
        Ok(self.derived(Op::Mean { input }, vec![1], vec![m]))
    }

    fn elementwise(
        &mut self,
        layer: &str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        self.same_shape(layer, a, b)?;
        let out = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.derived(op, shape, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    /// `scale·x + shift`.
    pub fn affine(&mut self, input: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        let out = self
            .value(input)
            .values()
            .iter()
            .map(|&v| scale * v + shift)
            .collect();
        let shape = self.shape(input).to_vec();
        Ok(self.derived(Op::Affine { input, scale }, shape, out))
    }

    /// Reverse-mode sweep from a scalar `loss`. Afterwards every node that
    /// requires a gradient and precedes `loss` holds dLoss/dNode.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let loss_value = &self.nodes[loss.0].value;
        if !loss_value.is_scalar() {
            return Err(AutodiffError::NotScalar(loss_value.shape().to_vec()));
        }
        for (idx, node) in self.nodes[..=loss.0].iter().enumerate() {
            if let Some(bad) = node.op.inputs().into_iter().find(|i| i.0 >= idx) {
                return Err(AutodiffError::Cycle {
                    node: idx,
                    input: bad.0,
                });
            }
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].value.requires_grad() {
                continue;
            }
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            for (input, g) in self.local_grads(idx, &gout) {
                if !self.nodes[input.0].value.requires_grad() {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
            grads[idx] = Some(gout);
        }

        for (idx, g) in grads.into_iter().enumerate() {
            let node = &mut self.nodes[idx];
            if node.value.requires_grad() {
                let len = node.value.len();
                node.value.set_grad(g.unwrap_or_else(|| vec![0.0; len]));
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of node `idx` for each of its inputs.
    fn local_grads(&self, idx: usize, gout: &[f64]) -> Vec<(NodeId, Vec<f64>)> {
        let node = &self.nodes[idx];
        let needs = |id: NodeId| self.nodes[id.0].value.requires_grad();
        let val = |id: NodeId| self.nodes[id.0].value.values();
        match &node.op {
            Op::Leaf => vec![],
            Op::Conv2d {
                input,
                weight,
                geom,
            } => {
                let (dx, dw) = kernels::conv_backward(
                    geom,
                    val(*input),
                    val(*weight),
                    gout,
                    needs(*input),
                    needs(*weight),
                );
                let mut out = Vec::new();
                if let Some(dx) = dx {
                    out.push((*input, dx));
                }
                if let Some(dw) = dw {
                    out.push((*weight, dw));
                }
                out
            }
            Op::Upsample2x { input } => {
                vec![(
                    *input,
                    kernels::upsample2x_backward(self.nodes[input.0].value.shape(), gout),
                )]
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
                ..
            } => {
                let bn = kernels::batch_norm_backward(
                    node.value.shape(),
                    gout,
                    val(*gamma),
                    xhat,
                    inv_std,
                    *train,
                );
                vec![(*input, bn.dx), (*gamma, bn.dgamma), (*beta, bn.dbeta)]
            }
            Op::Relu { input } => {
                let x = val(*input);
                vec![(
                    *input,
                    gout.iter()
                        .zip(x)
                        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                        .collect(),
                )]
            }
            Op::Tanh { input } => {
                let y = node.value.values();
                vec![(
                    *input,
                    gout.iter().zip(y).map(|(&g, &y)| g * (1.0 - y * y)).collect(),
                )]
            }
            Op::Concat { inputs } => {
                let shape = node.value.shape();
                let inner: usize = shape[2..].iter().product();
                let depth = shape[1];
                let mut offset = 0;
                let mut out = Vec::with_capacity(inputs.len());
                for &i in inputs {
                    let c = self.nodes[i.0].value.shape()[1];
                    let mut g = Vec::with_capacity(self.nodes[i.0].value.len());
                    for b in 0..shape[0] {
                        g.extend_from_slice(&gout[(b * depth + offset) * inner..][..c * inner]);
                    }
                    offset += c;
                    out.push((i, g));
                }
                out
            }
            Op::Reshape { input } => vec![(*input, gout.to_vec())],
            Op::L2Norm { input } => {
                let norm = node.value.values()[0];
                let scale = if norm > 0.0 { gout[0] / norm } else { 0.0 };
                vec![(*input, val(*input).iter().map(|x| x * scale).collect())]
            }
            Op::RowNorms { input } => {
                let x = val(*input);
                let rows = node.value.len();
                let width = x.len() / rows;
                let mut g = Vec::with_capacity(x.len());
                for (r, chunk) in x.chunks(width).enumerate() {
                    let norm = node.value.values()[r];
                    let scale = if norm > 0.0 { gout[r] / norm } else { 0.0 };
                    g.extend(chunk.iter().map(|v| v * scale));
                }
                vec![(*input, g)]
            }
            Op::Sum { input } => vec![(*input, vec![gout[0]; self.nodes[input.0].value.len()])],
            Op::Mean { input } => {
                let n = self.nodes[input.0].value.len();
                vec![(*input, vec![gout[0] / n as f64; n])]
            }
            Op::Add { a, b } => vec![(*a, gout.to_vec()), (*b, gout.to_vec())],
            Op::Sub { a, b } => vec![(*a, gout.to_vec()), (*b, gout.iter().map(|g| -g).collect())],
            Op::Mul { a, b } => {
                let (va, vb) = (val(*a), val(*b));
                vec![
                    (*a, gout.iter().zip(vb).map(|(g, y)| g * y).collect()),
                    (*b, gout.iter().zip(va).map(|(g, x)| g * x).collect()),
                ]
            }
            Op::Affine { input, scale } => {
                vec![(*input, gout.iter().map(|g| g * scale).collect())]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::{LayerAttrs, LayerKind};

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn conv2d_hand_evaluated() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 1, 3, 3], &[1., 2., 3., 4., 5., 6., 7., 8., 9.]));
        let k = g.constant(Tensor::full(&[1, 1, 2, 2], 1.0));
        let y = g.conv2d(x, k, Conv2dAttrs::default()).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 2, 2]);
        assert_eq!(g.value(y).values(), &[12., 16., 24., 28.]);
    }

    #[test]
    fn relu_clamps_negatives() {
        let mut g = Graph::new();
        let x = g.constant(t(&[3], &[-1.0, 0.0, 2.5]));
        let y = g.relu(x).unwrap();
        assert_eq!(g.value(y).values(), &[0.0, 0.0, 2.5]);
    }

    #[test]
    fn depth_concat_keeps_first_input_channels() {
        let mut g = Graph::new();
        let a = Tensor::from_fn(&[1, 3, 4, 8], |i| i as f64);
        let b = Tensor::from_fn(&[1, 5, 4, 8], |i| -(i as f64));
        let (ia, ib) = (g.constant(a.clone()), g.constant(b));
        let c = g.concat(&[ia, ib]).unwrap();
        assert_eq!(g.shape(c), &[1, 8, 4, 8]);
        assert_eq!(&g.value(c).values()[..3 * 32], a.values());
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[3], &[1.0, -2.0, 3.0]));
        let sq = g.mul(x, x).unwrap();
        let l = g.sum(sq).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn relu_subgradient_at_negative_is_zero() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[-1.0, 2.0]));
        let r = g.relu(x).unwrap();
        let l = g.sum(r).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let y = g.tanh(x).unwrap();
        assert_eq!(g.backward(y), Err(AutodiffError::NotScalar(vec![2])));
    }

    #[test]
    fn unreachable_params_get_zero_gradient() {
        let mut g = Graph::new();
        let x = g.param(t(&[2], &[1.0, 2.0]));
        let unused = g.param(t(&[2], &[3.0, 4.0]));
        let l = g.sum(x).unwrap();
        g.backward(l).unwrap();
        assert_eq!(g.grad(unused).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn shape_mismatch_names_layer_and_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[3, 2]));
        let err = g.sub(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("sub") && msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");

        let x = g.constant(Tensor::zeros(&[1, 3, 4, 4]));
        let w = g.constant(Tensor::zeros(&[2, 2, 3, 3]));
        let err = g.conv2d(x, w, Conv2dAttrs::default()).unwrap_err();
        assert!(err.to_string().starts_with("conv2d"), "{err}");
    }

    #[test]
    fn unknown_layer_kind_is_rejected() {
        let err = "maxpool".parse::<LayerKind>().unwrap_err();
        assert_eq!(err, AutodiffError::UnknownLayer("maxpool".into()));
        assert_eq!("upsample2x".parse::<LayerKind>().unwrap(), LayerKind::Upsample2x);
    }

    #[test]
    fn layer_forward_checks_param_count() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[1, 1, 3, 3]));
        let err = g
            .layer_forward(LayerKind::Conv2d, &[x], &[], &LayerAttrs::None)
            .unwrap_err();
        assert!(matches!(err, AutodiffError::MissingParams { expected: 1, got: 0, .. }));
    }

    #[test]
    fn eval_batch_norm_uses_running_stats() {
        let mut g = Graph::new();
        let x = g.constant(t(&[1, 2, 1, 2], &[1.0, 3.0, 0.0, 4.0]));
        let gamma = g.constant(t(&[2], &[1.0, 2.0]));
        let beta = g.constant(t(&[2], &[0.0, 1.0]));
        let mode = BatchNormMode::Eval {
            mean: vec![1.0, 0.0],
            var: vec![4.0 - 1e-5, 1.0 - 1e-5],
        };
        let y = g.batch_norm(x, gamma, beta, &mode).unwrap();
        let v = g.value(y).values();
        let expect = [0.0, 1.0, 1.0, 9.0];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{v:?}");
        }
        assert!(g.batch_stats(y).is_none());
    }

    #[test]
    fn train_batch_norm_reports_batch_stats() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2, 1, 1, 2], &[1.0, 3.0, 5.0, 7.0]));
        let gamma = g.constant(t(&[1], &[1.0]));
        let beta = g.constant(t(&[1], &[0.0]));
        let y = g.batch_norm(x, gamma, beta, &BatchNormMode::Train).unwrap();
        let (m, v) = g.batch_stats(y).unwrap();
        assert_eq!(m, &[4.0]);
        assert_eq!(v, &[5.0]);
    }
}
