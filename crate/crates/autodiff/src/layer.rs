use std::fmt;
use std::str::FromStr;

use crate::error::{AutodiffError, Result};
use crate::graph::{BatchNormMode, Graph, NodeId};
use crate::kernels::{Conv2dAttrs, Padding};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d,
    SeparableConv2d,
    Upsample2x,
    BatchNorm,
    Relu,
    Tanh,
    Concat,
    Reshape,
    L2Norm,
    Sub,
    Mul,
}

impl LayerKind {
    pub const ALL: [LayerKind; 11] = [
        LayerKind::Conv2d,
        LayerKind::SeparableConv2d,
        LayerKind::Upsample2x,
        LayerKind::BatchNorm,
        LayerKind::Relu,
        LayerKind::Tanh,
        LayerKind::Concat,
        LayerKind::Reshape,
        LayerKind::L2Norm,
        LayerKind::Sub,
        LayerKind::Mul,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::SeparableConv2d => "separable_conv2d",
            LayerKind::Upsample2x => "upsample2x",
            LayerKind::BatchNorm => "batch_norm",
            LayerKind::Relu => "relu",
            LayerKind::Tanh => "tanh",
            LayerKind::Concat => "concat",
            LayerKind::Reshape => "reshape",
            LayerKind::L2Norm => "l2_norm",
            LayerKind::Sub => "sub",
            LayerKind::Mul => "mul",
        }
    }

    fn param_count(self) -> usize {
        match self {
            LayerKind::Conv2d => 1,
            LayerKind::SeparableConv2d | LayerKind::BatchNorm => 2,
            _ => 0,
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerKind {
    type Err = AutodiffError;

    fn from_str(s: &str) -> Result<Self> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| AutodiffError::UnknownLayer(s.to_string()))
    }
}

/// Per-kind attributes for [`Graph::layer_forward`].
#[derive(Debug, Clone, PartialEq, Default)]
pub enum LayerAttrs {
    #[default]
    None,
    Conv(Conv2dAttrs),
    Separable { stride: usize, padding: Padding },
    BatchNorm(BatchNormMode),
    Reshape(Vec<usize>),
}

impl Graph {
    /// Uniform entry point over the layer vocabulary. Binary kinds (`sub`,
    /// `mul`) take two inputs, `concat` any number, the rest exactly one.
    pub fn layer_forward(
        &mut self,
        kind: LayerKind,
        inputs: &[NodeId],
        params: &[NodeId],
        attrs: &LayerAttrs,
    ) -> Result<NodeId> {
        if params.len() != kind.param_count() {
            return Err(AutodiffError::MissingParams {
                layer: kind.name().into(),
                expected: kind.param_count(),
                got: params.len(),
            });
        }
        let arity = match kind {
            LayerKind::Concat => inputs.len().max(1),
            LayerKind::Sub | LayerKind::Mul => 2,
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(AutodiffError::InvalidAttrs {
                layer: kind.name().into(),
                reason: format!("expected {arity} input(s), got {}", inputs.len()),
            });
        }
        let bad_attrs = || AutodiffError::InvalidAttrs {
            layer: kind.name().into(),
            reason: format!("attributes {attrs:?} do not fit this layer"),
        };
        let x = inputs[0];
        match (kind, attrs) {
            (LayerKind::Conv2d, LayerAttrs::Conv(a)) => self.conv2d(x, params[0], *a),
            (LayerKind::Conv2d, LayerAttrs::None) => {
                self.conv2d(x, params[0], Conv2dAttrs::default())
            }
            (LayerKind::SeparableConv2d, LayerAttrs::Separable { stride, padding }) => {
                self.separable_conv2d(x, params[0], params[1], *stride, *padding)
            }
            (LayerKind::BatchNorm, LayerAttrs::BatchNorm(mode)) => {
                self.batch_norm(x, params[0], params[1], mode)
            }
            (LayerKind::Reshape, LayerAttrs::Reshape(shape)) => self.reshape(x, shape),
            (LayerKind::Upsample2x, LayerAttrs::None) => self.upsample2x(x),
            (LayerKind::Relu, LayerAttrs::None) => self.relu(x),
            (LayerKind::Tanh, LayerAttrs::None) => self.tanh(x),
            (LayerKind::Concat, LayerAttrs::None) => self.concat(inputs),
            (LayerKind::L2Norm, LayerAttrs::None) => self.l2_norm(x),
            (LayerKind::Sub, LayerAttrs::None) => self.sub(x, inputs[1]),
            (LayerKind::Mul, LayerAttrs::None) => self.mul(x, inputs[1]),
            _ => Err(bad_attrs()),
        }
    }
}
