//! Dense-tensor reverse-mode automatic differentiation sized for small
//! convolutional encoder/decoder networks, plus the ADAM optimizer.
//!
//! ```
//! use autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap());
//! let sq = g.mul(x, x).unwrap();
//! let loss = g.sum(sq).unwrap();
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(x).unwrap(), &[2.0, -4.0, 6.0]);
//! ```

mod adam;
mod error;
mod gradcheck;
mod graph;
mod kernels;
mod layer;
mod tensor;

pub use adam::{AdamState, NamedTensor};
pub use error::{AutodiffError, Result};
pub use gradcheck::{finite_diff_check, layer_case, LayerCase};
pub use graph::{BatchNormMode, Graph, NodeId};
pub use kernels::{Conv2dAttrs, Padding};
pub use layer::{LayerAttrs, LayerKind};
pub use tensor::Tensor;
