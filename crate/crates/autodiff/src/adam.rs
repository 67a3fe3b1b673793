use crate::error::{AutodiffError, Result};
use crate::tensor::Tensor;

/// A tensor with a stable name, e.g. `conv1.depthwise`.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        Self {
            name: name.into(),
            tensor,
        }
    }
}

/// ADAM with bias correction. Moment buffers are allocated on the first step
/// and indexed by parameter position, so the parameter list must keep its order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self, index: usize) -> Option<&[f64]> {
        self.m.get(index).map(Vec::as_slice)
    }

    pub fn second_moment(&self, index: usize) -> Option<&[f64]> {
        self.v.get(index).map(Vec::as_slice)
    }

    /// Applies one update. Nothing is modified unless every gradient is
    /// finite and shape-matched.
    pub fn step(&mut self, params: &mut [&mut NamedTensor], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(AutodiffError::InvalidAttrs {
                layer: "adam".into(),
                reason: format!("{} parameters but {} gradients", params.len(), grads.len()),
            });
        }
        if !self.m.is_empty() && self.m.len() != params.len() {
            return Err(AutodiffError::InvalidAttrs {
                layer: "adam".into(),
                reason: "parameter list changed between steps".into(),
            });
        }
        for (p, g) in params.iter().zip(grads) {
            if p.tensor.len() != g.len() {
                return Err(AutodiffError::ShapeMismatch {
                    layer: format!("adam `{}`", p.name),
                    expected: p.tensor.shape().to_vec(),
                    got: vec![g.len()],
                });
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(AutodiffError::NonFiniteGradient(p.name.clone()));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.tensor.len()]).collect();
            self.v = self.m.clone();
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.tensor.values_mut().iter_mut().enumerate() {
                let gj = g[j];
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
