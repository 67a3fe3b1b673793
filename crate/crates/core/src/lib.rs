//! Gradient-based adversarial attacks on a Gabor iris-code pipeline through a
//! differentiable U-Net surrogate: codec, matcher, surrogate, attack engine,
//! synthetic corpus and experiment harness.

pub mod codec;
pub mod image;
pub mod matcher;
pub mod surrogate;
pub mod synth;
pub mod attack;
pub mod io;
pub mod experiment;
