//! Dense tensors, hand-derived layer gradients, Adam, seeded RNG streams and
//! a finite-difference gradient checker.

mod checkpoint;
mod gradcheck;
mod layers;
mod params;
mod rng;
mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::grad_check;
pub use layers::{
    activate, activate_backward, affine, affine_backward, clamped_sigmoid, glorot, sigmoid,
    softplus, softplus_inverse, Activation, Mlp, MlpTrace, SIGMOID_CLAMP,
};
pub use params::{adam_step, AdamConfig, AdamState, ParamSet};
pub use rng::SeededRng;
pub use tensor::Tensor;
