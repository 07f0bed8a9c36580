//! From-scratch CNN: shapes, forward/backward passes, losses and Adam.

pub mod adam;
pub mod loss;
pub mod model;
pub mod network;
mod scalar;

pub use adam::{Adam, AdamState};
pub use loss::{cross_entropy, distillation_loss, loss_and_backward, per_sample_loss, softmax};
pub use model::{
    build_model, param_count, Architecture, BlockParams, LayerKind, LayerSpec, ModelParams,
    NormConfig, TensorKind, NUM_BLOCKS,
};
pub use network::{backward, forward, predict, BatchView, ForwardCache, Mode, ScaleRate};
pub use scalar::Scalar;
