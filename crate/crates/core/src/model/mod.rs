//! The terrain predictor: a small point-cloud network that downsamples the
//! input into feature-carrying proxies, runs them through a transformer
//! encoder, and projects each proxy into a handful of predicted points.
//! Differentiation is hand-written reverse mode over a recorded forward
//! trace; training uses Adam and is bitwise deterministic given its seeds.

mod backward;
mod checkpoint;
mod forward;
mod gradcheck;
mod params;
mod train;

pub use backward::{backward, BackwardResult};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::{encode, extract_proxies, forward, project, PointProxy};
pub use gradcheck::{gradient_check, GradCheckReport, TensorCheck};
pub use params::{
    Affine, EncoderLayer, LayerNorm, ModelConfig, ModelParams, TensorView, TensorViewMut,
};
pub use train::{
    init_state, train, TrainConfig, TrainRun, TrainState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
};
