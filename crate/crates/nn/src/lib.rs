//! Dense tensors and a small reverse-mode tape.
//!
//! The crate covers exactly the layer set needed by chunk-level CNN
//! attention models: valid 2-D convolution, time max-pooling, affine maps,
//! batch normalization, ReLU/tanh/sigmoid/softmax, dropout, a fused LSTM,
//! attention-weighted sums and the two cross-entropy losses. Everything is
//! generic over [`Float`] so the same graph runs in `f32` for training and in
//! `f64` for finite-difference verification.

mod error;
pub mod gradcheck;
pub mod layers;
pub mod optim;
mod params;
mod tape;
mod tensor;

pub use error::{NnError, Result};
pub use params::{Param, ParamId, ParamStore, RunningStatsUpdate};
pub use tape::{Gradients, NormMode, Tape, Var};
pub use tensor::{Float, Tensor};
