//! A small tensor engine for the split multi-output CNN.
//!
//! Storage is generic over [`Real`]: deployment uses `f32` (with `f64`
//! accumulation in every reduction), gradient checks run the same code in
//! `f64`.

mod layers;
mod model;
mod tensor;
mod train;
mod weights;

pub use layers::{
    backward_stack, forward_stack, softmax, Activation, Cache, Layer, LayerKind, LayerSpec, Mode,
    BN_EPS, BN_MOMENTUM,
};
pub use model::{
    build_table1_model, head1_class_index, ForwardOutput, ModelGraph, CUT_SHAPE, HEAD1_CLASSES,
    HEAD2_CLASSES, INPUT_SHAPE,
};
pub use tensor::Tensor;
pub use train::{
    cross_entropy, loss_and_gradients, predict_head2, train, train_edge_head, Adam, BatchPass,
    EpochLog, TrainConfig, TrainLog,
};
pub use weights::{decode_weights, encode_weights, load_weights, save_weights, weights_hash};

use std::fmt::Debug;

/// Floating-point element type of tensors.
pub trait Real: num_traits::Float + Default + Debug + Send + Sync + 'static {
    fn cast(v: f64) -> Self;
    fn widen(self) -> f64;
}

impl Real for f32 {
    fn cast(v: f64) -> Self {
        v as f32
    }
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn cast(v: f64) -> Self {
        v
    }
    fn widen(self) -> f64 {
        self
    }
}
