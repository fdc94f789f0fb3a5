//! Minimal self-contained neural substrate: f64 NCHW tensors, the layer set
//! the two fixed architectures need, binary cross-entropy, Adam, checkpoint
//! I/O, and finite-difference gradient verification.

mod adam;
mod checkpoint;
pub mod gradcheck;
mod layers;
mod loss;
mod tensor;
pub mod trainer;

pub use adam::AdamState;
pub use checkpoint::{
    load_checkpoint, same_structure, save_checkpoint, NetKind, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use layers::{
    concat_channels, conv_out_dim, deconv_out_dim, sigmoid, split_channels, Activation, Conv2d,
    Deconv2d, LayerOp, SequentialNet,
};
pub use loss::{bce_loss, clamp_probabilities, PROB_CLAMP};
pub use tensor::{NnError, Tensor4};

/// Default learning rate for every trainer in this crate.
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

/// Default epoch budget for every trainer in this crate.
pub const DEFAULT_EPOCHS: usize = 100;
