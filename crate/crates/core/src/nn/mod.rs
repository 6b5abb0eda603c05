//! Framework-free 3D convolutional networks: tensors, reverse-mode
//! gradients, a U-Net denoiser, a detail regressor and Adam.

mod adam;
mod checkpoint;
mod kernels;
mod model;
mod net;
mod ops;
mod params;
mod tape;
mod tensor;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use model::{DetailModel, GeneratorModel};
pub use net::{ArchConfig, DenoiserNet, DetailNet, NetKind, Network, MAX_ATTENTION_POSITIONS};
pub use ops::{conv3d_backward, conv3d_forward};
pub use params::{Init, ParamLayout, ParamSpec};
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
pub use train::{train_detail, train_generator, TrainConfig, TrainOutcome};
