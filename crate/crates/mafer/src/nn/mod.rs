//! Tensor core: autodiff graph, CNN model, optimizer, scheduler, and the
//! checkpoint format.

pub mod checkpoint;
pub mod graph;
pub mod model;
pub mod optim;
pub mod tensor;

pub use checkpoint::{load_checkpoint, load_checkpoint_into, read_checkpoint, save_checkpoint};
pub use graph::{Graph, NodeId};
pub use model::{CnnModel, ForwardPass, ModelConfig, ParamGroup};
pub use optim::{AdamConfig, AdamState, GroupLrs, PlateauScheduler};
pub use tensor::{Scalar, Tensor};
