//! The composed classifier: topology, parameters, forward/backward over the
//! whole stack, and checkpoint persistence.

pub mod checkpoint;
pub mod config;
pub mod model;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainingMeta};
pub use config::{
    build_paper_network, build_small_network, reassign_output_labels, shape_plan, Layer, NetworkConfig,
    NUM_CLASSES,
};
pub use model::{
    backward, backward_from, decide, forward, ForwardTrace, Gradients, LayerCache, LayerParams, Network,
    NetworkParams, Prediction,
};
