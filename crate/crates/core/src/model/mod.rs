//! The codec network: transforms, hyperprior, slice pipeline and weights.

mod config;
mod network;
mod weights;

pub use config::{lambda_index, ContextVariant, ModelConfig, LAMBDAS};
pub use network::{init_weights, is_anchor, Net, ParamNetPoint, PointConv, RasterContext, TrainForward};
pub use weights::{
    BoundParams, Checkpoint, ModelWeights, OptimizerState, ParamStore, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
