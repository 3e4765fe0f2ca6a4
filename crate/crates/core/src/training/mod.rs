//! Rate-distortion training: loss, Adam, crops and the training loop.

mod adam;
mod corpus;
mod trainer;

pub use adam::Adam;
pub use corpus::{crop_positions, load_corpus, synthetic_corpus, synthetic_image, CropSampler, LoadedCorpus};
pub use trainer::{rd_loss, RdLossBreakdown, TraceRow, TrainConfig, TrainReport, Trainer, LAMBDA_SCALE};
