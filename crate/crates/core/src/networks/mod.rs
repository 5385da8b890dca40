//! Encoders, decoder, critics, guided alignment network and task head.

mod arch;
mod bundle;
mod checkpoint;

pub use arch::{
    softmax_rows, AlignOutput, Alignment, AlignmentConfig, Critic, Decoder, Encoder, EncoderConfig, TaskHead,
};
pub use bundle::{ModelBundle, ModelConfig, NetId};
pub use checkpoint::{load_checkpoint, save_checkpoint, OptimizerState, TrainingState, FORMAT_VERSION};
