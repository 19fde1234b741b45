//! Compact trainable encoder–decoder translation model.
//!
//! Submodules cover the full train→translate path: subword tokenization
//! ([`subword`]), hyperparameters ([`config`]), flat parameter storage
//! ([`params`]), the network forward/backward pass ([`net`]), span-mask
//! noising ([`noise`]), staged training ([`train`]), greedy decoding
//! ([`decode`]), and checkpoint files ([`checkpoint`]).

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod net;
pub mod noise;
pub mod params;
pub mod subword;
pub mod train;

pub use checkpoint::CheckpointError;
pub use config::{ConfigError, ModelConfig, NoiseConfig, TrainConfig};
pub use decode::{translate, translate_batch};
pub use net::{Batch, BatchItem, NetError};
pub use params::{Layout, ModelParams, ParamError, TensorSpec};
pub use subword::{train_bpe, SubwordError, SubwordModel};
pub use train::{train_stage, TrainError, TrainLog};
