//! Function-semantics encoder and its pretraining heads.

pub mod alm;
pub mod config;
pub mod model;
pub mod transformer;
pub mod vocab;

pub use config::EncoderConfig;
pub use model::{truncation_count, EncodedVars, Encoder, FunctionEncoding};
pub use vocab::TokenVocab;
