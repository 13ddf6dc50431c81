//! Function-name prediction for stripped binaries.
//!
//! The pipeline: [`ingest`] parses disassembled functions and builds
//! instruction-level CFGs; [`name_tokenizer`] and [`label_relations`] turn
//! raw symbol names into canonical label sequences; [`pretrain_data`]
//! produces assembly language-model samples; [`encoder`] and [`tasks`]
//! implement the function encoder with its name-generation and similarity
//! heads; [`trainer`] optimizes them and [`metrics`] scores predictions.

pub mod encoder;
pub mod error;
pub mod exec;
pub mod ingest;
pub mod label_relations;
pub mod metrics;
pub mod name_tokenizer;
pub mod nn;
pub mod pretrain_data;
pub mod synthetic;
pub mod tasks;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::Exec;
