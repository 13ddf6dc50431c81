//! Name generation and similarity heads on top of the encoder.

pub mod decoder;
pub mod similarity;
pub mod triplet;
pub mod vocab;

use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::ingest::FunctionRecord;
use crate::nn::{Graph, ParamStore};

pub use similarity::{joint_loss, ranking_loss, ranking_loss_value, score, similarity_h};
pub use triplet::{sample_triplet, TrainTriplet, TripletIdx, TripletSampler};
pub use vocab::NameVocabulary;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub dec_layers: usize,
    pub max_name_len: usize,
    pub margin: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig { dec_layers: 2, max_name_len: 8, margin: 0.5 }
    }
}

impl HeadConfig {
    pub fn toy() -> Self {
        HeadConfig { dec_layers: 1, max_name_len: 8, margin: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dec_layers == 0 || self.max_name_len == 0 {
            return Err(Error::invalid("decoder needs >= 1 layer and max_name_len >= 1"));
        }
        if !(self.margin > 0.0) {
            return Err(Error::invalid("margin must be > 0"));
        }
        Ok(())
    }
}

/// Decoder and similarity-head dimensions.
#[derive(Clone, Debug)]
pub struct Heads {
    pub cfg: HeadConfig,
    pub d_hidden: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub name_vocab_size: usize,
}

impl Heads {
    pub fn new(enc: &EncoderConfig, cfg: HeadConfig, name_vocab_size: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Heads { cfg, d_hidden: enc.d_hidden, n_heads: enc.n_heads, d_ff: enc.d_ff, dropout: enc.dropout, name_vocab_size })
    }
}

/// Encoder, heads and name vocabulary together.
#[derive(Clone, Debug)]
pub struct Model {
    pub encoder: Encoder,
    pub heads: Heads,
    pub names: NameVocabulary,
}

impl Model {
    pub fn new(encoder: Encoder, cfg: HeadConfig, names: NameVocabulary) -> Result<Self> {
        let heads = Heads::new(&encoder.cfg, cfg, names.len())?;
        Ok(Model { encoder, heads, names })
    }

    /// Every parameter, each group from its own derived seed.
    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut store = ParamStore::new(seed);
        self.encoder.init_params(&mut store, seed);
        self.encoder.init_alm_heads(&mut store, seed.wrapping_add(1));
        self.heads.init_decoder(&mut store, seed.wrapping_add(2));
        self.heads.init_similarity(&mut store, seed.wrapping_add(3));
        store
    }

    pub fn predict_name(&self, store: &ParamStore, rec: &FunctionRecord, max_len: usize) -> Result<Vec<String>> {
        let enc = self.encoder.encode_function(store, rec)?;
        let ids = self.heads.predict_ids(store, &enc.emb, max_len)?;
        Ok(ids.into_iter().map(|i| self.names.label(i).to_string()).collect())
    }

    /// Evaluation-mode score of a pair of functions.
    pub fn similarity(&self, store: &ParamStore, a: &FunctionRecord, b: &FunctionRecord) -> Result<f64> {
        let mut g = Graph::new(store);
        let ea = self.encoder.encode(&mut g, a)?.emb;
        let eb = self.encoder.encode(&mut g, b)?.emb;
        let ha = similarity_h(&mut g, ea)?;
        let hb = similarity_h(&mut g, eb)?;
        let s = score(&mut g, ha, hb)?;
        Ok(g.value(s).item())
    }
}

#[cfg(test)]
mod tests;
