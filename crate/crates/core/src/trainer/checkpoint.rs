//! Checkpoint directories: parameters, both vocabularies and the configs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::encoder::{Encoder, EncoderConfig, TokenVocab};
use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tasks::{HeadConfig, Model, NameVocabulary};

pub const TOKEN_VOCAB_FILE: &str = "tokens.tsv";
pub const NAME_VOCAB_FILE: &str = "names.tsv";
pub const MODEL_CONFIG_FILE: &str = "model.json";
pub const TRAIN_CONFIG_FILE: &str = "train.conf";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelConfig {
    encoder: EncoderConfig,
    heads: HeadConfig,
}

pub fn save_checkpoint(dir: &Path, model: &Model, store: &ParamStore, train: Option<&TrainConfig>) -> Result<()> {
    store.save(dir)?;
    model.encoder.vocab.save(&dir.join(TOKEN_VOCAB_FILE))?;
    model.names.save(&dir.join(NAME_VOCAB_FILE))?;
    let cfg = ModelConfig { encoder: model.encoder.cfg.clone(), heads: model.heads.cfg.clone() };
    let p = dir.join(MODEL_CONFIG_FILE);
    std::fs::write(&p, serde_json::to_string_pretty(&cfg)? + "\n").map_err(|e| Error::io(&p, e))?;
    if let Some(t) = train {
        let p = dir.join(TRAIN_CONFIG_FILE);
        std::fs::write(&p, t.to_kv()).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

/// The name vocabulary's record ids are not stored, so a loaded model
/// cannot be re-checked for leakage.
pub fn load_checkpoint(dir: &Path) -> Result<(Model, ParamStore)> {
    let p = dir.join(MODEL_CONFIG_FILE);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let cfg: ModelConfig = serde_json::from_str(&text)?;
    let vocab = TokenVocab::load(&dir.join(TOKEN_VOCAB_FILE))?;
    let names = NameVocabulary::load(&dir.join(NAME_VOCAB_FILE))?;
    let model = Model::new(Encoder::new(cfg.encoder, vocab)?, cfg.heads, names)?;
    let store = ParamStore::load(dir)?;
    let fresh = model.init_params(0);
    for (name, p) in fresh.iter() {
        match store.param(name) {
            Some(q) if q.value.shape() == p.value.shape() => {}
            _ => return Err(Error::Checkpoint(format!("{}: parameter `{name}` missing or misshapen", dir.display()))),
        }
    }
    Ok((model, store))
}
