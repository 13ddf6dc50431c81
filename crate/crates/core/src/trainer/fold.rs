//! One fold end to end: vocabularies, initialization, pretraining and
//! fine-tuning.

use serde::Serialize;

use super::config::TrainConfig;
use super::multitask::{train_multitask, Ablation, FoldData, MultitaskReport};
use super::pretrain::{pretrain_alm, PretrainReport};
use crate::encoder::{Encoder, EncoderConfig, TokenVocab};
use crate::error::Result;
use crate::exec::Exec;
use crate::nn::ParamStore;
use crate::pretrain_data::{generate, PretrainConfig, PretrainSample, Task};
use crate::tasks::{HeadConfig, Model, NameVocabulary};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub pretrain: Option<PretrainReport>,
    pub multitask: MultitaskReport,
}

/// Both vocabularies come from the training partition only.
pub fn build_model(data: FoldData, enc: EncoderConfig, heads: HeadConfig) -> Result<Model> {
    let train = data.train()?;
    let names = NameVocabulary::build(train.iter().map(|&i| (data.records[i].id.as_str(), data.labels[i].as_slice())));
    let tokens = TokenVocab::build(train.iter().map(|&i| &data.records[i]), 1);
    Model::new(Encoder::new(enc, tokens)?, heads, names)
}

pub fn pretrain_samples(data: FoldData, idx: &[usize], seed: u64, exec: Exec) -> Result<Vec<PretrainSample>> {
    let recs: Vec<_> = idx.iter().map(|&i| data.records[i].clone()).collect();
    let mut out = Vec::new();
    for t in Task::ALL {
        out.extend(generate(&recs, t, &PretrainConfig::default(), seed, exec)?);
    }
    Ok(out)
}

pub fn train_fold(
    data: FoldData,
    enc: EncoderConfig,
    heads: HeadConfig,
    cfg: &TrainConfig,
    ablation: Ablation,
    exec: Exec,
) -> Result<(Model, ParamStore, FoldReport)> {
    cfg.validate()?;
    let model = build_model(data, enc, heads)?;
    let mut store = model.init_params(cfg.seed);
    let pretrain = if ablation != Ablation::NoPretrain && cfg.pretrain_steps > 0 {
        let train = pretrain_samples(data, &data.train()?, cfg.seed, exec)?;
        let valid = pretrain_samples(data, &data.valid()?, cfg.seed, exec)?;
        let r = pretrain_alm(&model.encoder, &mut store, &train, &valid, cfg, 0, cfg.pretrain_steps, exec)?;
        log::info!("pretraining finished after {} steps", r.steps);
        Some(r)
    } else {
        None
    };
    let multitask = train_multitask(&model, &mut store, data, cfg, ablation, exec)?;
    Ok((model, store, FoldReport { fold: data.split.fold_id, pretrain, multitask }))
}
