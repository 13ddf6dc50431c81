//! Joint fine-tuning of name generation and similarity.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adam::adam_step;
use super::config::TrainConfig;
use super::losses::{multitask_loss, LossParts, LossWeights};
use super::pretrain::{batch_gradients, item_seed};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::{DatasetSplit, FunctionRecord};
use crate::metrics::{prf, word_level_counts, EvalCounts};
use crate::nn::{Graph, ParamStore};
use crate::tasks::{score, similarity_h, Model, TripletIdx, TripletSampler};

const STREAM_SALT: u64 = 0x7472_6970_6c65_7473;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    NoPretrain,
    NoSimilarity,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoPretrain => "no-pretrain",
            Ablation::NoSimilarity => "no-similarity",
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Ablation::None),
            "no-pretrain" => Ok(Ablation::NoPretrain),
            "no-similarity" => Ok(Ablation::NoSimilarity),
            _ => Err(Error::invalid(format!("unknown ablation `{s}` (none, no-pretrain, no-similarity)"))),
        }
    }
}

/// Records, their preprocessed name labels and one fold's partition.
#[derive(Clone, Copy, Debug)]
pub struct FoldData<'a> {
    pub records: &'a [FunctionRecord],
    pub labels: &'a [Vec<String>],
    pub split: &'a DatasetSplit,
}

impl FoldData<'_> {
    fn indices(&self, ids: &[String]) -> Result<Vec<usize>> {
        let pos: std::collections::HashMap<&str, usize> = self.records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
        ids.iter().map(|id| pos.get(id.as_str()).copied().ok_or_else(|| Error::invalid(format!("split names unknown record `{id}`")))).collect()
    }

    pub fn train(&self) -> Result<Vec<usize>> {
        self.indices(&self.split.train)
    }

    pub fn valid(&self) -> Result<Vec<usize>> {
        self.indices(&self.split.valid)
    }

    pub fn test(&self) -> Result<Vec<usize>> {
        self.indices(&self.split.test)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub j_cg: f64,
    pub j_cs: f64,
    pub f_pos: f64,
    pub f_neg: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MultitaskReport {
    pub ablation: Ablation,
    pub steps: usize,
    pub history: Vec<StepRecord>,
    /// `(step, validation word-level F1)`.
    pub validation: Vec<(usize, f64)>,
    pub best_valid_f1: Option<f64>,
    pub stopped_early: bool,
}

/// Triplets restricted to a subset of the records, reported as indices
/// into the full record slice.
pub struct SubsetSampler {
    sampler: TripletSampler,
    map: Vec<usize>,
}

impl SubsetSampler {
    pub fn new(records: &[FunctionRecord], labels: &[Vec<String>], subset: &[usize]) -> Result<Self> {
        let recs: Vec<FunctionRecord> = subset.iter().map(|&i| records[i].clone()).collect();
        let names: Vec<Vec<String>> = subset.iter().map(|&i| labels[i].clone()).collect();
        Ok(SubsetSampler { sampler: TripletSampler::new(&recs, &names)?, map: subset.to_vec() })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> TripletIdx {
        let t = self.sampler.sample(rng);
        TripletIdx { anchor: self.map[t.anchor], positive: self.map[t.positive], negative: self.map[t.negative] }
    }
}

/// Word-level counts of greedy predictions against the gold labels.
pub fn name_counts(model: &Model, store: &ParamStore, records: &[FunctionRecord], labels: &[Vec<String>], idx: &[usize], exec: Exec) -> Result<EvalCounts> {
    let per = exec.try_map(idx, |&i| {
        let pred = model.predict_name(store, &records[i], model.heads.cfg.max_name_len)?;
        Ok::<_, Error>(word_level_counts(&pred, &labels[i]))
    })?;
    let mut total = EvalCounts::default();
    per.into_iter().for_each(|c| total += c);
    Ok(total)
}

/// Mean evaluation-mode `(f_pos, f_neg)` over `n` triplets drawn from `idx`.
pub fn similarity_gap(
    model: &Model,
    store: &ParamStore,
    records: &[FunctionRecord],
    labels: &[Vec<String>],
    idx: &[usize],
    n: usize,
    seed: u64,
    exec: Exec,
) -> Result<(f64, f64)> {
    let sampler = SubsetSampler::new(records, labels, idx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triplets: Vec<TripletIdx> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
    let scores = exec.try_map(&triplets, |t| {
        let mut g = Graph::new(store);
        let ex = model.encoder.encode(&mut g, &records[t.anchor])?.emb;
        let ey = model.encoder.encode(&mut g, &records[t.positive])?.emb;
        let ez = model.encoder.encode(&mut g, &records[t.negative])?.emb;
        let (hx, hy, hz) = (similarity_h(&mut g, ex)?, similarity_h(&mut g, ey)?, similarity_h(&mut g, ez)?);
        let fp = score(&mut g, hx, hy)?;
        let fneg = score(&mut g, hx, hz)?;
        Ok::<_, Error>((g.value(fp).item(), g.value(fneg).item()))
    })?;
    let k = scores.len().max(1) as f64;
    Ok((scores.iter().map(|s| s.0).sum::<f64>() / k, scores.iter().map(|s| s.1).sum::<f64>() / k))
}

/// Trains on the fold's training records. Validation F1 is measured every
/// `eval_every` steps and at the end; the best-F1 parameters are kept.
pub fn train_multitask(
    model: &Model,
    store: &mut ParamStore,
    data: FoldData,
    cfg: &TrainConfig,
    ablation: Ablation,
    exec: Exec,
) -> Result<MultitaskReport> {
    cfg.validate()?;
    let train_idx = data.train()?;
    let valid_idx = data.valid()?;
    let train_ids: BTreeSet<&str> = train_idx.iter().map(|&i| data.records[i].id.as_str()).collect();
    model.names.assert_built_from(&train_ids)?;

    let weights = LossWeights {
        lambda1: cfg.lambda1,
        lambda2: if ablation == Ablation::NoSimilarity { 0.0 } else { cfg.lambda2 },
        margin: cfg.margin,
        literal: cfg.paper_literal_jcs,
    };
    let sampler = if weights.lambda2 > 0.0 { Some(SubsetSampler::new(data.records, data.labels, &train_idx)?) } else { None };
    let gold: Vec<Vec<usize>> = data.labels.iter().map(|l| model.names.encode(l)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ STREAM_SALT);
    let mut report = MultitaskReport { ablation, ..Default::default() };
    let mut best: Option<(f64, ParamStore)> = None;
    let mut bad = 0;

    for step in 0..cfg.max_steps {
        let batch: Vec<TripletIdx> = (0..cfg.batch_size)
            .map(|_| match &sampler {
                Some(s) => s.sample(&mut rng),
                None => {
                    let a = train_idx[rng.random_range(0..train_idx.len())];
                    TripletIdx { anchor: a, positive: a, negative: a }
                }
            })
            .collect();
        for t in &batch {
            for i in [t.anchor, t.positive, t.negative] {
                if !train_ids.contains(data.records[i].id.as_str()) {
                    return Err(Error::Leakage(format!("record `{}` entered a training batch", data.records[i].id)));
                }
            }
        }
        let frozen: &ParamStore = store;
        let parts = std::sync::Mutex::new(vec![LossParts::default(); batch.len()]);
        let (loss, grads) = batch_gradients(&batch, exec, |i, t| {
            let mut g = Graph::training(frozen, item_seed(cfg.seed, step, i));
            let yz = sampler.as_ref().map(|_| (&data.records[t.positive], &data.records[t.negative]));
            let (l, p) = multitask_loss(model, &mut g, &data.records[t.anchor], &gold[t.anchor], yz, &weights)?;
            parts.lock().expect("loss parts")[i] = p;
            Ok((g.value(l).item(), g.backward(l)))
        })?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(loss));
        }
        store.accumulate(&grads)?;
        adam_step(store, cfg)?;
        let m = LossParts::mean(&parts.into_inner().expect("loss parts"));
        log::debug!("step {step} loss {loss:.4} j_cg {:.4} j_cs {:.4}", m.j_cg, m.j_cs);
        report.history.push(StepRecord { step, loss, j_cg: m.j_cg, j_cs: m.j_cs, f_pos: m.f_pos, f_neg: m.f_neg });
        report.steps = step + 1;

        if !valid_idx.is_empty() && ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.max_steps) {
            let f1 = prf(name_counts(model, store, data.records, data.labels, &valid_idx, exec)?).f1;
            log::info!("step {} validation F1 {f1:.4}", step + 1);
            report.validation.push((step + 1, f1));
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, store.clone()));
                bad = 0;
            } else {
                bad += 1;
                if bad >= cfg.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    if let Some((f1, s)) = best {
        report.best_valid_f1 = Some(f1);
        *store = s;
    }
    Ok(report)
}

/// Name-only training on a fixed batch; returns the mean `J_cg` before each
/// step and, last, in evaluation mode after the final step.
pub fn fit_names(model: &Model, store: &mut ParamStore, batch: &[(&FunctionRecord, Vec<usize>)], cfg: &TrainConfig, steps: usize, exec: Exec) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    for step in 0..steps {
        let frozen: &ParamStore = store;
        let (loss, grads) = batch_gradients(batch, exec, |i, (rec, gold)| {
            let mut g = Graph::training(frozen, item_seed(cfg.seed, step, i));
            let e = model.encoder.encode(&mut g, rec)?.emb;
            let l = model.heads.name_loss(&mut g, e, gold)?;
            Ok((g.value(l).item(), g.backward(l)))
        })?;
        out.push(loss);
        store.accumulate(&grads)?;
        adam_step(store, cfg)?;
    }
    let frozen: &ParamStore = store;
    let (loss, _) = batch_gradients(batch, exec, |_, (rec, gold)| {
        let mut g = Graph::new(frozen);
        let e = model.encoder.encode(&mut g, rec)?.emb;
        let l = model.heads.name_loss(&mut g, e, gold)?;
        Ok((g.value(l).item(), Default::default()))
    })?;
    out.push(loss);
    Ok(out)
}
