//! Assembly language-model pretraining over the three tasks.

use std::collections::BTreeSet;

use serde::Serialize;

use super::adam::adam_step;
use super::config::TrainConfig;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nn::{Gradients, Graph, ParamStore};
use crate::pretrain_data::{fnv1a, PretrainSample, Task};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskLoss {
    pub step: usize,
    pub task: &'static str,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PretrainReport {
    pub steps: usize,
    pub history: Vec<TaskLoss>,
    /// `(step, mean validation loss)`.
    pub validation: Vec<(usize, f64)>,
    pub best_validation: Option<f64>,
    pub stopped_early: bool,
}

/// Seed of the dropout stream for item `i` of step `step`.
pub fn item_seed(seed: u64, step: usize, i: usize) -> u64 {
    seed ^ fnv1a(&format!("{step}:{i}"))
}

/// Mean loss and summed-then-averaged gradients of a batch. Per-item
/// gradients are reduced in batch order, so serial and parallel runs agree
/// bit for bit.
pub fn batch_gradients<T, F>(items: &[T], exec: Exec, f: F) -> Result<(f64, Gradients)>
where
    T: Sync,
    F: Fn(usize, &T) -> Result<(f64, Gradients)> + Sync + Send,
{
    let indexed: Vec<(usize, &T)> = items.iter().enumerate().collect();
    let parts = exec.try_map(&indexed, |(i, x)| f(*i, x))?;
    let n = parts.len().max(1) as f64;
    let loss = parts.iter().map(|(l, _)| l).sum::<f64>() / n;
    let mut grads = Gradients::sum_ordered(parts.into_iter().map(|(_, g)| g));
    grads.scale(1.0 / n);
    Ok((loss, grads))
}

pub fn mean_loss(encoder: &Encoder, store: &ParamStore, samples: &[PretrainSample], exec: Exec) -> Result<f64> {
    let losses = exec.try_map(samples, |s| {
        let mut g = Graph::new(store);
        let l = encoder.sample_loss(&mut g, s)?;
        Ok::<_, Error>(g.value(l).item())
    })?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Round-robin over the tasks present in `train`, one batch per step, for
/// steps `first_step..first_step + steps`. Batches depend only on the step
/// index, so a run resumed from a checkpoint continues the same sequence.
/// With validation samples, keeps the parameters of the best validation
/// loss and stops after `patience` validations without improvement.
pub fn pretrain_alm(
    encoder: &Encoder,
    store: &mut ParamStore,
    train: &[PretrainSample],
    valid: &[PretrainSample],
    cfg: &TrainConfig,
    first_step: usize,
    steps: usize,
    exec: Exec,
) -> Result<PretrainReport> {
    let held_out: BTreeSet<&str> = valid.iter().map(PretrainSample::function_id).collect();
    if let Some(s) = train.iter().find(|s| held_out.contains(s.function_id())) {
        return Err(Error::Leakage(format!("function `{}` is in both pretraining partitions", s.function_id())));
    }
    let streams: Vec<(Task, Vec<&PretrainSample>)> = Task::ALL
        .iter()
        .map(|&t| (t, train.iter().filter(|s| s.task() == t).collect::<Vec<_>>()))
        .filter(|(_, v)| !v.is_empty())
        .collect();
    if streams.is_empty() {
        return Err(Error::Empty("no pretraining samples".into()));
    }
    let mut report = PretrainReport::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut bad = 0;
    let end = first_step + steps;
    for step in first_step..end {
        let (task, stream) = &streams[step % streams.len()];
        let b = cfg.batch_size.min(stream.len());
        let start = (step / streams.len()) * b;
        let batch: Vec<&PretrainSample> = (0..b).map(|j| stream[(start + j) % stream.len()]).collect();
        let frozen: &ParamStore = store;
        let (loss, grads) = batch_gradients(&batch, exec, |i, s| {
            let mut g = Graph::training(frozen, item_seed(cfg.seed, step, i));
            let l = encoder.sample_loss(&mut g, s)?;
            Ok((g.value(l).item(), g.backward(l)))
        })?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(loss));
        }
        store.accumulate(&grads)?;
        adam_step(store, cfg)?;
        log::debug!("pretrain step {step} {} loss {loss:.4}", task.as_str());
        report.history.push(TaskLoss { step, task: task.as_str(), loss });
        report.steps += 1;
        if !valid.is_empty() && ((step + 1) % cfg.eval_every == 0 || step + 1 == end) {
            let v = mean_loss(encoder, store, valid, exec)?;
            log::info!("pretrain step {} validation loss {v:.4}", step + 1);
            report.validation.push((step + 1, v));
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, store.clone()));
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
    if let Some((v, s)) = best {
        report.best_validation = Some(v);
        *store = s;
    }
    Ok(report)
}
