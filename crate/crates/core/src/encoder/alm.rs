//! Pretraining heads: span infilling and the two instruction-pair tasks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::Encoder;
use super::vocab::{CLS, EMPTY, MASK, SEP};
use crate::error::{Error, Result};
use crate::nn::{Graph, ParamStore, Var};
use crate::pretrain_data::{InfillingSample, InstructionPairSample, PairTask, PretrainSample};

impl Encoder {
    pub fn init_alm_heads(&self, store: &mut ParamStore, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        store.init_affine("alm.mlm", self.cfg.d_hidden, self.vocab.len(), &mut rng);
        store.init_affine("alm.cdi", self.cfg.d_hidden, 1, &mut rng);
        store.init_affine("alm.dui", self.cfg.d_hidden, 1, &mut rng);
    }

    /// Cross-entropy of every original token of every span, predicted at the
    /// span's mask position; an empty span predicts `[EMPTY]`.
    pub fn infill_loss(&self, g: &mut Graph, sample: &InfillingSample) -> Result<Var> {
        let ids = self.vocab.ids(&sample.noised);
        let cap = self.cfg.max_seq_len;
        let mask_pos: Vec<usize> = ids.iter().enumerate().filter(|(_, &t)| t == MASK).map(|(i, _)| i).collect();
        if mask_pos.len() != sample.targets.len() {
            return Err(Error::invalid("mask count differs from target count"));
        }
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (slot, span) in &sample.targets {
            let pos = mask_pos[*slot];
            if pos >= cap {
                continue;
            }
            let r = rows.len();
            rows.push(pos);
            if span.is_empty() {
                targets.push((r, EMPTY));
            } else {
                targets.extend(span.iter().map(|t| (r, self.vocab.id(t))));
            }
        }
        if targets.is_empty() {
            return Err(Error::Empty("infilling sample has no targets".into()));
        }
        let (states, _) = self.transformer(g, &ids, &vec![0; ids.len()])?;
        let at = g.gather_rows(states, &rows);
        let logits = g.affine(at, "alm.mlm");
        Ok(g.cross_entropy(logits, &targets))
    }

    /// `[CLS] a [SEP] b [SEP]` with segment ids 0 then 1.
    pub fn pair_input(&self, s: &InstructionPairSample) -> (Vec<usize>, Vec<usize>) {
        let mut ids = vec![CLS];
        ids.extend(self.vocab.ids(&s.tokens_a));
        ids.push(SEP);
        let mut types = vec![0; ids.len()];
        ids.extend(self.vocab.ids(&s.tokens_b));
        ids.push(SEP);
        types.resize(ids.len(), 1);
        (ids, types)
    }

    pub fn pair_logit(&self, g: &mut Graph, s: &InstructionPairSample) -> Result<Var> {
        let (ids, types) = self.pair_input(s);
        let (states, _) = self.transformer(g, &ids, &types)?;
        let pooled = self.pool(g, states, &ids);
        let head = match s.task {
            PairTask::Cdi => "alm.cdi",
            PairTask::Dui => "alm.dui",
        };
        Ok(g.affine(pooled, head))
    }

    pub fn pair_loss(&self, g: &mut Graph, s: &InstructionPairSample) -> Result<Var> {
        let z = self.pair_logit(g, s)?;
        Ok(g.bce_logit(z, if s.label { 1.0 } else { 0.0 }))
    }

    pub fn sample_loss(&self, g: &mut Graph, s: &PretrainSample) -> Result<Var> {
        match s {
            PretrainSample::Infill(x) => self.infill_loss(g, x),
            PretrainSample::Pair(x) => self.pair_loss(g, x),
        }
    }

    /// Unweighted sum of the sample losses.
    pub fn alm_loss(&self, g: &mut Graph, batch: &[PretrainSample]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Empty("empty pretraining batch".into()));
        }
        let mut total: Option<Var> = None;
        for s in batch {
            let l = self.sample_loss(g, s)?;
            total = Some(match total {
                None => l,
                Some(t) => g.add(t, l),
            });
        }
        Ok(total.expect("non-empty batch"))
    }
}
