//! Transformer decoder that generates name labels from a function encoding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{BOS, EOS, PAD};
use super::Heads;
use crate::encoder::model::EMBED_STD;
use crate::encoder::transformer::{causal_mask, ffn, init_attention, init_ffn, init_layer_norm, layer_norm, multi_head_attention};
use crate::error::{Error, Result};
use crate::nn::{Graph, Mat, ParamStore, Var};

impl Heads {
    pub fn init_decoder(&self, store: &mut ParamStore, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.d_hidden;
        store.init_normal("dec.emb", self.name_vocab_size, d, EMBED_STD, &mut rng);
        store.init_normal("dec.pos", self.cfg.max_name_len + 1, d, EMBED_STD, &mut rng);
        for l in 0..self.cfg.dec_layers {
            let p = format!("dec.l{l}");
            init_attention(store, &format!("{p}.self"), d, &mut rng);
            init_layer_norm(store, &format!("{p}.ln1"), d);
            init_attention(store, &format!("{p}.cross"), d, &mut rng);
            init_layer_norm(store, &format!("{p}.ln2"), d);
            init_ffn(store, &p, d, self.d_ff, &mut rng);
            init_layer_norm(store, &format!("{p}.ln3"), d);
        }
        store.init_affine("dec.out", d, self.name_vocab_size, &mut rng);
    }

    /// Output logits `U O_t + b` for every prefix position.
    pub fn decoder_logits(&self, g: &mut Graph, emb: Var, prefix: &[usize]) -> Result<Var> {
        if g.value(emb).rows == 0 {
            return Err(Error::Empty("empty encoding".into()));
        }
        if prefix.first() != Some(&BOS) {
            return Err(Error::invalid("decoder prefix must begin with BOS"));
        }
        if prefix.len() > self.cfg.max_name_len + 1 {
            return Err(Error::invalid(format!("prefix of {} exceeds {} positions", prefix.len(), self.cfg.max_name_len + 1)));
        }
        let table = g.param("dec.emb");
        let x = g.gather_rows(table, prefix);
        let pos_table = g.param("dec.pos");
        let positions: Vec<usize> = (0..prefix.len()).collect();
        let pos = g.gather_rows(pos_table, &positions);
        let mut x = g.add(x, pos);
        x = g.dropout(x, self.dropout);
        let mask = causal_mask(prefix.len());
        for l in 0..self.cfg.dec_layers {
            let p = format!("dec.l{l}");
            let (a, _) = multi_head_attention(g, x, x, &format!("{p}.self"), self.n_heads, Some(&mask));
            let a = g.dropout(a, self.dropout);
            let r = g.add(x, a);
            x = layer_norm(g, r, &format!("{p}.ln1"));
            let (c, _) = multi_head_attention(g, x, emb, &format!("{p}.cross"), self.n_heads, None);
            let c = g.dropout(c, self.dropout);
            let r = g.add(x, c);
            x = layer_norm(g, r, &format!("{p}.ln2"));
            let f = ffn(g, x, &p);
            let f = g.dropout(f, self.dropout);
            let r = g.add(x, f);
            x = layer_norm(g, r, &format!("{p}.ln3"));
        }
        Ok(g.affine(x, "dec.out"))
    }

    /// `P_t` for the position after `prefix`.
    pub fn decode_step_probs(&self, store: &ParamStore, emb: &Mat, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut g = Graph::new(store);
        let e = g.constant(emb.clone());
        let logits = self.decoder_logits(&mut g, e, prefix)?;
        let p = g.softmax_rows(logits);
        let m = g.value(p);
        Ok(m.row(m.rows - 1).to_vec())
    }

    /// Teacher-forced `-sum log P_t[y_t]` over the labels followed by EOS.
    /// Names longer than the decoder allows are cut.
    pub fn name_loss(&self, g: &mut Graph, emb: Var, target: &[usize]) -> Result<Var> {
        if target.is_empty() {
            return Err(Error::Empty("empty target name".into()));
        }
        let mut gold: Vec<usize> = target.iter().copied().filter(|&t| t != PAD).take(self.cfg.max_name_len).collect();
        gold.push(EOS);
        let mut prefix = vec![BOS];
        prefix.extend(&gold[..gold.len() - 1]);
        let logits = self.decoder_logits(g, emb, &prefix)?;
        let targets: Vec<(usize, usize)> = gold.iter().copied().enumerate().collect();
        Ok(g.cross_entropy(logits, &targets))
    }

    /// Greedy decoding; PAD and BOS are never emitted, ties go to the lower id.
    pub fn predict_ids(&self, store: &ParamStore, emb: &Mat, max_len: usize) -> Result<Vec<usize>> {
        let max_len = max_len.min(self.cfg.max_name_len);
        let mut prefix = vec![BOS];
        let mut out = Vec::new();
        while out.len() < max_len {
            let p = self.decode_step_probs(store, emb, &prefix)?;
            let mut best = EOS;
            for (i, &v) in p.iter().enumerate().skip(EOS) {
                if v > p[best] {
                    best = i;
                }
            }
            if best == EOS {
                break;
            }
            out.push(best);
            prefix.push(best);
        }
        Ok(out)
    }
}
