//! The function encoder: conv node vectors, K-hop message passing and the
//! transformer over the instruction token sequence.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::EncoderConfig;
use super::transformer::{encoder_layer, init_encoder_layer, key_padding_mask};
use super::vocab::{TokenVocab, PAD};
use crate::error::{Error, Result};
use crate::ingest::{build_fine_grained_cfg, normalize_record, FineGrainedCfg, FunctionRecord};
use crate::nn::{Graph, Mat, ParamStore, Var};

pub const EMBED_STD: f64 = 0.02;

static TRUNCATIONS: AtomicU64 = AtomicU64::new(0);

/// Sequences cut to the length cap since start-up.
pub fn truncation_count() -> u64 {
    TRUNCATIONS.load(Ordering::Relaxed)
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub vocab: TokenVocab,
}

/// Graph handles of one encoded function.
#[derive(Clone, Debug)]
pub struct EncodedVars {
    pub node_states: Var,
    pub h_g: Var,
    pub token_states: Var,
    pub h_inst: Var,
    /// `[h_G] ++ token states`, `(1 + tokens) x d_hidden`.
    pub emb: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionEncoding {
    pub node_states: Mat,
    pub h_g: Vec<f64>,
    pub h_inst: Vec<f64>,
    pub token_states: Mat,
    pub emb: Mat,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig, vocab: TokenVocab) -> Result<Self> {
        cfg.validate()?;
        Ok(Encoder { cfg, vocab })
    }

    /// Adds every encoder parameter to `store`.
    pub fn init_params(&self, store: &mut ParamStore, seed: u64) {
        let c = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        store.init_normal("enc.tok", self.vocab.len(), c.d_token, EMBED_STD, &mut rng);
        store.init_affine("enc.tok_proj", c.d_token, c.d_hidden, &mut rng);
        store.init_normal("enc.pos", c.max_seq_len, c.d_hidden, EMBED_STD, &mut rng);
        store.init_normal("enc.type", 2, c.d_hidden, EMBED_STD, &mut rng);
        for l in 0..c.n_layers {
            init_encoder_layer(store, &format!("enc.l{l}"), c.d_hidden, c.d_ff, &mut rng);
        }
        for &w in &c.conv_kernel_widths {
            store.init_uniform(&format!("conv.w{w}"), w * c.d_token, c.kernels_per_width, w * c.d_token, &mut rng);
            store.init_zeros(&format!("conv.b{w}"), 1, c.kernels_per_width);
        }
        for l in 0..c.gnn_layers {
            let d_in = if l == 0 { c.n_kernels() } else { c.d_hidden };
            for k in 1..=c.gnn_hops {
                store.init_affine(&format!("gnn.l{l}.k{k}"), 2 * d_in, c.d_hidden, &mut rng);
            }
        }
    }

    /// One row per instruction: for every kernel, the mean over windows of
    /// `ReLU(<kernel, window> + b)`. Instructions shorter than a kernel are
    /// right-padded with the `[PAD]` embedding.
    pub fn conv_node_vectors(&self, g: &mut Graph, instructions: &[Vec<usize>]) -> Var {
        let table = g.param("enc.tok");
        let wmax = *self.cfg.conv_kernel_widths.iter().max().expect("validated");
        let mut rows = Vec::with_capacity(instructions.len());
        for ids in instructions {
            let mut ids = ids.clone();
            while ids.len() < wmax {
                ids.push(PAD);
            }
            let e = g.gather_rows(table, &ids);
            let mut feats = Vec::with_capacity(self.cfg.conv_kernel_widths.len());
            for &w in &self.cfg.conv_kernel_widths {
                let u = g.unfold_rows(e, w);
                let k = g.param(&format!("conv.w{w}"));
                let b = g.param(&format!("conv.b{w}"));
                let f = g.matmul(u, k);
                let f = g.add_row(f, b);
                let f = g.relu(f);
                feats.push(g.mean_rows(f));
            }
            rows.push(g.concat_cols(&feats));
        }
        g.concat_rows(&rows)
    }

    /// K-hop message passing with mean messages, ReLU-affine updates and a
    /// sum over hops.
    pub fn khop_message_pass(&self, g: &mut Graph, cfg: &FineGrainedCfg, x: Var) -> Result<Var> {
        let mut h = x;
        let hoods: Vec<_> = (1..=self.cfg.gnn_hops).map(|k| cfg.khop_all(k)).collect::<Result<_>>()?;
        for l in 0..self.cfg.gnn_layers {
            let mut acc: Option<Var> = None;
            for (k, hood) in hoods.iter().enumerate() {
                let m = g.neighbor_mean(h, hood.clone());
                let cat = g.concat_cols(&[m, h]);
                let hk = g.affine(cat, &format!("gnn.l{l}.k{}", k + 1));
                let hk = g.relu(hk);
                acc = Some(match acc {
                    None => hk,
                    Some(a) => g.add(a, hk),
                });
            }
            h = acc.expect("at least one hop");
        }
        Ok(h)
    }

    pub fn readout(&self, g: &mut Graph, node_states: Var) -> Result<Var> {
        if g.value(node_states).rows == 0 {
            return Err(Error::Empty("readout over an empty graph".into()));
        }
        Ok(g.mean_rows(node_states))
    }

    /// Cuts `ids` to the length cap, counting each cut.
    pub fn cap(&self, ids: &mut Vec<usize>, types: &mut Vec<usize>) {
        if ids.len() > self.cfg.max_seq_len {
            TRUNCATIONS.fetch_add(1, Ordering::Relaxed);
            log::warn!("token sequence of {} truncated to {}", ids.len(), self.cfg.max_seq_len);
            ids.truncate(self.cfg.max_seq_len);
            types.truncate(self.cfg.max_seq_len);
        }
    }

    /// Final-layer token states and the attention matrices of every layer.
    pub fn transformer(&self, g: &mut Graph, ids: &[usize], types: &[usize]) -> Result<(Var, Vec<Vec<Var>>)> {
        if ids.is_empty() {
            return Err(Error::Empty("empty token sequence".into()));
        }
        let (mut ids, mut types) = (ids.to_vec(), types.to_vec());
        self.cap(&mut ids, &mut types);
        let table = g.param("enc.tok");
        let e = g.gather_rows(table, &ids);
        let x = g.affine(e, "enc.tok_proj");
        let pos_table = g.param("enc.pos");
        let positions: Vec<usize> = (0..ids.len()).collect();
        let pos = g.gather_rows(pos_table, &positions);
        let type_table = g.param("enc.type");
        let ty = g.gather_rows(type_table, &types);
        let x = g.add(x, pos);
        let mut x = g.add(x, ty);
        x = g.dropout(x, self.cfg.dropout);
        let pad: Vec<bool> = ids.iter().map(|&i| i == PAD).collect();
        let mask = key_padding_mask(ids.len(), &pad);
        let mut attn = Vec::with_capacity(self.cfg.n_layers);
        for l in 0..self.cfg.n_layers {
            let (y, w) = encoder_layer(g, x, &format!("enc.l{l}"), self.cfg.n_heads, self.cfg.dropout, mask.as_ref());
            x = y;
            attn.push(w);
        }
        Ok((x, attn))
    }

    /// Mean of the states at non-padding positions.
    pub fn pool(&self, g: &mut Graph, states: Var, ids: &[usize]) -> Var {
        let rows = g.value(states).rows;
        let keep: Vec<usize> = (0..rows).filter(|&i| ids.get(i) != Some(&PAD)).collect();
        if keep.is_empty() {
            g.mean_rows(states)
        } else {
            g.mean_rows_of(states, &keep)
        }
    }

    pub fn encode(&self, g: &mut Graph, rec: &FunctionRecord) -> Result<EncodedVars> {
        if rec.instructions.is_empty() {
            return Err(Error::Empty(format!("record `{}` has no instructions", rec.id)));
        }
        let rec = normalize_record(rec);
        let per_inst: Vec<Vec<usize>> = rec.instructions.iter().map(|i| self.vocab.ids(&i.tokens())).collect();
        let x = self.conv_node_vectors(g, &per_inst);
        let cfg = build_fine_grained_cfg(&rec);
        let node_states = self.khop_message_pass(g, &cfg, x)?;
        let h_g = self.readout(g, node_states)?;
        let ids: Vec<usize> = per_inst.concat();
        let (token_states, _) = self.transformer(g, &ids, &vec![0; ids.len()])?;
        let h_inst = self.pool(g, token_states, &ids);
        let emb = g.concat_rows(&[h_g, token_states]);
        Ok(EncodedVars { node_states, h_g, token_states, h_inst, emb })
    }

    /// Evaluation-mode encoding as plain values.
    pub fn encode_function(&self, store: &ParamStore, rec: &FunctionRecord) -> Result<FunctionEncoding> {
        let mut g = Graph::new(store);
        let v = self.encode(&mut g, rec)?;
        Ok(FunctionEncoding {
            node_states: g.value(v.node_states).clone(),
            h_g: g.value(v.h_g).data.clone(),
            h_inst: g.value(v.h_inst).data.clone(),
            token_states: g.value(v.token_states).clone(),
            emb: g.value(v.emb).clone(),
        })
    }
}
