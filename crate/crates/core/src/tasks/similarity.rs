//! Function-semantics similarity head and the training objectives.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Heads;
use crate::error::{Error, Result};
use crate::nn::mat::norm;
use crate::nn::{Graph, ParamStore, Var};

impl Heads {
    pub fn init_similarity(&self, store: &mut ParamStore, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        store.init_affine("sim.h1", self.d_hidden, self.d_hidden, &mut rng);
        store.init_affine("sim.h2", self.d_hidden, self.d_hidden, &mut rng);
    }
}

/// `tanh` of the per-dimension max over the sequence positions.
pub fn similarity_h(g: &mut Graph, emb: Var) -> Result<Var> {
    if g.value(emb).rows == 0 {
        return Err(Error::Empty("empty encoding".into()));
    }
    let m = g.max_rows(emb);
    Ok(g.tanh(m))
}

/// Cosine between the two projections.
pub fn score(g: &mut Graph, h1: Var, h2: Var) -> Result<Var> {
    if g.value(h1).cols != g.value(h2).cols {
        return Err(Error::invalid("score inputs differ in dimension"));
    }
    let u = g.affine(h1, "sim.h1");
    let v = g.affine(h2, "sim.h2");
    if norm(&g.value(u).data) == 0.0 || norm(&g.value(v).data) == 0.0 {
        return Err(Error::DegenerateProjection);
    }
    Ok(g.cosine(u, v))
}

/// `max(M - (f_pos - f_neg), 0)`, or with `literal` the printed
/// `max(f_pos - f_neg - M, 0)`.
pub fn ranking_loss_value(f_pos: f64, f_neg: f64, margin: f64, literal: bool) -> f64 {
    if literal {
        (f_pos - f_neg - margin).max(0.0)
    } else {
        (margin - (f_pos - f_neg)).max(0.0)
    }
}

pub fn ranking_loss(g: &mut Graph, f_pos: Var, f_neg: Var, margin: f64, literal: bool) -> Var {
    let gap = g.sub(f_pos, f_neg);
    let m = g.scalar(margin);
    let z = if literal {
        g.sub(gap, m)
    } else {
        g.sub(m, gap)
    };
    g.relu(z)
}

pub fn joint_loss(g: &mut Graph, j_cg: Var, j_cs: Var, lambda1: f64, lambda2: f64) -> Var {
    let a = g.scale(j_cg, lambda1);
    let b = g.scale(j_cs, lambda2);
    g.add(a, b)
}
