//! Per-sample fine-tuning losses shared by training and gradient checks.

use crate::error::Result;
use crate::ingest::FunctionRecord;
use crate::nn::{Graph, Var};
use crate::tasks::{joint_loss, ranking_loss, score, similarity_h, Model};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub margin: f64,
    pub literal: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub j_cg: f64,
    pub j_cs: f64,
    pub f_pos: f64,
    pub f_neg: f64,
}

impl LossParts {
    pub fn mean(parts: &[LossParts]) -> LossParts {
        let n = parts.len().max(1) as f64;
        let mut m = LossParts::default();
        for p in parts {
            m.total += p.total / n;
            m.j_cg += p.j_cg / n;
            m.j_cs += p.j_cs / n;
            m.f_pos += p.f_pos / n;
            m.f_neg += p.f_neg / n;
        }
        m
    }
}

/// `(f_pos, f_neg)` graph nodes for one triplet.
pub fn triplet_scores(model: &Model, g: &mut Graph, x: Var, y: &FunctionRecord, z: &FunctionRecord) -> Result<(Var, Var)> {
    let ey = model.encoder.encode(g, y)?.emb;
    let ez = model.encoder.encode(g, z)?.emb;
    let hx = similarity_h(g, x)?;
    let hy = similarity_h(g, ey)?;
    let hz = similarity_h(g, ez)?;
    Ok((score(g, hx, hy)?, score(g, hx, hz)?))
}

/// `lambda1 J_cg(x) + lambda2 J_cs(x, y, z)`. With `lambda2 == 0` or no
/// positive/negative, the similarity head is not evaluated at all.
pub fn multitask_loss(
    model: &Model,
    g: &mut Graph,
    x: &FunctionRecord,
    gold: &[usize],
    yz: Option<(&FunctionRecord, &FunctionRecord)>,
    w: &LossWeights,
) -> Result<(Var, LossParts)> {
    let ex = model.encoder.encode(g, x)?.emb;
    let j_cg = model.heads.name_loss(g, ex, gold)?;
    let mut parts = LossParts { j_cg: g.value(j_cg).item(), ..Default::default() };
    let total = match yz {
        Some((y, z)) if w.lambda2 != 0.0 => {
            let (fp, fn_) = triplet_scores(model, g, ex, y, z)?;
            let j_cs = ranking_loss(g, fp, fn_, w.margin, w.literal);
            parts.f_pos = g.value(fp).item();
            parts.f_neg = g.value(fn_).item();
            parts.j_cs = g.value(j_cs).item();
            joint_loss(g, j_cg, j_cs, w.lambda1, w.lambda2)
        }
        _ => g.scale(j_cg, w.lambda1),
    };
    parts.total = g.value(total).item();
    Ok((total, parts))
}
