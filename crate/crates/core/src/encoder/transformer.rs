//! Multi-head attention and post-LN transformer layers on the autodiff graph.

use rand_chacha::ChaCha8Rng;

use crate::nn::{Graph, Mat, ParamStore, Var};

pub const LN_EPS: f64 = 1e-5;

pub fn init_layer_norm(store: &mut ParamStore, prefix: &str, d: usize) {
    store.init_ones(&format!("{prefix}.g"), 1, d);
    store.init_zeros(&format!("{prefix}.b"), 1, d);
}

pub fn layer_norm(g: &mut Graph, x: Var, prefix: &str) -> Var {
    let n = g.layer_norm_rows(x, LN_EPS);
    let gain = g.param(&format!("{prefix}.g"));
    let bias = g.param(&format!("{prefix}.b"));
    let s = g.mul_row(n, gain);
    g.add_row(s, bias)
}

pub fn init_attention(store: &mut ParamStore, prefix: &str, d: usize, rng: &mut ChaCha8Rng) {
    for p in ["q", "k", "v", "o"] {
        store.init_affine(&format!("{prefix}.{p}"), d, d, rng);
    }
}

/// Additive key-padding mask: `-inf` in every column whose key is padding.
pub fn key_padding_mask(queries: usize, pad: &[bool]) -> Option<Mat> {
    if !pad.iter().any(|&p| p) {
        return None;
    }
    let mut m = Mat::zeros(queries, pad.len());
    for i in 0..queries {
        for (j, &p) in pad.iter().enumerate() {
            if p {
                m.set(i, j, f64::NEG_INFINITY);
            }
        }
    }
    Some(m)
}

/// `-inf` above the diagonal.
pub fn causal_mask(n: usize) -> Mat {
    let mut m = Mat::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            m.set(i, j, f64::NEG_INFINITY);
        }
    }
    m
}

/// Scaled dot-product attention of `xq` over `xkv`. Returns the projected
/// output and the per-head attention matrices.
pub fn multi_head_attention(
    g: &mut Graph,
    xq: Var,
    xkv: Var,
    prefix: &str,
    n_heads: usize,
    mask: Option<&Mat>,
) -> (Var, Vec<Var>) {
    let q = g.affine(xq, &format!("{prefix}.q"));
    let k = g.affine(xkv, &format!("{prefix}.k"));
    let v = g.affine(xkv, &format!("{prefix}.v"));
    let d = g.value(q).cols;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mask = mask.map(|m| g.constant(m.clone()));
    let mut heads = Vec::with_capacity(n_heads);
    let mut weights = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = g.slice_cols(q, h * dh, dh);
        let kh = g.slice_cols(k, h * dh, dh);
        let vh = g.slice_cols(v, h * dh, dh);
        let kt = g.transpose(kh);
        let s = g.matmul(qh, kt);
        let mut s = g.scale(s, scale);
        if let Some(m) = mask {
            s = g.add(s, m);
        }
        let a = g.softmax_rows(s);
        weights.push(a);
        heads.push(g.matmul(a, vh));
    }
    let cat = g.concat_cols(&heads);
    (g.affine(cat, &format!("{prefix}.o")), weights)
}

pub fn init_ffn(store: &mut ParamStore, prefix: &str, d: usize, d_ff: usize, rng: &mut ChaCha8Rng) {
    store.init_affine(&format!("{prefix}.ffn1"), d, d_ff, rng);
    store.init_affine(&format!("{prefix}.ffn2"), d_ff, d, rng);
}

pub fn ffn(g: &mut Graph, x: Var, prefix: &str) -> Var {
    let h = g.affine(x, &format!("{prefix}.ffn1"));
    let h = g.relu(h);
    g.affine(h, &format!("{prefix}.ffn2"))
}

pub fn init_encoder_layer(store: &mut ParamStore, prefix: &str, d: usize, d_ff: usize, rng: &mut ChaCha8Rng) {
    init_attention(store, &format!("{prefix}.attn"), d, rng);
    init_layer_norm(store, &format!("{prefix}.ln1"), d);
    init_ffn(store, prefix, d, d_ff, rng);
    init_layer_norm(store, &format!("{prefix}.ln2"), d);
}

/// Self-attention then feed-forward, each followed by residual + LayerNorm.
pub fn encoder_layer(g: &mut Graph, x: Var, prefix: &str, n_heads: usize, dropout: f64, mask: Option<&Mat>) -> (Var, Vec<Var>) {
    let (a, weights) = multi_head_attention(g, x, x, &format!("{prefix}.attn"), n_heads, mask);
    let a = g.dropout(a, dropout);
    let r = g.add(x, a);
    let x = layer_norm(g, r, &format!("{prefix}.ln1"));
    let f = ffn(g, x, prefix);
    let f = g.dropout(f, dropout);
    let r = g.add(x, f);
    (layer_norm(g, r, &format!("{prefix}.ln2")), weights)
}
