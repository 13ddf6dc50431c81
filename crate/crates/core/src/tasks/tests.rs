use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vocab::{BOS, EOS};
use super::*;
use crate::encoder::TokenVocab;
use crate::error::Error;
use crate::ingest::{normalize_record, OptLevel};
use crate::nn::{Mat, ParamStore};
use crate::synthetic::{synthetic_dataset, synthetic_labels};

fn toy() -> (Model, ParamStore) {
    let data = synthetic_dataset(6, 3, 1);
    let labels = synthetic_labels(6, 3, 1);
    let names = NameVocabulary::build(data.iter().zip(&labels).map(|(r, l)| (r.id.as_str(), l.as_slice())));
    let enc = Encoder::new(EncoderConfig::toy(), TokenVocab::build(&data, 1)).unwrap();
    let model = Model::new(enc, HeadConfig::toy(), names).unwrap();
    let store = model.init_params(9);
    (model, store)
}

fn random_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn affine(store: &ParamStore, x: &Mat, n: &str) -> Mat {
    let mut y = x.matmul(store.value(&format!("{n}.w")));
    let b = store.value(&format!("{n}.b"));
    for i in 0..y.rows {
        for j in 0..y.cols {
            y.data[i * y.cols + j] += b.data[j];
        }
    }
    y
}

fn ln(store: &ParamStore, x: &Mat, n: &str) -> Mat {
    let (g, b) = (store.value(&format!("{n}.g")), store.value(&format!("{n}.b")));
    let mut y = x.clone();
    for i in 0..x.rows {
        let r = x.row(i);
        let mean = r.iter().sum::<f64>() / x.cols as f64;
        let var = r.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / x.cols as f64;
        for j in 0..x.cols {
            y.data[i * x.cols + j] = (r[j] - mean) / (var + 1e-5).sqrt() * g.data[j] + b.data[j];
        }
    }
    y
}

fn attention(store: &ParamStore, xq: &Mat, xkv: &Mat, p: &str, heads: usize, causal: bool) -> Mat {
    let q = affine(store, xq, &format!("{p}.q"));
    let k = affine(store, xkv, &format!("{p}.k"));
    let v = affine(store, xkv, &format!("{p}.v"));
    let d = q.cols;
    let dh = d / heads;
    let mut cat = Mat::zeros(q.rows, d);
    for h in 0..heads {
        for i in 0..q.rows {
            let visible = if causal { i + 1 } else { k.rows };
            let s: Vec<f64> = (0..visible)
                .map(|j| (0..dh).map(|t| q.get(i, h * dh + t) * k.get(j, h * dh + t)).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let mx = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = s.iter().map(|a| (a - mx).exp()).sum();
            for t in 0..dh {
                let o: f64 = (0..visible).map(|j| (s[j] - mx).exp() / z * v.get(j, h * dh + t)).sum();
                cat.set(i, h * dh + t, o);
            }
        }
    }
    affine(store, &cat, &format!("{p}.o"))
}

fn decoder_oracle(h: &Heads, store: &ParamStore, emb: &Mat, prefix: &[usize]) -> Vec<f64> {
    let (tab, pos) = (store.value("dec.emb"), store.value("dec.pos"));
    let mut x = Mat::from_rows(
        &prefix.iter().enumerate().map(|(i, &t)| (0..h.d_hidden).map(|j| tab.get(t, j) + pos.get(i, j)).collect()).collect::<Vec<_>>(),
    );
    for l in 0..h.cfg.dec_layers {
        let p = format!("dec.l{l}");
        let mut r = x.clone();
        r.add_assign(&attention(store, &x, &x, &format!("{p}.self"), h.n_heads, true));
        x = ln(store, &r, &format!("{p}.ln1"));
        let mut r = x.clone();
        r.add_assign(&attention(store, &x, emb, &format!("{p}.cross"), h.n_heads, false));
        x = ln(store, &r, &format!("{p}.ln2"));
        let f = affine(store, &affine(store, &x, &format!("{p}.ffn1")).map(|a| a.max(0.0)), &format!("{p}.ffn2"));
        let mut r = x.clone();
        r.add_assign(&f);
        x = ln(store, &r, &format!("{p}.ln3"));
    }
    let logits = affine(store, &x, "dec.out");
    let last = logits.row(logits.rows - 1);
    let mx = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = last.iter().map(|a| (a - mx).exp()).sum();
    last.iter().map(|a| (a - mx).exp() / z).collect()
}

#[test]
fn decoder_matches_naive_oracle() {
    let (m, store) = toy();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let emb = random_mat(rng.random_range(1..9), m.heads.d_hidden, &mut rng);
        let mut prefix = vec![BOS];
        for _ in 0..rng.random_range(0..5) {
            prefix.push(rng.random_range(0..m.names.len()));
        }
        let got = m.heads.decode_step_probs(&store, &emb, &prefix).unwrap();
        let want = decoder_oracle(&m.heads, &store, &emb, &prefix);
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }
}

#[test]
fn decoder_rejects_bad_input() {
    let (m, store) = toy();
    let emb = Mat::zeros(0, m.heads.d_hidden);
    assert!(matches!(m.heads.decode_step_probs(&store, &emb, &[BOS]), Err(Error::Empty(_))));
    let emb = Mat::zeros(2, m.heads.d_hidden);
    assert!(m.heads.decode_step_probs(&store, &emb, &[EOS]).is_err());
}

fn zero_output(store: &mut ParamStore) {
    for n in ["dec.out.w", "dec.out.b"] {
        store.value_mut(n).data.iter_mut().for_each(|x| *x = 0.0);
    }
}

#[test]
fn zero_output_is_uniform() {
    let (m, mut store) = toy();
    zero_output(&mut store);
    let emb = random_mat(3, m.heads.d_hidden, &mut ChaCha8Rng::seed_from_u64(1));
    let p = m.heads.decode_step_probs(&store, &emb, &[BOS, 5]).unwrap();
    let v = m.names.len() as f64;
    assert!(p.iter().all(|x| (x - 1.0 / v).abs() < 1e-12));

    // uniform over 10 labels, two gold labels plus EOS
    let mut h = m.heads.clone();
    h.name_vocab_size = 10;
    let mut s = ParamStore::new(0);
    h.init_decoder(&mut s, 3);
    zero_output(&mut s);
    let mut g = Graph::new(&s);
    let e = g.constant(emb);
    let loss = h.name_loss(&mut g, e, &[4, 5]).unwrap();
    assert!((g.value(loss).item() - 3.0 * 10f64.ln()).abs() < 1e-9);
}

#[test]
fn certain_model_has_zero_loss_and_eos_first_predicts_nothing() {
    let (m, mut store) = toy();
    let v = m.names.len();
    // bias forcing EOS at every step
    store.value_mut("dec.out.w").data.iter_mut().for_each(|x| *x = 0.0);
    let b = store.value_mut("dec.out.b");
    for j in 0..v {
        b.data[j] = if j == EOS { 1e4 } else { 0.0 };
    }
    let emb = random_mat(2, m.heads.d_hidden, &mut ChaCha8Rng::seed_from_u64(2));
    assert!(m.heads.predict_ids(&store, &emb, 8).unwrap().is_empty());
    let mut g = Graph::new(&store);
    let e = g.constant(emb.clone());
    // with every label cut, the target is EOS alone
    assert!(m.heads.name_loss(&mut g, e, &[]).is_err());
    let mut h = m.heads.clone();
    h.cfg.max_name_len = 0;
    let mut g = Graph::new(&store);
    let e = g.constant(emb);
    let loss = h.name_loss(&mut g, e, &[7]).unwrap();
    assert!(g.value(loss).item().abs() < 1e-12);
}

#[test]
fn prediction_length_is_bounded() {
    let (m, mut store) = toy();
    store.value_mut("dec.out.w").data.iter_mut().for_each(|x| *x = 0.0);
    let b = store.value_mut("dec.out.b");
    b.data.iter_mut().for_each(|x| *x = 0.0);
    // ties between 6 and 7 go to 6
    b.data[6] = 5.0;
    b.data[7] = 5.0;
    let emb = random_mat(2, m.heads.d_hidden, &mut ChaCha8Rng::seed_from_u64(3));
    for max in 0..5 {
        assert_eq!(m.heads.predict_ids(&store, &emb, max).unwrap(), vec![6; max]);
    }
}

#[test]
fn similarity_h_is_tanh_of_max() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let store = ParamStore::new(0);
    for _ in 0..20 {
        let x = random_mat(5, 8, &mut rng).map(|a| a * 3.0);
        let mut g = Graph::new(&store);
        let e = g.constant(x.clone());
        let h = similarity_h(&mut g, e).unwrap();
        for j in 0..8 {
            let mut mx = f64::NEG_INFINITY;
            for i in 0..5 {
                if x.get(i, j) > mx {
                    mx = x.get(i, j);
                }
            }
            let got = g.value(h).get(0, j);
            assert_eq!(got, mx.tanh());
            assert!(got > -1.0 && got < 1.0);
        }
    }
    let v = Mat::row_vector(vec![0.3, -2.0]);
    let mut g = Graph::new(&store);
    let e = g.constant(v);
    let h = similarity_h(&mut g, e).unwrap();
    assert_eq!(g.value(h).data, vec![0.3f64.tanh(), (-2.0f64).tanh()]);
    let e = g.constant(Mat::zeros(0, 2));
    assert!(similarity_h(&mut g, e).is_err());
}

fn identity_head(d: usize) -> ParamStore {
    let mut s = ParamStore::new(0);
    for n in ["sim.h1", "sim.h2"] {
        s.insert(&format!("{n}.w"), Mat::identity(d));
        s.insert(&format!("{n}.b"), Mat::zeros(1, d));
    }
    s
}

#[test]
fn score_cases() {
    let s = identity_head(3);
    let mut g = Graph::new(&s);
    let a = g.constant(Mat::row_vector(vec![0.5, -0.2, 0.1]));
    let b = g.constant(Mat::row_vector(vec![-0.5, 0.2, -0.1]));
    let same = score(&mut g, a, a).unwrap();
    let opposite = score(&mut g, a, b).unwrap();
    assert!((g.value(same).item() - 1.0).abs() < 1e-12);
    assert!((g.value(opposite).item() + 1.0).abs() < 1e-12);
    let z = g.constant(Mat::zeros(1, 3));
    assert!(matches!(score(&mut g, a, z), Err(Error::DegenerateProjection)));

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut s = ParamStore::new(0);
    for n in ["sim.h1", "sim.h2"] {
        s.insert(&format!("{n}.w"), random_mat(4, 4, &mut rng));
        s.insert(&format!("{n}.b"), random_mat(1, 4, &mut rng));
    }
    for _ in 0..20 {
        let (x, y) = (random_mat(1, 4, &mut rng), random_mat(1, 4, &mut rng));
        let u = affine(&s, &x, "sim.h1");
        let v = affine(&s, &y, "sim.h2");
        let dot: f64 = u.data.iter().zip(&v.data).map(|(a, b)| a * b).sum();
        let nu = u.data.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv = v.data.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut g = Graph::new(&s);
        let (hx, hy) = (g.constant(x), g.constant(y));
        let f = score(&mut g, hx, hy).unwrap();
        assert!((g.value(f).item() - dot / (nu * nv)).abs() < 1e-12);
    }
}

#[test]
fn score_ignores_positive_rescaling() {
    let s = identity_head(3);
    let mut g = Graph::new(&s);
    let a = g.constant(Mat::row_vector(vec![0.5, -0.2, 0.1]));
    let b = g.constant(Mat::row_vector(vec![0.1, 0.7, -0.3]));
    let a2 = g.constant(Mat::row_vector(vec![1.5, -0.6, 0.3]));
    let b2 = g.constant(Mat::row_vector(vec![0.05, 0.35, -0.15]));
    let f1 = score(&mut g, a, b).unwrap();
    let f2 = score(&mut g, a2, b2).unwrap();
    assert!((g.value(f1).item() - g.value(f2).item()).abs() < 1e-12);
}

#[test]
fn ranking_loss_cases() {
    assert!(ranking_loss_value(0.9, 0.2, 0.5, false).abs() < 1e-12);
    assert!((ranking_loss_value(0.3, 0.2, 0.5, false) - 0.4).abs() < 1e-12);
    assert_eq!(ranking_loss_value(0.1, 0.1, 0.5, false), 0.5);
    assert!((ranking_loss_value(0.9, 0.2, 0.5, true) - 0.2).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let (p, n, d) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..0.5));
        assert!(ranking_loss_value(p + d, n, 0.5, false) <= ranking_loss_value(p, n, 0.5, false));
        assert!(ranking_loss_value(p, n + d, 0.5, false) >= ranking_loss_value(p, n, 0.5, false));
        let store = ParamStore::new(0);
        let mut g = Graph::new(&store);
        let (fp, fn_) = (g.scalar(p), g.scalar(n));
        let l = ranking_loss(&mut g, fp, fn_, 0.5, false);
        assert!((g.value(l).item() - ranking_loss_value(p, n, 0.5, false)).abs() < 1e-15);
    }
}

#[test]
fn joint_loss_is_linear() {
    let store = ParamStore::new(0);
    let mut g = Graph::new(&store);
    let (a, b) = (g.scalar(2.0), g.scalar(0.5));
    let j = joint_loss(&mut g, a, b, 1.0, 1.0);
    assert_eq!(g.value(j).item(), 2.5);
    let j = joint_loss(&mut g, a, b, 0.7, 0.0);
    assert_eq!(g.value(j).item(), 1.4);
    let j = joint_loss(&mut g, a, b, 3.0, 3.0);
    assert_eq!(g.value(j).item(), 7.5);
}

#[test]
fn triplet_only_choice() {
    let mut data = synthetic_dataset(2, 2, 3);
    data.truncate(3);
    // s000@O0, s000@O2, s001@O0
    assert_eq!(data[1].opt, OptLevel::O2);
    let names = vec![vec!["a".to_string()], vec!["a".to_string()], vec!["b".to_string()]];
    for seed in 0..10 {
        let t = sample_triplet(&data, &names, seed).unwrap();
        if t.anchor_id == data[0].id {
            assert_eq!(t.positive_id, data[1].id);
            assert_eq!(t.negative_id, data[2].id);
        }
    }
    let same = vec![vec!["a".to_string()]; 3];
    assert!(sample_triplet(&data, &same, 0).is_err());
}

#[test]
fn triplet_constraints_and_determinism() {
    let data = synthetic_dataset(8, 3, 5);
    let names = synthetic_labels(8, 3, 5);
    let s = TripletSampler::new(&data, &names).unwrap();
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..50).map(|_| s.sample(&mut rng)).collect::<Vec<_>>()
    };
    assert_eq!(draw(2), draw(2));
    for t in draw(2) {
        let (x, y) = (&data[t.anchor], &data[t.positive]);
        assert_eq!(x.source_id, y.source_id);
        assert_ne!(x.opt, y.opt);
        assert_ne!(names[t.anchor], names[t.negative]);
    }
}

#[test]
fn predict_and_similarity_run_end_to_end() {
    let (m, store) = toy();
    let data = synthetic_dataset(2, 2, 1);
    let rec = normalize_record(&data[0]);
    let name = m.predict_name(&store, &rec, 4).unwrap();
    assert!(name.len() <= 4);
    let f = m.similarity(&store, &data[0], &data[1]).unwrap();
    assert!((-1.0..=1.0).contains(&f));
}
