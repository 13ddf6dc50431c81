//! Skip-gram with negative sampling, with and without character n-grams.

use std::collections::{BTreeMap, HashMap};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::mat::cosine;
use crate::nn::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingKind {
    SkipGram,
    Subword,
}

#[derive(Clone, Debug)]
pub struct EmbedConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    /// Inclusive character n-gram range for subword vectors.
    pub ngram_range: (usize, usize),
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig { dim: 32, window: 2, negatives: 5, epochs: 20, seed: 1, lr: 0.05, ngram_range: (3, 6) }
    }
}

#[derive(Clone, Debug)]
struct Subwords {
    range: (usize, usize),
    ngrams: HashMap<String, usize>,
    /// Word rows first, then one row per n-gram.
    inputs: Mat,
}

#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub vocab: BTreeMap<String, usize>,
    pub vectors: Mat,
    pub dim: usize,
    pub kind: EmbeddingKind,
    /// Mean loss per epoch.
    pub epoch_loss: Vec<f64>,
    subwords: Option<Subwords>,
}

/// `<word>` n-grams in the inclusive range, in order of appearance.
pub fn char_ngrams(word: &str, range: (usize, usize)) -> Vec<String> {
    let marked: Vec<char> = format!("<{word}>").chars().collect();
    let mut out = Vec::new();
    for n in range.0..=range.1 {
        for i in 0..marked.len().saturating_sub(n - 1) {
            let g: String = marked[i..i + n].iter().collect();
            if g != format!("<{word}>") {
                out.push(g);
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl EmbeddingTable {
    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.vocab.get(label).map(|&i| self.vectors.row(i))
    }

    /// Vector for any label; subword tables compose unseen labels from their
    /// known n-grams (zero vector when none is known).
    pub fn query(&self, label: &str) -> Option<Vec<f64>> {
        if let Some(v) = self.get(label) {
            return Some(v.to_vec());
        }
        let sub = self.subwords.as_ref()?;
        let rows: Vec<usize> = char_ngrams(label, sub.range).iter().filter_map(|g| sub.ngrams.get(g)).copied().collect();
        let mut v = vec![0.0; self.dim];
        for &r in &rows {
            for (a, b) in v.iter_mut().zip(sub.inputs.row(r)) {
                *a += b;
            }
        }
        if !rows.is_empty() {
            v.iter_mut().for_each(|a| *a /= rows.len() as f64);
        }
        Some(v)
    }

    /// Up to `k` vocabulary labels by descending cosine to `v`, skipping
    /// `exclude`; ties go to the lexicographically smaller label.
    pub fn nearest(&self, v: &[f64], k: usize, exclude: &str) -> Vec<(String, f64)> {
        let mut scored: Vec<(String, f64)> = self
            .vocab
            .iter()
            .filter(|(l, _)| l.as_str() != exclude)
            .map(|(l, &i)| (l.clone(), cosine(v, self.vectors.row(i))))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }
}

fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>]) -> Result<(BTreeMap<String, usize>, Vec<u64>)> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for name in corpus {
        for l in name {
            *counts.entry(l.as_ref().to_string()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty("embedding corpus has no labels".into()));
    }
    let vocab = counts.keys().enumerate().map(|(i, k)| (k.clone(), i)).collect();
    Ok((vocab, counts.into_values().collect()))
}

/// Input rows feeding each word: the word row alone, or the word row plus its n-gram rows.
fn train<S: AsRef<str>>(
    corpus: &[Vec<S>],
    cfg: &EmbedConfig,
    vocab: &BTreeMap<String, usize>,
    counts: &[u64],
    input_rows: &[Vec<usize>],
    n_inputs: usize,
) -> Result<(Mat, Mat, Vec<f64>)> {
    if cfg.dim < 2 {
        return Err(Error::invalid("embedding dim must be >= 2"));
    }
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bound = 0.5 / d as f64;
    let mut inp = Mat::from_vec(n_inputs, d, (0..n_inputs * d).map(|_| rng.random_range(-bound..bound)).collect());
    let mut out = Mat::zeros(vocab.len(), d);
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75))).expect("positive counts");
    let sentences: Vec<Vec<usize>> =
        corpus.iter().map(|s| s.iter().map(|l| vocab[l.as_ref()]).collect()).collect();
    let total_steps = (cfg.epochs * sentences.len()).max(1) as f64;
    let mut step = 0usize;
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut h = vec![0.0; d];
    let mut grad_h = vec![0.0; d];
    for _ in 0..cfg.epochs {
        let (mut loss, mut pairs) = (0.0, 0usize);
        for sent in &sentences {
            let lr = cfg.lr * (1.0 - step as f64 / total_steps).max(1e-4);
            step += 1;
            for (i, &center) in sent.iter().enumerate() {
                let rows = &input_rows[center];
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window + 1).min(sent.len());
                for (j, &ctx) in sent.iter().enumerate().take(hi).skip(lo) {
                    if j == i {
                        continue;
                    }
                    h.iter_mut().for_each(|x| *x = 0.0);
                    for &r in rows {
                        for (a, b) in h.iter_mut().zip(inp.row(r)) {
                            *a += b;
                        }
                    }
                    h.iter_mut().for_each(|x| *x /= rows.len() as f64);
                    grad_h.iter_mut().for_each(|x| *x = 0.0);
                    let mut targets = vec![(ctx, 1.0)];
                    for _ in 0..cfg.negatives {
                        let neg = noise.sample(&mut rng);
                        if neg != ctx {
                            targets.push((neg, 0.0));
                        }
                    }
                    for (t, label) in targets {
                        let o = out.row_mut(t);
                        let s = sigmoid(h.iter().zip(o.iter()).map(|(a, b)| a * b).sum());
                        loss -= if label > 0.0 { s.max(1e-12).ln() } else { (1.0 - s).max(1e-12).ln() };
                        let g = s - label;
                        for k in 0..d {
                            grad_h[k] += g * o[k];
                            o[k] -= lr * g * h[k];
                        }
                    }
                    let share = lr / rows.len() as f64;
                    for &r in rows {
                        for (a, g) in inp.row_mut(r).iter_mut().zip(&grad_h) {
                            *a -= share * g;
                        }
                    }
                    pairs += 1;
                }
            }
        }
        epoch_loss.push(if pairs > 0 { loss / pairs as f64 } else { 0.0 });
    }
    Ok((inp, out, epoch_loss))
}

pub fn train_skipgram<S: AsRef<str>>(corpus: &[Vec<S>], cfg: &EmbedConfig) -> Result<EmbeddingTable> {
    let (vocab, counts) = build_vocab(corpus)?;
    let rows: Vec<Vec<usize>> = (0..vocab.len()).map(|i| vec![i]).collect();
    let (inp, _, epoch_loss) = train(corpus, cfg, &vocab, &counts, &rows, vocab.len())?;
    Ok(EmbeddingTable { vocab, vectors: inp, dim: cfg.dim, kind: EmbeddingKind::SkipGram, epoch_loss, subwords: None })
}

pub fn train_subword_embeddings<S: AsRef<str>>(corpus: &[Vec<S>], cfg: &EmbedConfig) -> Result<EmbeddingTable> {
    let (vocab, counts) = build_vocab(corpus)?;
    let mut ngrams: HashMap<String, usize> = HashMap::new();
    let mut rows = Vec::with_capacity(vocab.len());
    for (word, &i) in &vocab {
        let mut r = vec![i];
        for g in char_ngrams(word, cfg.ngram_range) {
            let next = vocab.len() + ngrams.len();
            r.push(*ngrams.entry(g).or_insert(next));
        }
        rows.push(r);
    }
    let n_inputs = vocab.len() + ngrams.len();
    let (inp, _, epoch_loss) = train(corpus, cfg, &vocab, &counts, &rows, n_inputs)?;
    let mut vectors = Mat::zeros(vocab.len(), cfg.dim);
    for (i, r) in rows.iter().enumerate() {
        let out = vectors.row_mut(i);
        for &k in r {
            for (a, b) in out.iter_mut().zip(inp.row(k)) {
                *a += b / r.len() as f64;
            }
        }
    }
    Ok(EmbeddingTable {
        vocab,
        vectors,
        dim: cfg.dim,
        kind: EmbeddingKind::Subword,
        epoch_loss,
        subwords: Some(Subwords { range: cfg.ngram_range, ngrams, inputs: inp }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> Vec<Vec<String>> {
        let mut c = Vec::new();
        let ctx_a = ["buffer", "memory", "size", "block"];
        let ctx_p = ["string", "format", "line", "stdout"];
        for i in 0..40 {
            for w in ["alloc", "malloc"] {
                c.push(vec![ctx_a[i % 4].to_string(), w.to_string(), ctx_a[(i + 1) % 4].to_string()]);
            }
            c.push(vec![ctx_p[i % 4].to_string(), "print".to_string(), ctx_p[(i + 2) % 4].to_string()]);
            c.push(vec!["realloc".to_string(), ctx_a[(i + 3) % 4].to_string()]);
            c.push(vec!["zzz".to_string(), ctx_p[(i + 1) % 4].to_string()]);
        }
        c
    }

    fn cfg() -> EmbedConfig {
        EmbedConfig { dim: 16, epochs: 30, seed: 1, ..Default::default() }
    }

    #[test]
    fn skipgram_shared_contexts() {
        let t = train_skipgram(&corpus(), &cfg()).unwrap();
        assert_eq!(t.vectors.shape(), (t.vocab.len(), 16));
        let c = |a: &str, b: &str| cosine(t.get(a).unwrap(), t.get(b).unwrap());
        assert!(c("alloc", "malloc") > c("alloc", "print"));
        let again = train_skipgram(&corpus(), &cfg()).unwrap();
        assert_eq!(t.vectors, again.vectors);
    }

    #[test]
    fn loss_trends_down() {
        let t = train_skipgram(&corpus(), &EmbedConfig { epochs: 20, ..cfg() }).unwrap();
        let first: f64 = t.epoch_loss[..10].iter().sum();
        let last: f64 = t.epoch_loss[10..].iter().sum();
        assert!(last <= first, "{:?}", t.epoch_loss);
    }

    #[test]
    fn subword_composition() {
        let t = train_subword_embeddings(&corpus(), &cfg()).unwrap();
        let v = t.query("reallocx").unwrap();
        assert!(v.iter().all(|x| x.is_finite()) && v.iter().any(|&x| x != 0.0));
        let c = |a: &str, b: &str| cosine(t.get(a).unwrap(), t.get(b).unwrap());
        assert!(c("alloc", "realloc") > c("alloc", "zzz"));
        assert_eq!(t.vectors, train_subword_embeddings(&corpus(), &cfg()).unwrap().vectors);
    }

    #[test]
    fn ngrams_have_markers() {
        let g = char_ngrams("set", (3, 6));
        assert_eq!(g, ["<se", "set", "et>", "<set", "set>"]);
        assert!(train_skipgram::<&str>(&[], &cfg()).is_err());
        assert!(train_skipgram(&[vec!["a"]], &EmbedConfig { dim: 1, ..cfg() }).is_err());
    }
}
