//! Unsupervised boundary detection by transition freedom.
//!
//! The forward transition freedom at position `p` is the number of distinct
//! symbols seen after the longest known n-gram ending at `p`; the backward
//! one counts distinct symbols before the longest known n-gram starting at
//! `p`. A boundary is proposed where the freedom jumps.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

/// Peaks below this fraction of the largest peak are ignored.
pub const PEAK_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, Default)]
pub struct TfModel {
    pub max_n: usize,
    pub ngram_counts: HashMap<String, u64>,
    pub forward_tf: HashMap<String, HashMap<char, u64>>,
    pub backward_tf: HashMap<String, HashMap<char, u64>>,
}

pub fn train_tf_model<S: AsRef<str>>(corpus: &[S], max_n: usize) -> Result<TfModel> {
    if max_n < 1 {
        return Err(Error::invalid("max_n must be >= 1"));
    }
    let mut m = TfModel { max_n, ..Default::default() };
    for s in corpus {
        let chars: Vec<char> = s.as_ref().chars().collect();
        let len = chars.len();
        for i in 0..len {
            for n in 1..=max_n.min(len - i) {
                let gram: String = chars[i..i + n].iter().collect();
                if i + n < len {
                    *m.forward_tf.entry(gram.clone()).or_default().entry(chars[i + n]).or_default() += 1;
                }
                if i > 0 {
                    *m.backward_tf.entry(gram.clone()).or_default().entry(chars[i - 1]).or_default() += 1;
                }
                *m.ngram_counts.entry(gram).or_default() += 1;
            }
        }
    }
    Ok(m)
}

impl TfModel {
    /// Distinct successors of the longest n-gram ending at `p` that has any.
    fn forward_at(&self, chars: &[char], p: usize) -> f64 {
        for n in (1..=self.max_n.min(p)).rev() {
            let gram: String = chars[p - n..p].iter().collect();
            if let Some(succ) = self.forward_tf.get(&gram) {
                return succ.len() as f64;
            }
        }
        0.0
    }

    fn backward_at(&self, chars: &[char], p: usize) -> f64 {
        for n in (1..=self.max_n.min(chars.len() - p)).rev() {
            let gram: String = chars[p..p + n].iter().collect();
            if let Some(pred) = self.backward_tf.get(&gram) {
                return pred.len() as f64;
            }
        }
        0.0
    }

    fn is_entry(&self, s: &[char]) -> bool {
        s.len() >= 2 && self.ngram_counts.contains_key(&s.iter().collect::<String>())
    }
}

fn peaks(deltas: &[(usize, f64)]) -> BTreeSet<usize> {
    let max = deltas.iter().map(|&(_, d)| d).fold(0.0, f64::max);
    if max <= 0.0 {
        return BTreeSet::new();
    }
    deltas.iter().filter(|&&(_, d)| d > 0.0 && d >= PEAK_THRESHOLD * max).map(|&(p, _)| p).collect()
}

/// Cut positions proposed by transition freedom for a lowercase name.
pub fn tf_tokenize(model: &TfModel, name: &str) -> BTreeSet<usize> {
    let chars: Vec<char> = name.chars().collect();
    let len = chars.len();
    if len < 3 {
        return BTreeSet::new();
    }
    let doubled = |p: usize, d: f64| {
        if model.is_entry(&chars[..p]) || model.is_entry(&chars[p..]) {
            2.0 * d
        } else {
            d
        }
    };
    let fwd: Vec<(usize, f64)> =
        (2..len).map(|p| (p, doubled(p, model.forward_at(&chars, p) - model.forward_at(&chars, p - 1)))).collect();
    let bwd: Vec<(usize, f64)> =
        (1..len - 1).map(|p| (p, doubled(p, model.backward_at(&chars, p) - model.backward_at(&chars, p + 1)))).collect();
    let mut out = peaks(&fwd);
    out.extend(peaks(&bwd));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counts() {
        let m = train_tf_model(&["ab"], 2).unwrap();
        assert_eq!(m.ngram_counts.len(), 3);
        assert_eq!(m.ngram_counts["a"], 1);
        assert_eq!(m.ngram_counts["b"], 1);
        assert_eq!(m.ngram_counts["ab"], 1);
        assert_eq!(m.forward_tf["a"][&'b'], 1);
        assert_eq!(m.backward_tf["b"][&'a'], 1);

        let m = train_tf_model(&["aa"], 3).unwrap();
        assert_eq!(m.ngram_counts.len(), 2);
        assert_eq!((m.ngram_counts["a"], m.ngram_counts["aa"]), (2, 1));

        let m = train_tf_model(&[""], 4).unwrap();
        assert!(m.ngram_counts.is_empty() && m.forward_tf.is_empty());
        assert!(train_tf_model(&["ab"], 0).is_err());
    }

    #[test]
    fn keys_are_counted_ngrams() {
        let m = train_tf_model(&["setget", "putset", "abcab"], 3).unwrap();
        for k in m.forward_tf.keys().chain(m.backward_tf.keys()) {
            assert!(m.ngram_counts[k] >= 1);
        }
    }

    fn pairwise_corpus() -> Vec<String> {
        let words = ["set", "get", "put"];
        let mut c = Vec::new();
        for i in 0..50 {
            c.push(format!("{}{}", words[i % 3], words[(i / 3 + i) % 3]));
        }
        c
    }

    #[test]
    fn setget_boundary() {
        let m = train_tf_model(&pairwise_corpus(), 3).unwrap();
        // "set" is followed by g/p/s in the corpus while "se" is only followed by t
        assert!(m.forward_tf["set"].len() >= 2);
        assert_eq!(m.forward_tf["se"].len(), 1);
        assert!(tf_tokenize(&m, "setget").contains(&3));
    }

    #[test]
    fn degenerate_inputs() {
        let m = train_tf_model(&pairwise_corpus(), 3).unwrap();
        assert!(tf_tokenize(&m, "s").is_empty());
        assert!(tf_tokenize(&m, "").is_empty());
        assert!(tf_tokenize(&m, "zzzzqq").is_empty());
    }
}
