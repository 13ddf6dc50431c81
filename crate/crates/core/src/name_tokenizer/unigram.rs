//! Unigram label model with forward maximum matching.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default)]
pub struct UnigramModel {
    pub label_probs: BTreeMap<String, f64>,
    pub max_label_len: usize,
}

/// Add-one smoothed label frequencies over the observed vocabulary.
pub fn train_unigram<S: AsRef<str>>(corpus: &[Vec<S>]) -> Result<UnigramModel> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for name in corpus {
        for label in name {
            let l = label.as_ref().to_ascii_lowercase();
            if !l.is_empty() {
                *counts.entry(l).or_default() += 1;
            }
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty("unigram corpus has no labels".into()));
    }
    let total: u64 = counts.values().sum();
    let denom = (total + counts.len() as u64) as f64;
    let max_label_len = counts.keys().map(|k| k.chars().count()).max().unwrap_or(0);
    let label_probs = counts.into_iter().map(|(k, c)| (k, (c + 1) as f64 / denom)).collect();
    Ok(UnigramModel { label_probs, max_label_len })
}

/// Greedy left-to-right longest-prefix segmentation; unknown characters
/// become single-character chunks.
pub fn unigram_tokenize(model: &UnigramModel, name: &str) -> BTreeSet<usize> {
    let chars: Vec<char> = name.chars().collect();
    let mut cuts = BTreeSet::new();
    let mut cur = 0;
    let mut buf = String::new();
    while cur < chars.len() {
        let mut step = 1;
        for len in (1..=model.max_label_len.min(chars.len() - cur)).rev() {
            buf.clear();
            buf.extend(&chars[cur..cur + len]);
            if model.label_probs.contains_key(&buf) {
                step = len;
                break;
            }
        }
        cur += step;
        if cur < chars.len() {
            cuts.insert(cur);
        }
    }
    cuts
}
