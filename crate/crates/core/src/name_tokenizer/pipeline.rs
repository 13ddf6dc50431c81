//! The full tokenizer: convention split, per-segment ensemble and vote.

use std::collections::BTreeSet;
use std::path::Path;

use super::convention::split_by_convention;
use super::lexicon::{expand_abbreviations, RuleLexicon};
use super::rule::rule_tokenize;
use super::tf::{tf_tokenize, train_tf_model, TfModel};
use super::unigram::{train_unigram, unigram_tokenize, UnigramModel};
use super::vote::{resolve_overlaps, vote_parts, Cuts};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::label_relations::stem;

pub(crate) const BUNDLED_CORPUS: &str = include_str!("../../data/corpus.txt");

pub const DEFAULT_MAX_N: usize = 5;

/// Segments at most this long, or already known, skip the ensemble.
const SUSPECT_MIN_LEN: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizationResult {
    pub name: String,
    pub boundaries_tf: Cuts,
    pub boundaries_unigram: Cuts,
    pub boundaries_rule: Cuts,
    pub final_boundaries: Cuts,
    pub labels: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct Pipeline {
    pub tf: TfModel,
    pub unigram: UnigramModel,
    pub lexicon: RuleLexicon,
}

pub fn bundled_corpus() -> Vec<Vec<String>> {
    parse_corpus(BUNDLED_CORPUS)
}

/// One whitespace-separated name per line; blank lines skipped.
pub fn parse_corpus(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(|w| w.to_ascii_lowercase()).collect::<Vec<_>>())
        .filter(|v| !v.is_empty())
        .collect()
}

pub fn read_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_corpus(&text))
}

impl Pipeline {
    pub fn train(corpus: &[Vec<String>], lexicon: RuleLexicon, max_n: usize) -> Result<Self> {
        let joined: Vec<String> = corpus.iter().map(|n| n.concat()).collect();
        Ok(Pipeline { tf: train_tf_model(&joined, max_n)?, unigram: train_unigram(corpus)?, lexicon })
    }

    /// Models trained on the corpus and lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::train(&parse_corpus(BUNDLED_CORPUS), RuleLexicon::bundled(), DEFAULT_MAX_N).expect("bundled corpus trains")
    }

    pub fn from_files(corpus: &Path, lexicon: &Path) -> Result<Self> {
        Self::train(&read_corpus(corpus)?, RuleLexicon::load(lexicon)?, DEFAULT_MAX_N)
    }

    /// Either file may be omitted in favour of the bundled one.
    pub fn from_optional_files(corpus: Option<&Path>, lexicon: Option<&Path>) -> Result<Self> {
        let corpus = match corpus {
            Some(p) => read_corpus(p)?,
            None => bundled_corpus(),
        };
        let lexicon = match lexicon {
            Some(p) => RuleLexicon::load(p)?,
            None => RuleLexicon::bundled(),
        };
        Self::train(&corpus, lexicon, DEFAULT_MAX_N)
    }

    fn is_suspect(&self, seg: &str) -> bool {
        seg.chars().count() >= SUSPECT_MIN_LEN
            && !self.lexicon.contains(seg)
            && !seg.bytes().all(|b| b.is_ascii_digit())
    }

    pub fn tokenize_name(&self, name: &str) -> Result<TokenizationResult> {
        let segments = split_by_convention(name);
        if segments.is_empty() {
            return Err(Error::Empty(format!("name `{name}` has no alphanumeric characters")));
        }
        let stripped: String = segments.concat();
        let mut convention = Cuts::new();
        let mut off = 0;
        let (mut b_tf, mut b_uni, mut b_rule, mut fin) = (Cuts::new(), Cuts::new(), Cuts::new(), Cuts::new());
        for seg in &segments {
            if off > 0 {
                convention.insert(off);
            }
            if self.is_suspect(seg) {
                let t = tf_tokenize(&self.tf, seg);
                let u = unigram_tokenize(&self.unigram, seg);
                let r = rule_tokenize(&self.lexicon, seg);
                let (majority, pending) = vote_parts(&t, &u, &r);
                let merged: Cuts = majority.union(pending).copied().collect();
                let voted = resolve_overlaps(seg, &merged, &majority, &self.lexicon);
                let shift = |s: &Cuts| s.iter().map(|p| p + off).collect::<BTreeSet<_>>();
                b_tf.extend(shift(&t));
                b_uni.extend(shift(&u));
                b_rule.extend(shift(&r));
                fin.extend(shift(&voted));
            }
            off += seg.len();
        }
        for set in [&mut b_tf, &mut b_uni, &mut b_rule, &mut fin] {
            set.extend(&convention);
        }
        let labels = cut_at(&stripped, &fin);
        Ok(TokenizationResult {
            name: name.to_string(),
            boundaries_tf: b_tf,
            boundaries_unigram: b_uni,
            boundaries_rule: b_rule,
            final_boundaries: fin,
            labels,
        })
    }

    /// Tokenized, abbreviation-expanded and stemmed labels.
    pub fn preprocess(&self, name: &str) -> Result<Vec<String>> {
        let r = self.tokenize_name(name)?;
        Ok(expand_abbreviations(&r.labels, &self.lexicon).iter().map(|l| stem(l)).collect())
    }

    pub fn tokenize_batch(&self, names: &[String], exec: Exec) -> Vec<Result<TokenizationResult>> {
        exec.map(names, |n| self.tokenize_name(n))
    }
}

fn cut_at(s: &str, cuts: &Cuts) -> Vec<String> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::with_capacity(cuts.len() + 1);
    let mut prev = 0;
    for &c in cuts.iter().chain(std::iter::once(&chars.len())) {
        if c > prev {
            out.push(chars[prev..c].iter().collect());
            prev = c;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn bundled() -> &'static Pipeline {
        static P: OnceLock<Pipeline> = OnceLock::new();
        P.get_or_init(Pipeline::bundled)
    }

    fn labels(name: &str) -> Vec<String> {
        bundled().tokenize_name(name).unwrap().labels
    }

    #[test]
    fn mixed_style_names() {
        assert_eq!(labels("zipfileNext"), ["zip", "file", "next"]);
        assert_eq!(labels("typenameTypeMod"), ["type", "name", "type", "mod"]);
        assert_eq!(labels("atexit"), ["at", "exit"]);
        assert_eq!(labels("getTableSize"), ["get", "table", "size"]);
    }

    #[test]
    fn labels_rebuild_stripped_name() {
        for name in ["test nofork sideeffects", "x2realloc", "__scanpmwidgets", "HTTPServerInit", "nomoreargs"] {
            let r = bundled().tokenize_name(name).unwrap();
            assert_eq!(r.labels.concat(), split_by_convention(name).concat());
            assert!(r.labels.iter().all(|l| !l.is_empty()));
        }
    }

    #[test]
    fn empty_name_is_an_error() {
        assert!(bundled().tokenize_name("").is_err());
        assert!(bundled().tokenize_name("__").is_err());
    }

    #[test]
    fn preprocess_expands_and_stems() {
        assert_eq!(bundled().preprocess("msgSend").unwrap(), ["message", "send"]);
        assert_eq!(bundled().preprocess("scanpmwidgets").unwrap(), ["scan", "pm", "widget"]);
    }

    #[test]
    fn batch_matches_single() {
        let names: Vec<String> = ["getTableSize", "zipfileNext", "", "atexit"].iter().map(|s| s.to_string()).collect();
        let serial = bundled().tokenize_batch(&names, Exec::Serial);
        let parallel = bundled().tokenize_batch(&names, Exec::Parallel);
        assert_eq!(format!("{serial:?}"), format!("{parallel:?}"));
    }
}
