//! Word list and abbreviation table for the rule-based tokenizer.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleLexicon {
    pub words: BTreeSet<String>,
    /// Short form → full form.
    pub abbreviations: BTreeMap<String, String>,
}

impl RuleLexicon {
    /// Parses `word` or `abbrev<TAB>expansion` lines; `#` starts a comment line.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lex = RuleLexicon::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let word = cols.next().unwrap_or("").trim().to_ascii_lowercase();
            let perr = |field: &str, message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                field: field.into(),
                message,
            };
            if word.is_empty() {
                return Err(perr("word", "empty entry".into()));
            }
            match cols.next() {
                None => {
                    lex.words.insert(word);
                }
                Some(exp) => {
                    let exp = exp.trim().to_ascii_lowercase();
                    if exp.len() < word.len() {
                        return Err(perr("expansion", format!("`{exp}` is shorter than `{word}`")));
                    }
                    lex.abbreviations.insert(word, exp);
                }
            }
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON, Path::new("<bundled lexicon>")).expect("bundled lexicon parses")
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Self {
        RuleLexicon { words: words.into_iter().map(Into::into).collect(), abbreviations: BTreeMap::new() }
    }

    /// Known as a word or as an abbreviation.
    pub fn contains(&self, s: &str) -> bool {
        self.words.contains(s) || self.abbreviations.contains_key(s)
    }

    pub fn max_entry_len(&self) -> usize {
        self.words.iter().chain(self.abbreviations.keys()).map(|w| w.chars().count()).max().unwrap_or(0)
    }
}

pub fn expand_abbreviations(labels: &[String], lexicon: &RuleLexicon) -> Vec<String> {
    labels.iter().map(|l| lexicon.abbreviations.get(l).cloned().unwrap_or_else(|| l.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn expansion() {
        let lex = RuleLexicon::bundled();
        assert_eq!(expand_abbreviations(&strings(&["msg", "send"]), &lex), ["message", "send"]);
        assert_eq!(expand_abbreviations(&strings(&["lst"]), &lex), ["list"]);
        assert_eq!(expand_abbreviations(&strings(&["hello"]), &lex), ["hello"]);
    }

    #[test]
    fn bundled_invariants() {
        let lex = RuleLexicon::bundled();
        assert!(lex.words.len() > 300);
        for (k, v) in &lex.abbreviations {
            assert!(!k.is_empty() && k.len() <= v.len(), "{k} -> {v}");
        }
        for w in ["time", "set", "resolve", "builtin", "type", "name", "zip", "file", "next", "at", "exit"] {
            assert!(lex.words.contains(w), "{w}");
        }
    }

    #[test]
    fn parse_errors() {
        let p = Path::new("x.tsv");
        assert!(RuleLexicon::parse("message\tmsg\n", p).is_err());
        let lex = RuleLexicon::parse("# c\nfoo\n\nmsg\tmessage\n", p).unwrap();
        assert!(lex.contains("foo") && lex.contains("msg"));
    }
}
