//! Function-name label vocabulary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NameVocabulary {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
    counts: Vec<u64>,
    /// Ids of the records the vocabulary was built from.
    pub built_from: BTreeSet<String>,
}

impl NameVocabulary {
    /// From `(record id, labels)` pairs; labels sorted by descending count,
    /// then alphabetically.
    pub fn build<'a, I>(records: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a [String])>,
    {
        let mut counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut built_from = BTreeSet::new();
        for (id, labels) in records {
            built_from.insert(id.to_string());
            for l in labels {
                *counts.entry(l.clone()).or_default() += 1;
            }
        }
        let mut sorted: Vec<(String, u64)> = counts.into_iter().filter(|(l, _)| !SPECIALS.contains(&l.as_str())).collect();
        sorted.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut v = NameVocabulary { built_from, ..Default::default() };
        for s in SPECIALS {
            v.push(s.to_string(), 0);
        }
        for (l, c) in sorted {
            v.push(l, c);
        }
        v
    }

    fn push(&mut self, label: String, count: u64) {
        self.index.insert(label.clone(), self.labels.len());
        self.labels.push(label);
        self.counts.push(count);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.get(label).is_some_and(|&i| i >= SPECIALS.len())
    }

    pub fn id(&self, label: &str) -> usize {
        self.index.get(label).copied().unwrap_or(UNK)
    }

    pub fn label(&self, id: usize) -> &str {
        &self.labels[id]
    }

    pub fn count(&self, id: usize) -> u64 {
        self.counts[id]
    }

    pub fn encode(&self, labels: &[String]) -> Vec<usize> {
        labels.iter().map(|l| self.id(l)).collect()
    }

    /// Non-special labels.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels[SPECIALS.len()..].iter().map(String::as_str)
    }

    /// Fails if any id outside `allowed` contributed labels.
    pub fn assert_built_from(&self, allowed: &BTreeSet<&str>) -> Result<()> {
        if let Some(bad) = self.built_from.iter().find(|id| !allowed.contains(id.as_str())) {
            return Err(Error::Leakage(format!("name vocabulary built from non-training record `{bad}`")));
        }
        Ok(())
    }

    /// TSV `label<TAB>id<TAB>count`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (i, (l, c)) in self.labels.iter().zip(&self.counts).enumerate() {
            s.push_str(&format!("{l}\t{i}\t{c}\n"));
        }
        s
    }

    pub fn from_tsv(text: &str, origin: &Path) -> Result<Self> {
        let mut v = NameVocabulary::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = |field: &str, message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                field: field.into(),
                message,
            };
            if cols.len() != 3 {
                return Err(bad("label", format!("expected 3 columns, found {}", cols.len())));
            }
            let id: usize = cols[1].parse().map_err(|_| bad("id", format!("`{}` is not an id", cols[1])))?;
            let count: u64 = cols[2].parse().map_err(|_| bad("count", format!("`{}` is not a count", cols[2])))?;
            if id != v.len() {
                return Err(bad("id", format!("expected id {}, found {id}", v.len())));
            }
            v.push(cols[0].to_string(), count);
        }
        if v.labels.len() < SPECIALS.len() || v.labels[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Checkpoint(format!("{}: vocabulary lacks the special labels", origin.display())));
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_and_roundtrip() {
        let a = vec!["get".to_string(), "size".to_string()];
        let b = vec!["get".to_string(), "name".to_string()];
        let v = NameVocabulary::build([("r1", a.as_slice()), ("r2", b.as_slice())]);
        assert_eq!(v.len(), 7);
        assert_eq!(v.id("get"), 4);
        assert_eq!(v.count(4), 2);
        assert_eq!(v.id("nope"), UNK);
        assert!(v.contains("name") && !v.contains("<eos>"));
        let back = NameVocabulary::from_tsv(&v.to_tsv(), Path::new("v")).unwrap();
        assert_eq!(back.labels, v.labels);
        assert!(v.assert_built_from(&["r1", "r2"].into()).is_ok());
        assert!(matches!(v.assert_built_from(&["r1"].into()), Err(Error::Leakage(_))));
    }
}
