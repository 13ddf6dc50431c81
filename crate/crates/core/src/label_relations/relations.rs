//! Relation classification and canonical label groups.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::embed::EmbeddingTable;
use super::stem::stem;
use super::sw::sw_relative_similarity;
use crate::error::{Error, Result};

pub const SYNONYM_THRESHOLD: f64 = 2.0 / 3.0;
pub const CANDIDATES_PER_TABLE: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Relation {
    Synonym,
    Abbreviation,
    Related,
    None,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Synonym => "synonym",
            Relation::Abbreviation => "abbreviation",
            Relation::Related => "related",
            Relation::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.trim() {
            "synonym" => Relation::Synonym,
            "abbreviation" => Relation::Abbreviation,
            "related" => Relation::Related,
            "none" => Relation::None,
            _ => return None,
        })
    }
}

/// Unordered label pairs from an external relation file.
#[derive(Clone, Debug, Default)]
pub struct ExternalRelations {
    pairs: BTreeMap<(String, String), Relation>,
}

fn key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

impl ExternalRelations {
    /// TSV `label_a<TAB>label_b<TAB>kind`.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = |field: &str, message: &str| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                field: field.into(),
                message: message.into(),
            };
            if cols.len() < 2 || cols[0].is_empty() || cols[1].is_empty() {
                return Err(bad("label_b", "expected two labels"));
            }
            let kind = match cols.get(2) {
                Some(k) => Relation::parse(k).ok_or_else(|| bad("kind", "unknown relation kind"))?,
                None => Relation::Related,
            };
            pairs.insert(key(cols[0], cols[1]), kind);
        }
        Ok(ExternalRelations { pairs })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        ExternalRelations { pairs: pairs.into_iter().map(|(a, b)| (key(a, b), Relation::Related)).collect() }
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.pairs.contains_key(&key(a, b))
    }
}

/// Manual review replacement: `allow|deny<TAB>a<TAB>b[<TAB>kind]`.
#[derive(Clone, Debug, Default)]
pub struct ReviewList {
    pub allow: BTreeMap<(String, String), Relation>,
    pub deny: BTreeSet<(String, String)>,
}

impl ReviewList {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut out = ReviewList::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = |message: &str| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                field: "action".into(),
                message: message.into(),
            };
            if cols.len() < 3 {
                return Err(bad("expected action and two labels"));
            }
            match cols[0] {
                "allow" => {
                    let kind = cols.get(3).and_then(|k| Relation::parse(k)).unwrap_or(Relation::Synonym);
                    out.allow.insert(key(cols[1], cols[2]), kind);
                }
                "deny" => {
                    out.deny.insert(key(cols[1], cols[2]));
                }
                _ => return Err(bad("action must be allow or deny")),
            }
        }
        Ok(out)
    }
}

/// One label is a proper prefix of the other.
pub fn is_abbreviation(t: &str, w: &str) -> bool {
    t != w && (t.starts_with(w) || w.starts_with(t))
}

pub fn classify_relation(t: &str, c: &str, external: Option<&ExternalRelations>) -> Relation {
    if t == c || t.is_empty() || c.is_empty() {
        return Relation::None;
    }
    if sw_relative_similarity(t, c).expect("non-empty") >= SYNONYM_THRESHOLD {
        Relation::Synonym
    } else if is_abbreviation(t, c) {
        Relation::Abbreviation
    } else if external.is_some_and(|e| e.contains(t, c)) {
        Relation::Related
    } else {
        Relation::None
    }
}

/// Top cosine neighbors of `label` from each table, concatenated.
pub fn candidate_set(label: &str, sg: &EmbeddingTable, sw: &EmbeddingTable) -> Result<Vec<String>> {
    let v = sg.get(label).ok_or_else(|| Error::UnknownLabel(label.to_string()))?;
    let mut out: Vec<String> = sg.nearest(v, CANDIDATES_PER_TABLE, label).into_iter().map(|(l, _)| l).collect();
    let w = sw.query(label).expect("subword tables answer every query");
    out.extend(sw.nearest(&w, CANDIDATES_PER_TABLE, label).into_iter().map(|(l, _)| l));
    Ok(out)
}

/// Kind column marking a label-to-canonical mapping row.
pub const CANONICAL_KIND: &str = "canonical";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RelationLexicon {
    pub canonical: BTreeMap<String, String>,
    pub relations: Vec<(String, String, Relation)>,
}

impl RelationLexicon {
    pub fn canonical_of<'a>(&'a self, label: &'a str) -> &'a str {
        self.canonical.get(label).map(String::as_str).unwrap_or(label)
    }

    pub fn canonicalize(&self, labels: &[String]) -> Vec<String> {
        labels.iter().map(|l| self.canonical_of(l).to_string()).collect()
    }

    /// `label<TAB>canonical<TAB>canonical` lines for the mapping, then
    /// `a<TAB>b<TAB>kind` for every classified pair.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (l, c) in &self.canonical {
            s.push_str(&format!("{l}\t{c}\t{CANONICAL_KIND}\n"));
        }
        for (a, b, k) in &self.relations {
            s.push_str(&format!("{a}\t{b}\t{}\n", k.as_str()));
        }
        s
    }

    pub fn from_tsv(text: &str, origin: &Path) -> Result<Self> {
        let mut lex = RelationLexicon::default();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let bad = |message: &str| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                field: "kind".into(),
                message: message.into(),
            };
            let [a, b, kind] = cols.as_slice() else {
                return Err(bad("expected label_a, label_b and kind"));
            };
            if *kind == CANONICAL_KIND {
                lex.canonical.insert(a.to_string(), b.to_string());
            } else {
                let k = Relation::parse(kind).ok_or_else(|| bad("unknown relation kind"))?;
                lex.relations.push((a.to_string(), b.to_string(), k));
            }
        }
        Ok(lex)
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut y = x;
        while self.parent[y] != r {
            let next = self.parent[y];
            self.parent[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Groups labels by stem and by accepted synonym/abbreviation pairs.
///
/// `tables` supplies candidates; without tables only stemming and the
/// review list's allowed pairs connect labels. A group containing an
/// abbreviation edge is named by its longest member, any other group by its
/// shortest (ties to the lexicographically smaller).
pub fn build_relation_groups(
    vocab: &[String],
    tables: Option<(&EmbeddingTable, &EmbeddingTable)>,
    external: Option<&ExternalRelations>,
    review: Option<&ReviewList>,
) -> Result<RelationLexicon> {
    let labels: Vec<String> = vocab.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut uf = UnionFind { parent: (0..labels.len()).collect() };

    let mut by_stem: BTreeMap<String, usize> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        let first = *by_stem.entry(stem(l)).or_insert(i);
        uf.union(first, i);
    }

    let mut pairs: BTreeMap<(String, String), Relation> = BTreeMap::new();
    if let Some((sg, sw)) = tables {
        for t in &labels {
            if sg.get(t).is_none() {
                continue;
            }
            for c in candidate_set(t, sg, sw)? {
                if !index.contains_key(c.as_str()) {
                    continue;
                }
                let rel = classify_relation(t, &c, external);
                if rel != Relation::None {
                    let k = key(t, &c);
                    let e = pairs.entry(k).or_insert(rel);
                    *e = (*e).min(rel);
                }
            }
        }
    }
    if let Some(r) = review {
        for k in &r.deny {
            pairs.remove(k);
        }
        for (k, &rel) in &r.allow {
            if index.contains_key(k.0.as_str()) && index.contains_key(k.1.as_str()) {
                pairs.insert(k.clone(), rel);
            }
        }
    }

    let mut abbreviated = BTreeSet::new();
    for ((a, b), rel) in &pairs {
        if matches!(rel, Relation::Synonym | Relation::Abbreviation) {
            uf.union(index[a.as_str()], index[b.as_str()]);
        }
    }
    for ((a, _), rel) in &pairs {
        if *rel == Relation::Abbreviation {
            abbreviated.insert(uf.find(index[a.as_str()]));
        }
    }

    let mut groups: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(uf.find(i)).or_default().push(l);
    }
    let mut canonical = BTreeMap::new();
    for (root, members) in &groups {
        let name = if abbreviated.contains(root) {
            members.iter().max_by(|a, b| a.len().cmp(&b.len()).then_with(|| b.cmp(a)))
        } else {
            members.iter().min_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)))
        }
        .expect("groups are non-empty");
        for m in members {
            canonical.insert(m.to_string(), name.to_string());
        }
    }
    let relations = pairs.into_iter().map(|((a, b), r)| (a, b, r)).collect();
    Ok(RelationLexicon { canonical, relations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn prefix_rule() {
        assert!(!is_abbreviation("msg", "message"));
        assert!(is_abbreviation("mess", "message"));
        assert!(is_abbreviation("get", "getter"));
        assert!(!is_abbreviation("get", "set"));
    }

    #[test]
    fn classification_branches() {
        assert_eq!(classify_relation("color", "colour", None), Relation::Synonym);
        assert_eq!(classify_relation("init", "initialize", None), Relation::Synonym);
        assert_eq!(classify_relation("cfg", "config", None), Relation::None);
        let ext = ExternalRelations::from_pairs([("remove", "delete")]);
        assert_eq!(classify_relation("remove", "delete", Some(&ext)), Relation::Related);
        assert_eq!(classify_relation("delete", "remove", Some(&ext)), Relation::Related);
        // a proper prefix is a fully matched substring, so the similarity test claims it first
        assert_eq!(classify_relation("ab", "abxyz", None), Relation::Synonym);
    }

    #[test]
    fn stems_unify() {
        let lex = build_relation_groups(&strings(&["effects", "effect", "set"]), None, None, None).unwrap();
        assert_eq!(lex.canonical["effects"], "effect");
        assert_eq!(lex.canonical["set"], "set");
        assert!(build_relation_groups(&[], None, None, None).unwrap().canonical.is_empty());
    }

    #[test]
    fn abbreviation_groups_expand() {
        let mut review = ReviewList::default();
        review.allow.insert(key("init", "initialize"), Relation::Abbreviation);
        let lex = build_relation_groups(&strings(&["init", "initialize", "open"]), None, None, Some(&review)).unwrap();
        assert_eq!(lex.canonical["init"], "initialize");
        assert_eq!(lex.canonical["initialize"], "initialize");
        for c in lex.canonical.values() {
            assert_eq!(lex.canonical[c], *c);
        }
    }

    #[test]
    fn tsv_roundtrip() {
        let lex = RelationLexicon {
            canonical: [("a".to_string(), "b".to_string()), ("b".to_string(), "b".to_string())].into(),
            relations: vec![("a".into(), "b".into(), Relation::Synonym)],
        };
        assert_eq!(RelationLexicon::from_tsv(&lex.to_tsv(), Path::new("x")).unwrap(), lex);
    }
}
