//! Word-level precision/recall/F1, OOV ratio and label-distribution KL.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KL_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl std::ops::AddAssign for EvalCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Counts with both lists deduplicated first.
pub fn word_level_counts<S: AsRef<str>>(pred: &[S], truth: &[S]) -> EvalCounts {
    let p: BTreeSet<&str> = pred.iter().map(AsRef::as_ref).collect();
    let t: BTreeSet<&str> = truth.iter().map(AsRef::as_ref).collect();
    let tp = p.intersection(&t).count() as u64;
    EvalCounts { tp, fp: p.len() as u64 - tp, fn_: t.len() as u64 - tp }
}

/// Indicator sums over the raw lists; repeated labels count every time.
pub fn word_level_counts_literal<S: AsRef<str>>(pred: &[S], truth: &[S]) -> EvalCounts {
    let p: BTreeSet<&str> = pred.iter().map(AsRef::as_ref).collect();
    let t: BTreeSet<&str> = truth.iter().map(AsRef::as_ref).collect();
    let tp = pred.iter().filter(|y| t.contains(y.as_ref())).count() as u64;
    EvalCounts {
        tp,
        fp: pred.len() as u64 - tp,
        fn_: truth.iter().filter(|y| !p.contains(y.as_ref())).count() as u64,
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn prf(c: EvalCounts) -> Prf {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Prf { precision, recall, f1 }
}

pub fn weighted_macro(groups: &[(f64, Prf)]) -> Result<Prf> {
    if groups.iter().any(|(w, _)| *w < 0.0 || !w.is_finite()) {
        return Err(Error::invalid("weights must be finite and >= 0"));
    }
    let total: f64 = groups.iter().map(|(w, _)| w).sum();
    if total == 0.0 {
        return Err(Error::invalid("all group weights are zero"));
    }
    let avg = |f: fn(&Prf) -> f64| groups.iter().map(|(w, p)| w * f(p)).sum::<f64>() / total;
    Ok(Prf { precision: avg(|p| p.precision), recall: avg(|p| p.recall), f1: avg(|p| p.f1) })
}

/// Fraction of test label tokens missing from `vocab`.
pub fn oov_ratio<'a, I>(test_labels: I, vocab: &BTreeSet<String>) -> Result<f64>
where
    I: IntoIterator<Item = &'a str>,
{
    let (mut n, mut miss) = (0u64, 0u64);
    for l in test_labels {
        n += 1;
        if !vocab.contains(l) {
            miss += 1;
        }
    }
    if n == 0 {
        return Err(Error::Empty("no test labels".into()));
    }
    Ok(miss as f64 / n as f64)
}

/// Relative label frequencies.
pub fn label_distribution<'a, I>(labels: I) -> BTreeMap<String, f64>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: BTreeMap<String, f64> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.to_string()).or_default() += 1.0;
    }
    let total: f64 = counts.values().sum();
    counts.values_mut().for_each(|v| *v /= total);
    counts
}

/// `KL(p || q)` over the union support after adding `epsilon` to every
/// entry and renormalizing.
pub fn kl_divergence(p: &BTreeMap<String, f64>, q: &BTreeMap<String, f64>, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be > 0"));
    }
    let support: BTreeSet<&String> = p.keys().chain(q.keys()).collect();
    let smooth = |d: &BTreeMap<String, f64>| {
        let v: Vec<f64> = support.iter().map(|k| d.get(*k).copied().unwrap_or(0.0) + epsilon).collect();
        let z: f64 = v.iter().sum();
        v.into_iter().map(|x| x / z).collect::<Vec<_>>()
    };
    let (ps, qs) = (smooth(p), smooth(q));
    Ok(ps.iter().zip(&qs).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0))
}

/// One row of a label TSV: id, space-separated labels, extra columns.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelRow {
    pub id: String,
    pub labels: Vec<String>,
    pub fields: BTreeMap<String, String>,
}

/// Reads `id<TAB>labels[<TAB>...]`. A first line starting with `id` is a
/// header naming the extra columns.
pub fn read_label_tsv(path: &Path) -> Result<Vec<LabelRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_label_tsv(&text, path)
}

pub fn parse_label_tsv(text: &str, origin: &Path) -> Result<Vec<LabelRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let mut header: Vec<String> = vec!["id".into(), "labels".into()];
    if let Some((_, first)) = lines.peek() {
        if first.split('\t').next() == Some("id") {
            header = first.split('\t').map(str::to_string).collect();
            lines.next();
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols[0].is_empty() {
            return Err(Error::Parse { path: origin.into(), line: i + 1, field: "id".into(), message: "empty id".into() });
        }
        let labels = cols.get(1).map(|l| l.split_whitespace().map(str::to_string).collect()).unwrap_or_default();
        let fields = header.iter().zip(&cols).skip(2).map(|(h, c)| (h.clone(), c.to_string())).collect();
        rows.push(LabelRow { id: cols[0].to_string(), labels, fields });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub functions: usize,
    pub counts: EvalCounts,
    #[serde(flatten)]
    pub prf: Prf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub functions: usize,
    pub missing_predictions: usize,
    pub counts: EvalCounts,
    pub overall: Prf,
    pub groups: Vec<GroupReport>,
    pub weighted_macro: Prf,
    pub literal_counts: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oov_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_divergence: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions<'a> {
    pub group_by: Vec<String>,
    pub literal_counts: bool,
    pub train_vocab: Option<&'a BTreeSet<String>>,
    /// Labels of a reference dataset; KL is taken from the truth labels.
    pub kl_reference: Option<&'a [LabelRow]>,
}

/// Scores every truth row; a missing prediction counts as an empty one.
pub fn evaluate(pred: &[LabelRow], truth: &[LabelRow], opts: &EvalOptions) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(Error::Empty("no truth rows".into()));
    }
    let by_id: BTreeMap<&str, &LabelRow> = pred.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut groups: BTreeMap<String, (usize, EvalCounts)> = BTreeMap::new();
    let mut total = EvalCounts::default();
    let mut missing = 0;
    for t in truth {
        let p: &[String] = match by_id.get(t.id.as_str()) {
            Some(r) => &r.labels,
            None => {
                missing += 1;
                &[]
            }
        };
        let c = if opts.literal_counts { word_level_counts_literal(p, &t.labels) } else { word_level_counts(p, &t.labels) };
        total += c;
        let key = if opts.group_by.is_empty() {
            "all".to_string()
        } else {
            let mut parts = Vec::with_capacity(opts.group_by.len());
            for k in &opts.group_by {
                let v = t.fields.get(k).ok_or_else(|| Error::invalid(format!("truth row `{}` lacks column `{k}`", t.id)))?;
                parts.push(format!("{k}={v}"));
            }
            parts.join(",")
        };
        let g = groups.entry(key).or_default();
        g.0 += 1;
        g.1 += c;
    }
    let groups: Vec<GroupReport> =
        groups.into_iter().map(|(group, (functions, counts))| GroupReport { group, functions, counts, prf: prf(counts) }).collect();
    let weighted = weighted_macro(&groups.iter().map(|g| (g.functions as f64, g.prf)).collect::<Vec<_>>())?;
    let truth_labels = || truth.iter().flat_map(|r| r.labels.iter().map(String::as_str));
    let oov = opts.train_vocab.map(|v| oov_ratio(truth_labels(), v)).transpose()?;
    let kl = match opts.kl_reference {
        Some(reference) => {
            let p = label_distribution(truth_labels());
            let q = label_distribution(reference.iter().flat_map(|r| r.labels.iter().map(String::as_str)));
            Some(kl_divergence(&p, &q, KL_EPSILON)?)
        }
        None => None,
    };
    Ok(EvalReport {
        functions: truth.len(),
        missing_predictions: missing,
        counts: total,
        overall: prf(total),
        groups,
        weighted_macro: weighted,
        literal_counts: opts.literal_counts,
        oov_ratio: oov,
        kl_divergence: kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn attrs_find_is_half() {
        let c = word_level_counts(&["attrs", "find"], &["attrs", "match"]);
        assert_eq!(c, EvalCounts { tp: 1, fp: 1, fn_: 1 });
        assert_eq!(prf(c), Prf { precision: 0.5, recall: 0.5, f1: 0.5 });
        let c = word_level_counts(&["get", "size"], &["get", "size"]);
        assert_eq!(prf(c), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
    }

    #[test]
    fn exit_case_and_prf_arithmetic() {
        let c = word_level_counts(&["exit"], &["error", "exit", "warn"]);
        assert_eq!(c, EvalCounts { tp: 1, fp: 0, fn_: 2 });
        let p = prf(c);
        assert!(close(p.precision, 1.0) && close(p.recall, 1.0 / 3.0) && close(p.f1, 0.5));
        assert_eq!(prf(EvalCounts::default()), Prf::default());
        let p = prf(EvalCounts { tp: 3, fp: 1, fn_: 0 });
        assert!(close(p.precision, 0.75) && close(p.recall, 1.0) && close(p.f1, 6.0 / 7.0));
    }

    #[test]
    fn duplicates_count_once_unless_literal() {
        assert_eq!(word_level_counts(&["get", "get"], &["get"]), EvalCounts { tp: 1, fp: 0, fn_: 0 });
        assert_eq!(word_level_counts_literal(&["get", "get"], &["get"]), EvalCounts { tp: 2, fp: 0, fn_: 0 });
        assert_eq!(word_level_counts_literal(&["a"], &["b", "b"]), EvalCounts { tp: 0, fp: 1, fn_: 2 });
    }

    #[test]
    fn counts_ignore_order_and_f1_is_between() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let words = ["a", "b", "c", "d", "e"];
        for _ in 0..300 {
            let mut p: Vec<&str> = (0..rng.random_range(0..5)).map(|_| words[rng.random_range(0..5)]).collect();
            let mut t: Vec<&str> = (0..rng.random_range(0..5)).map(|_| words[rng.random_range(0..5)]).collect();
            let c = word_level_counts(&p, &t);
            p.reverse();
            t.reverse();
            assert_eq!(c, word_level_counts(&p, &t));
            let r = prf(c);
            if r.precision > 0.0 && r.recall > 0.0 {
                assert!(r.precision.min(r.recall) <= r.f1 + 1e-12 && r.f1 <= r.precision.max(r.recall) + 1e-12);
            }
        }
    }

    #[test]
    fn weighted_macro_cases() {
        let g = |f1| Prf { precision: f1, recall: f1, f1 };
        assert_eq!(weighted_macro(&[(2.0, g(0.3))]).unwrap(), g(0.3));
        assert!(close(weighted_macro(&[(1.0, g(0.4)), (1.0, g(0.6))]).unwrap().f1, 0.5));
        assert!(close(weighted_macro(&[(1.0, g(0.5)), (3.0, g(0.9))]).unwrap().f1, 0.8));
        assert!(weighted_macro(&[(0.0, g(0.5))]).is_err());
    }

    #[test]
    fn oov_cases() {
        let vocab: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        assert_eq!(oov_ratio(["a", "b"], &vocab).unwrap(), 0.0);
        assert_eq!(oov_ratio(["x", "y"], &vocab).unwrap(), 1.0);
        let test = ["a", "a", "b", "c", "x", "a", "b", "y", "c", "z", "a", "b"];
        assert_eq!(oov_ratio(test, &vocab).unwrap(), 0.25);
        assert!(oov_ratio([], &vocab).is_err());
    }

    fn dist(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn kl_cases() {
        let p = dist(&[("a", 1.0), ("b", 0.0)]);
        let q = dist(&[("a", 0.5), ("b", 0.5)]);
        assert_eq!(kl_divergence(&p, &p, KL_EPSILON).unwrap(), 0.0);
        let pq = kl_divergence(&p, &q, KL_EPSILON).unwrap();
        assert!((pq - 2f64.ln()).abs() < 1e-6);
        assert!((pq - kl_divergence(&q, &p, KL_EPSILON).unwrap()).abs() > 1e-3);
        assert!(kl_divergence(&p, &q, 0.0).is_err());
    }

    #[test]
    fn kl_nonnegative_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let keys = ["a", "b", "c", "d", "e", "f"];
        let rand_dist = |rng: &mut ChaCha8Rng| {
            let raw: Vec<f64> = keys.iter().map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() }).collect();
            let z: f64 = raw.iter().sum::<f64>().max(1e-12);
            keys.iter().zip(raw).map(|(k, v)| (k.to_string(), v / z)).collect::<BTreeMap<_, _>>()
        };
        for _ in 0..1000 {
            let (p, q) = (rand_dist(&mut rng), rand_dist(&mut rng));
            assert!(kl_divergence(&p, &q, KL_EPSILON).unwrap() >= 0.0);
            assert_eq!(kl_divergence(&p, &p, KL_EPSILON).unwrap(), 0.0);
        }
    }

    #[test]
    fn grouped_report() {
        let truth = parse_label_tsv(
            "id\tlabels\tarch\topt\nf1\tattrs match\tx64\tO0\nf2\tget size\tx64\tO2\nf3\tfree node\tarm\tO0\n",
            Path::new("t"),
        )
        .unwrap();
        let pred = parse_label_tsv("f1\tattrs find\nf2\tget size\n", Path::new("p")).unwrap();
        let r = evaluate(&pred, &truth, &EvalOptions { group_by: vec!["arch".into()], ..Default::default() }).unwrap();
        assert_eq!(r.missing_predictions, 1);
        assert_eq!(r.groups.len(), 2);
        assert_eq!(r.groups[0].group, "arch=arm");
        assert_eq!(r.groups[0].prf.f1, 0.0);
        assert!(close(r.groups[1].prf.f1, 0.75));
        assert!(close(r.weighted_macro.f1, 0.5));
        let bad = EvalOptions { group_by: vec!["compiler".into()], ..Default::default() };
        assert!(evaluate(&pred, &truth, &bad).is_err());
    }
}
