//! Source-grouped train/valid/test splits.
//!
//! Source groups are shuffled once with the seed; fold `f` takes its test
//! and validation groups from a window starting at `f * n / folds`, so test
//! partitions of different folds do not overlap when `n >= 2 * folds`.
//! Validation and test each get `round_half_down(n / 10)` groups (at least
//! one); train takes the rest.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::FunctionRecord;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DatasetSplit {
    pub fold_id: usize,
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn train_set(&self) -> BTreeSet<&str> {
        self.train.iter().map(String::as_str).collect()
    }
}

/// Groups held out for valid and test: `n / 10` rounded half down, min 1.
pub fn holdout_groups(n: usize) -> usize {
    // round half down of n/10 == ceil((n - 5) / 10) for n >= 5
    let t = if n >= 5 { (n - 5).div_ceil(10) } else { 0 };
    t.max(1)
}

pub fn split_by_source(records: &[FunctionRecord], folds: usize, seed: u64) -> Result<Vec<DatasetSplit>> {
    if folds == 0 {
        return Err(Error::invalid("folds must be >= 1"));
    }
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in records {
        groups.entry(r.source_id.as_str()).or_default().push(r.id.as_str());
    }
    let n = groups.len();
    if n < folds || n < 3 {
        return Err(Error::invalid(format!("{n} source groups is fewer than the {folds} folds required")));
    }
    let mut order: Vec<&str> = groups.keys().copied().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let hold = holdout_groups(n);
    let mut splits = Vec::with_capacity(folds);
    for fold in 0..folds {
        let start = fold * n / folds;
        let mut part = vec![0u8; n]; // 0 train, 1 valid, 2 test
        for i in 0..hold {
            part[(start + i) % n] = 2;
            part[(start + hold + i) % n] = 1;
        }
        let mut split = DatasetSplit { fold_id: fold, train: vec![], valid: vec![], test: vec![], seed };
        for (pos, src) in order.iter().enumerate() {
            let dest = match part[pos] {
                0 => &mut split.train,
                1 => &mut split.valid,
                _ => &mut split.test,
            };
            dest.extend(groups[src].iter().map(|s| s.to_string()));
        }
        splits.push(split);
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::record::{Arch, OptLevel};

    pub(crate) fn dataset(sources: usize, variants: usize) -> Vec<FunctionRecord> {
        let opts = [OptLevel::O0, OptLevel::O1, OptLevel::O2, OptLevel::O3, OptLevel::Os];
        let mut out = Vec::new();
        for s in 0..sources {
            for v in 0..variants {
                out.push(FunctionRecord {
                    id: format!("s{s}v{v}"),
                    name: format!("fn{s}"),
                    source_id: format!("src{s}"),
                    arch: Arch::X64,
                    opt: opts[v % opts.len()],
                    instructions: vec![],
                    edges: vec![],
                    defuse: None,
                });
            }
        }
        out
    }

    fn source_of(id: &str) -> String {
        id.split('v').next().unwrap().to_string()
    }

    #[test]
    fn variants_are_co_located() {
        let recs = dataset(10, 4);
        let splits = split_by_source(&recs, 5, 7).unwrap();
        assert_eq!(splits.len(), 5);
        for s in &splits {
            for part in [&s.train, &s.valid, &s.test] {
                let srcs: BTreeSet<_> = part.iter().map(|i| source_of(i)).collect();
                assert_eq!(part.len(), srcs.len() * 4);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let recs = dataset(30, 3);
        assert_eq!(split_by_source(&recs, 5, 11).unwrap(), split_by_source(&recs, 5, 11).unwrap());
        assert_ne!(split_by_source(&recs, 5, 11).unwrap(), split_by_source(&recs, 5, 12).unwrap());
    }

    #[test]
    fn hundred_sources_test_has_ten() {
        let recs = dataset(100, 1);
        for s in split_by_source(&recs, 5, 3).unwrap() {
            assert!((9..=11).contains(&s.test.len()), "{}", s.test.len());
            assert_eq!(s.train.len() + s.valid.len() + s.test.len(), 100);
        }
    }

    #[test]
    fn too_few_sources() {
        assert!(split_by_source(&dataset(4, 2), 5, 0).is_err());
    }

    #[test]
    fn holdout_rounds_half_down() {
        assert_eq!(holdout_groups(5), 1);
        assert_eq!(holdout_groups(14), 1);
        assert_eq!(holdout_groups(15), 1);
        assert_eq!(holdout_groups(16), 2);
        assert_eq!(holdout_groups(100), 10);
        assert_eq!(holdout_groups(105), 10);
        assert_eq!(holdout_groups(106), 11);
    }

    #[test]
    fn test_partitions_of_folds_are_disjoint() {
        let recs = dataset(50, 2);
        let splits = split_by_source(&recs, 5, 1).unwrap();
        let mut seen = BTreeSet::new();
        for s in &splits {
            for id in &s.test {
                assert!(seen.insert(id.clone()));
            }
        }
    }
}
