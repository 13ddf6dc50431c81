//! Anchor/positive/negative sampling for the similarity objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::FunctionRecord;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainTriplet {
    pub anchor_id: String,
    pub positive_id: String,
    pub negative_id: String,
}

/// Indices into the record slice it was built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TripletIdx {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Clone, Debug)]
pub struct TripletSampler {
    anchors: Vec<usize>,
    positives: Vec<Vec<usize>>,
    negatives: Vec<Vec<usize>>,
}

impl TripletSampler {
    /// `names[i]` is the preprocessed name of `records[i]`. Anchors without
    /// an eligible positive or negative are skipped.
    pub fn new(records: &[FunctionRecord], names: &[Vec<String>]) -> Result<Self> {
        if records.len() != names.len() {
            return Err(Error::invalid("one name per record required"));
        }
        let n = records.len();
        let mut s = TripletSampler { anchors: vec![], positives: vec![vec![]; n], negatives: vec![vec![]; n] };
        for (i, x) in records.iter().enumerate() {
            for (j, y) in records.iter().enumerate() {
                if i == j {
                    continue;
                }
                if y.source_id == x.source_id && y.opt != x.opt {
                    s.positives[i].push(j);
                }
                if names[j] != names[i] {
                    s.negatives[i].push(j);
                }
            }
            if !s.positives[i].is_empty() && !s.negatives[i].is_empty() {
                s.anchors.push(i);
            }
        }
        if s.anchors.is_empty() {
            return Err(Error::invalid("no anchor has both a positive and a differently named negative"));
        }
        Ok(s)
    }

    pub fn anchor_count(&self) -> usize {
        self.anchors.len()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> TripletIdx {
        let anchor = self.anchors[rng.random_range(0..self.anchors.len())];
        let ps = &self.positives[anchor];
        let ns = &self.negatives[anchor];
        TripletIdx { anchor, positive: ps[rng.random_range(0..ps.len())], negative: ns[rng.random_range(0..ns.len())] }
    }
}

pub fn sample_triplet(records: &[FunctionRecord], names: &[Vec<String>], seed: u64) -> Result<TrainTriplet> {
    let t = TripletSampler::new(records, names)?.sample(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(TrainTriplet {
        anchor_id: records[t.anchor].id.clone(),
        positive_id: records[t.positive].id.clone(),
        negative_id: records[t.negative].id.clone(),
    })
}
