//! Smith-Waterman local alignment on label characters.

use crate::error::{Error, Result};

const MATCH: i64 = 1;
const MISMATCH: i64 = -1;
const GAP: i64 = -1;

/// Best local alignment score with linear gaps.
pub fn sw_score(a: &str, b: &str) -> i64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev = vec![0i64; b.len() + 1];
    let mut cur = vec![0i64; b.len() + 1];
    let mut best = 0;
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let s = if a[i - 1] == b[j - 1] { MATCH } else { MISMATCH };
            cur[j] = 0.max(prev[j - 1] + s).max(prev[j] + GAP).max(cur[j - 1] + GAP);
            best = best.max(cur[j]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// Local alignment score divided by the shorter length.
pub fn sw_relative_similarity(a: &str, b: &str) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("relative similarity of an empty string"));
    }
    let min = a.chars().count().min(b.chars().count());
    Ok(sw_score(a, b) as f64 / min as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn examples() {
        assert_eq!(sw_relative_similarity("set", "set").unwrap(), 1.0);
        assert_eq!(sw_relative_similarity("abc", "xyz").unwrap(), 0.0);
        assert_eq!(sw_relative_similarity("color", "colour").unwrap(), 0.8);
        assert_eq!(sw_relative_similarity("init", "initialize").unwrap(), 1.0);
        assert!(sw_relative_similarity("cfg", "config").unwrap() < 2.0 / 3.0);
        assert!(sw_relative_similarity("", "x").is_err());
    }

    #[test]
    fn one_iff_substring() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let mk = |rng: &mut ChaCha8Rng| -> String {
                let n = rng.random_range(1..6);
                (0..n).map(|_| ['a', 'b', 'c'][rng.random_range(0..3)]).collect()
            };
            let (a, b) = (mk(&mut rng), mk(&mut rng));
            let r = sw_relative_similarity(&a, &b).unwrap();
            assert_eq!(r, sw_relative_similarity(&b, &a).unwrap());
            assert_eq!(r == 1.0, a.contains(&b) || b.contains(&a), "{a} {b}");
        }
    }
}
