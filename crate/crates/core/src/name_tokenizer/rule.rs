//! Rule-based segmentation: the longest combination of known words.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use super::lexicon::RuleLexicon;

#[derive(Clone, Debug, PartialEq, Eq)]
struct Best {
    covered: usize,
    segments: usize,
    /// Absolute cut positions, ascending.
    cuts: Vec<usize>,
}

/// `Greater` means `a` is the better segmentation.
fn better(a: &Best, b: &Best) -> Ordering {
    a.covered.cmp(&b.covered).then(b.segments.cmp(&a.segments)).then(b.cuts.cmp(&a.cuts))
}

/// Segments maximizing covered length, then using the fewest segments, then
/// with the lexicographically smallest cut list. Characters not covered by
/// a lexicon entry become single-character segments.
pub fn rule_tokenize(lexicon: &RuleLexicon, name: &str) -> BTreeSet<usize> {
    let chars: Vec<char> = name.chars().collect();
    let n = chars.len();
    if n == 0 {
        return BTreeSet::new();
    }
    let max_len = lexicon.max_entry_len().max(1);
    // best[i] is the optimum for the suffix starting at i
    let mut best: Vec<Option<Best>> = vec![None; n + 1];
    best[n] = Some(Best { covered: 0, segments: 0, cuts: vec![] });
    let mut buf = String::new();
    for i in (0..n).rev() {
        let mut cur: Option<Best> = None;
        for len in 1..=max_len.min(n - i) {
            buf.clear();
            buf.extend(&chars[i..i + len]);
            let known = lexicon.contains(&buf);
            if !known && len > 1 {
                continue;
            }
            let rest = best[i + len].as_ref().expect("suffix solved");
            let mut cuts = Vec::with_capacity(rest.cuts.len() + 1);
            if i + len < n {
                cuts.push(i + len);
            }
            cuts.extend_from_slice(&rest.cuts);
            let cand = Best {
                covered: rest.covered + if known { len } else { 0 },
                segments: rest.segments + 1,
                cuts,
            };
            if cur.as_ref().is_none_or(|c| better(&cand, c) == Ordering::Greater) {
                cur = Some(cand);
            }
        }
        best[i] = cur;
    }
    best[0].take().expect("solved").cuts.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Enumerates every segmentation and ranks them directly.
    fn oracle(lex: &RuleLexicon, name: &str) -> BTreeSet<usize> {
        let chars: Vec<char> = name.chars().collect();
        let n = chars.len();
        let mut best: Option<(usize, usize, Vec<usize>)> = None;
        for mask in 0u32..(1 << (n - 1)) {
            let cuts: Vec<usize> = (1..n).filter(|p| mask & (1 << (p - 1)) != 0).collect();
            let mut bounds = vec![0];
            bounds.extend(&cuts);
            bounds.push(n);
            let mut covered = 0;
            let mut ok = true;
            for w in bounds.windows(2) {
                let seg: String = chars[w[0]..w[1]].iter().collect();
                if lex.contains(&seg) {
                    covered += seg.len();
                } else if seg.len() > 1 {
                    ok = false;
                    break;
                }
            }
            if !ok {
                continue;
            }
            let segs = cuts.len() + 1;
            let take = match &best {
                None => true,
                Some((c, s, k)) => (covered, std::cmp::Reverse(segs), std::cmp::Reverse(&cuts)) > (*c, std::cmp::Reverse(*s), std::cmp::Reverse(k)),
            };
            if take {
                best = Some((covered, segs, cuts));
            }
        }
        best.unwrap().2.into_iter().collect()
    }

    fn lex(words: &[&str]) -> RuleLexicon {
        RuleLexicon::from_words(words.iter().copied())
    }

    #[test]
    fn timeset_prefers_full_coverage() {
        let l = lex(&["time", "times", "set"]);
        assert_eq!(rule_tokenize(&l, "timeset"), BTreeSet::from([4]));
        assert_eq!(rule_tokenize(&lex(&["resolve", "builtin", "built", "in"]), "resolvebuiltin"), BTreeSet::from([7]));
        assert!(rule_tokenize(&l, "times").is_empty());
        assert!(rule_tokenize(&l, "").is_empty());
        assert_eq!(rule_tokenize(&l, "xy"), BTreeSet::from([1]));
    }

    #[test]
    fn matches_exhaustive_oracle() {
        let words = [
            "a", "ab", "abc", "b", "ba", "bca", "c", "cab", "ca", "abca", "bb", "cc", "acb", "bac", "aa", "cba", "bcb",
            "ac", "ccab", "abab",
        ];
        let l = lex(&words);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let len = rng.random_range(1..=12);
            let name: String = (0..len).map(|_| ['a', 'b', 'c', 'd'][rng.random_range(0..4)]).collect();
            assert_eq!(rule_tokenize(&l, &name), oracle(&l, &name), "{name}");
        }
    }
}
