//! Combining the three boundary lists.

use std::collections::BTreeSet;

use super::lexicon::RuleLexicon;

pub type Cuts = BTreeSet<usize>;

/// Cuts proposed by at least two lists, plus every cut of the list agreeing
/// most with them. Ties prefer the rule list, then unigram, then TF.
pub fn vote(b_tf: &Cuts, b_uni: &Cuts, b_rule: &Cuts) -> Cuts {
    let (final_cuts, pending) = vote_parts(b_tf, b_uni, b_rule);
    final_cuts.union(pending).copied().collect()
}

/// `(final, pending)` before they are merged.
pub fn vote_parts<'a>(b_tf: &'a Cuts, b_uni: &'a Cuts, b_rule: &'a Cuts) -> (Cuts, &'a Cuts) {
    let all = [b_tf, b_uni, b_rule];
    let mut final_cuts = Cuts::new();
    for list in all {
        for &p in list {
            if all.iter().filter(|l| l.contains(&p)).count() >= 2 {
                final_cuts.insert(p);
            }
        }
    }
    let mut pending = b_rule;
    let mut best = b_rule.intersection(&final_cuts).count();
    for list in [b_uni, b_tf] {
        let k = list.intersection(&final_cuts).count();
        if k > best {
            best = k;
            pending = list;
        }
    }
    (final_cuts, pending)
}

/// Drops a pending-only cut that sits one position away from another cut
/// when removing it rejoins a lexicon word.
pub fn resolve_overlaps(name: &str, merged: &Cuts, final_cuts: &Cuts, lexicon: &RuleLexicon) -> Cuts {
    let chars: Vec<char> = name.chars().collect();
    let mut cuts: Vec<usize> = merged.iter().copied().collect();
    let mut i = 0;
    while i < cuts.len() {
        let c = cuts[i];
        let adjacent = (i > 0 && cuts[i - 1] + 1 == c) || cuts.get(i + 1).is_some_and(|&q| q == c + 1);
        if adjacent && !final_cuts.contains(&c) {
            let lo = if i > 0 { cuts[i - 1] } else { 0 };
            let hi = cuts.get(i + 1).copied().unwrap_or(chars.len());
            let joined: String = chars[lo..hi].iter().collect();
            if lexicon.contains(&joined) {
                cuts.remove(i);
                continue;
            }
        }
        i += 1;
    }
    cuts.into_iter().collect()
}
