//! Samples for the three assembly language-model pretraining tasks.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::ingest::{compute_defuse_pairs, FunctionRecord};

pub const MASK: &str = "[MASK]";
pub const SPAN_LAMBDA: f64 = 3.0;
pub const DEFAULT_MASK_RATIO: f64 = 0.15;
pub const DEFAULT_WINDOW: usize = 2;
pub const DEFAULT_NEGATIVES: usize = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfillingSample {
    pub function_id: String,
    pub noised: Vec<String>,
    /// `(mask ordinal, original span)`; a zero-length span is an insertion.
    pub targets: Vec<(usize, Vec<String>)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairTask {
    Cdi,
    Dui,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPairSample {
    pub function_id: String,
    pub task: PairTask,
    pub a: usize,
    pub b: usize,
    pub tokens_a: Vec<String>,
    pub tokens_b: Vec<String>,
    pub label: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Task {
    Infill,
    Cdi,
    Dui,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Infill, Task::Cdi, Task::Dui];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Infill => "infill",
            Task::Cdi => "cdi",
            Task::Dui => "dui",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "infill" => Ok(Task::Infill),
            "cdi" => Ok(Task::Cdi),
            "dui" => Ok(Task::Dui),
            _ => Err(Error::invalid(format!("unknown task `{s}` (infill, cdi, dui)"))),
        }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn function_seed(seed: u64, id: &str) -> u64 {
    seed ^ fnv1a(id)
}

/// Applies explicit `(start, len)` spans, which must be sorted and must not
/// overlap or touch.
pub fn infill_with_spans(tokens: &[String], spans: &[(usize, usize)]) -> Result<InfillingSample> {
    let mut prev_end: Option<usize> = None;
    for &(s, l) in spans {
        if s + l > tokens.len() || prev_end.is_some_and(|e| s <= e) {
            return Err(Error::invalid(format!("span ({s},{l}) overlaps or leaves the sequence")));
        }
        prev_end = Some(s + l);
    }
    let mut noised = Vec::with_capacity(tokens.len());
    let mut targets = Vec::with_capacity(spans.len());
    let mut it = spans.iter().peekable();
    let mut i = 0;
    while i <= tokens.len() {
        if let Some(&&(s, l)) = it.peek() {
            if s == i {
                targets.push((targets.len(), tokens[s..s + l].to_vec()));
                noised.push(MASK.to_string());
                it.next();
                i += l;
                if l == 0 && i < tokens.len() {
                    noised.push(tokens[i].clone());
                    i += 1;
                }
                continue;
            }
        }
        if i < tokens.len() {
            noised.push(tokens[i].clone());
        }
        i += 1;
    }
    Ok(InfillingSample { function_id: String::new(), noised, targets })
}

/// Span-masking noise: Poisson span lengths, each span replaced by one mask.
pub fn text_infilling(tokens: &[String], mask_ratio: f64, rng_seed: u64) -> Result<InfillingSample> {
    if tokens.len() < 2 {
        return Err(Error::invalid("text infilling needs at least two tokens"));
    }
    if !(mask_ratio > 0.0 && mask_ratio < 1.0) {
        return Err(Error::invalid(format!("mask ratio {mask_ratio} outside (0, 1)")));
    }
    let n = tokens.len();
    let budget = (mask_ratio * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let poisson = Poisson::new(SPAN_LAMBDA).expect("positive rate");
    // spans may neither overlap nor touch
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut masked = 0;
    let mut attempts = 0;
    while masked < budget && attempts < 10 * (budget + 1) {
        attempts += 1;
        let len = (poisson.sample(&mut rng) as usize).min(budget - masked);
        let start = rng.random_range(0..=n - len);
        let clear = spans.iter().all(|&(s, l)| start + len < s || start > s + l);
        if clear {
            spans.push((start, len));
            masked += len;
        }
    }
    spans.sort_unstable();
    infill_with_spans(tokens, &spans)
}

/// Inverse of infilling.
pub fn reconstruct(sample: &InfillingSample) -> Vec<String> {
    let mut out = Vec::new();
    let mut slot = 0;
    for t in &sample.noised {
        if t == MASK {
            out.extend(sample.targets[slot].1.iter().cloned());
            slot += 1;
        } else {
            out.push(t.clone());
        }
    }
    out
}

fn sample_negatives(
    mut pool: Vec<(usize, usize)>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    pool.shuffle(rng);
    pool.truncate(count);
    pool
}

fn pair(rec: &FunctionRecord, task: PairTask, a: usize, b: usize, label: bool) -> InstructionPairSample {
    InstructionPairSample {
        function_id: rec.id.clone(),
        task,
        a,
        b,
        tokens_a: rec.instructions[a].tokens(),
        tokens_b: rec.instructions[b].tokens(),
        label,
    }
}

/// `(block, position in block)` of each instruction.
fn block_positions(rec: &FunctionRecord) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(rec.instructions.len());
    for (i, inst) in rec.instructions.iter().enumerate() {
        let next = match out.last() {
            Some(&(b, p)) if rec.instructions[i - 1].block_id == inst.block_id => (b, p + 1),
            Some(&(b, _)) => (b + 1, 0),
            None => (0, 0),
        };
        out.push(next);
    }
    out
}

pub fn cdi_within_window(pos: &[(usize, usize)], i: usize, j: usize, w: usize) -> bool {
    let (bi, pi) = pos[i];
    let (bj, pj) = pos[j];
    bi == bj && pi.abs_diff(pj) >= 1 && pi.abs_diff(pj) <= w
}

/// Control-dependency pairs `(i, j)`, `i < j`: positive when both lie in the
/// same basic block at most `w` apart.
pub fn cdi_pairs(rec: &FunctionRecord, w: usize, negatives_per_positive: usize, rng_seed: u64) -> Result<Vec<InstructionPairSample>> {
    if w < 1 {
        return Err(Error::invalid("window must be >= 1"));
    }
    let pos = block_positions(rec);
    let n = rec.instructions.len();
    let (mut positives, mut pool) = (Vec::new(), Vec::new());
    for i in 0..n {
        for j in i + 1..n {
            if cdi_within_window(&pos, i, j, w) {
                positives.push((i, j));
            } else {
                pool.push((i, j));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let negatives = sample_negatives(pool, positives.len() * negatives_per_positive, &mut rng);
    let mut out: Vec<_> = positives.into_iter().map(|(a, b)| pair(rec, PairTask::Cdi, a, b, true)).collect();
    out.extend(negatives.into_iter().map(|(a, b)| pair(rec, PairTask::Cdi, a, b, false)));
    Ok(out)
}

/// Def-use pairs: positives are the function's def-use pairs, negatives
/// other forward pairs.
pub fn dui_pairs(rec: &FunctionRecord, negatives_per_positive: usize, rng_seed: u64) -> Vec<InstructionPairSample> {
    let positives = compute_defuse_pairs(rec);
    let set: BTreeSet<(usize, usize)> = positives.iter().copied().collect();
    let n = rec.instructions.len();
    let pool: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|p| !set.contains(p)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let negatives = sample_negatives(pool, positives.len() * negatives_per_positive, &mut rng);
    let mut out: Vec<_> = positives.into_iter().map(|(a, b)| pair(rec, PairTask::Dui, a, b, true)).collect();
    out.extend(negatives.into_iter().map(|(a, b)| pair(rec, PairTask::Dui, a, b, false)));
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PretrainSample {
    Infill(InfillingSample),
    Pair(InstructionPairSample),
}

impl PretrainSample {
    pub fn function_id(&self) -> &str {
        match self {
            PretrainSample::Infill(s) => &s.function_id,
            PretrainSample::Pair(s) => &s.function_id,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            PretrainSample::Infill(_) => Task::Infill,
            PretrainSample::Pair(s) if s.task == PairTask::Cdi => Task::Cdi,
            PretrainSample::Pair(_) => Task::Dui,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PretrainConfig {
    pub mask_ratio: f64,
    pub window: usize,
    pub negatives_per_positive: usize,
    /// Longest token sequence used for infilling.
    pub max_tokens: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig { mask_ratio: DEFAULT_MASK_RATIO, window: DEFAULT_WINDOW, negatives_per_positive: DEFAULT_NEGATIVES, max_tokens: 512 }
    }
}

/// Samples of one task for every record, in record order. Each function
/// draws from its own seed so the output does not depend on scheduling.
pub fn generate(records: &[FunctionRecord], task: Task, cfg: &PretrainConfig, seed: u64, exec: Exec) -> Result<Vec<PretrainSample>> {
    let per: Vec<Vec<PretrainSample>> = exec.try_map(records, |rec| {
        let s = function_seed(seed, &rec.id);
        Ok::<_, Error>(match task {
            Task::Infill => {
                let mut toks = rec.tokens();
                toks.truncate(cfg.max_tokens);
                if toks.len() < 2 {
                    vec![]
                } else {
                    let mut sample = text_infilling(&toks, cfg.mask_ratio, s)?;
                    sample.function_id = rec.id.clone();
                    vec![PretrainSample::Infill(sample)]
                }
            }
            Task::Cdi => cdi_pairs(rec, cfg.window, cfg.negatives_per_positive, s)?.into_iter().map(PretrainSample::Pair).collect(),
            Task::Dui => dui_pairs(rec, cfg.negatives_per_positive, s).into_iter().map(PretrainSample::Pair).collect(),
        })
    })?;
    Ok(per.into_iter().flatten().collect())
}

pub fn to_jsonl(samples: &[PretrainSample]) -> Result<String> {
    let mut s = String::new();
    for x in samples {
        s.push_str(&serde_json::to_string(x)?);
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Arch, Instruction, OptLevel};

    fn toks(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn record(insts: &[(&str, &[&str], usize)]) -> FunctionRecord {
        FunctionRecord {
            id: "f".into(),
            name: "f".into(),
            source_id: "s".into(),
            arch: Arch::X64,
            opt: OptLevel::O0,
            instructions: insts.iter().enumerate().map(|(i, (m, o, b))| Instruction::new(i, m, o, *b)).collect(),
            edges: vec![],
            defuse: None,
        }
    }

    #[test]
    fn forced_span() {
        let s = infill_with_spans(&toks(&["mov", "eax", "<imm>"]), &[(1, 2)]).unwrap();
        assert_eq!(s.noised, toks(&["mov", MASK]));
        assert_eq!(s.targets, vec![(0, toks(&["eax", "<imm>"]))]);
        let z = infill_with_spans(&toks(&["a", "b"]), &[(1, 0)]).unwrap();
        assert_eq!(z.noised, toks(&["a", MASK, "b"]));
        assert_eq!(reconstruct(&z), toks(&["a", "b"]));
        let end = infill_with_spans(&toks(&["a", "b"]), &[(2, 0)]).unwrap();
        assert_eq!(end.noised, toks(&["a", "b", MASK]));
    }

    #[test]
    fn tiny_ratio_masks_nothing() {
        let t = toks(&["a", "b", "c", "d"]);
        let s = text_infilling(&t, 1e-9, 5).unwrap();
        assert_eq!(s.noised, t);
        assert!(s.targets.is_empty());
        assert!(text_infilling(&toks(&["a"]), 0.15, 0).is_err());
        assert!(text_infilling(&t, 1.0, 0).is_err());
    }

    #[test]
    fn reconstruction_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for case in 0..1000u64 {
            let n = rng.random_range(2..40);
            let t: Vec<String> = (0..n).map(|i| format!("t{}", (i * 7 + case as usize) % 13)).collect();
            let ratio = rng.random_range(0.05..0.6);
            let s = text_infilling(&t, ratio, case).unwrap();
            assert_eq!(s.noised.iter().filter(|x| *x == MASK).count(), s.targets.len());
            assert_eq!(reconstruct(&s), t);
            let masked: usize = s.targets.iter().map(|t| t.1.len()).sum();
            assert!(masked <= (ratio * n as f64).round() as usize);
            assert_eq!(s, text_infilling(&t, ratio, case).unwrap());
        }
    }

    #[test]
    fn cdi_window_predicate() {
        let r = record(&[("a", &[], 0), ("b", &[], 0), ("c", &[], 0), ("d", &[], 0), ("e", &[], 0)]);
        let pos = block_positions(&r);
        assert!(cdi_within_window(&pos, 0, 2, 2));
        assert!(!cdi_within_window(&pos, 0, 3, 2));
        let samples = cdi_pairs(&r, 2, 1, 3).unwrap();
        for s in &samples {
            assert_eq!(s.label, cdi_within_window(&pos, s.a, s.b, 2));
        }
        assert!(samples.iter().any(|s| (s.a, s.b) == (0, 2) && s.label));
        let single = record(&[("ret", &[], 0)]);
        assert!(cdi_pairs(&single, 2, 1, 0).unwrap().is_empty());
    }

    #[test]
    fn cdi_respects_blocks() {
        let r = record(&[("a", &[], 0), ("b", &[], 0), ("c", &[], 1), ("d", &[], 1)]);
        let pos = block_positions(&r);
        assert_eq!(pos, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert!(!cdi_within_window(&pos, 1, 2, 2));
    }

    #[test]
    fn dui_positives_are_defuse() {
        let r = record(&[("mov", &["eax", "<imm>"], 0), ("add", &["ebx", "eax"], 0)]);
        let s = dui_pairs(&r, 1, 0);
        assert_eq!(s.iter().filter(|x| x.label).map(|x| (x.a, x.b)).collect::<Vec<_>>(), vec![(0, 1)]);
        assert!(!s.iter().any(|x| x.label && (x.a, x.b) == (1, 0)));
        let none = record(&[("nop", &[], 0), ("nop", &[], 0)]);
        assert!(dui_pairs(&none, 1, 0).is_empty());
    }

    #[test]
    fn generation_is_reproducible() {
        let mut recs = Vec::new();
        for k in 0..6 {
            let mut r = record(&[("mov", &["eax", "<imm>"], 0), ("add", &["ebx", "eax"], 0), ("cmp", &["ebx", "1"], 0), ("ret", &[], 1)]);
            r.id = format!("f{k}");
            recs.push(r);
        }
        let cfg = PretrainConfig::default();
        for task in [Task::Infill, Task::Cdi, Task::Dui] {
            let a = to_jsonl(&generate(&recs, task, &cfg, 7, Exec::Serial).unwrap()).unwrap();
            let b = to_jsonl(&generate(&recs, task, &cfg, 7, Exec::Parallel).unwrap()).unwrap();
            assert_eq!(a, b);
            assert!(!a.is_empty());
        }
    }
}
