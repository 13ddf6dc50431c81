//! Synthetic disassembly for tests, benchmarks and the toy dataset.
//!
//! Each source function is named by two or three labels; every label
//! contributes a characteristic instruction snippet, so names are
//! predictable from code. Optimization-level variants of one source differ
//! by prologue, register assignment, filler and duplicated blocks.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{Arch, Edge, EdgeKind, FunctionRecord, Instruction, OptLevel};

pub const VERBS: &[&str] = &["get", "set", "init", "free", "parse", "read", "write", "copy", "find", "check", "hash", "sort"];
pub const NOUNS: &[&str] = &["table", "size", "buffer", "name", "list", "key", "node", "file", "string", "count"];

fn snippet(label: &str) -> Vec<(&'static str, Vec<&'static str>)> {
    match label {
        "get" => vec![("mov", vec!["rax", "qword ptr [rdi+<imm>]"]), ("test", vec!["rax", "rax"])],
        "set" => vec![("mov", vec!["qword ptr [rdi+<imm>]", "rsi"]), ("xor", vec!["eax", "eax"])],
        "init" => vec![("xor", vec!["eax", "eax"]), ("mov", vec!["dword ptr [rdi]", "0"]), ("mov", vec!["qword ptr [rdi+<imm>]", "0"])],
        "free" => vec![("mov", vec!["rdi", "qword ptr [rdi+<imm>]"]), ("call", vec!["<loc>"])],
        "parse" => vec![("movzx", vec!["eax", "byte ptr [rdi]"]), ("sub", vec!["eax", "48"]), ("cmp", vec!["eax", "9"])],
        "read" => vec![("mov", vec!["edi", "dword ptr [rbx]"]), ("call", vec!["<loc>"]), ("cmp", vec!["rax", "-1"])],
        "write" => vec![("mov", vec!["rdx", "rsi"]), ("mov", vec!["edi", "1"]), ("call", vec!["<loc>"])],
        "copy" => vec![("mov", vec!["rcx", "rdx"]), ("rep movsb", vec![]), ("mov", vec!["rax", "rdi"])],
        "find" => vec![("cmp", vec!["qword ptr [rdi]", "rsi"]), ("je", vec!["<loc>"]), ("add", vec!["rdi", "8"])],
        "check" => vec![("test", vec!["edi", "edi"]), ("setne", vec!["al"]), ("movzx", vec!["eax", "al"])],
        "hash" => vec![("imul", vec!["eax", "eax", "31"]), ("xor", vec!["eax", "ecx"]), ("rol", vec!["eax", "5"])],
        "sort" => vec![("cmp", vec!["eax", "ecx"]), ("cmovg", vec!["eax", "ecx"]), ("xchg", vec!["eax", "edx"])],
        "table" => vec![("lea", vec!["rax", "[rip+<imm>]"]), ("mov", vec!["rax", "qword ptr [rax+rcx*8]"])],
        "size" => vec![("mov", vec!["rax", "qword ptr [rdi+8]"]), ("shl", vec!["rax", "3"])],
        "buffer" => vec![("mov", vec!["rsi", "qword ptr [rdi+<imm>]"]), ("add", vec!["rsi", "rdx"])],
        "name" => vec![("mov", vec!["rdi", "qword ptr [rbx+16]"]), ("call", vec!["<loc>"]), ("lea", vec!["rsi", "<str>"])],
        "list" => vec![("mov", vec!["rax", "qword ptr [rax]"]), ("test", vec!["rax", "rax"]), ("jne", vec!["<loc>"])],
        "key" => vec![("mov", vec!["ecx", "dword ptr [rsi]"]), ("and", vec!["ecx", "255"])],
        "node" => vec![("mov", vec!["rdx", "qword ptr [rdi+24]"]), ("mov", vec!["qword ptr [rdx+8]", "rax"])],
        "file" => vec![("mov", vec!["edi", "dword ptr [rbx+4]"]), ("call", vec!["<loc>"]), ("test", vec!["eax", "eax"])],
        "string" => vec![("movzx", vec!["ecx", "byte ptr [rdi+rax]"]), ("test", vec!["cl", "cl"]), ("inc", vec!["rax"])],
        "count" => vec![("inc", vec!["ecx"]), ("cmp", vec!["ecx", "edx"]), ("jl", vec!["<loc>"])],
        _ => vec![("nop", vec![])],
    }
}

const FILLER: &[(&str, &[&str])] =
    &[("mov", &["r8", "r9"]), ("add", &["r10", "1"]), ("nop", &[]), ("push", &["rbx"]), ("pop", &["rbx"])];

const OPTS: [OptLevel; 5] = [OptLevel::O0, OptLevel::O2, OptLevel::O3, OptLevel::O1, OptLevel::Os];

fn render(labels: &[&str], style: usize) -> String {
    match style % 3 {
        0 => {
            let mut s = labels[0].to_string();
            for l in &labels[1..] {
                s.push_str(&l[..1].to_ascii_uppercase());
                s.push_str(&l[1..]);
            }
            s
        }
        1 => labels.join("_"),
        _ => labels.concat(),
    }
}

/// Distinct label sequences, one per source.
pub fn source_labels(sources: usize, seed: u64) -> Vec<Vec<&'static str>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(sources);
    while out.len() < sources {
        let mut labels = vec![*VERBS.choose(&mut rng).expect("non-empty")];
        let nouns = rng.random_range(1..=2);
        for _ in 0..nouns {
            let n = *NOUNS.choose(&mut rng).expect("non-empty");
            if !labels.contains(&n) {
                labels.push(n);
            }
        }
        if seen.insert(labels.clone()) {
            out.push(labels);
        }
    }
    out
}

fn rename(op: &str, map: &[(&str, &str)]) -> String {
    let mut s = op.to_string();
    for (from, to) in map {
        s = s.replace(from, to);
    }
    s
}

/// One source function compiled at one optimization level.
pub fn synthetic_function(source: usize, labels: &[&str], variant: usize, seed: u64) -> FunctionRecord {
    let opt = OPTS[variant % OPTS.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((source as u64) << 20) ^ ((variant as u64) << 8));
    let regmaps: [&[(&str, &str)]; 3] = [&[], &[("rcx", "r11"), ("ecx", "r11d")], &[("rdx", "r9"), ("edx", "r9d")]];
    let regmap = regmaps[variant % regmaps.len()];

    let mut blocks: Vec<Vec<(String, Vec<String>)>> = Vec::new();
    if opt == OptLevel::O0 {
        blocks.push(vec![
            ("push".into(), vec!["rbp".into()]),
            ("mov".into(), vec!["rbp".into(), "rsp".into()]),
            ("mov".into(), vec!["qword ptr [rbp-<imm>]".into(), "rdi".into()]),
        ]);
    }
    for (i, l) in labels.iter().enumerate() {
        let mut b: Vec<(String, Vec<String>)> =
            snippet(l).into_iter().map(|(m, ops)| (m.to_string(), ops.iter().map(|o| rename(o, regmap)).collect())).collect();
        if rng.random_bool(0.5) {
            let (m, ops) = FILLER.choose(&mut rng).expect("non-empty");
            b.insert(rng.random_range(0..=b.len()), (m.to_string(), ops.iter().map(|o| o.to_string()).collect()));
        }
        if i + 1 < labels.len() {
            b.push(("test".into(), vec!["eax".into(), "eax".into()]));
            b.push(("je".into(), vec!["<loc>".into()]));
        }
        blocks.push(b);
        if opt == OptLevel::O3 && i == 0 {
            blocks.push(blocks.last().expect("pushed").clone());
        }
    }
    let mut tail = Vec::new();
    if opt == OptLevel::O0 {
        tail.push(("pop".to_string(), vec!["rbp".to_string()]));
    }
    tail.push(("ret".to_string(), vec![]));
    blocks.push(tail);
    if opt == OptLevel::Os && blocks.len() > 2 {
        let last = blocks.len() - 1;
        blocks[..last].shuffle(&mut rng);
    }

    let mut instructions = Vec::new();
    let mut edges = Vec::new();
    let last_block = blocks.len() - 1;
    let exit_index: usize = blocks[..last_block].iter().map(Vec::len).sum();
    for (bid, b) in blocks.iter().enumerate() {
        for (m, ops) in b {
            let idx = instructions.len();
            let refs: Vec<&str> = ops.iter().map(String::as_str).collect();
            instructions.push(Instruction::new(idx, m, &refs, bid));
            if m == "je" && bid < last_block {
                edges.push(Edge { src: idx, dst: exit_index, kind: EdgeKind::Jump });
            }
        }
    }
    let name = render(labels, source);
    FunctionRecord {
        id: format!("s{source:03}@{}", opt.as_str()),
        name,
        source_id: format!("s{source:03}"),
        arch: Arch::X64,
        opt,
        instructions,
        edges,
        defuse: None,
    }
}

/// `sources x variants` records, grouped by source.
pub fn synthetic_dataset(sources: usize, variants: usize, seed: u64) -> Vec<FunctionRecord> {
    let labels = source_labels(sources, seed);
    let mut out = Vec::with_capacity(sources * variants);
    for (s, l) in labels.iter().enumerate() {
        for v in 0..variants {
            out.push(synthetic_function(s, l, v, seed));
        }
    }
    out
}

/// Gold labels per record of `synthetic_dataset` with the same arguments.
pub fn synthetic_labels(sources: usize, variants: usize, seed: u64) -> Vec<Vec<String>> {
    let labels = source_labels(sources, seed);
    labels.iter().flat_map(|l| std::iter::repeat_n(l.iter().map(|s| s.to_string()).collect(), variants)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_validate() {
        let data = synthetic_dataset(20, 3, 7);
        assert_eq!(data.len(), 60);
        for r in &data {
            r.validate().unwrap();
            assert!(!r.instructions.is_empty());
        }
        let ids: std::collections::BTreeSet<_> = data.iter().map(|r| r.id.clone()).collect();
        assert_eq!(ids.len(), 60);
        assert_eq!(data, synthetic_dataset(20, 3, 7));
    }

    #[test]
    fn name_styles() {
        assert_eq!(render(&["get", "table", "size"], 0), "getTableSize");
        assert_eq!(render(&["get", "table"], 1), "get_table");
        assert_eq!(render(&["get", "table"], 2), "gettable");
    }
}
