//! Register-level reaching definitions over the instruction CFG.
//!
//! Memory is not tracked. The destination convention is "first operand",
//! except for stores, compares and stack pushes, which only read.

use std::collections::BTreeSet;

use super::cfg::{build_fine_grained_cfg, FineGrainedCfg};
use super::record::{FunctionRecord, Instruction};

const X86_FAMILIES: &[&[&str]] = &[
    &["rax", "eax", "ax", "al", "ah"],
    &["rbx", "ebx", "bx", "bl", "bh"],
    &["rcx", "ecx", "cx", "cl", "ch"],
    &["rdx", "edx", "dx", "dl", "dh"],
    &["rsi", "esi", "si", "sil"],
    &["rdi", "edi", "di", "dil"],
    &["rbp", "ebp", "bp", "bpl"],
    &["rsp", "esp", "sp", "spl"],
    &["rip", "eip", "ip"],
];

/// Canonical register name, folding x86 sub-registers onto one family and
/// `rN`/`rNd`/`rNw`/`rNb` onto `rN`. `None` if `tok` is not a register.
pub fn canonical_register(tok: &str) -> Option<String> {
    let t = tok.trim().trim_start_matches('%').to_ascii_lowercase();
    for names in X86_FAMILIES {
        if names.contains(&t.as_str()) {
            return Some(names[0].to_string());
        }
    }
    if let Some(rest) = t.strip_prefix('r') {
        let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
        let suffix = &rest[digits.len()..];
        if !digits.is_empty() && matches!(suffix, "" | "d" | "w" | "b") {
            return Some(format!("r{digits}"));
        }
    }
    // aarch64 wN aliases xN
    if let Some(rest) = t.strip_prefix('x').or_else(|| t.strip_prefix('w')) {
        if !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()) {
            return Some(format!("x{rest}"));
        }
    }
    if matches!(t.as_str(), "lr" | "pc" | "fp" | "ip0" | "ip1" | "xzr" | "wzr") {
        return Some(t);
    }
    if t.starts_with('$') && t.len() > 1 {
        return Some(t);
    }
    if (t.starts_with("xmm") || t.starts_with("ymm") || t.starts_with("zmm")) && t[3..].bytes().all(|b| b.is_ascii_digit()) {
        return Some(t);
    }
    None
}

fn registers_in(operand: &str) -> Vec<String> {
    operand
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '$' || c == '%' || c == '_'))
        .filter_map(canonical_register)
        .collect()
}

fn is_memory(op: &str) -> bool {
    op.contains('[') || op.contains('(')
}

const READ_ONLY: &[&str] = &["cmp", "test", "push", "str", "strb", "strh", "stp", "sw", "sb", "sh", "sd", "cmn", "tst", "bt"];
const WRITE_ONLY: &[&str] = &[
    "mov", "movl", "movq", "movzx", "movsx", "movsxd", "movabs", "lea", "ldr", "ldrb", "ldrh", "ldp", "li", "la", "lui", "lw",
    "lb", "lbu", "lh", "lhu", "ld", "move", "pop", "setz", "sete", "setne", "setnz", "mvn", "adr", "adrp",
];
const BRANCH_PREFIXES: &[&str] = &["j", "call", "b", "ret"];

/// `(defs, uses)` register sets of one instruction.
pub fn defs_uses(inst: &Instruction) -> (BTreeSet<String>, BTreeSet<String>) {
    let m = inst.mnemonic.to_ascii_lowercase();
    let mut defs = BTreeSet::new();
    let mut uses = BTreeSet::new();
    let ops = &inst.operands;

    let is_branch = BRANCH_PREFIXES.iter().any(|p| m.starts_with(p)) && !WRITE_ONLY.contains(&m.as_str());
    if is_branch || READ_ONLY.contains(&m.as_str()) || ops.is_empty() {
        for op in ops {
            uses.extend(registers_in(op));
        }
        return (defs, uses);
    }

    let (dst, srcs) = ops.split_first().expect("non-empty");
    for op in srcs {
        uses.extend(registers_in(op));
    }
    if is_memory(dst) {
        uses.extend(registers_in(dst));
        return (defs, uses);
    }
    let dst_regs = registers_in(dst);
    let three_address = ops.len() >= 3;
    let write_only = WRITE_ONLY.contains(&m.as_str()) || three_address;
    for r in dst_regs {
        if !write_only {
            uses.insert(r.clone());
        }
        defs.insert(r);
    }
    (defs, uses)
}

/// Def-use pairs `(def_index, use_index)`, sorted. Supplied pairs are
/// returned verbatim; otherwise reaching definitions are computed with
/// kill-on-redefinition. Self pairs are omitted.
pub fn compute_defuse_pairs(rec: &FunctionRecord) -> Vec<(usize, usize)> {
    if let Some(du) = &rec.defuse {
        return du.clone();
    }
    let cfg = build_fine_grained_cfg(rec);
    reaching_definitions(rec, &cfg)
}

pub fn reaching_definitions(rec: &FunctionRecord, cfg: &FineGrainedCfg) -> Vec<(usize, usize)> {
    let n = rec.instructions.len();
    let du: Vec<_> = rec.instructions.iter().map(defs_uses).collect();
    // definitions are (instruction, register); IN/OUT sets over them
    let mut ins: Vec<BTreeSet<(usize, String)>> = vec![BTreeSet::new(); n];
    let mut outs: Vec<BTreeSet<(usize, String)>> = vec![BTreeSet::new(); n];
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            let mut new_in = BTreeSet::new();
            for &p in cfg.predecessors(i) {
                new_in.extend(outs[p].iter().cloned());
            }
            let (defs, _) = &du[i];
            let mut new_out: BTreeSet<(usize, String)> =
                new_in.iter().filter(|(_, r)| !defs.contains(r)).cloned().collect();
            for r in defs {
                new_out.insert((i, r.clone()));
            }
            if new_in != ins[i] || new_out != outs[i] {
                ins[i] = new_in;
                outs[i] = new_out;
                changed = true;
            }
        }
    }
    let mut pairs = BTreeSet::new();
    for (i, (_, uses)) in du.iter().enumerate() {
        for (d, r) in &ins[i] {
            if uses.contains(r) && *d != i {
                pairs.insert((*d, i));
            }
        }
    }
    pairs.into_iter().collect()
}
