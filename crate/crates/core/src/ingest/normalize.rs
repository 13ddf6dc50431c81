//! Operand normalization.
//!
//! Rules, applied per operand after lowercasing:
//! - string literals become `<str>`;
//! - direct call/branch targets (numeric addresses, `sub_`/`loc_` labels) become `<loc>`;
//! - every numeric constant inside a memory operand becomes `<imm>`;
//! - free-standing immediates with magnitude above 255 become `<imm>`;
//! - registers, small immediates and the mnemonic are kept.
//!
//! The rewrite is idempotent.

use super::record::{FunctionRecord, Instruction};

pub const IMM: &str = "<imm>";
pub const LOC: &str = "<loc>";
pub const STR: &str = "<str>";

const SMALL_IMM_MAX: u128 = 255;

/// Branch-like mnemonics whose direct operand is a code address.
pub fn is_control_transfer(mnemonic: &str) -> bool {
    let m = mnemonic.to_ascii_lowercase();
    if m.starts_with('j') || m.starts_with("call") || m.starts_with("loop") {
        return true;
    }
    matches!(
        m.as_str(),
        "b" | "bl"
            | "blx"
            | "bx"
            | "bal"
            | "beq"
            | "bne"
            | "blt"
            | "bgt"
            | "ble"
            | "bge"
            | "bcc"
            | "bcs"
            | "bhi"
            | "bls"
            | "bmi"
            | "bpl"
            | "bvs"
            | "bvc"
            | "beqz"
            | "bnez"
            | "blez"
            | "bgtz"
            | "bltz"
            | "bgez"
            | "cbz"
            | "cbnz"
    )
}

/// Parses decimal or `0x` hex, with an optional sign and ARM-style `#`.
fn parse_int(tok: &str) -> Option<u128> {
    let t = tok.trim_start_matches('#');
    let t = t.strip_prefix('-').or_else(|| t.strip_prefix('+')).unwrap_or(t);
    if t.is_empty() {
        return None;
    }
    if let Some(hex) = t.strip_prefix("0x") {
        if hex.is_empty() {
            return None;
        }
        return u128::from_str_radix(hex, 16).ok();
    }
    if let Some(hex) = t.strip_suffix('h') {
        // IDA-style 401000h; must start with a digit to avoid eating registers like `ah`
        if hex.starts_with(|c: char| c.is_ascii_digit()) {
            return u128::from_str_radix(hex, 16).ok();
        }
        return None;
    }
    if t.bytes().all(|b| b.is_ascii_digit()) {
        return t.parse().ok();
    }
    None
}

fn is_label(tok: &str) -> bool {
    ["sub_", "loc_", "locret_", "off_", "j_"].iter().any(|p| tok.starts_with(p))
}

/// Replaces each numeric constant inside a memory operand with `<imm>`.
fn normalize_memory(op: &str) -> String {
    let mut out = String::with_capacity(op.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        if !word.is_empty() {
            if parse_int(word).is_some() {
                if word.starts_with('#') {
                    out.push('#');
                }
                out.push_str(IMM);
            } else {
                out.push_str(word);
            }
            word.clear();
        }
    };
    let chars: Vec<char> = op.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '<' {
            // keep existing placeholders intact
            if let Some(end) = chars[i..].iter().position(|&x| x == '>') {
                flush(&mut word, &mut out);
                out.extend(&chars[i..=i + end]);
                i += end + 1;
                continue;
            }
        }
        if c.is_ascii_alphanumeric() || c == '_' || c == '#' || c == '$' || c == '.' {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            out.push(c);
        }
        i += 1;
    }
    flush(&mut word, &mut out);
    out
}

fn is_memory(op: &str) -> bool {
    op.contains('[') || (op.contains('(') && op.ends_with(')'))
}

pub fn normalize_operand(mnemonic: &str, operand: &str) -> String {
    let op = operand.trim().to_lowercase();
    if op.starts_with('"') || op.starts_with('\'') {
        return STR.to_string();
    }
    if op == IMM || op == LOC || op == STR {
        return op;
    }
    if is_label(&op) {
        return LOC.to_string();
    }
    if is_memory(&op) {
        return normalize_memory(&op);
    }
    if let Some(v) = parse_int(&op) {
        if is_control_transfer(mnemonic) {
            return LOC.to_string();
        }
        if v > SMALL_IMM_MAX {
            return IMM.to_string();
        }
    }
    op
}

pub fn normalize_instruction(inst: &Instruction) -> Instruction {
    Instruction {
        index: inst.index,
        mnemonic: inst.mnemonic.to_lowercase(),
        operands: inst.operands.iter().map(|o| normalize_operand(&inst.mnemonic, o)).collect(),
        block_id: inst.block_id,
    }
}

pub fn normalize_record(rec: &FunctionRecord) -> FunctionRecord {
    FunctionRecord { instructions: rec.instructions.iter().map(normalize_instruction).collect(), ..rec.clone() }
}
