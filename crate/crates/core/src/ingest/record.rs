//! Function records and their JSONL encoding.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id": str, "name": str, "source_id": str, "arch": str, "opt": str,
//!  "instructions": [{"mnemonic": str, "operands": [str], "block_id": int}],
//!  "edges": [[int, int, "jump" | "fallthrough"]],
//!  "defuse": [[int, int]]}        // optional
//! ```

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arch {
    X86,
    X64,
    Arm,
    Mips,
    Other,
}

impl Arch {
    pub fn parse(s: &str) -> Arch {
        match s.to_ascii_lowercase().as_str() {
            "x86" | "i386" | "i686" => Arch::X86,
            "x64" | "x86_64" | "x86-64" | "amd64" => Arch::X64,
            "arm" | "arm32" | "arm64" | "aarch64" => Arch::Arm,
            "mips" | "mips32" | "mips64" | "mipsel" => Arch::Mips,
            _ => Arch::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::X86 => "x86",
            Arch::X64 => "x64",
            Arch::Arm => "arm",
            Arch::Mips => "mips",
            Arch::Other => "other",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OptLevel {
    O0,
    O1,
    O2,
    O3,
    Os,
    Unknown,
}

impl OptLevel {
    pub fn parse(s: &str) -> OptLevel {
        match s.trim_start_matches('-') {
            "O0" | "o0" => OptLevel::O0,
            "O1" | "o1" => OptLevel::O1,
            "O2" | "o2" => OptLevel::O2,
            "O3" | "o3" => OptLevel::O3,
            "Os" | "os" | "OS" => OptLevel::Os,
            _ => OptLevel::Unknown,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OptLevel::O0 => "O0",
            OptLevel::O1 => "O1",
            OptLevel::O2 => "O2",
            OptLevel::O3 => "O3",
            OptLevel::Os => "Os",
            OptLevel::Unknown => "unknown",
        }
    }
}

impl fmt::Display for OptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instruction {
    pub index: usize,
    pub mnemonic: String,
    pub operands: Vec<String>,
    pub block_id: usize,
}

impl Instruction {
    pub fn new(index: usize, mnemonic: &str, operands: &[&str], block_id: usize) -> Self {
        Instruction {
            index,
            mnemonic: mnemonic.to_string(),
            operands: operands.iter().map(|s| s.to_string()).collect(),
            block_id,
        }
    }

    /// Mnemonic followed by operands.
    pub fn tokens(&self) -> Vec<String> {
        let mut t = Vec::with_capacity(1 + self.operands.len());
        t.push(self.mnemonic.clone());
        t.extend(self.operands.iter().cloned());
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Jump,
    Fallthrough,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Jump => "jump",
            EdgeKind::Fallthrough => "fallthrough",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionRecord {
    pub id: String,
    pub name: String,
    pub source_id: String,
    pub arch: Arch,
    pub opt: OptLevel,
    pub instructions: Vec<Instruction>,
    pub edges: Vec<Edge>,
    pub defuse: Option<Vec<(usize, usize)>>,
}

impl FunctionRecord {
    /// Checks the structural invariants: dense indices, non-empty name and
    /// mnemonics, in-range edges, contiguous blocks.
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::InvalidRecord { id: self.id.clone(), message };
        if self.name.is_empty() {
            return Err(bad("name is empty".into()));
        }
        let n = self.instructions.len();
        for (i, inst) in self.instructions.iter().enumerate() {
            if inst.index != i {
                return Err(bad(format!("instruction {i} has index {}", inst.index)));
            }
            if inst.mnemonic.is_empty() {
                return Err(bad(format!("instruction {i} has an empty mnemonic")));
            }
        }
        for e in &self.edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::EdgeOutOfRange { id: self.id.clone(), src: e.src, dst: e.dst, count: n });
            }
        }
        if let Some(du) = &self.defuse {
            for &(d, u) in du {
                if d >= n || u >= n {
                    return Err(bad(format!("def-use pair ({d}, {u}) out of range")));
                }
            }
        }
        let mut seen = HashSet::new();
        let mut prev: Option<usize> = None;
        for inst in &self.instructions {
            if prev != Some(inst.block_id) {
                if !seen.insert(inst.block_id) {
                    return Err(bad(format!("block {} is not contiguous", inst.block_id)));
                }
                prev = Some(inst.block_id);
            }
        }
        Ok(())
    }

    /// Flattened token sequence of all instructions in program order.
    pub fn tokens(&self) -> Vec<String> {
        self.instructions.iter().flat_map(|i| i.tokens()).collect()
    }

    pub fn to_json(&self) -> Value {
        let instructions: Vec<Value> = self
            .instructions
            .iter()
            .map(|i| json!({"mnemonic": i.mnemonic, "operands": i.operands, "block_id": i.block_id}))
            .collect();
        let edges: Vec<Value> = self.edges.iter().map(|e| json!([e.src, e.dst, e.kind.as_str()])).collect();
        let mut obj = Map::new();
        obj.insert("id".into(), json!(self.id));
        obj.insert("name".into(), json!(self.name));
        obj.insert("source_id".into(), json!(self.source_id));
        obj.insert("arch".into(), json!(self.arch.as_str()));
        obj.insert("opt".into(), json!(self.opt.as_str()));
        obj.insert("instructions".into(), Value::Array(instructions));
        obj.insert("edges".into(), Value::Array(edges));
        if let Some(du) = &self.defuse {
            obj.insert("defuse".into(), json!(du.iter().map(|&(d, u)| json!([d, u])).collect::<Vec<_>>()));
        }
        Value::Object(obj)
    }

    pub fn to_json_line(&self) -> String {
        self.to_json().to_string()
    }

    /// Parses one JSONL line; errors carry `line` and the offending field.
    pub fn from_json_line(text: &str, path: &Path, line: usize) -> Result<FunctionRecord> {
        let perr = |field: &str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            field: field.to_string(),
            message,
        };
        let value: Value = serde_json::from_str(text).map_err(|e| perr("<json>", e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| perr("<json>", "expected an object".into()))?;
        let get_str = |field: &str| -> Result<String> {
            match obj.get(field) {
                Some(Value::String(s)) => Ok(s.clone()),
                Some(other) => Err(perr(field, format!("expected string, found {other}"))),
                None => Err(perr(field, "missing".into())),
            }
        };
        let id = get_str("id")?;
        let name = get_str("name")?;
        if name.is_empty() {
            return Err(perr("name", "must be non-empty".into()));
        }
        let source_id = get_str("source_id")?;
        let arch = Arch::parse(&get_str("arch")?);
        let opt = OptLevel::parse(&get_str("opt")?);

        let insts = match obj.get("instructions") {
            Some(Value::Array(a)) => a,
            Some(_) => return Err(perr("instructions", "expected array".into())),
            None => return Err(perr("instructions", "missing".into())),
        };
        let mut instructions = Vec::with_capacity(insts.len());
        for (i, v) in insts.iter().enumerate() {
            let field = |f: &str| format!("instructions[{i}].{f}");
            let o = v.as_object().ok_or_else(|| perr(&format!("instructions[{i}]"), "expected object".into()))?;
            let mnemonic = match o.get("mnemonic") {
                Some(Value::String(s)) if !s.is_empty() => s.clone(),
                Some(Value::String(_)) => return Err(perr(&field("mnemonic"), "must be non-empty".into())),
                _ => return Err(perr(&field("mnemonic"), "expected string".into())),
            };
            let operands = match o.get("operands") {
                None | Some(Value::Null) => Vec::new(),
                Some(Value::Array(a)) => a
                    .iter()
                    .map(|x| x.as_str().map(str::to_string).ok_or_else(|| perr(&field("operands"), "expected strings".into())))
                    .collect::<Result<Vec<_>>>()?,
                Some(_) => return Err(perr(&field("operands"), "expected array".into())),
            };
            let block_id = o
                .get("block_id")
                .and_then(Value::as_u64)
                .ok_or_else(|| perr(&field("block_id"), "expected non-negative integer".into()))?
                as usize;
            instructions.push(Instruction { index: i, mnemonic, operands, block_id });
        }

        let mut edges = Vec::new();
        match obj.get("edges") {
            None | Some(Value::Null) => {}
            Some(Value::Array(a)) => {
                for (i, e) in a.iter().enumerate() {
                    let f = format!("edges[{i}]");
                    let t = e.as_array().filter(|t| t.len() == 3).ok_or_else(|| perr(&f, "expected [src, dst, kind]".into()))?;
                    let src = t[0].as_u64().ok_or_else(|| perr(&f, "src must be a non-negative integer".into()))? as usize;
                    let dst = t[1].as_u64().ok_or_else(|| perr(&f, "dst must be a non-negative integer".into()))? as usize;
                    let kind = match t[2].as_str() {
                        Some("jump") => EdgeKind::Jump,
                        Some("fallthrough") => EdgeKind::Fallthrough,
                        _ => return Err(perr(&f, "kind must be \"jump\" or \"fallthrough\"".into())),
                    };
                    edges.push(Edge { src, dst, kind });
                }
            }
            Some(_) => return Err(perr("edges", "expected array".into())),
        }

        let defuse = match obj.get("defuse") {
            None | Some(Value::Null) => None,
            Some(Value::Array(a)) => {
                let mut pairs = Vec::with_capacity(a.len());
                for (i, p) in a.iter().enumerate() {
                    let f = format!("defuse[{i}]");
                    let t = p.as_array().filter(|t| t.len() == 2).ok_or_else(|| perr(&f, "expected [def, use]".into()))?;
                    let d = t[0].as_u64().ok_or_else(|| perr(&f, "expected integers".into()))? as usize;
                    let u = t[1].as_u64().ok_or_else(|| perr(&f, "expected integers".into()))? as usize;
                    pairs.push((d, u));
                }
                Some(pairs)
            }
            Some(_) => return Err(perr("defuse", "expected array".into())),
        };

        let rec = FunctionRecord { id, name, source_id, arch, opt, instructions, edges, defuse };
        rec.validate().map_err(|e| match e {
            Error::EdgeOutOfRange { .. } => perr("edges", "edge endpoint out of range".into()),
            other => perr("<record>", other.to_string()),
        })?;
        Ok(rec)
    }
}

/// Reads every record of a JSONL file in order. Blank lines are skipped.
pub fn parse_function_records(path: &Path) -> Result<Vec<FunctionRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = FunctionRecord::from_json_line(&line, path, i + 1)?;
        if !ids.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_function_records(path: &Path, records: &[FunctionRecord]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in records {
        writeln!(f, "{}", r.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}
