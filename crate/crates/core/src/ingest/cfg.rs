//! Instruction-level control-flow graphs and K-hop neighborhoods.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use super::record::{EdgeKind, FunctionRecord};
use crate::error::{Error, Result};

/// Mnemonics that never fall through to the next instruction.
pub const TERMINATORS: &[&str] = &["ret", "retn", "retq", "jmp", "b", "j", "jr"];

pub fn is_terminator(mnemonic: &str) -> bool {
    let m = mnemonic.to_ascii_lowercase();
    TERMINATORS.contains(&m.as_str())
}

#[derive(Debug, Default)]
pub struct FineGrainedCfg {
    node_count: usize,
    /// Directed edges with kinds, sorted and deduplicated.
    edges: Vec<(usize, usize, EdgeKind)>,
    successors: Vec<Vec<usize>>,
    predecessors: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    khop_cache: std::sync::Mutex<HashMap<usize, Arc<Vec<Vec<usize>>>>>,
}

impl Clone for FineGrainedCfg {
    fn clone(&self) -> Self {
        FineGrainedCfg {
            node_count: self.node_count,
            edges: self.edges.clone(),
            successors: self.successors.clone(),
            predecessors: self.predecessors.clone(),
            neighbors: self.neighbors.clone(),
            khop_cache: Default::default(),
        }
    }
}

impl FineGrainedCfg {
    /// Builds from explicit directed edges; self-loops are dropped.
    pub fn from_edges(node_count: usize, edges: impl IntoIterator<Item = (usize, usize, EdgeKind)>) -> Self {
        let mut set: BTreeSet<(usize, usize, EdgeKind)> = BTreeSet::new();
        for (s, d, k) in edges {
            assert!(s < node_count && d < node_count, "edge ({s},{d}) out of range");
            if s != d {
                set.insert((s, d, k));
            }
        }
        let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); node_count];
        let mut pred: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); node_count];
        let mut und: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); node_count];
        for &(s, d, _) in &set {
            succ[s].insert(d);
            pred[d].insert(s);
            und[s].insert(d);
            und[d].insert(s);
        }
        let to_vec = |v: Vec<BTreeSet<usize>>| v.into_iter().map(|s| s.into_iter().collect()).collect();
        FineGrainedCfg {
            node_count,
            edges: set.into_iter().collect(),
            successors: to_vec(succ),
            predecessors: to_vec(pred),
            neighbors: to_vec(und),
            khop_cache: Default::default(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &[(usize, usize, EdgeKind)] {
        &self.edges
    }

    pub fn successors(&self, v: usize) -> &[usize] {
        &self.successors[v]
    }

    pub fn predecessors(&self, v: usize) -> &[usize] {
        &self.predecessors[v]
    }

    /// Undirected neighbors.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    /// Nodes within undirected distance `k` of `v`, excluding `v`, sorted.
    pub fn khop_neighborhood(&self, v: usize, k: usize) -> Result<Vec<usize>> {
        if v >= self.node_count {
            return Err(Error::invalid(format!("node {v} out of range ({} nodes)", self.node_count)));
        }
        Ok(self.khop_all(k)?[v].clone())
    }

    /// `N_v^k` for every node, computed once per `k` and then shared.
    pub fn khop_all(&self, k: usize) -> Result<Arc<Vec<Vec<usize>>>> {
        if k == 0 {
            return Err(Error::ZeroHop);
        }
        let mut cache = self.khop_cache.lock().expect("khop cache poisoned");
        if let Some(h) = cache.get(&k) {
            return Ok(h.clone());
        }
        let hoods: Vec<Vec<usize>> = (0..self.node_count).map(|v| self.bfs_within(v, k)).collect();
        let hoods = Arc::new(hoods);
        cache.insert(k, hoods.clone());
        Ok(hoods)
    }

    fn bfs_within(&self, v: usize, k: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count];
        dist[v] = 0;
        let mut q = VecDeque::from([v]);
        let mut out = Vec::new();
        while let Some(u) = q.pop_front() {
            if dist[u] == k {
                continue;
            }
            for &w in &self.neighbors[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    out.push(w);
                    q.push_back(w);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// One node per instruction; explicit edges plus an implicit fallthrough
/// `i -> i+1` for every non-terminator without an explicit outgoing
/// fallthrough.
pub fn build_fine_grained_cfg(rec: &FunctionRecord) -> FineGrainedCfg {
    let n = rec.instructions.len();
    let mut edges: Vec<(usize, usize, EdgeKind)> = rec.edges.iter().map(|e| (e.src, e.dst, e.kind)).collect();
    let mut has_fallthrough = vec![false; n];
    for e in &rec.edges {
        if e.kind == EdgeKind::Fallthrough {
            has_fallthrough[e.src] = true;
        }
    }
    for i in 0..n.saturating_sub(1) {
        if !has_fallthrough[i] && !is_terminator(&rec.instructions[i].mnemonic) {
            edges.push((i, i + 1, EdgeKind::Fallthrough));
        }
    }
    FineGrainedCfg::from_edges(n, edges)
}

/// One sequence per basic block, instruction indices in program order.
pub fn extract_control_flow_sequences(rec: &FunctionRecord) -> Result<Vec<Vec<usize>>> {
    if rec.instructions.is_empty() {
        return Err(Error::Empty(format!("record `{}` has no instructions", rec.id)));
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut current: Option<usize> = None;
    for inst in &rec.instructions {
        if current != Some(inst.block_id) {
            out.push(Vec::new());
            current = Some(inst.block_id);
        }
        out.last_mut().expect("pushed above").push(inst.index);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::record::{Arch, Edge, Instruction, OptLevel};

    fn rec(mnemonics: &[&str], blocks: &[usize], edges: &[(usize, usize, EdgeKind)]) -> FunctionRecord {
        FunctionRecord {
            id: "t".into(),
            name: "t".into(),
            source_id: "s".into(),
            arch: Arch::X64,
            opt: OptLevel::O0,
            instructions: mnemonics.iter().enumerate().map(|(i, m)| Instruction::new(i, m, &[], blocks[i])).collect(),
            edges: edges.iter().map(|&(src, dst, kind)| Edge { src, dst, kind }).collect(),
            defuse: None,
        }
    }

    fn undirected(cfg: &FineGrainedCfg) -> BTreeSet<(usize, usize)> {
        cfg.edges().iter().map(|&(a, b, _)| (a.min(b), a.max(b))).collect()
    }

    #[test]
    fn single_instruction() {
        let cfg = build_fine_grained_cfg(&rec(&["ret"], &[0], &[]));
        assert_eq!(cfg.node_count(), 1);
        assert!(cfg.edges().is_empty());
    }

    #[test]
    fn straight_line_is_a_path() {
        let cfg = build_fine_grained_cfg(&rec(&["mov", "add", "sub", "ret"], &[0; 4], &[]));
        assert_eq!(undirected(&cfg), BTreeSet::from([(0, 1), (1, 2), (2, 3)]));
    }

    #[test]
    fn jump_suppresses_fallthrough() {
        let r = rec(&["mov", "jmp", "add", "ret"], &[0, 0, 1, 1], &[(1, 3, EdgeKind::Jump)]);
        let cfg = build_fine_grained_cfg(&r);
        assert_eq!(
            cfg.edges().to_vec(),
            vec![(0, 1, EdgeKind::Fallthrough), (1, 3, EdgeKind::Jump), (2, 3, EdgeKind::Fallthrough)]
        );
    }

    #[test]
    fn khop_on_path() {
        let cfg = build_fine_grained_cfg(&rec(&["mov", "add", "sub", "ret"], &[0; 4], &[]));
        assert_eq!(cfg.khop_neighborhood(1, 2).unwrap(), vec![0, 2, 3]);
        assert_eq!(cfg.khop_neighborhood(1, 1).unwrap(), vec![0, 2]);
        assert!(matches!(cfg.khop_neighborhood(1, 0), Err(Error::ZeroHop)));
    }

    #[test]
    fn isolated_node_has_empty_neighborhood() {
        let cfg = FineGrainedCfg::from_edges(3, [(0, 1, EdgeKind::Jump)]);
        for k in 1..5 {
            assert!(cfg.khop_neighborhood(2, k).unwrap().is_empty());
        }
    }

    #[test]
    fn self_loops_and_duplicates_dropped() {
        let cfg = FineGrainedCfg::from_edges(2, [(0, 0, EdgeKind::Jump), (0, 1, EdgeKind::Jump), (1, 0, EdgeKind::Jump)]);
        assert_eq!(cfg.neighbors(0), &[1]);
        assert_eq!(cfg.neighbors(1), &[0]);
    }

    #[test]
    fn control_flow_sequences_by_block() {
        let r = rec(&["a", "b", "c", "d", "e"], &[0; 5], &[]);
        assert_eq!(extract_control_flow_sequences(&r).unwrap(), vec![vec![0, 1, 2, 3, 4]]);
        let r = rec(&["a", "b", "c", "d"], &[0, 0, 1, 1], &[]);
        assert_eq!(extract_control_flow_sequences(&r).unwrap(), vec![vec![0, 1], vec![2, 3]]);
        let r = rec(&[], &[], &[]);
        assert!(extract_control_flow_sequences(&r).is_err());
    }
}
