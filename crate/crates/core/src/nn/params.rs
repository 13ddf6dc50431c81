//! Named parameter arrays with gradient and Adam moment buffers, plus the
//! on-disk checkpoint format.
//!
//! A checkpoint is two files: a text manifest listing each array as
//! `<kind> <name> <rows> <cols> f64 <byte offset>`, and a flat payload of
//! little-endian `f64` values. Loading a saved store is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::mat::Mat;
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "params.manifest";
pub const PAYLOAD_FILE: &str = "params.bin";
const MANIFEST_HEADER: &str = "# fnname checkpoint v1";

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Mat,
    pub grad: Mat,
    pub adam_m: Mat,
    pub adam_v: Mat,
}

impl Param {
    fn new(value: Mat) -> Self {
        let (r, c) = value.shape();
        Param { value, grad: Mat::zeros(r, c), adam_m: Mat::zeros(r, c), adam_v: Mat::zeros(r, c) }
    }
}

/// Gradients produced by one backward pass, keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub by_name: BTreeMap<String, Mat>,
}

impl Gradients {
    pub fn add(&mut self, name: &str, g: &Mat) {
        match self.by_name.get_mut(name) {
            Some(acc) => acc.add_assign(g),
            None => {
                self.by_name.insert(name.to_string(), g.clone());
            }
        }
    }

    pub fn merge(&mut self, other: &Gradients) {
        for (name, g) in &other.by_name {
            self.add(name, g);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.by_name.values_mut() {
            g.scale_assign(s);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.by_name.get(name)
    }

    /// Squared L2 norm over all parameters whose name starts with `prefix`.
    pub fn sq_norm_with_prefix(&self, prefix: &str) -> f64 {
        self.by_name
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, g)| g.data.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    /// Sums in the given order, so the result does not depend on how the
    /// parts were scheduled.
    pub fn sum_ordered(parts: impl IntoIterator<Item = Gradients>) -> Gradients {
        let mut acc = Gradients::default();
        for p in parts {
            acc.merge(&p);
        }
        acc
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Param>,
    pub rng_seed: u64,
    /// Number of optimizer steps applied so far.
    pub step: u64,
}

impl ParamStore {
    pub fn new(rng_seed: u64) -> Self {
        ParamStore { entries: BTreeMap::new(), rng_seed, step: 0 }
    }

    pub fn insert(&mut self, name: &str, value: Mat) {
        assert!(!self.entries.contains_key(name), "duplicate parameter `{name}`");
        self.entries.insert(name.to_string(), Param::new(value));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn value(&self, name: &str) -> &Mat {
        &self.entries.get(name).unwrap_or_else(|| panic!("missing parameter `{name}`")).value
    }

    pub fn value_mut(&mut self, name: &str) -> &mut Mat {
        &mut self.entries.get_mut(name).unwrap_or_else(|| panic!("missing parameter `{name}`")).value
    }

    pub fn param(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Param)> {
        self.entries.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|p| p.value.data.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.data.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds `grads` into the gradient buffers. Names not present in the
    /// store are an error.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (name, g) in &grads.by_name {
            let p = self
                .entries
                .get_mut(name)
                .ok_or_else(|| Error::invalid(format!("gradient for unknown parameter `{name}`")))?;
            p.grad.add_assign(g);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(|p| p.value.is_finite())
    }

    /// Copies values (not moments) from `other` for every name both share.
    pub fn load_values_from(&mut self, other: &ParamStore) -> usize {
        let mut n = 0;
        for (name, p) in self.entries.iter_mut() {
            if let Some(src) = other.entries.get(name) {
                if src.value.shape() == p.value.shape() {
                    p.value = src.value.clone();
                    n += 1;
                }
            }
        }
        n
    }

    pub fn init_uniform(&mut self, name: &str, rows: usize, cols: usize, fan_in: usize, rng: &mut ChaCha8Rng) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        self.insert(name, Mat::from_vec(rows, cols, data));
    }

    pub fn init_normal(&mut self, name: &str, rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) {
        let normal = Normal::new(0.0, std).expect("valid std");
        let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
        self.insert(name, Mat::from_vec(rows, cols, data));
    }

    pub fn init_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Mat::zeros(rows, cols));
    }

    pub fn init_ones(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Mat::filled(rows, cols, 1.0));
    }

    /// Affine layer `name.w` (in x out) and `name.b` (1 x out).
    pub fn init_affine(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
        self.init_uniform(&format!("{name}.w"), fan_in, fan_out, fan_in, rng);
        self.init_zeros(&format!("{name}.b"), 1, fan_out);
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = String::new();
        manifest.push_str(MANIFEST_HEADER);
        manifest.push('\n');
        manifest.push_str(&format!("seed {}\nstep {}\n", self.rng_seed, self.step));
        let mut payload: Vec<u8> = Vec::with_capacity(self.num_scalars() * 8 * 3);
        for (name, p) in &self.entries {
            for (kind, m) in [("value", &p.value), ("adam_m", &p.adam_m), ("adam_v", &p.adam_v)] {
                manifest.push_str(&format!("{kind} {name} {} {} f64 {}\n", m.rows, m.cols, payload.len()));
                for x in &m.data {
                    payload.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        let mp = dir.join(MANIFEST_FILE);
        fs::write(&mp, manifest).map_err(|e| Error::io(&mp, e))?;
        let pp = dir.join(PAYLOAD_FILE);
        let mut f = fs::File::create(&pp).map_err(|e| Error::io(&pp, e))?;
        f.write_all(&payload).map_err(|e| Error::io(&pp, e))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<ParamStore> {
        let mp = dir.join(MANIFEST_FILE);
        let manifest = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
        let pp = dir.join(PAYLOAD_FILE);
        let payload = fs::read(&pp).map_err(|e| Error::io(&pp, e))?;
        let mut lines = manifest.lines();
        if lines.next() != Some(MANIFEST_HEADER) {
            return Err(Error::Checkpoint(format!("{}: bad header", mp.display())));
        }
        let mut store = ParamStore::new(0);
        let mut partial: BTreeMap<String, [Option<Mat>; 3]> = BTreeMap::new();
        for line in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => continue,
                ["seed", v] => store.rng_seed = parse_num(v, line)?,
                ["step", v] => store.step = parse_num(v, line)?,
                [kind, name, rows, cols, "f64", offset] => {
                    let slot = match *kind {
                        "value" => 0,
                        "adam_m" => 1,
                        "adam_v" => 2,
                        _ => return Err(Error::Checkpoint(format!("unknown entry kind in `{line}`"))),
                    };
                    let rows: usize = parse_num(rows, line)?;
                    let cols: usize = parse_num(cols, line)?;
                    let offset: usize = parse_num(offset, line)?;
                    let end = offset + rows * cols * 8;
                    if end > payload.len() {
                        return Err(Error::Checkpoint(format!("entry `{name}` overruns payload")));
                    }
                    let data = payload[offset..end]
                        .chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                        .collect();
                    partial.entry(name.to_string()).or_default()[slot] = Some(Mat::from_vec(rows, cols, data));
                }
                _ => return Err(Error::Checkpoint(format!("malformed manifest line `{line}`"))),
            }
        }
        for (name, [value, m, v]) in partial {
            let value = value.ok_or_else(|| Error::Checkpoint(format!("`{name}` has no value entry")))?;
            let (r, c) = value.shape();
            let adam_m = m.unwrap_or_else(|| Mat::zeros(r, c));
            let adam_v = v.unwrap_or_else(|| Mat::zeros(r, c));
            if adam_m.shape() != (r, c) || adam_v.shape() != (r, c) {
                return Err(Error::Checkpoint(format!("`{name}` moment shape mismatch")));
            }
            store.entries.insert(name, Param { value, grad: Mat::zeros(r, c), adam_m, adam_v });
        }
        Ok(store)
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Checkpoint(format!("bad number `{s}` in `{line}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn save_load_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::new(42);
        s.init_affine("layer", 3, 4, &mut rng);
        s.init_normal("emb", 5, 2, 0.02, &mut rng);
        s.value_mut("layer.b").data[1] = f64::MIN_POSITIVE;
        s.value_mut("emb").data[0] = -0.0;
        s.step = 17;
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path()).unwrap();
        let back = ParamStore::load(dir.path()).unwrap();
        assert_eq!(back.step, 17);
        assert_eq!(back.rng_seed, 42);
        for (name, p) in s.iter() {
            let q = back.param(name).unwrap();
            let bits = |m: &Mat| m.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&p.value), bits(&q.value), "{name}");
        }
    }

    #[test]
    fn accumulate_rejects_unknown_names() {
        let mut s = ParamStore::new(0);
        s.init_zeros("a", 1, 1);
        let mut g = Gradients::default();
        g.add("b", &Mat::scalar(1.0));
        assert!(s.accumulate(&g).is_err());
    }
}
