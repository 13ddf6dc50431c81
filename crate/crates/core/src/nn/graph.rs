//! A small reverse-mode autodiff tape over [`Mat`] values.
//!
//! A [`Graph`] borrows a frozen [`ParamStore`]; parameter leaves are
//! materialized on first use and their gradients come back from
//! [`Graph::backward`] as an owned [`Gradients`] map, so many graphs can run
//! in parallel against one store.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mat::{dot, Mat};
use super::params::{Gradients, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(String),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Transpose(Var),
    SoftmaxRows(Var),
    LayerNormRows { x: Var, xhat: Mat, inv_std: Vec<f64> },
    GatherRows { table: Var, ids: Vec<usize> },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    MeanRows { x: Var, rows: Vec<usize> },
    MaxRows { x: Var, argmax: Vec<usize> },
    NeighborMean { x: Var, hoods: Arc<Vec<Vec<usize>>> },
    Unfold { x: Var, width: usize },
    Sum(Var),
    CrossEntropy { logits: Var, targets: Vec<(usize, usize)>, probs: Mat },
    BceLogit { x: Var, label: f64 },
    Cosine { a: Var, b: Var },
}

#[derive(Debug)]
struct Node {
    value: Mat,
    op: Op,
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    training: bool,
    rng: ChaCha8Rng,
}

impl<'p> Graph<'p> {
    /// Evaluation-mode graph: dropout is the identity.
    pub fn new(store: &'p ParamStore) -> Self {
        Graph { store, nodes: Vec::new(), params: HashMap::new(), training: false, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    /// Training-mode graph; `seed` drives the dropout masks.
    pub fn training(store: &'p ParamStore, seed: u64) -> Self {
        Graph { store, nodes: Vec::new(), params: HashMap::new(), training: true, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Mat::scalar(v))
    }

    pub fn param(&mut self, name: &str) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let value = self.store.value(name).clone();
        let v = self.push(value, Op::Param(name.to_string()));
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape());
        let v = Mat::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(p, q)| p - q).collect());
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape());
        let v = Mat::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect());
        self.push(v, Op::Mul(a, b))
    }

    /// Adds the `1 x cols` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        let (x, row) = (self.value(a), self.value(r));
        assert_eq!((row.rows, row.cols), (1, x.cols), "add_row shape");
        let mut v = x.clone();
        for i in 0..v.rows {
            for (o, b) in v.row_mut(i).iter_mut().zip(&row.data) {
                *o += b;
            }
        }
        self.push(v, Op::AddRow(a, r))
    }

    /// Multiplies every row of `a` element-wise by the `1 x cols` row `r`.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Var {
        let (x, row) = (self.value(a), self.value(r));
        assert_eq!((row.rows, row.cols), (1, x.cols), "mul_row shape");
        let mut v = x.clone();
        for i in 0..v.rows {
            for (o, b) in v.row_mut(i).iter_mut().zip(&row.data) {
                *o *= b;
            }
        }
        self.push(v, Op::MulRow(a, r))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(v, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    /// Row-wise softmax. Entries equal to `-inf` get probability zero; a row
    /// with no finite entry is all zeros.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Mat::zeros(x.rows, x.cols);
        for i in 0..x.rows {
            let row = x.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let out = v.row_mut(i);
            let mut z = 0.0;
            for (o, &r) in out.iter_mut().zip(row) {
                *o = if r == f64::NEG_INFINITY { 0.0 } else { (r - max).exp() };
                z += *o;
            }
            for o in out.iter_mut() {
                *o /= z;
            }
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Row-wise normalization to zero mean and unit variance (no affine).
    pub fn layer_norm_rows(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let n = x.cols as f64;
        let mut xhat = Mat::zeros(x.rows, x.cols);
        let mut inv_std = Vec::with_capacity(x.rows);
        for i in 0..x.rows {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            for (o, r) in xhat.row_mut(i).iter_mut().zip(row) {
                *o = (r - mean) * is;
            }
            inv_std.push(is);
        }
        self.push(xhat.clone(), Op::LayerNormRows { x: a, xhat, inv_std })
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut v = Mat::zeros(ids.len(), t.cols);
        for (i, &id) in ids.iter().enumerate() {
            v.row_mut(i).copy_from_slice(t.row(id));
        }
        self.push(v, Op::GatherRows { table, ids: ids.to_vec() })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut v = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows, rows, "concat_cols row mismatch");
            for i in 0..rows {
                v.row_mut(i)[off..off + m.cols].copy_from_slice(m.row(i));
            }
            off += m.cols;
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols, "concat_rows col mismatch");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        self.push(Mat::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols);
        let mut v = Mat::zeros(x.rows, len);
        for i in 0..x.rows {
            v.row_mut(i).copy_from_slice(&x.row(i)[start..start + len]);
        }
        self.push(v, Op::SliceCols { x: a, start })
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.rows);
        let v = Mat::from_vec(len, x.cols, x.data[start * x.cols..(start + len) * x.cols].to_vec());
        self.push(v, Op::SliceRows { x: a, start })
    }

    /// Mean over the listed rows, as a `1 x cols` row.
    pub fn mean_rows_of(&mut self, a: Var, rows: &[usize]) -> Var {
        let x = self.value(a);
        assert!(!rows.is_empty(), "mean over zero rows");
        let mut v = Mat::zeros(1, x.cols);
        for &r in rows {
            for (o, xv) in v.data.iter_mut().zip(x.row(r)) {
                *o += xv;
            }
        }
        let n = rows.len() as f64;
        v.data.iter_mut().for_each(|o| *o /= n);
        self.push(v, Op::MeanRows { x: a, rows: rows.to_vec() })
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let rows: Vec<usize> = (0..self.value(a).rows).collect();
        self.mean_rows_of(a, &rows)
    }

    /// Column-wise max over rows; ties resolve to the lowest row index.
    pub fn max_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        assert!(x.rows > 0, "max over zero rows");
        let mut argmax = vec![0usize; x.cols];
        let mut v = Mat::from_vec(1, x.cols, x.row(0).to_vec());
        for i in 1..x.rows {
            for (j, &xv) in x.row(i).iter().enumerate() {
                if xv > v.data[j] {
                    v.data[j] = xv;
                    argmax[j] = i;
                }
            }
        }
        self.push(v, Op::MaxRows { x: a, argmax })
    }

    /// Row `v` of the output is the mean of the rows of `a` listed in
    /// `hoods[v]`, or zeros when the list is empty.
    pub fn neighbor_mean(&mut self, a: Var, hoods: Arc<Vec<Vec<usize>>>) -> Var {
        let x = self.value(a);
        let mut v = Mat::zeros(hoods.len(), x.cols);
        for (r, hood) in hoods.iter().enumerate() {
            if hood.is_empty() {
                continue;
            }
            let out = v.row_mut(r);
            for &u in hood {
                for (o, xv) in out.iter_mut().zip(x.row(u)) {
                    *o += xv;
                }
            }
            let n = hood.len() as f64;
            out.iter_mut().for_each(|o| *o /= n);
        }
        self.push(v, Op::NeighborMean { x: a, hoods })
    }

    /// Sliding windows of `width` consecutive rows, each flattened into one
    /// output row: `(rows - width + 1) x (width * cols)`.
    pub fn unfold_rows(&mut self, a: Var, width: usize) -> Var {
        let x = self.value(a);
        assert!(width >= 1 && x.rows >= width, "unfold width {width} over {} rows", x.rows);
        let n = x.rows - width + 1;
        let span = width * x.cols;
        let mut v = Mat::zeros(n, span);
        for j in 0..n {
            v.row_mut(j).copy_from_slice(&x.data[j * x.cols..j * x.cols + span]);
        }
        self.push(v, Op::Unfold { x: a, width })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Mat::scalar(s), Op::Sum(a))
    }

    /// Sum over `(row, class)` targets of `-log softmax(logits[row])[class]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[(usize, usize)]) -> Var {
        let x = self.value(logits);
        let mut probs = Mat::zeros(x.rows, x.cols);
        let mut log_z = vec![0.0; x.rows];
        for i in 0..x.rows {
            let row = x.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|r| (r - max).exp()).sum();
            log_z[i] = max + z.ln();
            for (p, r) in probs.row_mut(i).iter_mut().zip(row) {
                *p = (r - log_z[i]).exp();
            }
        }
        let loss: f64 = targets.iter().map(|&(r, c)| log_z[r] - x.get(r, c)).sum();
        self.push(Mat::scalar(loss), Op::CrossEntropy { logits, targets: targets.to_vec(), probs })
    }

    /// Binary cross-entropy of a `1 x 1` logit against `label` in {0, 1}.
    pub fn bce_logit(&mut self, x: Var, label: f64) -> Var {
        let z = self.value(x).item();
        // softplus(z) - label * z, computed stably
        let sp = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
        self.push(Mat::scalar(sp - label * z), Op::BceLogit { x, label })
    }

    /// Cosine similarity of two `1 x n` rows. Zero-norm inputs give 0.
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape());
        let c = super::mat::cosine(&x.data, &y.data);
        self.push(Mat::scalar(c), Op::Cosine { a, b })
    }

    /// Inverted dropout; identity outside training mode.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if !self.training || p <= 0.0 {
            return a;
        }
        let (r, c) = self.value(a).shape();
        let keep = 1.0 - p;
        let mask: Vec<f64> = (0..r * c).map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let m = self.constant(Mat::from_vec(r, c, mask));
        self.mul(a, m)
    }

    /// Affine map `x * W + b` with parameters `name.w`, `name.b`.
    pub fn affine(&mut self, x: Var, name: &str) -> Var {
        let w = self.param(&format!("{name}.w"));
        let b = self.param(&format!("{name}.b"));
        let xw = self.matmul(x, w);
        self.add_row(xw, b)
    }

    /// Hash of every branch taken by non-smooth ops: the sign of each ReLU
    /// input and each max-pool argmax. Two evaluations with equal patterns
    /// lie on the same differentiable piece.
    pub fn branch_pattern(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::hash::DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(a) => {
                    for &x in &self.value(*a).data {
                        (x > 0.0).hash(&mut h);
                    }
                }
                Op::MaxRows { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Backpropagates from the scalar `root` and returns parameter gradients.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).shape(), (1, 1), "backward from a non-scalar");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::scalar(1.0));
        let mut out = Gradients::default();

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param(name) => out.add(name, &g),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = zip_map(&g, y, |gi, yi| gi * yi);
                    let gb = zip_map(&g, x, |gi, xi| gi * xi);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, r) => {
                    let mut gr = Mat::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for (o, gi) in gr.data.iter_mut().zip(g.row(i)) {
                            *o += gi;
                        }
                    }
                    acc(&mut grads, *r, gr);
                    acc(&mut grads, *a, g);
                }
                Op::MulRow(a, r) => {
                    let (x, row) = (self.value(*a), self.value(*r));
                    let mut gr = Mat::zeros(1, g.cols);
                    let mut ga = g.clone();
                    for i in 0..g.rows {
                        for j in 0..g.cols {
                            gr.data[j] += g.get(i, j) * x.get(i, j);
                            ga.data[i * g.cols + j] *= row.data[j];
                        }
                    }
                    acc(&mut grads, *r, gr);
                    acc(&mut grads, *a, ga);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.map(|x| x * s)),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, zip_map(&g, x, |gi, xi| if xi > 0.0 { gi } else { 0.0 }));
                }
                Op::Tanh(a) => {
                    acc(&mut grads, *a, zip_map(&g, &node.value, |gi, yi| gi * (1.0 - yi * yi)));
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Mat::zeros(y.rows, y.cols);
                    for i in 0..y.rows {
                        let s = dot(g.row(i), y.row(i));
                        for (j, o) in ga.row_mut(i).iter_mut().enumerate() {
                            *o = y.get(i, j) * (g.get(i, j) - s);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNormRows { x, xhat, inv_std } => {
                    let n = xhat.cols as f64;
                    let mut gx = Mat::zeros(xhat.rows, xhat.cols);
                    for i in 0..xhat.rows {
                        let gr = g.row(i);
                        let hr = xhat.row(i);
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gh = dot(gr, hr) / n;
                        for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
                            *o = inv_std[i] * (gr[j] - mean_g - hr[j] * mean_gh);
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::GatherRows { table, ids } => {
                    let t = self.value(*table);
                    let mut gt = Mat::zeros(t.rows, t.cols);
                    for (i, &id) in ids.iter().enumerate() {
                        for (o, gi) in gt.row_mut(id).iter_mut().zip(g.row(i)) {
                            *o += gi;
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let c = self.value(p).cols;
                        let mut gp = Mat::zeros(g.rows, c);
                        for i in 0..g.rows {
                            gp.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                        }
                        off += c;
                        acc(&mut grads, p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let r = self.value(p).rows;
                        let gp = Mat::from_vec(r, g.cols, g.data[off * g.cols..(off + r) * g.cols].to_vec());
                        off += r;
                        acc(&mut grads, p, gp);
                    }
                }
                Op::SliceCols { x, start } => {
                    let src = self.value(*x);
                    let mut gx = Mat::zeros(src.rows, src.cols);
                    for i in 0..g.rows {
                        gx.row_mut(i)[*start..*start + g.cols].copy_from_slice(g.row(i));
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::SliceRows { x, start } => {
                    let src = self.value(*x);
                    let mut gx = Mat::zeros(src.rows, src.cols);
                    gx.data[start * src.cols..(start + g.rows) * src.cols].copy_from_slice(&g.data);
                    acc(&mut grads, *x, gx);
                }
                Op::MeanRows { x, rows } => {
                    let src = self.value(*x);
                    let mut gx = Mat::zeros(src.rows, src.cols);
                    let n = rows.len() as f64;
                    for &r in rows {
                        for (o, gi) in gx.row_mut(r).iter_mut().zip(&g.data) {
                            *o += gi / n;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::MaxRows { x, argmax } => {
                    let src = self.value(*x);
                    let mut gx = Mat::zeros(src.rows, src.cols);
                    for (j, &r) in argmax.iter().enumerate() {
                        gx.data[r * src.cols + j] += g.data[j];
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::NeighborMean { x, hoods } => {
                    let src = self.value(*x);
                    let mut gx = Mat::zeros(src.rows, src.cols);
                    for (r, hood) in hoods.iter().enumerate() {
                        if hood.is_empty() {
                            continue;
                        }
                        let n = hood.len() as f64;
                        for &u in hood {
                            for (o, gi) in gx.row_mut(u).iter_mut().zip(g.row(r)) {
                                *o += gi / n;
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Unfold { x, width } => {
                    let src = self.value(*x);
                    let mut gx = Mat::zeros(src.rows, src.cols);
                    let span = width * src.cols;
                    for j in 0..g.rows {
                        let dst = &mut gx.data[j * src.cols..j * src.cols + span];
                        for (o, gi) in dst.iter_mut().zip(g.row(j)) {
                            *o += gi;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    acc(&mut grads, *a, Mat::filled(r, c, g.item()));
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let s = g.item();
                    let mut gl = Mat::zeros(probs.rows, probs.cols);
                    for &(r, c) in targets {
                        for (o, p) in gl.row_mut(r).iter_mut().zip(probs.row(r)) {
                            *o += s * p;
                        }
                        gl.data[r * probs.cols + c] -= s;
                    }
                    acc(&mut grads, *logits, gl);
                }
                Op::BceLogit { x, label } => {
                    let z = self.value(*x).item();
                    let sig = 1.0 / (1.0 + (-z).exp());
                    acc(&mut grads, *x, Mat::scalar(g.item() * (sig - label)));
                }
                Op::Cosine { a, b } => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let nx = super::mat::norm(&x.data);
                    let ny = super::mat::norm(&y.data);
                    if nx > 0.0 && ny > 0.0 {
                        let c = node.value.item();
                        let s = g.item();
                        let ga = Mat::from_vec(
                            x.rows,
                            x.cols,
                            x.data.iter().zip(&y.data).map(|(xi, yi)| s * (yi / (nx * ny) - c * xi / (nx * nx))).collect(),
                        );
                        let gb = Mat::from_vec(
                            y.rows,
                            y.cols,
                            x.data.iter().zip(&y.data).map(|(xi, yi)| s * (xi / (nx * ny) - c * yi / (ny * ny))).collect(),
                        );
                        acc(&mut grads, *a, ga);
                        acc(&mut grads, *b, gb);
                    }
                }
            }
        }
        out
    }
}

fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    Mat::from_vec(a.rows, a.cols, a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect())
}
