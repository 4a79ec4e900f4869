use std::collections::{BTreeMap, HashMap};

use crate::error::{shape, Result};
use crate::layers::Activation;
use crate::tensor::ParamTree;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Square(Var),
    Exp(Var),
    Clamp(Var, f64, f64),
    Act(Var, Activation),
    Concat(Var, Var),
    Outer(Var, Var),
    Slice(Var, usize),
    SumCols(Var),
    SumAll(Var),
    MeanAll(Var),
    LayerNorm { x: Var, gain: Var, shift: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    CosineDistance { x: Var, y: Var, eps: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

/// Gradients of one backward pass, keyed by `(tree label, parameter name)`.
#[derive(Debug, Clone, Default)]
pub struct Grads {
    map: BTreeMap<(String, String), Vec<f64>>,
}

impl Grads {
    pub fn get(&self, label: &str, name: &str) -> Option<&[f64]> {
        self.map.get(&(label.to_string(), name.to_string())).map(Vec::as_slice)
    }

    /// Writes gradients into `tree`. Parameters the loss never reached get
    /// explicit zeros.
    pub fn apply_to(&self, label: &str, tree: &mut ParamTree) -> Result<()> {
        for (name, t) in tree.iter_mut() {
            let g = self.map.get(&(label.to_string(), name.to_string())).cloned().unwrap_or_else(|| vec![0.0; t.len()]);
            t.set_grad(g)?;
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &[f64])> {
        self.map.iter().map(|((l, n), g)| (l.as_str(), n.as_str(), g.as_slice()))
    }
}

/// Operation recorder. Values are 2-D row-major matrices.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(String, String)>,
    param_vars: HashMap<(String, String), Var>,
}

fn gemm(m: usize, k: usize, n: usize, a: (&[f64], isize, isize), b: (&[f64], isize, isize), c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the strides describe in-bounds views of `a`, `b` and `c` for
    // the given dimensions, which every caller derives from node shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { rows, cols, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        (self.nodes[v.0].rows, self.nodes[v.0].cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var> {
        if value.len() != rows * cols {
            return Err(shape(format!("constant {rows}x{cols} given {} values", value.len())));
        }
        Ok(self.push(rows, cols, value, Op::Leaf))
    }

    /// Records parameter `name` of `tree` under `label`. Recording the same
    /// parameter twice returns the same handle.
    pub fn param(&mut self, label: &str, tree: &ParamTree, name: &str) -> Result<Var> {
        let key = (label.to_string(), name.to_string());
        if let Some(&v) = self.param_vars.get(&key) {
            return Ok(v);
        }
        let t = tree.get(name).ok_or_else(|| shape(format!("missing parameter {name}")))?;
        let (r, c) = t.matrix_dims();
        let idx = self.params.len();
        self.params.push(key.clone());
        let v = self.push(r, c, t.data().to_vec(), Op::Param(idx));
        self.param_vars.insert(key, v);
        Ok(v)
    }

    /// Copy of `x` that blocks gradient flow.
    pub fn detach(&mut self, x: Var) -> Var {
        let n = &self.nodes[x.0];
        let (r, c, v) = (n.rows, n.cols, n.value.clone());
        self.push(r, c, v, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(shape(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, (self.value(a), k as isize, 1), (self.value(b), n as isize, 1), &mut out);
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    fn same_dims(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let (da, db) = (self.dims(a), self.dims(b));
        if da != db {
            return Err(shape(format!("{what}: {da:?} vs {db:?}")));
        }
        Ok(da)
    }

    fn row_dims(&self, x: Var, r: Var, what: &str) -> Result<(usize, usize)> {
        let (m, n) = self.dims(x);
        if self.dims(r) != (1, n) {
            return Err(shape(format!("{what}: row {:?} against {m}x{n}", self.dims(r))));
        }
        Ok((m, n))
    }

    /// `x + 1·b` with `b` a single row.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = self.row_dims(x, b, "add_row")?;
        let bv = self.value(b);
        let out: Vec<f64> = self.value(x).chunks(n).flat_map(|r| r.iter().zip(bv).map(|(a, b)| a + b)).collect();
        Ok(self.push(m, n, out, Op::AddRow(x, b)))
    }

    /// Each row of `x` scaled elementwise by the row `r`.
    pub fn mul_row(&mut self, x: Var, r: Var) -> Result<Var> {
        let (m, n) = self.row_dims(x, r, "mul_row")?;
        let rv = self.value(r);
        let out: Vec<f64> = self.value(x).chunks(n).flat_map(|row| row.iter().zip(rv).map(|(a, b)| a * b)).collect();
        Ok(self.push(m, n, out, Op::MulRow(x, r)))
    }

    /// Row `i` of `x` scaled by `c[i]`, with `c` a column.
    pub fn mul_col(&mut self, x: Var, c: Var) -> Result<Var> {
        let (m, n) = self.dims(x);
        if self.dims(c) != (m, 1) {
            return Err(shape(format!("mul_col: column {:?} against {m}x{n}", self.dims(c))));
        }
        let cv = self.value(c);
        let out: Vec<f64> =
            self.value(x).chunks(n.max(1)).zip(cv).flat_map(|(row, &s)| row.iter().map(move |a| a * s)).collect();
        Ok(self.push(m, n, out, Op::MulCol(x, c)))
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (m, n) = self.same_dims(a, b, what)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.push(m, n, out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (m, n) = self.dims(x);
        let out = self.value(x).iter().map(|&v| f(v)).collect();
        self.push(m, n, out, op)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.map(x, |v| v * v, Op::Square(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.map(x, f64::exp, Op::Exp(x))
    }

    /// Clamp to `[lo, hi]`; gradient passes only strictly inside.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.map(x, |v| v.clamp(lo, hi), Op::Clamp(x, lo, hi))
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Var {
        if act == Activation::Identity {
            return x;
        }
        self.map(x, |v| act.apply(v), Op::Act(x, act))
    }

    /// `[a ‖ b]` along columns.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, na) = self.dims(a);
        let (mb, nb) = self.dims(b);
        if ma != mb {
            return Err(shape(format!("concat rows {ma} vs {mb}")));
        }
        let mut out = Vec::with_capacity(ma * (na + nb));
        let (va, vb) = (self.value(a), self.value(b));
        for i in 0..ma {
            out.extend_from_slice(&va[i * na..(i + 1) * na]);
            out.extend_from_slice(&vb[i * nb..(i + 1) * nb]);
        }
        Ok(self.push(ma, na + nb, out, Op::Concat(a, b)))
    }

    /// Row-wise outer product: row `i` is `x_i ⊗ y_i` flattened, `x` index major.
    pub fn outer(&mut self, x: Var, y: Var) -> Result<Var> {
        let (m, nx) = self.dims(x);
        let (my, ny) = self.dims(y);
        if m != my {
            return Err(shape(format!("outer rows {m} vs {my}")));
        }
        let (vx, vy) = (self.value(x), self.value(y));
        let mut out = Vec::with_capacity(m * nx * ny);
        for i in 0..m {
            for p in 0..nx {
                let a = vx[i * nx + p];
                out.extend(vy[i * ny..(i + 1) * ny].iter().map(|b| a * b));
            }
        }
        Ok(self.push(m, nx * ny, out, Op::Outer(x, y)))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if start > end || end > n {
            return Err(shape(format!("slice {start}..{end} of {n} columns")));
        }
        let w = end - start;
        let v = self.value(x);
        let out: Vec<f64> = (0..m).flat_map(|i| v[i * n + start..i * n + end].iter().copied()).collect();
        Ok(self.push(m, w, out, Op::Slice(x, start)))
    }

    /// Row sums as an `m×1` column.
    pub fn sum_cols(&mut self, x: Var) -> Var {
        let (m, n) = self.dims(x);
        let out = self.value(x).chunks(n.max(1)).take(m).map(|r| r.iter().sum()).collect();
        self.push(m, 1, out, Op::SumCols(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        self.push(1, 1, vec![s], Op::SumAll(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().sum::<f64>() / v.len().max(1) as f64;
        self.push(1, 1, vec![s], Op::MeanAll(x))
    }

    /// Per-row normalization to zero mean and unit variance, then
    /// `gain ⊙ x̂ + shift`.
    pub fn layernorm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.row_dims(x, gain, "layernorm gain")?;
        self.row_dims(x, shift, "layernorm shift")?;
        let (g, b) = (self.value(gain), self.value(shift));
        let mut xhat = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for row in self.value(x).chunks(n) {
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for (j, v) in row.iter().enumerate() {
                let h = (v - mu) * inv;
                xhat.push(h);
                out.push(h * g[j] + b[j]);
            }
        }
        Ok(self.push(m, n, out, Op::LayerNorm { x, gain, shift, xhat, inv_std }))
    }

    /// Row-wise `1 − ⟨x, y⟩ / (‖x‖‖y‖ + ε)` as an `m×1` column.
    pub fn cosine_distance(&mut self, x: Var, y: Var, eps: f64) -> Result<Var> {
        let (m, n) = self.same_dims(x, y, "cosine_distance")?;
        let out = self
            .value(x)
            .chunks(n.max(1))
            .zip(self.value(y).chunks(n.max(1)))
            .take(m)
            .map(|(a, b)| {
                let (dot, na, nb) = dot_norms(a, b);
                1.0 - dot / (na * nb + eps)
            })
            .collect();
        Ok(self.push(m, 1, out, Op::CosineDistance { x, y, eps }))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.dims(loss) != (1, 1) {
            return Err(shape("backward needs a scalar loss"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Grads::default();

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let (m, n) = (node.rows, node.cols);
            let len_of = |v: Var| self.nodes[v.0].value.len();
            match &node.op {
                Op::Leaf => {}
                Op::Param(idx) => {
                    let key = self.params[*idx].clone();
                    out.map.insert(key, g);
                }
                Op::MatMul(a, b) => {
                    let k = self.nodes[a.0].cols;
                    let (va, vb) = (self.value(*a), self.value(*b));
                    // dA = dC·Bᵀ, dB = Aᵀ·dC
                    let ga = acc(&mut grads, *a, m * k);
                    gemm(m, n, k, (&g, n as isize, 1), (vb, 1, n as isize), ga);
                    let gb = acc(&mut grads, *b, k * n);
                    gemm(k, m, n, (va, 1, k as isize), (&g, n as isize, 1), gb);
                }
                Op::AddRow(x, b) => {
                    let gx = acc(&mut grads, *x, m * n);
                    gx.iter_mut().zip(&g).for_each(|(a, d)| *a += d);
                    let gb = acc(&mut grads, *b, n);
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(a, d)| *a += d);
                    }
                }
                Op::MulRow(x, r) => {
                    let (vx, vr) = (self.value(*x), self.value(*r));
                    let gx = acc(&mut grads, *x, m * n);
                    for (idx, d) in g.iter().enumerate() {
                        gx[idx] += d * vr[idx % n];
                    }
                    let gr = acc(&mut grads, *r, n);
                    for (idx, d) in g.iter().enumerate() {
                        gr[idx % n] += d * vx[idx];
                    }
                }
                Op::MulCol(x, c) => {
                    let (vx, vc) = (self.value(*x), self.value(*c));
                    let gx = acc(&mut grads, *x, m * n);
                    for (idx, d) in g.iter().enumerate() {
                        gx[idx] += d * vc[idx / n];
                    }
                    let gc = acc(&mut grads, *c, m);
                    for (idx, d) in g.iter().enumerate() {
                        gc[idx / n] += d * vx[idx];
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        let gv = acc(&mut grads, v, m * n);
                        gv.iter_mut().zip(&g).for_each(|(s, d)| *s += d);
                    }
                }
                Op::Sub(a, b) => {
                    let ga = acc(&mut grads, *a, m * n);
                    ga.iter_mut().zip(&g).for_each(|(s, d)| *s += d);
                    let gb = acc(&mut grads, *b, m * n);
                    gb.iter_mut().zip(&g).for_each(|(s, d)| *s -= d);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = acc(&mut grads, *a, m * n);
                    for ((s, d), y) in ga.iter_mut().zip(&g).zip(vb) {
                        *s += d * y;
                    }
                    let gb = acc(&mut grads, *b, m * n);
                    for ((s, d), x) in gb.iter_mut().zip(&g).zip(va) {
                        *s += d * x;
                    }
                }
                Op::Scale(x, c) => {
                    let gx = acc(&mut grads, *x, m * n);
                    gx.iter_mut().zip(&g).for_each(|(s, d)| *s += d * c);
                }
                Op::AddScalar(x) => {
                    let gx = acc(&mut grads, *x, m * n);
                    gx.iter_mut().zip(&g).for_each(|(s, d)| *s += d);
                }
                Op::Square(x) => {
                    let vx = self.value(*x);
                    let gx = acc(&mut grads, *x, m * n);
                    for ((s, d), v) in gx.iter_mut().zip(&g).zip(vx) {
                        *s += 2.0 * d * v;
                    }
                }
                Op::Exp(x) => {
                    let gx = acc(&mut grads, *x, m * n);
                    for ((s, d), y) in gx.iter_mut().zip(&g).zip(&node.value) {
                        *s += d * y;
                    }
                }
                Op::Clamp(x, lo, hi) => {
                    let vx = self.value(*x);
                    let gx = acc(&mut grads, *x, m * n);
                    for ((s, d), v) in gx.iter_mut().zip(&g).zip(vx) {
                        if v > lo && v < hi {
                            *s += d;
                        }
                    }
                }
                Op::Act(x, act) => {
                    let vx = self.value(*x);
                    let gx = acc(&mut grads, *x, m * n);
                    for (((s, d), v), y) in gx.iter_mut().zip(&g).zip(vx).zip(&node.value) {
                        *s += d * act.derivative(*v, *y);
                    }
                }
                Op::Concat(a, b) => {
                    let na = self.nodes[a.0].cols;
                    let nb = n - na;
                    let ga = acc(&mut grads, *a, m * na);
                    for i in 0..m {
                        for j in 0..na {
                            ga[i * na + j] += g[i * n + j];
                        }
                    }
                    let gb = acc(&mut grads, *b, m * nb);
                    for i in 0..m {
                        for j in 0..nb {
                            gb[i * nb + j] += g[i * n + na + j];
                        }
                    }
                }
                Op::Outer(x, y) => {
                    let nx = self.nodes[x.0].cols;
                    let ny = self.nodes[y.0].cols;
                    let (vx, vy) = (self.value(*x), self.value(*y));
                    let mut dx = vec![0.0; m * nx];
                    let mut dy = vec![0.0; m * ny];
                    for i in 0..m {
                        for p in 0..nx {
                            for q in 0..ny {
                                let d = g[i * n + p * ny + q];
                                dx[i * nx + p] += d * vy[i * ny + q];
                                dy[i * ny + q] += d * vx[i * nx + p];
                            }
                        }
                    }
                    let gx = acc(&mut grads, *x, m * nx);
                    gx.iter_mut().zip(&dx).for_each(|(s, d)| *s += d);
                    let gy = acc(&mut grads, *y, m * ny);
                    gy.iter_mut().zip(&dy).for_each(|(s, d)| *s += d);
                }
                Op::Slice(x, start) => {
                    let nx = self.nodes[x.0].cols;
                    let gx = acc(&mut grads, *x, m * nx);
                    for i in 0..m {
                        for j in 0..n {
                            gx[i * nx + start + j] += g[i * n + j];
                        }
                    }
                }
                Op::SumCols(x) => {
                    let nx = self.nodes[x.0].cols;
                    let gx = acc(&mut grads, *x, m * nx);
                    for (idx, s) in gx.iter_mut().enumerate() {
                        *s += g[idx / nx];
                    }
                }
                Op::SumAll(x) => {
                    let len = len_of(*x);
                    let gx = acc(&mut grads, *x, len);
                    gx.iter_mut().for_each(|s| *s += g[0]);
                }
                Op::MeanAll(x) => {
                    let len = len_of(*x);
                    let gx = acc(&mut grads, *x, len);
                    let d = g[0] / len.max(1) as f64;
                    gx.iter_mut().for_each(|s| *s += d);
                }
                Op::LayerNorm { x, gain, shift, xhat, inv_std } => {
                    let gv = self.value(*gain);
                    let mut dx = vec![0.0; m * n];
                    for i in 0..m {
                        let row = i * n..(i + 1) * n;
                        let dh: Vec<f64> = g[row.clone()].iter().zip(gv).map(|(d, w)| d * w).collect();
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_h: f64 = dh.iter().zip(&xhat[row.clone()]).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dx[i * n + j] =
                                inv_std[i] / n as f64 * (n as f64 * dh[j] - sum_dh - xhat[i * n + j] * sum_dh_h);
                        }
                    }
                    let gx = acc(&mut grads, *x, m * n);
                    gx.iter_mut().zip(&dx).for_each(|(s, d)| *s += d);
                    let gg = acc(&mut grads, *gain, n);
                    for (idx, d) in g.iter().enumerate() {
                        gg[idx % n] += d * xhat[idx];
                    }
                    let gs = acc(&mut grads, *shift, n);
                    for (idx, d) in g.iter().enumerate() {
                        gs[idx % n] += d;
                    }
                }
                Op::CosineDistance { x, y, eps } => {
                    let w = self.nodes[x.0].cols;
                    let (vx, vy) = (self.value(*x), self.value(*y));
                    let mut dx = vec![0.0; m * w];
                    let mut dy = vec![0.0; m * w];
                    for i in 0..m {
                        let (a, b) = (&vx[i * w..(i + 1) * w], &vy[i * w..(i + 1) * w]);
                        let (dot, na, nb) = dot_norms(a, b);
                        let den = na * nb + eps;
                        // ∂(dot/den)/∂a = b/den − dot·nb/den² · a/‖a‖
                        let ca = if na > 0.0 { dot * nb / (den * den * na) } else { 0.0 };
                        let cb = if nb > 0.0 { dot * na / (den * den * nb) } else { 0.0 };
                        for j in 0..w {
                            dx[i * w + j] = -g[i] * (b[j] / den - ca * a[j]);
                            dy[i * w + j] = -g[i] * (a[j] / den - cb * b[j]);
                        }
                    }
                    let gx = acc(&mut grads, *x, m * w);
                    gx.iter_mut().zip(&dx).for_each(|(s, d)| *s += d);
                    let gy = acc(&mut grads, *y, m * w);
                    gy.iter_mut().zip(&dy).for_each(|(s, d)| *s += d);
                }
            }
        }
        Ok(out)
    }
}

fn dot_norms(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        aa += x * x;
        bb += y * y;
    }
    (dot, aa.sqrt(), bb.sqrt())
}
