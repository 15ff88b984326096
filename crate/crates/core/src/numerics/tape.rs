use std::collections::{BTreeMap, HashMap};

use super::{Array, NumericsError, ParameterStore, Real};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Weighted gather: output element `k` is `sum(w * x[idx])` over row `k`.
#[derive(Debug, Clone)]
pub struct SparseRows<F> {
    offsets: Vec<usize>,
    entries: Vec<(usize, F)>,
}

impl<F: Real> SparseRows<F> {
    pub fn new() -> Self {
        SparseRows {
            offsets: vec![0],
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, entries: impl IntoIterator<Item = (usize, F)>) {
        self.entries.extend(entries);
        self.offsets.push(self.entries.len());
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn row(&self, k: usize) -> &[(usize, F)] {
        &self.entries[self.offsets[k]..self.offsets[k + 1]]
    }
}

impl<F: Real> Default for SparseRows<F> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, F),
    ScaleBy(Var, Var),
    Relu(Var),
    Transpose(Var),
    SumAll(Var),
    MeanRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SparseGather(Var, SparseRows<F>),
    SliceCols(Var, usize),
    Reshape(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Log(Var),
    Sqrt(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<F>,
        inv_std: Vec<F>,
    },
}

#[derive(Debug, Clone)]
struct Node<F> {
    value: Array<F>,
    op: Op<F>,
    needs_grad: bool,
}

/// Record of primitive operations for reverse-mode differentiation.
///
/// Values are computed eagerly; [`Tape::backward`] walks the record in
/// reverse. Constants never receive gradients and operations whose inputs
/// are all constant are not differentiated.
#[derive(Debug, Clone, Default)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    params: HashMap<String, Var>,
    param_order: Vec<(String, Var)>,
}

/// Gradients of a scalar with respect to parameters and tracked inputs.
#[derive(Debug, Clone, Default)]
pub struct Gradients<F> {
    params: BTreeMap<String, Array<F>>,
    inputs: HashMap<Var, Array<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn param(&self, name: &str) -> Option<&Array<F>> {
        self.params.get(name)
    }

    pub fn input(&self, v: Var) -> Option<&Array<F>> {
        self.inputs.get(&v)
    }

    pub fn params(&self) -> impl Iterator<Item = (&str, &Array<F>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Multiplies every parameter gradient by `factor`.
    pub fn scale(&mut self, factor: F) {
        for g in self.params.values_mut() {
            *g = g.map(|x| x * factor);
        }
    }

    /// Sums gradients from another backward pass into this one.
    pub fn accumulate(&mut self, other: Gradients<F>) {
        for (name, g) in other.params {
            match self.params.get_mut(&name) {
                Some(acc) => acc.add_assign(&g),
                None => {
                    self.params.insert(name, g);
                }
            }
        }
    }
}

fn shape_err(op: &'static str, shapes: &[&[usize]]) -> NumericsError {
    NumericsError::shape(op, format!("{shapes:?}"))
}

impl<F: Real> Tape<F> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
            param_order: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Array<F>, op: Op<F>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn rc(&self, v: Var) -> (usize, usize) {
        let a = &self.nodes[v.0].value;
        (a.rows(), a.cols())
    }

    /// A value that is never differentiated.
    pub fn constant(&mut self, value: Array<F>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A differentiable leaf not backed by the parameter store.
    pub fn input(&mut self, value: Array<F>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf for a stored parameter; repeated calls return the same handle.
    pub fn param(&mut self, store: &ParameterStore<F>, name: &str) -> Result<Var, NumericsError> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .value(name)
            .ok_or_else(|| NumericsError::UnknownParameter(name.to_string()))?
            .clone();
        let v = self.push(value, Op::Leaf, true);
        self.params.insert(name.to_string(), v);
        self.param_order.push((name.to_string(), v));
        Ok(v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Result<Array<F>, NumericsError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err(op, &[x.shape(), y.shape()]));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Array::new(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.zip_same("add", a, b, |p, q| p + q)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.zip_same("sub", a, b, |p, q| p - q)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = self.zip_same("mul", a, b, |p, q| p * q)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Mul(a, b), ng))
    }

    /// Adds a `[1, n]` row to every row of an `[m, n]` array.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.rc(a);
        let (r, c) = self.rc(row);
        if r != 1 || c != n {
            return Err(shape_err("add_row", &[self.shape(a), self.shape(row)]));
        }
        let x = self.value(a).data();
        let b = self.value(row).data();
        let data = (0..m * n).map(|k| x[k] + b[k % n]).collect();
        let value = Array::new(vec![m, n], data)?;
        let ng = self.ng(a) || self.ng(row);
        Ok(self.push(value, Op::AddRow(a, row), ng))
    }

    pub fn scale(&mut self, a: Var, c: F) -> Var {
        let value = self.value(a).map(|x| x * c);
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, c), ng)
    }

    /// Multiplies every element by a `[1, 1]` variable.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var, NumericsError> {
        if !self.value(s).is_scalar() {
            return Err(shape_err("scale_by", &[self.shape(a), self.shape(s)]));
        }
        let c = self.value(s).item();
        let value = self.value(a).map(|x| x * c);
        let ng = self.ng(a) || self.ng(s);
        Ok(self.push(value, Op::ScaleBy(a, s), ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > F::zero() { x } else { F::zero() });
        let ng = self.ng(a);
        self.push(value, Op::Relu(a), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let ng = self.ng(a);
        self.push(value, Op::Transpose(a), ng)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array::scalar(self.value(a).sum());
        let ng = self.ng(a);
        self.push(value, Op::SumAll(a), ng)
    }

    /// Column means: `[m, n]` to `[1, n]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, NumericsError> {
        let (m, n) = self.rc(a);
        if m == 0 {
            return Err(shape_err("mean_rows", &[self.shape(a)]));
        }
        let x = self.value(a);
        let inv = F::one() / F::of(m as f64);
        let data = (0..n)
            .map(|c| (0..m).map(|r| x.get(r, c)).sum::<F>() * inv)
            .collect();
        let value = Array::new(vec![1, n], data)?;
        let ng = self.ng(a);
        Ok(self.push(value, Op::MeanRows(a), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let m = parts.first().map_or(0, |&p| self.rc(p).0);
        if parts.is_empty() || parts.iter().any(|&p| self.rc(p).0 != m) {
            let shapes: Vec<&[usize]> = parts.iter().map(|&p| self.shape(p)).collect();
            return Err(shape_err("concat_cols", &shapes));
        }
        let n: usize = parts.iter().map(|&p| self.rc(p).1).sum();
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Array::new(vec![m, n], data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        let n = parts.first().map_or(0, |&p| self.rc(p).1);
        if parts.is_empty() || parts.iter().any(|&p| self.rc(p).1 != n) {
            let shapes: Vec<&[usize]> = parts.iter().map(|&p| self.shape(p)).collect();
            return Err(shape_err("concat_rows", &shapes));
        }
        let m: usize = parts.iter().map(|&p| self.rc(p).0).sum();
        let mut data = Vec::with_capacity(m * n);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let value = Array::new(vec![m, n], data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), ng))
    }

    /// Row lookup, e.g. embedding tables: output row k is `a[idx[k]]`.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var, NumericsError> {
        let (m, n) = self.rc(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(NumericsError::shape(
                "gather_rows",
                format!("index {bad} out of range for {:?}", self.shape(a)),
            ));
        }
        let x = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            data.extend_from_slice(x.row(i));
        }
        let value = Array::new(vec![idx.len(), n], data)?;
        let ng = self.ng(a);
        Ok(self.push(value, Op::GatherRows(a, idx.to_vec()), ng))
    }

    /// Linear combination of flat elements of `a`, reshaped to `shape`.
    pub fn sparse_gather(&mut self, a: Var, rows: SparseRows<F>, shape: &[usize]) -> Result<Var, NumericsError> {
        let total: usize = shape.iter().product();
        let len = self.value(a).len();
        if rows.len() != total || rows.entries.iter().any(|&(i, _)| i >= len) {
            return Err(NumericsError::shape(
                "sparse_gather",
                format!("{} rows for shape {shape:?} over {len} elements", rows.len()),
            ));
        }
        let x = self.value(a).data();
        let data = (0..total)
            .map(|k| rows.row(k).iter().map(|&(i, w)| w * x[i]).sum())
            .collect();
        let value = Array::new(shape.to_vec(), data)?;
        let ng = self.ng(a);
        Ok(self.push(value, Op::SparseGather(a, rows), ng))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let (m, n) = self.rc(a);
        if start + len > n {
            return Err(NumericsError::shape(
                "slice_cols",
                format!("{start}..{} of {:?}", start + len, self.shape(a)),
            ));
        }
        let x = self.value(a);
        let mut data = Vec::with_capacity(m * len);
        for r in 0..m {
            data.extend_from_slice(&x.row(r)[start..start + len]);
        }
        let value = Array::new(vec![m, len], data)?;
        let ng = self.ng(a);
        Ok(self.push(value, Op::SliceCols(a, start), ng))
    }

    /// Same data, new shape.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let x = self.value(a);
        let value = Array::new(shape.to_vec(), x.data().to_vec())
            .map_err(|_| shape_err("reshape", &[x.shape(), shape]))?;
        let ng = self.ng(a);
        Ok(self.push(value, Op::Reshape(a), ng))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        let ng = self.ng(a);
        self.push(value, Op::SoftmaxRows(a), ng)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (m, n) = (x.rows(), x.cols());
        let mut data = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = x.row(r);
            let mx = row.iter().copied().fold(F::neg_infinity(), F::max);
            let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<F>().ln();
            data.extend(row.iter().map(|&v| v - lse));
        }
        let value = Array::new(vec![m, n], data).expect("same shape");
        let ng = self.ng(a);
        self.push(value, Op::LogSoftmaxRows(a), ng)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(F::ln);
        let ng = self.ng(a);
        self.push(value, Op::Log(a), ng)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(F::sqrt);
        let ng = self.ng(a);
        self.push(value, Op::Sqrt(a), ng)
    }

    /// Row-wise layer normalization with `[1, n]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: F) -> Result<Var, NumericsError> {
        let (m, n) = self.rc(x);
        if self.rc(gamma) != (1, n) || self.rc(beta) != (1, n) {
            return Err(shape_err("layer_norm", &[self.shape(x), self.shape(gamma), self.shape(beta)]));
        }
        let xv = self.value(x);
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let nf = F::of(n as f64);
        let mut xhat = Vec::with_capacity(m * n);
        let mut inv_std = Vec::with_capacity(m);
        let mut out = Vec::with_capacity(m * n);
        for r in 0..m {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<F>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / nf;
            let inv = F::one() / (var + eps).sqrt();
            inv_std.push(inv);
            for (c, &v) in row.iter().enumerate() {
                let h = (v - mean) * inv;
                xhat.push(h);
                out.push(h * g[c] + b[c]);
            }
        }
        let value = Array::new(vec![m, n], out)?;
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// Reverse pass from a scalar. Consumes the tape; read any values
    /// needed afterwards before calling this.
    pub fn backward(self, loss: Var) -> Result<Gradients<F>, NumericsError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(NumericsError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Array<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array::full(lv.shape(), F::one()));
        let mut out = Gradients::default();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
        }

        for (name, v) in &self.param_order {
            if v.0 <= loss.0 {
                let g = grads[v.0]
                    .take()
                    .unwrap_or_else(|| Array::zeros(self.nodes[v.0].value.shape()));
                out.params.insert(name.clone(), g);
            }
        }
        for (i, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                if matches!(self.nodes[i].op, Op::Leaf) {
                    out.inputs.insert(Var(i), g);
                }
            }
        }
        Ok(out)
    }

    fn acc(&self, grads: &mut [Option<Array<F>>], v: Var, g: Array<F>) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node<F>, g: &Array<F>, grads: &mut [Option<Array<F>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.ng(*a) {
                    let ga = g.matmul(&val(*b).transpose()).expect("matmul grad");
                    self.acc(grads, *a, ga);
                }
                if self.ng(*b) {
                    let gb = val(*a).transpose().matmul(g).expect("matmul grad");
                    self.acc(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.map(|x| -x));
            }
            Op::AddRow(a, row) => {
                self.acc(grads, *a, g.clone());
                if self.ng(*row) {
                    let n = g.cols();
                    let mut s = vec![F::zero(); n];
                    for r in 0..g.rows() {
                        for (acc, &x) in s.iter_mut().zip(g.row(r)) {
                            *acc = *acc + x;
                        }
                    }
                    self.acc(grads, *row, Array::new(vec![1, n], s).unwrap());
                }
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    let d = g.data().iter().zip(val(*b).data()).map(|(&x, &y)| x * y).collect();
                    self.acc(grads, *a, Array::new(g.shape().to_vec(), d).unwrap());
                }
                if self.ng(*b) {
                    let d = g.data().iter().zip(val(*a).data()).map(|(&x, &y)| x * y).collect();
                    self.acc(grads, *b, Array::new(g.shape().to_vec(), d).unwrap());
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.acc(grads, *a, g.map(|x| x * c));
            }
            Op::ScaleBy(a, s) => {
                let c = val(*s).item();
                self.acc(grads, *a, g.map(|x| x * c));
                if self.ng(*s) {
                    let d: F = g.data().iter().zip(val(*a).data()).map(|(&x, &y)| x * y).sum();
                    self.acc(grads, *s, Array::full(val(*s).shape(), d));
                }
            }
            Op::Relu(a) => {
                let d = g
                    .data()
                    .iter()
                    .zip(val(*a).data())
                    .map(|(&x, &y)| if y > F::zero() { x } else { F::zero() })
                    .collect();
                self.acc(grads, *a, Array::new(g.shape().to_vec(), d).unwrap());
            }
            Op::Transpose(a) => self.acc(grads, *a, g.transpose()),
            Op::SumAll(a) => {
                let x = g.item();
                self.acc(grads, *a, Array::full(val(*a).shape(), x));
            }
            Op::MeanRows(a) => {
                let (m, n) = (val(*a).rows(), val(*a).cols());
                let inv = F::one() / F::of(m as f64);
                let d = (0..m * n).map(|k| g.data()[k % n] * inv).collect();
                self.acc(grads, *a, Array::new(val(*a).shape().to_vec(), d).unwrap());
            }
            Op::ConcatCols(parts) => {
                let m = g.rows();
                let mut start = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if self.ng(p) {
                        let mut d = Vec::with_capacity(m * w);
                        for r in 0..m {
                            d.extend_from_slice(&g.row(r)[start..start + w]);
                        }
                        self.acc(grads, p, Array::new(val(p).shape().to_vec(), d).unwrap());
                    }
                    start += w;
                }
            }
            Op::ConcatRows(parts) => {
                let n = g.cols();
                let mut start = 0;
                for &p in parts {
                    let h = val(p).rows();
                    if self.ng(p) {
                        let d = g.data()[start * n..(start + h) * n].to_vec();
                        self.acc(grads, p, Array::new(val(p).shape().to_vec(), d).unwrap());
                    }
                    start += h;
                }
            }
            Op::GatherRows(a, idx) => {
                if self.ng(*a) {
                    let mut d = Array::zeros(val(*a).shape());
                    let n = d.cols();
                    for (k, &i) in idx.iter().enumerate() {
                        let dst = &mut d.data_mut()[i * n..(i + 1) * n];
                        for (o, &x) in dst.iter_mut().zip(g.row(k)) {
                            *o = *o + x;
                        }
                    }
                    self.acc(grads, *a, d);
                }
            }
            Op::SparseGather(a, rows) => {
                if self.ng(*a) {
                    let mut d = Array::zeros(val(*a).shape());
                    let dd = d.data_mut();
                    for (k, &gk) in g.data().iter().enumerate() {
                        for &(i, w) in rows.row(k) {
                            dd[i] = dd[i] + w * gk;
                        }
                    }
                    self.acc(grads, *a, d);
                }
            }
            Op::SliceCols(a, start) => {
                if self.ng(*a) {
                    let mut d = Array::zeros(val(*a).shape());
                    let w = g.cols();
                    for r in 0..g.rows() {
                        for c in 0..w {
                            d.set(r, start + c, g.get(r, c));
                        }
                    }
                    self.acc(grads, *a, d);
                }
            }
            Op::Reshape(a) => {
                let d = Array::new(val(*a).shape().to_vec(), g.data().to_vec()).expect("same length");
                self.acc(grads, *a, d);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let (m, n) = (y.rows(), y.cols());
                let mut d = Vec::with_capacity(m * n);
                for r in 0..m {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: F = yr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    d.extend(yr.iter().zip(gr).map(|(&p, &q)| p * (q - dot)));
                }
                self.acc(grads, *a, Array::new(vec![m, n], d).unwrap());
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let (m, n) = (y.rows(), y.cols());
                let mut d = Vec::with_capacity(m * n);
                for r in 0..m {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let s: F = gr.iter().copied().sum();
                    d.extend(yr.iter().zip(gr).map(|(&p, &q)| q - p.exp() * s));
                }
                self.acc(grads, *a, Array::new(vec![m, n], d).unwrap());
            }
            Op::Log(a) => {
                let d = g.data().iter().zip(val(*a).data()).map(|(&q, &x)| q / x).collect();
                self.acc(grads, *a, Array::new(g.shape().to_vec(), d).unwrap());
            }
            Op::Sqrt(a) => {
                let two = F::of(2.0);
                let d = g
                    .data()
                    .iter()
                    .zip(node.value.data())
                    .map(|(&q, &y)| q / (two * y))
                    .collect();
                self.acc(grads, *a, Array::new(g.shape().to_vec(), d).unwrap());
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (m, n) = (g.rows(), g.cols());
                let gam = val(*gamma).data();
                if self.ng(*gamma) || self.ng(*beta) {
                    let mut dg = vec![F::zero(); n];
                    let mut db = vec![F::zero(); n];
                    for r in 0..m {
                        for c in 0..n {
                            let q = g.get(r, c);
                            dg[c] = dg[c] + q * xhat[r * n + c];
                            db[c] = db[c] + q;
                        }
                    }
                    self.acc(grads, *gamma, Array::new(vec![1, n], dg).unwrap());
                    self.acc(grads, *beta, Array::new(vec![1, n], db).unwrap());
                }
                if self.ng(*x) {
                    let nf = F::of(n as f64);
                    let mut d = Vec::with_capacity(m * n);
                    for r in 0..m {
                        let dxh: Vec<F> = (0..n).map(|c| g.get(r, c) * gam[c]).collect();
                        let s1: F = dxh.iter().copied().sum();
                        let s2: F = dxh.iter().zip(&xhat[r * n..(r + 1) * n]).map(|(&p, &h)| p * h).sum();
                        for c in 0..n {
                            let h = xhat[r * n + c];
                            d.push(inv_std[r] / nf * (nf * dxh[c] - s1 - h * s2));
                        }
                    }
                    self.acc(grads, *x, Array::new(vec![m, n], d).unwrap());
                }
            }
        }
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows<F: Real>(x: &Array<F>) -> Array<F> {
    let (m, n) = (x.rows(), x.cols());
    let mut data = Vec::with_capacity(m * n);
    for r in 0..m {
        let row = x.row(r);
        let mx = row.iter().copied().fold(F::neg_infinity(), F::max);
        let start = data.len();
        data.extend(row.iter().map(|&v| (v - mx).exp()));
        let s: F = data[start..].iter().copied().sum();
        for v in &mut data[start..] {
            *v = *v / s;
        }
    }
    Array::new(x.shape().to_vec(), data).expect("same shape")
}
