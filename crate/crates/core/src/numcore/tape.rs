use super::{check_shape, Result, Tensor, TensorError};

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRows(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Concat(Vec<Var>),
    Sum(Var),
    Mean(Var),
    Softmax(Var, usize),
    LogSoftmax(Var, usize),
    KlDiv(Var, Var),
    L2Normalize(Var),
    SelectCols(Var, Vec<usize>),
    Gather(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

/// Wengert list of executed operations.
///
/// Nodes are appended in execution order, so every input index is smaller than
/// its output index and reverse index order is a valid topological replay.
/// Running [`Tape::backward`] a second time without [`Tape::clear`] is rejected.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

/// Splits `shape` around `axis` into (outer, len, inner) extents.
fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn last_dim(shape: &[usize]) -> usize {
    *shape.last().expect("tensor shapes are non-empty")
}

fn add_into(acc: &mut Option<Vec<f64>>, contrib: Vec<f64>) {
    match acc {
        Some(a) => a.iter_mut().zip(contrib).for_each(|(a, c)| *a += c),
        None => *acc = Some(contrib),
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

    /// Drops every recorded node and gradient.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.grads.clear();
        self.backward_done = false;
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            data,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Registers a snapshot of `t`; it collects a gradient iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        check_shape(&shape, data.len())?;
        Ok(self.push(shape, data, Op::Leaf, false))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    /// First element of a node; intended for scalar losses.
    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).data[0]
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.data.clone()).expect("tape nodes carry valid shapes")
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Adjoint of the last backward pass, if `v` was reachable and differentiable.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Shape {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn matrix_dims(&self, op: &'static str, a: Var) -> Result<(usize, usize)> {
        match *self.shape(a) {
            [m, n] => Ok((m, n)),
            _ => Err(TensorError::Shape {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: vec![],
            }),
        }
    }

    fn check_finite(&self, op: &'static str, a: Var) -> Result<()> {
        if self.value(a).iter().any(|x| x.is_nan()) {
            return Err(TensorError::Numeric {
                op,
                detail: "input contains NaN".into(),
            });
        }
        Ok(())
    }

    fn check_axis(&self, op: &'static str, a: Var, axis: usize) -> Result<()> {
        if axis >= self.shape(a).len() {
            return Err(TensorError::Contract {
                op,
                detail: format!("axis {axis} out of range for shape {:?}", self.shape(a)),
            });
        }
        Ok(())
    }

    // ── Linear algebra ────────────────────────────────────────────────

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let ((m, k), (k2, n)) = (self.matrix_dims("matmul", a)?, self.matrix_dims("matmul", b)?);
        if k != k2 {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("transpose", a)?;
        let out = transpose_raw(self.value(a), m, n);
        let rg = self.rg(a);
        Ok(self.push(vec![n, m], out, Op::Transpose(a), rg))
    }

    // ── Elementwise ───────────────────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Sub(a, b), rg))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), rg))
    }

    /// Adds the vector `row[n]` to every row of `a[.., n]` (bias add).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let n = last_dim(self.shape(a));
        if self.shape(row) != [n] {
            return Err(TensorError::Shape {
                op: "add_row",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(row).to_vec(),
            });
        }
        let r = self.value(row);
        let out = self
            .value(a)
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(r).map(|(x, y)| x + y))
            .collect();
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(self.shape(a).to_vec(), out, Op::AddRow(a, row), rg))
    }

    /// Scales row `i` of `a[m×n]` by `s[i]`, with `s` of shape `[m]`.
    pub fn mul_rows(&mut self, a: Var, s: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims("mul_rows", a)?;
        if self.shape(s) != [m] {
            return Err(TensorError::Shape {
                op: "mul_rows",
                lhs: vec![m, n],
                rhs: self.shape(s).to_vec(),
            });
        }
        let sv = self.value(s);
        let out = self
            .value(a)
            .chunks(n)
            .zip(sv)
            .flat_map(|(row, k)| row.iter().map(move |x| x * k))
            .collect();
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(vec![m, n], out, Op::MulRows(a, s), rg))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * k).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, k), rg)
    }

    /// ReLU with subgradient 0 at the origin.
    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, Op::Relu(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.exp()).collect();
        let rg = self.rg(a);
        self.push(self.shape(a).to_vec(), out, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).iter().any(|&x| x.is_nan() || x < 0.0) {
            return Err(TensorError::Numeric {
                op: "log",
                detail: "input outside [0, inf)".into(),
            });
        }
        let out = self.value(a).iter().map(|x| x.ln()).collect();
        let rg = self.rg(a);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Log(a), rg))
    }

    /// Concatenates along the last axis; leading dimensions must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::Contract {
            op: "concat",
            detail: "no inputs".into(),
        })?;
        let lead = &self.shape(first)[..self.shape(first).len() - 1];
        for &p in &parts[1..] {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || &s[..s.len() - 1] != lead {
                return Err(TensorError::Shape {
                    op: "concat",
                    lhs: self.shape(first).to_vec(),
                    rhs: s.to_vec(),
                });
            }
        }
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = parts.iter().map(|&p| last_dim(self.shape(p))).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(shape, out, Op::Concat(parts.to_vec()), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(a);
        self.push(vec![1], vec![s], Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.value(a).iter().sum::<f64>() / n;
        let rg = self.rg(a);
        self.push(vec![1], vec![s], Op::Mean(a), rg)
    }

    /// Columns `cols` of `a[m×n]`, in the given order.
    pub fn select_cols(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix_dims("select_cols", a)?;
        if cols.is_empty() || cols.iter().any(|&c| c >= n) {
            return Err(TensorError::Contract {
                op: "select_cols",
                detail: format!("columns {cols:?} invalid for width {n}"),
            });
        }
        let v = self.value(a);
        let out = (0..m).flat_map(|r| cols.iter().map(move |&c| v[r * n + c])).collect();
        let rg = self.rg(a);
        Ok(self.push(vec![m, cols.len()], out, Op::SelectCols(a, cols.to_vec()), rg))
    }

    /// `out[i] = a[i, idx[i]]` for `a[m×n]`.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (m, n) = self.matrix_dims("gather", a)?;
        if idx.len() != m || idx.iter().any(|&c| c >= n) {
            return Err(TensorError::Contract {
                op: "gather",
                detail: format!("{} indices for {m} rows of width {n}", idx.len()),
            });
        }
        let v = self.value(a);
        let out = idx.iter().enumerate().map(|(r, &c)| v[r * n + c]).collect();
        let rg = self.rg(a);
        Ok(self.push(vec![m], out, Op::Gather(a, idx.to_vec()), rg))
    }

    // ── Normalizations and losses ─────────────────────────────────────

    /// Softmax along `axis`, stabilized by subtracting the per-slice maximum.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axis("softmax", a, axis)?;
        self.check_finite("softmax", a)?;
        let out = softmax_raw(self.value(a), self.shape(a), axis, false);
        let rg = self.rg(a);
        Ok(self.push(self.shape(a).to_vec(), out, Op::Softmax(a, axis), rg))
    }

    /// `x - logsumexp(x)` along `axis`.
    pub fn log_softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axis("log_softmax", a, axis)?;
        self.check_finite("log_softmax", a)?;
        let out = softmax_raw(self.value(a), self.shape(a), axis, true);
        let rg = self.rg(a);
        Ok(self.push(self.shape(a).to_vec(), out, Op::LogSoftmax(a, axis), rg))
    }

    /// `KL(target ‖ exp(log_probs))` summed over the last axis and averaged over rows.
    ///
    /// Entries with zero target mass contribute nothing (0·ln 0 = 0).
    pub fn kl_div(&mut self, target: Var, log_probs: Var) -> Result<Var> {
        self.same_shape("kl_div", target, log_probs)?;
        let n = last_dim(self.shape(target));
        let t = self.value(target);
        let l = self.value(log_probs);
        for (r, row) in t.chunks(n).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(TensorError::Contract {
                    op: "kl_div",
                    detail: format!("target row {r} has a negative or non-finite entry"),
                });
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(TensorError::Contract {
                    op: "kl_div",
                    detail: format!("target row {r} sums to {s}, not 1"),
                });
            }
        }
        let rows = (t.len() / n) as f64;
        let total: f64 = t
            .iter()
            .zip(l)
            .filter(|(&p, _)| p > 0.0)
            .map(|(&p, &lp)| p * (p.ln() - lp))
            .sum();
        let rg = self.rg(target) || self.rg(log_probs);
        Ok(self.push(vec![1], vec![total / rows], Op::KlDiv(target, log_probs), rg))
    }

    /// Divides each slice along the last axis by its L2 norm.
    pub fn l2_normalize(&mut self, a: Var) -> Result<Var> {
        const EPS: f64 = 1e-12;
        let n = last_dim(self.shape(a));
        let mut out = Vec::with_capacity(self.value(a).len());
        for row in self.value(a).chunks(n) {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > EPS) {
                return Err(TensorError::Numeric {
                    op: "l2_normalize",
                    detail: format!("row norm {norm:e} is not above {EPS:e}"),
                });
            }
            out.extend(row.iter().map(|x| x / norm));
        }
        let rg = self.rg(a);
        Ok(self.push(self.shape(a).to_vec(), out, Op::L2Normalize(a), rg))
    }

    // ── Reverse pass ──────────────────────────────────────────────────

    /// Propagates adjoints from the scalar `loss` back to every reachable node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::BackwardReplayed);
        }
        if self.shape(loss) != [1] {
            return Err(TensorError::NonScalarLoss(self.shape(loss).to_vec()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.rg(loss) {
            self.grads = grads;
            return Ok(());
        }
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let y = &node.data;
        let mut send = |v: Var, contrib: Vec<f64>| {
            if self.rg(v) {
                add_into(&mut grads[v.0], contrib);
            }
        };
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                if self.rg(a) {
                    // dA = G · Bᵀ
                    let bt = transpose_raw(self.value(b), k, n);
                    send(a, matmul_raw(g, &bt, m, n, k));
                }
                if self.rg(b) {
                    // dB = Aᵀ · G
                    let at = transpose_raw(self.value(a), m, k);
                    send(b, matmul_raw(&at, g, k, m, n));
                }
            }
            &Op::Transpose(a) => {
                let (m, n) = (self.shape(a)[0], self.shape(a)[1]);
                send(a, transpose_raw(g, n, m));
            }
            &Op::Add(a, b) => {
                send(a, g.to_vec());
                send(b, g.to_vec());
            }
            &Op::Sub(a, b) => {
                send(a, g.to_vec());
                send(b, g.iter().map(|x| -x).collect());
            }
            &Op::Mul(a, b) => {
                if self.rg(a) {
                    send(a, g.iter().zip(self.value(b)).map(|(g, y)| g * y).collect());
                }
                if self.rg(b) {
                    send(b, g.iter().zip(self.value(a)).map(|(g, x)| g * x).collect());
                }
            }
            &Op::AddRow(a, row) => {
                send(a, g.to_vec());
                if self.rg(row) {
                    let n = self.shape(row)[0];
                    let mut acc = vec![0.0; n];
                    for chunk in g.chunks(n) {
                        acc.iter_mut().zip(chunk).for_each(|(a, x)| *a += x);
                    }
                    send(row, acc);
                }
            }
            &Op::MulRows(a, s) => {
                let n = self.shape(a)[1];
                let sv = self.value(s);
                if self.rg(a) {
                    let da = g
                        .chunks(n)
                        .zip(sv)
                        .flat_map(|(row, k)| row.iter().map(move |x| x * k))
                        .collect();
                    send(a, da);
                }
                if self.rg(s) {
                    let ds = g
                        .chunks(n)
                        .zip(self.value(a).chunks(n))
                        .map(|(gr, ar)| gr.iter().zip(ar).map(|(x, y)| x * y).sum())
                        .collect();
                    send(s, ds);
                }
            }
            &Op::Scale(a, k) => send(a, g.iter().map(|x| x * k).collect()),
            &Op::Relu(a) => {
                let x = self.value(a);
                send(a, g.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect());
            }
            &Op::Exp(a) => send(a, g.iter().zip(y).map(|(g, y)| g * y).collect()),
            &Op::Log(a) => {
                let x = self.value(a);
                send(a, g.iter().zip(x).map(|(g, x)| g / x).collect());
            }
            Op::Concat(parts) => {
                let total = last_dim(&node.shape);
                let rows = g.len() / total;
                let mut offset = 0;
                for &p in parts {
                    let w = last_dim(self.shape(p));
                    if self.rg(p) {
                        let mut dp = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            dp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        send(p, dp);
                    }
                    offset += w;
                }
            }
            &Op::Sum(a) => send(a, vec![g[0]; self.value(a).len()]),
            &Op::Mean(a) => {
                let n = self.value(a).len();
                send(a, vec![g[0] / n as f64; n]);
            }
            &Op::Softmax(a, axis) => {
                // dx = y ⊙ (g − Σ g⊙y)
                let (outer, len, inner) = axis_extents(&node.shape, axis);
                let mut dx = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + i;
                        let dot: f64 = (0..len).map(|k| g[at(k)] * y[at(k)]).sum();
                        for k in 0..len {
                            dx[at(k)] = y[at(k)] * (g[at(k)] - dot);
                        }
                    }
                }
                send(a, dx);
            }
            &Op::LogSoftmax(a, axis) => {
                // dx = g − softmax · Σ g
                let (outer, len, inner) = axis_extents(&node.shape, axis);
                let mut dx = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + i;
                        let total: f64 = (0..len).map(|k| g[at(k)]).sum();
                        for k in 0..len {
                            dx[at(k)] = g[at(k)] - y[at(k)].exp() * total;
                        }
                    }
                }
                send(a, dx);
            }
            &Op::KlDiv(t, l) => {
                let n = last_dim(self.shape(t));
                let tv = self.value(t);
                let lv = self.value(l);
                let scale = g[0] / (tv.len() / n) as f64;
                if self.rg(t) {
                    let dt = tv
                        .iter()
                        .zip(lv)
                        .map(|(&p, &lp)| if p > 0.0 { scale * (p.ln() + 1.0 - lp) } else { 0.0 })
                        .collect();
                    send(t, dt);
                }
                if self.rg(l) {
                    send(l, tv.iter().map(|p| -scale * p).collect());
                }
            }
            &Op::L2Normalize(a) => {
                // dx = (g − y (y·g)) / ‖x‖
                let n = last_dim(&node.shape);
                let x = self.value(a);
                let mut dx = Vec::with_capacity(g.len());
                for ((gr, yr), xr) in g.chunks(n).zip(y.chunks(n)).zip(x.chunks(n)) {
                    let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    dx.extend(gr.iter().zip(yr).map(|(gi, yi)| (gi - yi * dot) / norm));
                }
                send(a, dx);
            }
            Op::SelectCols(a, cols) => {
                let n = self.shape(*a)[1];
                let k = cols.len();
                let mut dx = vec![0.0; self.value(*a).len()];
                for (r, row) in g.chunks(k).enumerate() {
                    for (&c, gv) in cols.iter().zip(row) {
                        dx[r * n + c] += gv;
                    }
                }
                send(*a, dx);
            }
            Op::Gather(a, idx) => {
                let n = self.shape(*a)[1];
                let mut dx = vec![0.0; self.value(*a).len()];
                for (r, (&c, gv)) in idx.iter().zip(g).enumerate() {
                    dx[r * n + c] = *gv;
                }
                send(*a, dx);
            }
        }
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            orow.iter_mut().zip(brow).for_each(|(o, bv)| *o += av * bv);
        }
    }
    out
}

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

fn softmax_raw(x: &[f64], shape: &[usize], axis: usize, log: bool) -> Vec<f64> {
    let (outer, len, inner) = axis_extents(shape, axis);
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let max = (0..len).map(|k| x[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = (0..len).map(|k| (x[at(k)] - max).exp()).sum();
            for k in 0..len {
                let shifted = x[at(k)] - max;
                out[at(k)] = if log {
                    shifted - denom.ln()
                } else {
                    shifted.exp() / denom
                };
            }
        }
    }
    out
}
