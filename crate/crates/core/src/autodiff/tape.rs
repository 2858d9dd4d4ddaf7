use super::matrix::{Matrix, Real};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    AddRow {
        a: Var,
        row: Var,
    },
    Scale {
        a: Var,
        s: T,
    },
    Gelu {
        x: Var,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix<T>,
        rstd: Vec<T>,
    },
    Attention {
        qkv: Var,
        heads: usize,
        probs: Vec<T>,
    },
    Scatter {
        vis: Var,
        fill: Var,
        vis_idx: Vec<usize>,
        fill_idx: Vec<usize>,
    },
    GatherRows {
        x: Var,
        idx: Vec<usize>,
    },
    MeanRows {
        x: Var,
    },
    ConcatRows {
        parts: Vec<Var>,
    },
    Mse {
        pred: Var,
        diff: Matrix<T>,
    },
    InfoNce {
        h: Var,
        unit: Matrix<T>,
        norms: Vec<T>,
        probs: Matrix<T>,
        tau: T,
    },
    WeightedSum {
        terms: Vec<(Var, T)>,
    },
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
    requires_grad: bool,
    param: Option<usize>,
}

/// Reverse-mode recording of a forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads[v.0].as_ref()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Matrix<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf tied to parameter slot `id`.
    pub fn param(&mut self, id: usize, value: &Matrix<T>) -> Var {
        let v = self.push(value.clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul { a, b }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add { a, b }, rg)
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows(), 1, "add_row expects a single row");
        assert_eq!(r.cols(), self.value(a).cols(), "add_row width");
        let rv = r.as_slice().to_vec();
        let mut out = self.value(a).clone();
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&rv) {
                *o = *o + b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        self.push(out, Op::AddRow { a, row }, rg)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|v| v * s);
        let rg = self.rg(a);
        self.push(out, Op::Scale { a, s }, rg)
    }

    /// `x W + b` with `W` stored as `in x out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let c = T::from_f64_lossy(GELU_C);
        let a = T::from_f64_lossy(GELU_A);
        let half = T::from_f64_lossy(0.5);
        let out = self.value(x).map(|v| {
            let t = (c * (v + a * v * v * v)).fast_tanh();
            half * v * (T::one() + t)
        });
        let rg = self.rg(x);
        self.push(out, Op::Gelu { x }, rg)
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let g = self.value(gamma).as_slice().to_vec();
        let b = self.value(beta).as_slice().to_vec();
        assert_eq!(g.len(), cols, "layer_norm gamma width");
        let eps = T::from_f64_lossy(eps);
        let n = T::from_usize(cols).unwrap();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().fold(T::zero(), |s, &v| s + v) / n;
            let var = row.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean)) / n;
            let rs = T::one() / (var + eps).sqrt();
            rstd.push(rs);
            let xh = xhat.row_mut(r);
            for (j, &v) in row.iter().enumerate() {
                xh[j] = (v - mean) * rs;
            }
            let o = out.row_mut(r);
            for j in 0..cols {
                o[j] = xhat.get(r, j) * g[j] + b[j];
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        )
    }

    /// Multi-head softmax attention over a packed `[Q | K | V]` matrix of
    /// shape `L x 3D`; returns `L x D`.
    pub fn attention(&mut self, qkv: Var, heads: usize) -> Var {
        let packed = self.value(qkv);
        let (l, three_d) = packed.shape();
        assert_eq!(three_d % 3, 0, "attention expects packed qkv");
        let d = three_d / 3;
        assert_eq!(d % heads, 0, "heads must divide width");
        let dh = d / heads;
        let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
        let mut probs = vec![T::zero(); heads * l * l];
        let mut out: Matrix<T> = Matrix::zeros(l, d);
        let src = packed.as_slice().as_ptr();
        let ld = three_d as isize;
        for h in 0..heads {
            let p = &mut probs[h * l * l..(h + 1) * l * l];
            // SAFETY: head views stay inside the packed buffer; outputs are
            // distinct dense buffers.
            unsafe {
                T::gemm_raw(
                    l,
                    dh,
                    l,
                    scale,
                    src.add(h * dh),
                    ld,
                    1,
                    src.add(d + h * dh),
                    1,
                    ld,
                    T::zero(),
                    p.as_mut_ptr(),
                    l as isize,
                    1,
                );
            }
            for row in p.chunks_mut(l) {
                softmax_in_place(row);
            }
            unsafe {
                T::gemm_raw(
                    l,
                    l,
                    dh,
                    T::one(),
                    p.as_ptr(),
                    l as isize,
                    1,
                    src.add(2 * d + h * dh),
                    ld,
                    1,
                    T::zero(),
                    out.as_mut_slice().as_mut_ptr().add(h * dh),
                    d as isize,
                    1,
                );
            }
        }
        let rg = self.rg(qkv);
        self.push(out, Op::Attention { qkv, heads, probs }, rg)
    }

    /// Builds an `n x cols` matrix with `vis` rows at `vis_idx` and the single
    /// `fill` row broadcast at `fill_idx`.
    pub fn scatter_rows(&mut self, vis: Var, vis_idx: Vec<usize>, fill: Var, fill_idx: Vec<usize>) -> Var {
        let vv = self.value(vis);
        let fv = self.value(fill);
        assert_eq!(vv.rows(), vis_idx.len(), "scatter visible rows");
        assert_eq!(fv.rows(), 1, "scatter fill must be one row");
        assert_eq!(vv.cols(), fv.cols(), "scatter width");
        let n = vis_idx.len() + fill_idx.len();
        let mut out = Matrix::zeros(n, vv.cols());
        for (r, &i) in vis_idx.iter().enumerate() {
            out.row_mut(i).copy_from_slice(vv.row(r));
        }
        for &i in &fill_idx {
            out.row_mut(i).copy_from_slice(fv.row(0));
        }
        let rg = self.rg(vis) || self.rg(fill);
        self.push(
            out,
            Op::Scatter {
                vis,
                fill,
                vis_idx,
                fill_idx,
            },
            rg,
        )
    }

    pub fn gather_rows(&mut self, x: Var, idx: Vec<usize>) -> Var {
        let out = self.value(x).select_rows(&idx);
        let rg = self.rg(x);
        self.push(out, Op::GatherRows { x, idx }, rg)
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        assert!(rows > 0, "mean over zero rows");
        let mut out = Matrix::zeros(1, cols);
        for r in 0..rows {
            for (o, &v) in out.row_mut(0).iter_mut().zip(xv.row(r)) {
                *o = *o + v;
            }
        }
        out.scale_assign(T::one() / T::from_usize(rows).unwrap());
        let rg = self.rg(x);
        self.push(out, Op::MeanRows { x }, rg)
    }

    /// Stacks row blocks vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let cols = self.value(parts[0]).cols();
        let rows: usize = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat width");
            data.extend_from_slice(v.as_slice());
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            Matrix::from_vec(rows, cols, data),
            Op::ConcatRows { parts: parts.to_vec() },
            rg,
        )
    }

    /// Mean squared error against a constant target; zero for empty input.
    pub fn mse(&mut self, pred: Var, target: &Matrix<T>) -> Var {
        let pv = self.value(pred);
        assert_eq!(pv.shape(), target.shape(), "mse shape");
        let mut diff = pv.clone();
        for (d, &t) in diff.as_mut_slice().iter_mut().zip(target.as_slice()) {
            *d = *d - t;
        }
        let value = if diff.is_empty() {
            T::zero()
        } else {
            diff.as_slice().iter().fold(T::zero(), |s, &v| s + v * v) / T::from_usize(diff.len()).unwrap()
        };
        let rg = self.rg(pred);
        self.push(Matrix::scalar(value), Op::Mse { pred, diff }, rg)
    }

    /// Cross-scale InfoNCE over the rows of `h` (see `pretrain::loss`).
    pub fn info_nce(&mut self, h: Var, tau: f64, exclude_self: bool) -> Var {
        let hv = self.value(h);
        let (n, _) = hv.shape();
        let tau_t = T::from_f64_lossy(tau);
        let mut unit = hv.clone();
        let mut norms = Vec::with_capacity(n);
        for r in 0..n {
            let row = unit.row_mut(r);
            let norm = row.iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
            norms.push(norm);
            for v in row.iter_mut() {
                *v = *v / norm;
            }
        }
        let sim = unit.matmul_t(false, &unit, true);
        let mut probs = Matrix::zeros(n, n);
        let mut loss = T::zero();
        for i in 0..n {
            let logits: Vec<T> = (0..n).map(|k| sim.get(i, k) / tau_t).collect();
            let max = (0..n)
                .filter(|&k| !(exclude_self && k == i))
                .map(|k| logits[k])
                .fold(T::neg_infinity(), T::max);
            let mut denom = T::zero();
            for k in 0..n {
                if exclude_self && k == i {
                    continue;
                }
                let e = (logits[k] - max).exp();
                probs.set(i, k, e);
                denom = denom + e;
            }
            for k in 0..n {
                probs.set(i, k, probs.get(i, k) / denom);
            }
            let lse = max + denom.ln();
            for (j, &lj) in logits.iter().enumerate() {
                if j != i {
                    loss = loss - (lj - lse);
                }
            }
        }
        let rg = self.rg(h);
        self.push(
            Matrix::scalar(loss),
            Op::InfoNce {
                h,
                unit,
                norms,
                probs,
                tau: tau_t,
            },
            rg,
        )
    }

    /// `sum_k c_k * v_k` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: Vec<(Var, T)>) -> Var {
        let mut total = T::zero();
        for &(v, c) in &terms {
            total = total + c * self.value(v).item();
        }
        let rg = terms.iter().any(|&(v, _)| self.rg(v));
        self.push(Matrix::scalar(total), Op::WeightedSum { terms }, rg)
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, out: Var) -> Gradients<T> {
        assert_eq!(self.value(out).len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Matrix::scalar(T::one()));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Gradients { grads }
    }

    /// Gradients of all parameter leaves, as `(param id, grad)` pairs in tape
    /// order. A parameter used by several leaves appears several times.
    pub fn param_grads<'a>(&'a self, grads: &'a Gradients<T>) -> impl Iterator<Item = (usize, &'a Matrix<T>)> + 'a {
        self.nodes.iter().enumerate().filter_map(move |(i, n)| {
            let id = n.param?;
            grads.grads[i].as_ref().map(|g| (id, g))
        })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node<T>, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                if self.rg(*a) {
                    let ga = g.matmul_t(false, self.value(*b), true);
                    self.accumulate(grads, *a, ga);
                }
                if self.rg(*b) {
                    let gb = self.value(*a).matmul_t(true, g, false);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRow { a, row } => {
                if self.rg(*row) {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in gr.row_mut(0).iter_mut().zip(g.row(r)) {
                            *o = *o + v;
                        }
                    }
                    self.accumulate(grads, *row, gr);
                }
                self.accumulate(grads, *a, g.clone());
            }
            Op::Scale { a, s } => {
                self.accumulate(grads, *a, g.map(|v| v * *s));
            }
            Op::Gelu { x } => {
                let c = T::from_f64_lossy(GELU_C);
                let a = T::from_f64_lossy(GELU_A);
                let half = T::from_f64_lossy(0.5);
                let three = T::from_f64_lossy(3.0);
                let xv = self.value(*x);
                let mut gx = g.clone();
                for (gv, &v) in gx.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                    let t = (c * (v + a * v * v * v)).fast_tanh();
                    let d = half * (T::one() + t) + half * v * (T::one() - t * t) * c * (T::one() + three * a * v * v);
                    *gv = *gv * d;
                }
                self.accumulate(grads, *x, gx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let (rows, cols) = xhat.shape();
                let gv = self.value(*gamma).as_slice();
                if self.rg(*gamma) || self.rg(*beta) {
                    let mut gg = Matrix::zeros(1, cols);
                    let mut gb = Matrix::zeros(1, cols);
                    for r in 0..rows {
                        for j in 0..cols {
                            let dy = g.get(r, j);
                            gg.as_mut_slice()[j] = gg.as_slice()[j] + dy * xhat.get(r, j);
                            gb.as_mut_slice()[j] = gb.as_slice()[j] + dy;
                        }
                    }
                    self.accumulate(grads, *gamma, gg);
                    self.accumulate(grads, *beta, gb);
                }
                if self.rg(*x) {
                    let n = T::from_usize(cols).unwrap();
                    let mut gx = Matrix::zeros(rows, cols);
                    let mut dxh = vec![T::zero(); cols];
                    for r in 0..rows {
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..cols {
                            dxh[j] = g.get(r, j) * gv[j];
                            m1 = m1 + dxh[j];
                            m2 = m2 + dxh[j] * xhat.get(r, j);
                        }
                        m1 = m1 / n;
                        m2 = m2 / n;
                        let out = gx.row_mut(r);
                        for j in 0..cols {
                            out[j] = rstd[r] * (dxh[j] - m1 - xhat.get(r, j) * m2);
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
            }
            Op::Attention { qkv, heads, probs } => {
                let packed = self.value(*qkv);
                let (l, three_d) = packed.shape();
                let d = three_d / 3;
                let dh = d / heads;
                let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
                let mut gqkv: Matrix<T> = Matrix::zeros(l, three_d);
                let src = packed.as_slice().as_ptr();
                let dst = gqkv.as_mut_slice().as_mut_ptr();
                let go = g.as_slice().as_ptr();
                let ld = three_d as isize;
                let mut dp = vec![T::zero(); l * l];
                for h in 0..*heads {
                    let p = &probs[h * l * l..(h + 1) * l * l];
                    // SAFETY: all views are within their dense buffers and
                    // the written head slices of `gqkv` are disjoint.
                    unsafe {
                        // dV = P^T dO
                        T::gemm_raw(
                            l,
                            l,
                            dh,
                            T::one(),
                            p.as_ptr(),
                            1,
                            l as isize,
                            go.add(h * dh),
                            d as isize,
                            1,
                            T::zero(),
                            dst.add(2 * d + h * dh),
                            ld,
                            1,
                        );
                        // dP = dO V^T
                        T::gemm_raw(
                            l,
                            dh,
                            l,
                            T::one(),
                            go.add(h * dh),
                            d as isize,
                            1,
                            src.add(2 * d + h * dh),
                            1,
                            ld,
                            T::zero(),
                            dp.as_mut_ptr(),
                            l as isize,
                            1,
                        );
                    }
                    for (dprow, prow) in dp.chunks_mut(l).zip(p.chunks(l)) {
                        let dot = dprow.iter().zip(prow).fold(T::zero(), |s, (&a, &b)| s + a * b);
                        for (dv, &pv) in dprow.iter_mut().zip(prow) {
                            *dv = pv * (*dv - dot);
                        }
                    }
                    unsafe {
                        // dQ = scale * dS K
                        T::gemm_raw(
                            l,
                            l,
                            dh,
                            scale,
                            dp.as_ptr(),
                            l as isize,
                            1,
                            src.add(d + h * dh),
                            ld,
                            1,
                            T::zero(),
                            dst.add(h * dh),
                            ld,
                            1,
                        );
                        // dK = scale * dS^T Q
                        T::gemm_raw(
                            l,
                            l,
                            dh,
                            scale,
                            dp.as_ptr(),
                            1,
                            l as isize,
                            src.add(h * dh),
                            ld,
                            1,
                            T::zero(),
                            dst.add(d + h * dh),
                            ld,
                            1,
                        );
                    }
                }
                self.accumulate(grads, *qkv, gqkv);
            }
            Op::Scatter {
                vis,
                fill,
                vis_idx,
                fill_idx,
            } => {
                if self.rg(*vis) {
                    self.accumulate(grads, *vis, g.select_rows(vis_idx));
                }
                if self.rg(*fill) {
                    let mut gf = Matrix::zeros(1, g.cols());
                    for &i in fill_idx {
                        for (o, &v) in gf.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o = *o + v;
                        }
                    }
                    self.accumulate(grads, *fill, gf);
                }
            }
            Op::GatherRows { x, idx } => {
                let (rows, cols) = self.value(*x).shape();
                let mut gx = Matrix::zeros(rows, cols);
                for (r, &i) in idx.iter().enumerate() {
                    for (o, &v) in gx.row_mut(i).iter_mut().zip(g.row(r)) {
                        *o = *o + v;
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::MeanRows { x } => {
                let rows = self.value(*x).rows();
                let inv = T::one() / T::from_usize(rows).unwrap();
                let row: Vec<T> = g.row(0).iter().map(|&v| v * inv).collect();
                let gx = Matrix::from_fn(rows, row.len(), |_, c| row[c]);
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatRows { parts } => {
                let mut start = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.rg(p) {
                        let v = self.value(p);
                        let part = Matrix::from_vec(v.rows(), v.cols(), g.as_slice()[start..start + n].to_vec());
                        self.accumulate(grads, p, part);
                    }
                    start += n;
                }
            }
            Op::Mse { pred, diff } => {
                if !diff.is_empty() {
                    let k = g.item() * T::from_f64_lossy(2.0) / T::from_usize(diff.len()).unwrap();
                    self.accumulate(grads, *pred, diff.map(|v| v * k));
                }
            }
            Op::InfoNce {
                h,
                unit,
                norms,
                probs,
                tau,
            } => {
                let n = unit.rows();
                let gs = g.item();
                let nm1 = T::from_usize(n - 1).unwrap();
                let mut dsim = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let pos = if i == j { T::zero() } else { T::one() };
                        dsim.set(i, j, gs * (nm1 * probs.get(i, j) - pos) / *tau);
                    }
                }
                let mut sym = dsim.transpose();
                sym.add_assign(&dsim);
                let du = sym.matmul(unit);
                let mut gh = Matrix::zeros(n, unit.cols());
                for i in 0..n {
                    let u = unit.row(i);
                    let dui = du.row(i);
                    let dot = u.iter().zip(dui).fold(T::zero(), |s, (&a, &b)| s + a * b);
                    let out = gh.row_mut(i);
                    for k in 0..u.len() {
                        out[k] = (dui[k] - u[k] * dot) / norms[i];
                    }
                }
                self.accumulate(grads, *h, gh);
            }
            Op::WeightedSum { terms } => {
                let gs = g.item();
                for &(v, c) in terms {
                    self.accumulate(grads, v, Matrix::scalar(gs * c));
                }
            }
        }
    }
}

fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    for v in row.iter_mut() {
        *v = (*v - max).fast_exp();
    }
    let sum = row.iter().fold(T::zero(), |s, &v| s + v);
    let inv = T::one() / sum;
    for v in row.iter_mut() {
        *v = *v * inv;
    }
}
