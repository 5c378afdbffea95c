//! Eager reverse-mode differentiation over dense `f64` matrices.
//!
//! Every operation computes its value immediately and records how to
//! propagate gradients back to its inputs. A [`Graph`] is built per forward
//! pass (one video) and dropped afterwards; parameters are pulled in from a
//! [`ParamStore`] and their gradients come back keyed by [`ParamId`].

use std::collections::HashMap;

use ndarray::{s, Array2, Axis};

use crate::params::{ParamId, ParamStore};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Per-timestep ground-truth interval used by the DIoU loss node.
pub type IntervalTarget = Option<(f64, f64)>;

enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    AddRow(Var, Var),
    AddScalar(Var),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var, usize),
    MaskRows(Var, Vec<f64>),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Softplus(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normed: Array2<f64>,
        inv_std: Vec<f64>,
    },
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    RepeatRows(Var),
    Transpose(Var),
    RowMax(Var, Vec<usize>),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Array2<f64>,
    },
    Bce {
        prob: Var,
        targets: Vec<f64>,
    },
    Diou {
        d_start: Var,
        d_end: Var,
        targets: Vec<IntervalTarget>,
    },
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Clamp applied to probabilities before taking logs in the BCE node.
pub const PROB_CLAMP: f64 = 1e-7;

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

/// Gradients of a scalar output with respect to parameters and tracked inputs.
#[derive(Debug, Default)]
pub struct Gradients {
    params: HashMap<ParamId, Array2<f64>>,
    inputs: HashMap<Var, Array2<f64>>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Array2<f64>> {
        self.params.get(&id)
    }

    pub fn input(&self, var: Var) -> Option<&Array2<f64>> {
        self.inputs.get(&var)
    }

    pub fn into_params(self) -> HashMap<ParamId, Array2<f64>> {
        self.params
    }
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// A constant input; no gradient is propagated into it.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// An input whose gradient is reported by [`Graph::backward`].
    pub fn input(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let value = self.store.value(id).clone();
        let v = self.push(value, Op::Param(id), true);
        self.param_vars.insert(id, v);
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::Add(a, b), ng)
    }

    /// `a` (n×m) plus a broadcast row `row` (1×m).
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let value = self.value(a) + self.value(row);
        let ng = self.ng(a) || self.ng(row);
        self.push(value, Op::AddRow(a, row), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        let ng = self.ng(a);
        self.push(value, Op::AddScalar(a), ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::MatMul(a, b), ng)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let ng = self.ng(a) || self.ng(b);
        self.push(value, Op::MatMulT(a, b), ng)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        let ng = self.ng(a);
        self.push(value, Op::Scale(a, c), ng)
    }

    /// `a` scaled by the single entry `w[0, idx]` of a row vector.
    pub fn scale_by(&mut self, a: Var, w: Var, idx: usize) -> Var {
        let c = self.value(w)[[0, idx]];
        let value = self.value(a) * c;
        let ng = self.ng(a) || self.ng(w);
        self.push(value, Op::ScaleBy(a, w, idx), ng)
    }

    /// Multiplies row `t` of `a` by the constant `mask[t]`.
    pub fn mask_rows(&mut self, a: Var, mask: Vec<f64>) -> Var {
        let mut value = self.value(a).clone();
        for (mut row, &m) in value.axis_iter_mut(Axis(0)).zip(&mask) {
            row *= m;
        }
        let ng = self.ng(a);
        self.push(value, Op::MaskRows(a, mask), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(|x| x.max(0.0));
        let ng = self.ng(a);
        self.push(value, Op::Relu(a), ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(gelu);
        let ng = self.ng(a);
        self.push(value, Op::Gelu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        let ng = self.ng(a);
        self.push(value, Op::Sigmoid(a), ng)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(softplus);
        let ng = self.ng(a);
        self.push(value, Op::Softplus(a), ng)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        let ng = self.ng(a);
        self.push(value, Op::SoftmaxRows(a), ng)
    }

    /// Row-wise layer normalization with learned scale and shift (both 1×m).
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        const EPS: f64 = 1e-5;
        let xv = self.value(x);
        let (n, m) = xv.dim();
        let mut normed = Array2::zeros((n, m));
        let mut inv_std = Vec::with_capacity(n);
        for (i, row) in xv.axis_iter(Axis(0)).enumerate() {
            let mean = row.sum() / m as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
            let is = 1.0 / (var + EPS).sqrt();
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                normed[[i, j]] = (v - mean) * is;
            }
        }
        let value = &normed * self.value(gamma) + self.value(beta);
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normed,
                inv_std,
            },
            ng,
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![.., start..start + len]).to_owned();
        let ng = self.ng(a);
        self.push(value, Op::SliceCols(a, start), ng)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).slice(s![start..start + len, ..]).to_owned();
        let ng = self.ng(a);
        self.push(value, Op::SliceRows(a, start), ng)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        let ng = parts.iter().any(|&p| self.ng(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), ng)
    }

    /// Mean over rows: n×m → 1×m.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .mean_axis(Axis(0))
            .expect("non-empty")
            .insert_axis(Axis(0));
        let ng = self.ng(a);
        self.push(value, Op::MeanRows(a), ng)
    }

    /// Tiles a 1×m row into n×m.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Var {
        let row = self.value(a).row(0).to_owned();
        let value = row.broadcast((n, row.len())).expect("row broadcast").to_owned();
        let ng = self.ng(a);
        self.push(value, Op::RepeatRows(a), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        let ng = self.ng(a);
        self.push(value, Op::Transpose(a), ng)
    }

    /// Maximum of each row: n×m → n×1. Gradient flows to the first argmax.
    pub fn row_max(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut idx = Vec::with_capacity(av.nrows());
        let mut value = Array2::zeros((av.nrows(), 1));
        for (i, row) in av.axis_iter(Axis(0)).enumerate() {
            let (k, m) = row.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |acc, (k, &v)| {
                    if v > acc.1 {
                        (k, v)
                    } else {
                        acc
                    }
                },
            );
            idx.push(k);
            value[[i, 0]] = m;
        }
        let ng = self.ng(a);
        self.push(value, Op::RowMax(a, idx), ng)
    }

    /// Sum of all entries as a 1×1 node.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.ng(a);
        self.push(value, Op::Sum(a), ng)
    }

    /// Mean softmax cross-entropy over rows that carry a target class.
    /// Rows with `None` are ignored; with no targets the loss is zero.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<Option<usize>>) -> Var {
        let probs = softmax_rows(self.value(logits));
        let lv = self.value(logits);
        let mut total = 0.0;
        let mut count = 0usize;
        for (t, target) in targets.iter().enumerate() {
            if let Some(c) = *target {
                let row = lv.row(t);
                let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                total += lse - row[c];
                count += 1;
            }
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        let ng = self.ng(logits);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::CrossEntropy { logits, targets, probs },
            ng,
        )
    }

    /// Mean binary cross-entropy of a T×1 probability column.
    pub fn bce(&mut self, prob: Var, targets: Vec<f64>) -> Var {
        let pv = self.value(prob);
        let n = targets.len().max(1) as f64;
        let loss = pv
            .iter()
            .zip(&targets)
            .map(|(&p, &y)| {
                let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / n;
        let ng = self.ng(prob);
        self.push(Array2::from_elem((1, 1), loss), Op::Bce { prob, targets }, ng)
    }

    /// Mean 1-D DIoU loss over timesteps with a target interval. The
    /// predicted interval at `t` is `[t - d_start[t], t + d_end[t]]`.
    pub fn diou(&mut self, d_start: Var, d_end: Var, targets: Vec<IntervalTarget>) -> Var {
        let ds = self.value(d_start);
        let de = self.value(d_end);
        let mut total = 0.0;
        let mut count = 0usize;
        for (t, target) in targets.iter().enumerate() {
            if let Some((gs, ge)) = *target {
                let tf = t as f64;
                total += diou_parts(tf - ds[[t, 0]], tf + de[[t, 0]], gs, ge).loss;
                count += 1;
            }
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        let ng = self.ng(d_start) || self.ng(d_end);
        self.push(
            Array2::from_elem((1, 1), loss),
            Op::Diou {
                d_start,
                d_end,
                targets,
            },
            ng,
        )
    }

    /// Back-propagates from a 1×1 node.
    pub fn backward(&self, out: Var) -> Gradients {
        assert_eq!(self.shape(out), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Array2::ones((1, 1)));
        let mut result = Gradients::default();

        for i in (0..=out.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    result.inputs.insert(Var(i), g);
                }
                Op::Param(id) => {
                    result.params.insert(*id, g);
                }
                Op::Add(a, b) => {
                    self.acc(&mut grads, *a, || g.clone());
                    self.acc(&mut grads, *b, || g.clone());
                }
                Op::AddRow(a, row) => {
                    self.acc(&mut grads, *row, || g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    self.acc(&mut grads, *a, || g.clone());
                }
                Op::AddScalar(a) => self.acc(&mut grads, *a, || g.clone()),
                Op::MatMul(a, b) => {
                    self.acc(&mut grads, *a, || g.dot(&self.value(*b).t()));
                    self.acc(&mut grads, *b, || self.value(*a).t().dot(&g));
                }
                Op::MatMulT(a, b) => {
                    self.acc(&mut grads, *a, || g.dot(self.value(*b)));
                    self.acc(&mut grads, *b, || g.t().dot(self.value(*a)));
                }
                Op::Scale(a, c) => self.acc(&mut grads, *a, || &g * *c),
                Op::ScaleBy(a, w, idx) => {
                    let c = self.value(*w)[[0, *idx]];
                    let (wr, wc) = self.shape(*w);
                    self.acc(&mut grads, *w, || {
                        let mut gw = Array2::zeros((wr, wc));
                        gw[[0, *idx]] = (&g * self.value(*a)).sum();
                        gw
                    });
                    self.acc(&mut grads, *a, || &g * c);
                }
                Op::MaskRows(a, mask) => self.acc(&mut grads, *a, || {
                    let mut ga = g.clone();
                    for (mut row, &m) in ga.axis_iter_mut(Axis(0)).zip(mask) {
                        row *= m;
                    }
                    ga
                }),
                Op::Relu(a) => self.acc(&mut grads, *a, || {
                    let mut ga = g.clone();
                    ga.zip_mut_with(self.value(*a), |d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                    ga
                }),
                Op::Gelu(a) => self.acc(&mut grads, *a, || {
                    let mut ga = g.clone();
                    ga.zip_mut_with(self.value(*a), |d, &x| *d *= gelu_grad(x));
                    ga
                }),
                Op::Sigmoid(a) => self.acc(&mut grads, *a, || {
                    let mut ga = g.clone();
                    ga.zip_mut_with(&node.value, |d, &y| *d *= y * (1.0 - y));
                    ga
                }),
                Op::Softplus(a) => self.acc(&mut grads, *a, || {
                    let mut ga = g.clone();
                    ga.zip_mut_with(self.value(*a), |d, &x| *d *= sigmoid(x));
                    ga
                }),
                Op::SoftmaxRows(a) => self.acc(&mut grads, *a, || {
                    let y = &node.value;
                    let mut ga = &g * y;
                    for (mut row, yrow) in ga.axis_iter_mut(Axis(0)).zip(y.axis_iter(Axis(0))) {
                        let dot = row.sum();
                        row.zip_mut_with(&yrow, |v, &yy| *v -= dot * yy);
                    }
                    ga
                }),
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    normed,
                    inv_std,
                } => {
                    self.acc(&mut grads, *beta, || g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    self.acc(&mut grads, *gamma, || {
                        (&g * normed).sum_axis(Axis(0)).insert_axis(Axis(0))
                    });
                    self.acc(&mut grads, *x, || {
                        let dn = &g * self.value(*gamma);
                        let m = dn.ncols() as f64;
                        let mut gx = Array2::zeros(dn.dim());
                        for i in 0..dn.nrows() {
                            let dr = dn.row(i);
                            let nr = normed.row(i);
                            let mean_d = dr.sum() / m;
                            let mean_dn = dr.dot(&nr) / m;
                            for j in 0..dn.ncols() {
                                gx[[i, j]] = inv_std[i] * (dr[j] - mean_d - nr[j] * mean_dn);
                            }
                        }
                        gx
                    });
                }
                Op::SliceCols(a, start) => {
                    let shape = self.shape(*a);
                    let (start, len) = (*start, g.ncols());
                    self.acc(&mut grads, *a, || {
                        let mut ga = Array2::zeros(shape);
                        ga.slice_mut(s![.., start..start + len]).assign(&g);
                        ga
                    });
                }
                Op::SliceRows(a, start) => {
                    let shape = self.shape(*a);
                    let (start, len) = (*start, g.nrows());
                    self.acc(&mut grads, *a, || {
                        let mut ga = Array2::zeros(shape);
                        ga.slice_mut(s![start..start + len, ..]).assign(&g);
                        ga
                    });
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.shape(p).1;
                        let o = offset;
                        self.acc(&mut grads, p, || g.slice(s![.., o..o + w]).to_owned());
                        offset += w;
                    }
                }
                Op::MeanRows(a) => {
                    let (n, m) = self.shape(*a);
                    self.acc(&mut grads, *a, || {
                        g.broadcast((n, m)).expect("row broadcast").to_owned() / n as f64
                    });
                }
                Op::RepeatRows(a) => self.acc(&mut grads, *a, || g.sum_axis(Axis(0)).insert_axis(Axis(0))),
                Op::Transpose(a) => self.acc(&mut grads, *a, || g.t().to_owned()),
                Op::RowMax(a, idx) => {
                    let shape = self.shape(*a);
                    self.acc(&mut grads, *a, || {
                        let mut ga = Array2::zeros(shape);
                        for (i, &k) in idx.iter().enumerate() {
                            ga[[i, k]] = g[[i, 0]];
                        }
                        ga
                    });
                }
                Op::Sum(a) => {
                    let shape = self.shape(*a);
                    self.acc(&mut grads, *a, || Array2::from_elem(shape, g[[0, 0]]));
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let count = targets.iter().filter(|t| t.is_some()).count();
                    self.acc(&mut grads, *logits, || {
                        let mut gl = Array2::zeros(probs.dim());
                        if count > 0 {
                            let w = g[[0, 0]] / count as f64;
                            for (t, target) in targets.iter().enumerate() {
                                if let Some(c) = *target {
                                    let mut row = gl.row_mut(t);
                                    row.assign(&probs.row(t));
                                    row[c] -= 1.0;
                                    row *= w;
                                }
                            }
                        }
                        gl
                    });
                }
                Op::Bce { prob, targets } => {
                    let shape = self.shape(*prob);
                    let n = targets.len().max(1) as f64;
                    self.acc(&mut grads, *prob, || {
                        let pv = self.value(*prob);
                        let mut gp = Array2::zeros(shape);
                        for (t, &y) in targets.iter().enumerate() {
                            let p = pv[[t, 0]];
                            if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
                                gp[[t, 0]] = g[[0, 0]] * -(y / p - (1.0 - y) / (1.0 - p)) / n;
                            }
                        }
                        gp
                    });
                }
                Op::Diou {
                    d_start,
                    d_end,
                    targets,
                } => {
                    let count = targets.iter().filter(|t| t.is_some()).count();
                    let ds = self.value(*d_start);
                    let de = self.value(*d_end);
                    let mut gs_out = Array2::zeros(ds.dim());
                    let mut ge_out = Array2::zeros(de.dim());
                    if count > 0 {
                        let w = g[[0, 0]] / count as f64;
                        for (t, target) in targets.iter().enumerate() {
                            if let Some((gs, ge)) = *target {
                                let tf = t as f64;
                                let parts = diou_parts(tf - ds[[t, 0]], tf + de[[t, 0]], gs, ge);
                                // start = t - d_start, so d(start)/d(d_start) = -1
                                gs_out[[t, 0]] = -parts.d_start * w;
                                ge_out[[t, 0]] = parts.d_end * w;
                            }
                        }
                    }
                    self.acc(&mut grads, *d_start, || gs_out);
                    self.acc(&mut grads, *d_end, || ge_out);
                }
            }
        }
        result
    }

    fn acc(&self, grads: &mut [Option<Array2<f64>>], v: Var, f: impl FnOnce() -> Array2<f64>) {
        if !self.ng(v) {
            return;
        }
        let delta = f();
        match &mut grads[v.0] {
            Some(existing) => *existing += &delta,
            slot @ None => *slot = Some(delta),
        }
    }
}

pub(crate) struct DiouParts {
    pub loss: f64,
    /// Partial derivative with respect to the predicted start.
    pub d_start: f64,
    /// Partial derivative with respect to the predicted end.
    pub d_end: f64,
}

/// 1-D DIoU loss and its partials with respect to the predicted endpoints.
pub(crate) fn diou_parts(ps: f64, pe: f64, gs: f64, ge: f64) -> DiouParts {
    let inter_lo = ps.max(gs);
    let inter_hi = pe.min(ge);
    let inter = (inter_hi - inter_lo).max(0.0);
    let union = (pe - ps) + (ge - gs) - inter;
    let iou = inter / union;
    let cp = 0.5 * (ps + pe);
    let cg = 0.5 * (gs + ge);
    let span = pe.max(ge) - ps.min(gs);
    let q = (cp - cg).powi(2);
    let loss = 1.0 - iou + q / (span * span);

    let overlap = inter > 0.0;
    let dinter_ps = if overlap && ps > gs { -1.0 } else { 0.0 };
    let dinter_pe = if overlap && pe < ge { 1.0 } else { 0.0 };
    let dunion_ps = -1.0 - dinter_ps;
    let dunion_pe = 1.0 - dinter_pe;
    let diou_ps = (dinter_ps * union - inter * dunion_ps) / (union * union);
    let diou_pe = (dinter_pe * union - inter * dunion_pe) / (union * union);
    let dspan_ps = if ps < gs { -1.0 } else { 0.0 };
    let dspan_pe = if pe > ge { 1.0 } else { 0.0 };
    let span3 = span * span * span;
    let dpen_ps = (cp - cg) / (span * span) - 2.0 * q * dspan_ps / span3;
    let dpen_pe = (cp - cg) / (span * span) - 2.0 * q * dspan_pe / span3;

    DiouParts {
        loss,
        d_start: -diou_ps + dpen_ps,
        d_end: -diou_pe + dpen_pe,
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x.powi(3))).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x.powi(3));
    let th = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
    out
}
