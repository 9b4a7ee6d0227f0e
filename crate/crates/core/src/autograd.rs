//! Minimal reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records operations on [`Var`] handles; [`Tape::backward`]
//! returns gradients for every parameter tensor the tape read. Parameters
//! live outside the tape in a slice indexed by position.

use std::collections::HashMap;

use ndarray::{concatenate, s, Array2, Axis, Zip};

pub type Matrix = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

enum Op {
    Input,
    Param(usize),
    Gather { table: usize, rows: Vec<usize> },
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Matrix, inv_std: Vec<f64> },
    Gelu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softplus(Var),
    ColSlice(Var, usize),
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    L2NormalizeRows(Var, Vec<f64>),
    Sum(Var),
    RowDot(Var, Var),
}

struct Node {
    value: Matrix,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p [Matrix],
    nodes: Vec<Node>,
    param_vars: HashMap<usize, Var>,
}

/// Gradients indexed like the parameter slice; `None` for tensors the tape
/// never touched.
#[derive(Debug, Clone)]
pub struct Grads(pub Vec<Option<Matrix>>);

impl Grads {
    pub fn get(&self, param: usize) -> Option<&Matrix> {
        self.0.get(param).and_then(Option::as_ref)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p [Matrix]) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant with no gradient.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    /// The parameter tensor at `index`, recorded once per tape.
    pub fn param(&mut self, index: usize) -> Var {
        if let Some(&v) = self.param_vars.get(&index) {
            return v;
        }
        let v = self.push(self.params[index].clone(), Op::Param(index));
        self.param_vars.insert(index, v);
        v
    }

    /// Rows of a parameter table, without copying the whole table onto the tape.
    pub fn gather(&mut self, table: usize, rows: &[usize]) -> Var {
        let t = &self.params[table];
        let mut value = Matrix::zeros((rows.len(), t.ncols()));
        for (i, &r) in rows.iter().enumerate() {
            value.row_mut(i).assign(&t.row(r));
        }
        self.push(
            value,
            Op::Gather {
                table,
                rows: rows.to_vec(),
            },
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddScalar(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row /= sum;
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    /// Row-wise layer normalization with `1 x n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let xv = self.value(x);
        let n = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / n;
            let var = row.fold(0.0, |acc, &v| acc + (v - mean) * (v - mean)) / n;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        let v = &xhat * self.value(gain) + self.value(bias);
        self.push(
            v,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .mapv(|x| 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()));
        self.push(v, Op::Gelu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    /// `ln(1 + e^x)`, computed stably.
    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn col_slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::ColSlice(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Column means as a `1 x n` row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self
            .value(a)
            .mean_axis(Axis(0))
            .expect("at least one row")
            .insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a))
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        let mut norms = Vec::with_capacity(v.nrows());
        for mut row in v.rows_mut() {
            let n = row.dot(&row).sqrt().max(1e-12);
            row /= n;
            norms.push(n);
        }
        self.push(v, Op::L2NormalizeRows(a, norms))
    }

    /// Sum of all entries as a `1 x 1` matrix.
    pub fn sum(&mut self, a: Var) -> Var {
        let v = Matrix::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// Per-row dot products as an `m x 1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let v = (av * bv).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(v, Op::RowDot(a, b))
    }

    /// Sum of the scalars in `vars` (each `1 x 1`).
    pub fn add_all(&mut self, vars: &[Var]) -> Option<Var> {
        let mut it = vars.iter();
        let first = *it.next()?;
        Some(it.fold(first, |acc, &v| self.add(acc, v)))
    }

    /// Reverse pass from the scalar `out`.
    pub fn backward(&self, out: Var) -> Grads {
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut param_grads: Vec<Option<Matrix>> = (0..self.params.len()).map(|_| None).collect();
        grads[out.0] = Some(Matrix::ones(self.nodes[out.0].value.dim()));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input => {}
                Op::Param(p) => match &mut param_grads[*p] {
                    Some(existing) => *existing += &g,
                    slot => *slot = Some(g),
                },
                Op::Gather { table, rows } => {
                    let slot = param_grads[*table].get_or_insert_with(|| Matrix::zeros(self.params[*table].dim()));
                    for (k, &r) in rows.iter().enumerate() {
                        let mut dst = slot.row_mut(r);
                        dst += &g.row(k);
                    }
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, r) => {
                    acc(&mut grads, *r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.dot(self.value(*b));
                    let gb = g.t().dot(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g * *c),
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = &g * y;
                    for (mut row, yr) in ga.rows_mut().into_iter().zip(y.rows()) {
                        let s = row.sum();
                        Zip::from(&mut row).and(&yr).for_each(|r, &yv| *r -= yv * s);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    acc(&mut grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(&mut grads, *gain, (&g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    let dxhat = &g * self.value(*gain);
                    let n = dxhat.ncols() as f64;
                    let mut gx = Matrix::zeros(dxhat.dim());
                    for r in 0..dxhat.nrows() {
                        let d = dxhat.row(r);
                        let xh = xhat.row(r);
                        let mean_d = d.sum() / n;
                        let mean_dx = d.dot(&xh) / n;
                        let inv = inv_std[r];
                        Zip::from(gx.row_mut(r))
                            .and(&d)
                            .and(&xh)
                            .for_each(|o, &dv, &xv| *o = inv * (dv - mean_d - xv * mean_dx));
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Gelu(a) => {
                    let ga = Zip::from(&g).and(self.value(*a)).map_collect(|&gv, &x| {
                        let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
                        let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                        gv * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = Zip::from(&g).and(&node.value).map_collect(|&gv, &y| gv * (1.0 - y * y));
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = Zip::from(&g).and(&node.value).map_collect(|&gv, &y| gv * y * (1.0 - y));
                    acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = Zip::from(&g)
                        .and(self.value(*a))
                        .map_collect(|&gv, &x| if x > 0.0 { gv } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let ga = Zip::from(&g).and(self.value(*a)).map_collect(|&gv, &x| gv * sigmoid(x));
                    acc(&mut grads, *a, ga);
                }
                Op::ColSlice(a, start) => {
                    let mut ga = Matrix::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        acc(&mut grads, *p, g.slice(s![.., at..at + w]).to_owned());
                        at += w;
                    }
                }
                Op::MeanRows(a) => {
                    let m = self.value(*a).nrows();
                    let row = &g / m as f64;
                    let ga = row.broadcast((m, g.ncols())).expect("1 x n row").to_owned();
                    acc(&mut grads, *a, ga);
                }
                Op::L2NormalizeRows(a, norms) => {
                    let y = &node.value;
                    let mut ga = g.clone();
                    for (r, mut row) in ga.rows_mut().into_iter().enumerate() {
                        let yr = y.row(r);
                        let proj = row.dot(&yr);
                        Zip::from(&mut row).and(&yr).for_each(|o, &yv| *o = (*o - yv * proj) / norms[r]);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Matrix::from_elem(self.value(*a).dim(), g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::RowDot(a, b) => {
                    let col = g.column(0).to_owned().insert_axis(Axis(1));
                    let ga = self.value(*b) * &col;
                    let gb = self.value(*a) * &col;
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
            }
        }
        Grads(param_grads)
    }
}
