//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! Every value is a 2-D array; row vectors are `1 x n`, scalars `1 x 1`.
//! Nodes are appended to a tape in evaluation order and differentiated by
//! a single backward sweep.

use ndarray::{Array2, Axis, Zip};

use crate::error::{Result, SpnError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    /// `a (n x m) + b (1 x m)` broadcast over rows.
    AddRow(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Exp(usize),
    Square(usize),
    Clip(usize, f64, f64),
    Min(usize, usize),
    /// Entries where `keep` is false are replaced by a constant.
    MaskFill(usize, Array2<bool>),
    LogSoftmax(usize),
    /// One column per row, giving `n x 1`.
    Gather(usize, Vec<usize>),
    /// Row-wise `-sum exp(l) l` of log-probabilities, giving `n x 1`.
    Entropy(usize),
    Mean(usize),
}

#[derive(Clone, Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    label: Option<String>,
    /// Whether any differentiable leaf feeds this node.
    grad: bool,
}

impl Op {
    fn inputs(&self) -> [Option<usize>; 2] {
        match *self {
            Op::Leaf => [None, None],
            Op::MatMul(a, b) | Op::AddRow(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Min(a, b) => {
                [Some(a), Some(b)]
            }
            Op::Scale(a, _)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Square(a)
            | Op::Clip(a, _, _)
            | Op::MaskFill(a, _)
            | Op::LogSoftmax(a)
            | Op::Gather(a, _)
            | Op::Entropy(a)
            | Op::Mean(a) => [Some(a), None],
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Hyperbolic tangent through a polynomial `exp(2x) - 1`; agrees with the
/// libm version to a few units in the last place at about half the cost,
/// which matters because activations dominate network evaluation time.
#[inline]
pub fn tanh(x: f64) -> f64 {
    if x.is_nan() {
        return x;
    }
    let y = 2.0 * x.clamp(-20.0, 20.0);
    let k = (y * std::f64::consts::LOG2_E).round();
    let r = y - k * std::f64::consts::LN_2;
    // Taylor series of exp(r) - 1 for |r| <= ln(2) / 2
    let mut p = 1.0 / 479_001_600.0;
    for c in [
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
    ] {
        p = p * r + c;
    }
    let pm1 = p * r;
    let em1 = if k == 0.0 { pm1 } else { f64::from_bits(((k as i64 + 1023) as u64) << 52) * (1.0 + pm1) - 1.0 };
    em1 / (em1 + 2.0)
}

/// Row-wise log-softmax with the max-shift, shared with plain inference.
pub fn log_softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for &v in row.iter() {
            s += (v - m).exp();
        }
        let lse = m + s.ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        let grad = op.inputs().iter().flatten().any(|&i| self.nodes[i].grad);
        self.nodes.push(Node { value, op, label: None, grad });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, label: None, grad: true });
        Var(self.nodes.len() - 1)
    }

    /// An input that receives no gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    /// Names a node for error reports.
    pub fn label(&mut self, v: Var, name: impl Into<String>) -> Var {
        self.nodes[v.0].label = Some(name.into());
        v
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a.0, b.0))
    }

    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::AddRow(a.0, b.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a.0, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(tanh);
        self.push(v, Op::Tanh(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a.0))
    }

    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(v, Op::Clip(a.0, lo, hi))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        Zip::from(&mut v).and(self.value(b)).for_each(|x, &y| *x = x.min(y));
        self.push(v, Op::Min(a.0, b.0))
    }

    pub fn mask_fill(&mut self, a: Var, keep: Array2<bool>, fill: f64) -> Var {
        let mut v = self.value(a).clone();
        Zip::from(&mut v).and(&keep).for_each(|x, &k| {
            if !k {
                *x = fill;
            }
        });
        self.push(v, Op::MaskFill(a.0, keep))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = log_softmax_rows(self.value(a));
        self.push(v, Op::LogSoftmax(a.0))
    }

    pub fn gather(&mut self, a: Var, cols: Vec<usize>) -> Var {
        let x = self.value(a);
        let v = Array2::from_shape_fn((cols.len(), 1), |(i, _)| x[[i, cols[i]]]);
        self.push(v, Op::Gather(a.0, cols))
    }

    pub fn entropy(&mut self, logp: Var) -> Var {
        let x = self.value(logp);
        let v = Array2::from_shape_fn((x.nrows(), 1), |(i, _)| {
            let mut h = 0.0;
            for &l in x.row(i) {
                h -= l.exp() * l;
            }
            h
        });
        self.push(v, Op::Entropy(logp.0))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Array2::from_elem((1, 1), x.sum() / x.len() as f64);
        self.push(v, Op::Mean(a.0))
    }

    /// Fails on the first node holding a non-finite value, naming the
    /// nearest labelled node at or before it.
    pub fn check_finite(&self) -> Result<()> {
        let mut last_label = "input";
        for node in &self.nodes {
            if let Some(l) = &node.label {
                last_label = l;
            }
            if node.value.iter().any(|x| !x.is_finite()) {
                let name = node.label.as_deref().unwrap_or(last_label);
                return Err(SpnError::NonFinite(format!("value at {name}")));
            }
        }
        Ok(())
    }

    /// Gradients of a scalar node with respect to every node.
    pub fn backward(&self, out: Var) -> Gradients {
        let n = out.0 + 1;
        let mut g: Vec<Option<Array2<f64>>> = vec![None; n];
        g[out.0] = Some(Array2::ones(self.nodes[out.0].value.raw_dim()));
        let needs: Vec<bool> = self.nodes[..n].iter().map(|x| x.grad).collect();
        let acc = |g: &mut [Option<Array2<f64>>], i: usize, d: Array2<f64>| {
            if !needs[i] {
                return;
            }
            match &mut g[i] {
                Some(x) => *x += &d,
                slot @ None => *slot = Some(d),
            }
        };
        for i in (0..n).rev() {
            if !needs[i] {
                continue;
            }
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    g[i] = Some(gi);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if needs[*a] {
                        acc(&mut g, *a, gi.dot(&self.nodes[*b].value.t()));
                    }
                    if needs[*b] {
                        acc(&mut g, *b, self.nodes[*a].value.t().dot(&gi));
                    }
                }
                Op::AddRow(a, b) => {
                    let db = gi.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut g, *a, gi);
                    acc(&mut g, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut g, *a, gi.clone());
                    acc(&mut g, *b, gi);
                }
                Op::Sub(a, b) => {
                    acc(&mut g, *b, -&gi);
                    acc(&mut g, *a, gi);
                }
                Op::Mul(a, b) => {
                    let da = &gi * &self.nodes[*b].value;
                    let db = &gi * &self.nodes[*a].value;
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::Scale(a, s) => acc(&mut g, *a, gi * *s),
                Op::Tanh(a) => {
                    let mut d = gi;
                    Zip::from(&mut d).and(&node.value).for_each(|d, &y| *d *= 1.0 - y * y);
                    acc(&mut g, *a, d);
                }
                Op::Exp(a) => acc(&mut g, *a, gi * &node.value),
                Op::Square(a) => {
                    let mut d = gi;
                    Zip::from(&mut d).and(&self.nodes[*a].value).for_each(|d, &x| *d *= 2.0 * x);
                    acc(&mut g, *a, d);
                }
                Op::Clip(a, lo, hi) => {
                    let mut d = gi;
                    Zip::from(&mut d).and(&self.nodes[*a].value).for_each(|d, &x| {
                        if x < *lo || x > *hi {
                            *d = 0.0;
                        }
                    });
                    acc(&mut g, *a, d);
                }
                Op::Min(a, b) => {
                    let mut da = gi.clone();
                    let mut db = gi;
                    Zip::from(&mut da)
                        .and(&mut db)
                        .and(&self.nodes[*a].value)
                        .and(&self.nodes[*b].value)
                        .for_each(|da, db, &x, &y| {
                            if x <= y {
                                *db = 0.0;
                            } else {
                                *da = 0.0;
                            }
                        });
                    acc(&mut g, *a, da);
                    acc(&mut g, *b, db);
                }
                Op::MaskFill(a, keep) => {
                    let mut d = gi;
                    Zip::from(&mut d).and(keep).for_each(|d, &k| {
                        if !k {
                            *d = 0.0;
                        }
                    });
                    acc(&mut g, *a, d);
                }
                Op::LogSoftmax(a) => {
                    let mut d = gi;
                    for (mut drow, yrow) in d.rows_mut().into_iter().zip(node.value.rows()) {
                        let s: f64 = drow.iter().sum();
                        Zip::from(&mut drow).and(&yrow).for_each(|d, &y| *d -= y.exp() * s);
                    }
                    acc(&mut g, *a, d);
                }
                Op::Gather(a, cols) => {
                    let mut d = Array2::zeros(self.nodes[*a].value.raw_dim());
                    for (r, &c) in cols.iter().enumerate() {
                        d[[r, c]] = gi[[r, 0]];
                    }
                    acc(&mut g, *a, d);
                }
                Op::Entropy(a) => {
                    let x = &self.nodes[*a].value;
                    let mut d = Array2::zeros(x.raw_dim());
                    for r in 0..x.nrows() {
                        let gr = gi[[r, 0]];
                        for c in 0..x.ncols() {
                            let l = x[[r, c]];
                            d[[r, c]] = -gr * l.exp() * (l + 1.0);
                        }
                    }
                    acc(&mut g, *a, d);
                }
                Op::Mean(a) => {
                    let shape = self.nodes[*a].value.raw_dim();
                    let cnt = self.nodes[*a].value.len() as f64;
                    acc(&mut g, *a, Array2::from_elem(shape, gi[[0, 0]] / cnt));
                }
            }
        }
        Gradients { grads: g }
    }
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf; zeros of the right shape when the output does not
    /// depend on it.
    pub fn of(&self, tape: &Tape, v: Var) -> Array2<f64> {
        match self.grads.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => Array2::zeros(tape.value(v).raw_dim()),
        }
    }
}
