//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied during a forward pass. Node
//! inputs always precede the node itself, so replaying the backward rules in
//! reverse insertion order visits each node after all of its consumers.
//! Parameters are read through a shared borrow of the [`ParamStore`]; the
//! resulting [`Gradients`] are applied to the store once the tape is done.

use std::borrow::Cow;
use std::time::{Duration, Instant};

use super::matrix::{dot, Matrix};
use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Coarse cost buckets used by the optional profiler.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Section {
    Other = 0,
    /// Linear query/key projections of a sequence.
    Projection = 1,
    /// Logits, softmax, and mixing: the part quadratic in sequence length.
    AttentionCore = 2,
}

/// Accumulated wall time per [`Section`], forward and backward combined.
#[derive(Clone, Copy, Debug, Default)]
pub struct Profile {
    pub time: [Duration; 3],
}

impl Profile {
    pub fn get(&self, section: Section) -> Duration {
        self.time[section as usize]
    }

    pub fn merge(&mut self, other: &Profile) {
        for (a, b) in self.time.iter_mut().zip(other.time) {
            *a += b;
        }
    }
}

type Derivative = Box<dyn Fn(f64) -> f64>;

enum Op {
    Constant,
    Param(ParamId),
    Gather { param: ParamId, ids: Vec<usize> },
    MatMul(Var, Var),
    MatMulTransposed(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    SoftmaxRows(Var),
    MeanRows(Var),
    MaxRows(Var, Vec<usize>),
    Dot(Var, Var),
    Sum(Var),
    SumSquares(Var),
    Softplus(Var),
    Map(Var, Derivative),
}

struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op,
    section: Section,
}

/// The computation record for one forward pass.
pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node<'a>>,
    section: Section,
    profiling: bool,
    profile: Profile,
    kink_margin: f64,
}

/// Parameter gradients produced by [`Tape::backward`].
#[derive(Debug, Default)]
pub struct Gradients {
    dense: Vec<(ParamId, Matrix)>,
    rows: Vec<(ParamId, Vec<usize>, Matrix)>,
}

impl Gradients {
    /// Adds every gradient into the matching parameter's accumulator.
    pub fn apply_to(&self, store: &mut ParamStore) {
        for (id, g) in &self.dense {
            store.get_mut(*id).accumulate_dense(g);
        }
        for (id, ids, g) in &self.rows {
            let p = store.get_mut(*id);
            for (k, &row) in ids.iter().enumerate() {
                p.accumulate_row(row, g.row(k));
            }
        }
    }
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(64),
            section: Section::Other,
            profiling: false,
            profile: Profile::default(),
            kink_margin: f64::INFINITY,
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn set_profiling(&mut self, on: bool) {
        self.profiling = on;
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Sets the section subsequent nodes are attributed to; returns the
    /// previous one.
    pub fn enter_section(&mut self, section: Section) -> Section {
        std::mem::replace(&mut self.section, section)
    }

    /// Smallest distance of any ReLU input to 0 or of any column maximum to
    /// its runner-up seen so far. Finite differences are only trustworthy
    /// when perturbations stay below this margin.
    pub fn kink_margin(&self) -> f64 {
        self.kink_margin
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.get(0, 0)
    }

    fn push(&mut self, value: Cow<'a, Matrix>, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            op,
            section: self.section,
        });
        Var(self.nodes.len() - 1)
    }

    fn timed<T>(&mut self, f: impl FnOnce(&Self) -> T) -> T {
        if self.profiling {
            let start = Instant::now();
            let out = f(self);
            self.profile.time[self.section as usize] += start.elapsed();
            out
        } else {
            f(self)
        }
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Cow::Owned(value), Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let store = self.store;
        self.push(Cow::Borrowed(store.get(id).value()), Op::Param(id))
    }

    /// Gathers rows `ids` of a parameter into an `ids.len() × cols` matrix.
    pub fn gather(&mut self, id: ParamId, ids: &[usize]) -> Result<Var> {
        let table = self.store.get(id).value();
        if ids.is_empty() {
            return Err(Error::EmptySequence { op: "gather" });
        }
        let cols = table.cols();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            if i >= table.rows() {
                return Err(Error::Index {
                    what: "embedding table",
                    index: i,
                    len: table.rows(),
                });
            }
            data.extend_from_slice(table.row(i));
        }
        let value = Matrix::from_vec(ids.len(), cols, data)?;
        Ok(self.push(
            Cow::Owned(value),
            Op::Gather {
                param: id,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.timed(|t| t.value(a).matmul(t.value(b)))?;
        Ok(self.push(Cow::Owned(value), Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_transposed(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.timed(|t| t.value(a).matmul_transposed(t.value(b)))?;
        Ok(self.push(Cow::Owned(value), Op::MatMulTransposed(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Cow::Owned(value), Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let mut value = self.value(a).clone();
        value.add_scaled(self.value(b), -1.0)?;
        Ok(self.push(Cow::Owned(value), Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        self.push(Cow::Owned(value), Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let margin = x
            .as_slice()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.abs()));
        self.kink_margin = self.kink_margin.min(margin);
        let value = self.timed(|t| t.value(a).relu());
        self.push(Cow::Owned(value), Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let value = self.timed(|t| t.value(a).softmax_rows());
        self.push(Cow::Owned(value), Op::SoftmaxRows(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).mean_rows()?;
        Ok(self.push(Cow::Owned(value), Op::MeanRows(a)))
    }

    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (value, arg) = x.max_rows()?;
        let mut margin = f64::INFINITY;
        if x.rows() > 1 {
            for (c, &best) in arg.iter().enumerate() {
                let top = value.get(0, c);
                let runner_up = (0..x.rows())
                    .filter(|&r| r != best)
                    .map(|r| x.get(r, c))
                    .fold(f64::NEG_INFINITY, f64::max);
                margin = margin.min(top - runner_up);
            }
        }
        self.kink_margin = self.kink_margin.min(margin);
        Ok(self.push(Cow::Owned(value), Op::MaxRows(a, arg)))
    }

    /// Inner product of two same-shape matrices, as a `1×1` node.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::Dimension {
                op: "dot",
                left: x.shape(),
                right: y.shape(),
            });
        }
        let value = Matrix::filled(1, 1, dot(x.as_slice(), y.as_slice()));
        Ok(self.push(Cow::Owned(value), Op::Dot(a, b)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(a).sum());
        self.push(Cow::Owned(value), Op::Sum(a))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(a).sum_squares());
        self.push(Cow::Owned(value), Op::SumSquares(a))
    }

    /// Elementwise `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        self.push(Cow::Owned(value), Op::Softplus(a))
    }

    /// Elementwise map with a caller-supplied derivative.
    pub fn map(
        &mut self,
        a: Var,
        f: impl Fn(f64) -> f64,
        derivative: impl Fn(f64) -> f64 + 'static,
    ) -> Var {
        let value = self.value(a).map(f);
        self.push(Cow::Owned(value), Op::Map(a, Box::new(derivative)))
    }

    /// Runs the backward rules from a scalar output and returns the
    /// parameter gradients.
    pub fn backward(&mut self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.shape() != (1, 1) {
            return Err(Error::Dimension {
                op: "backward",
                left: out.shape(),
                right: (1, 1),
            });
        }
        if !out.is_finite() {
            return Err(Error::NonFinite(format!(
                "backward from non-finite output {}",
                out.get(0, 0)
            )));
        }
        let mut grads: Vec<Option<Matrix>> = Vec::with_capacity(output.0 + 1);
        grads.resize_with(output.0 + 1, || None);
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut result = Gradients::default();

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let start = self.profiling.then(Instant::now);
            let node = &self.nodes[idx];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => result.dense.push((*id, g)),
                Op::Gather { param, ids } => result.rows.push((*param, ids.clone(), g)),
                Op::MatMul(a, b) => {
                    let da = g.matmul_transposed(self.value(*b))?;
                    let db = self.value(*a).transposed_matmul(&g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::MatMulTransposed(a, b) => {
                    let da = g.matmul(self.value(*b))?;
                    let db = g.transposed_matmul(self.value(*a))?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.scale(-1.0));
                    accumulate(&mut grads, *a, g);
                }
                Op::Scale(a, s) => accumulate(&mut grads, *a, g.scale(*s)),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut da = g;
                    for (d, &xv) in da.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        if xv <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut da = g;
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = da.row_mut(r);
                        let inner = dot(gr, yr);
                        for (gv, &yv) in gr.iter_mut().zip(yr) {
                            *gv = yv * (*gv - inner);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::MeanRows(a) => {
                    let x = self.value(*a);
                    let n = x.rows() as f64;
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        for (d, &gv) in da.row_mut(r).iter_mut().zip(g.as_slice()) {
                            *d = gv / n;
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::MaxRows(a, arg) => {
                    let x = self.value(*a);
                    let mut da = Matrix::zeros(x.rows(), x.cols());
                    for (c, &r) in arg.iter().enumerate() {
                        da.set(r, c, g.get(0, c));
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Dot(a, b) => {
                    let s = g.get(0, 0);
                    let da = self.value(*b).scale(s);
                    let db = self.value(*a).scale(s);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut grads, *a, Matrix::filled(r, c, g.get(0, 0)));
                }
                Op::SumSquares(a) => {
                    let da = self.value(*a).scale(2.0 * g.get(0, 0));
                    accumulate(&mut grads, *a, da);
                }
                Op::Softplus(a) => {
                    let x = self.value(*a);
                    let mut da = g;
                    for (d, &xv) in da.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        *d *= sigmoid(xv);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Map(a, derivative) => {
                    let x = self.value(*a);
                    let mut da = g;
                    for (d, &xv) in da.as_mut_slice().iter_mut().zip(x.as_slice()) {
                        *d *= derivative(xv);
                    }
                    accumulate(&mut grads, *a, da);
                }
            }
            if let Some(start) = start {
                self.profile.time[self.nodes[idx].section as usize] += start.elapsed();
            }
        }
        Ok(result)
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Logistic function, stable for large |x|.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eˣ)`, stable for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
