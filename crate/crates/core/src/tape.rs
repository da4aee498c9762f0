//! Reverse-mode differentiation over whole matrices.
//!
//! A [`Tape`] records the forward computation as a flat list of nodes, each
//! one a primitive whose inputs were pushed before it, so the node order is
//! already a topological order. [`Tape::backward`] walks that list once in
//! reverse and accumulates adjoints.
//!
//! Only the primitives the mesh autoencoder needs exist: sparse·dense and
//! dense·dense products, elementwise add/multiply, scalar scaling, row-bias
//! broadcast, ReLU, outer products, reshapes, summation and the summed
//! absolute error.
//!
//! Errors are sticky rather than returned from every op: the first shape
//! mismatch or non-finite value is recorded and surfaces from
//! [`Tape::value`], [`Tape::scalar`] or [`Tape::backward`]. Subsequent ops on
//! a faulted tape produce placeholder values and never panic.

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy)]
enum Op<'s> {
    Leaf,
    Constant,
    SparseMul(&'s SparseMatrix, Var),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    Relu(Var),
    Outer(Var, Var),
    Reshape(Var),
    Sum(Var),
    AbsErrorSum(Var, Var),
}

impl Op<'_> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::SparseMul(..) => "sparse_matmul",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddBias(..) => "add_bias",
            Op::Relu(..) => "relu",
            Op::Outer(..) => "outer",
            Op::Reshape(..) => "reshape",
            Op::Sum(..) => "sum",
            Op::AbsErrorSum(..) => "abs_error_sum",
        }
    }
}

struct Node<'s> {
    value: DenseMatrix,
    op: Op<'s>,
    needs_grad: bool,
}

/// Recorded forward computation. Sparse operands are borrowed for `'s`.
pub struct Tape<'s> {
    nodes: Vec<Node<'s>>,
    fault: Option<Fault>,
}

enum Fault {
    Overflow { node: usize, op: &'static str },
    Shape(String),
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'s> Tape<'s> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: DenseMatrix) -> Var {
        self.push_checked(value, Op::Leaf, true)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push_checked(value, Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> Result<&DenseMatrix> {
        self.status()?;
        Ok(&self.nodes[v.0].value)
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> Result<f64> {
        let m = self.value(v)?;
        if m.shape() != (1, 1) {
            return Err(Error::contract(format!(
                "node {} is {:?}, expected a scalar",
                v.0,
                m.shape()
            )));
        }
        Ok(m.get(0, 0))
    }

    /// The first recorded fault, if any.
    pub fn status(&self) -> Result<()> {
        match &self.fault {
            None => Ok(()),
            Some(Fault::Overflow { node, op }) => Err(Error::NumericOverflow { node: *node, op }),
            Some(Fault::Shape(msg)) => Err(Error::contract(msg.clone())),
        }
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn val(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    fn push_checked(&mut self, value: DenseMatrix, op: Op<'s>, needs_grad: bool) -> Var {
        let idx = self.nodes.len();
        if self.fault.is_none() && !value.is_finite() {
            self.fault = Some(Fault::Overflow {
                node: idx,
                op: op.name(),
            });
        }
        self.nodes.push(Node { value, op, needs_grad });
        Var(idx)
    }

    fn push(&mut self, value: DenseMatrix, op: Op<'s>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|&v| self.needs(v));
        self.push_checked(value, op, needs_grad)
    }

    /// Records a shape fault and returns an inert placeholder node.
    fn mismatch(&mut self, op: &'static str, detail: String) -> Var {
        if self.fault.is_none() {
            self.fault = Some(Fault::Shape(format!("{op} at node {}: {detail}", self.nodes.len())));
        }
        self.nodes.push(Node {
            value: DenseMatrix::zeros(0, 0),
            op: Op::Constant,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn sparse_matmul(&mut self, m: &'s SparseMatrix, x: Var) -> Var {
        if m.cols() != self.shape(x).0 {
            let detail = format!("{}x{} · {:?}", m.rows(), m.cols(), self.shape(x));
            return self.mismatch("sparse_matmul", detail);
        }
        let value = m.mul_dense(self.val(x));
        self.push(value, Op::SparseMul(m, x), &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        if self.shape(a).1 != self.shape(b).0 {
            let detail = format!("{:?} · {:?}", self.shape(a), self.shape(b));
            return self.mismatch("matmul", detail);
        }
        let value = self.val(a).matmul(self.val(b));
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        if self.shape(a) != self.shape(b) {
            let detail = format!("{:?} + {:?}", self.shape(a), self.shape(b));
            return self.mismatch("add", detail);
        }
        let value = self.val(a).add(self.val(b));
        self.push(value, Op::Add(a, b), &[a, b])
    }

    /// `a - b`, composed from scale and add.
    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        if self.shape(a) != self.shape(b) {
            let detail = format!("{:?} ⊙ {:?}", self.shape(a), self.shape(b));
            return self.mismatch("mul", detail);
        }
        let (av, bv) = (self.val(a), self.val(b));
        let values = av.values().iter().zip(bv.values()).map(|(x, y)| x * y).collect();
        let value = DenseMatrix::from_vec(av.rows(), av.cols(), values);
        self.push(value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.val(a).scaled(s);
        self.push(value, Op::Scale(a, s), &[a])
    }

    /// Adds a `1 x F` bias row to every row of an `N x F` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (xs, bs) = (self.shape(x), self.shape(bias));
        if bs != (1, xs.1) {
            return self.mismatch("add_bias", format!("{xs:?} + bias {bs:?}"));
        }
        let mut value = self.val(x).clone();
        let b = self.val(bias).values().to_vec();
        for r in 0..xs.0 {
            for (o, bv) in value.row_mut(r).iter_mut().zip(&b) {
                *o += bv;
            }
        }
        self.push(value, Op::AddBias(x, bias), &[x, bias])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.val(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(value, Op::Relu(x), &[x])
    }

    /// Outer product of two vectors (any shape, read as flat vectors):
    /// `out[i][j] = a[i] * b[j]`.
    pub fn outer(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.val(a).values(), self.val(b).values());
        let mut values = Vec::with_capacity(av.len() * bv.len());
        for &x in av {
            values.extend(bv.iter().map(|&y| x * y));
        }
        let value = DenseMatrix::from_vec(av.len(), bv.len(), values);
        self.push(value, Op::Outer(a, b), &[a, b])
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Var {
        let (r, c) = self.shape(x);
        if r * c != rows * cols {
            return self.mismatch("reshape", format!("{r}x{c} -> {rows}x{cols}"));
        }
        let value = self.val(x).clone().reshaped(rows, cols);
        self.push(value, Op::Reshape(x), &[x])
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = DenseMatrix::from_vec(1, 1, vec![self.val(x).sum()]);
        self.push(value, Op::Sum(x), &[x])
    }

    /// `Σ |a - b|`, as a 1x1 node.
    pub fn abs_error_sum(&mut self, a: Var, b: Var) -> Var {
        if self.shape(a) != self.shape(b) {
            let detail = format!("{:?} vs {:?}", self.shape(a), self.shape(b));
            return self.mismatch("abs_error_sum", detail);
        }
        let total = self
            .val(a)
            .values()
            .iter()
            .zip(self.val(b).values())
            .map(|(x, y)| (x - y).abs())
            .sum();
        let value = DenseMatrix::from_vec(1, 1, vec![total]);
        self.push(value, Op::AbsErrorSum(a, b), &[a, b])
    }

    /// Mean absolute error, `Σ |a - b| / len`.
    pub fn mean_abs_error(&mut self, a: Var, b: Var) -> Var {
        let n = self.val(a).len().max(1);
        let s = self.abs_error_sum(a, b);
        self.scale(s, 1.0 / n as f64)
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        self.status()?;
        if self.shape(output) != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a scalar output, node {} is {:?}",
                output.0,
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match node.op {
                Op::Leaf | Op::Constant => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::SparseMul(m, x) => {
                    self.accumulate(&mut grads, x, || m.mul_dense_transposed(&g));
                }
                Op::MatMul(a, b) => {
                    self.accumulate(&mut grads, a, || g.matmul_nt(self.val(b)));
                    self.accumulate(&mut grads, b, || self.val(a).matmul_tn(&g));
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, a, || g.clone());
                    self.accumulate(&mut grads, b, || g.clone());
                }
                Op::Mul(a, b) => {
                    self.accumulate(&mut grads, a, || hadamard(&g, self.val(b)));
                    self.accumulate(&mut grads, b, || hadamard(&g, self.val(a)));
                }
                Op::Scale(a, s) => {
                    self.accumulate(&mut grads, a, || g.scaled(s));
                }
                Op::AddBias(x, bias) => {
                    self.accumulate(&mut grads, x, || g.clone());
                    self.accumulate(&mut grads, bias, || {
                        let mut col_sums = DenseMatrix::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (s, v) in col_sums.values_mut().iter_mut().zip(g.row(r)) {
                                *s += v;
                            }
                        }
                        col_sums
                    });
                }
                Op::Relu(x) => {
                    self.accumulate(&mut grads, x, || {
                        let xv = self.val(x);
                        let values = g
                            .values()
                            .iter()
                            .zip(xv.values())
                            .map(|(&gv, &v)| if v > 0.0 { gv } else { 0.0 })
                            .collect();
                        DenseMatrix::from_vec(g.rows(), g.cols(), values)
                    });
                }
                Op::Outer(a, b) => {
                    let (av, bv) = (self.val(a), self.val(b));
                    self.accumulate(&mut grads, a, || {
                        let col = DenseMatrix::column(bv.values().to_vec());
                        g.matmul(&col).reshaped(av.rows(), av.cols())
                    });
                    self.accumulate(&mut grads, b, || {
                        let col = DenseMatrix::column(av.values().to_vec());
                        g.matmul_tn(&col).reshaped(bv.rows(), bv.cols())
                    });
                }
                Op::Reshape(x) => {
                    let (r, c) = self.shape(x);
                    self.accumulate(&mut grads, x, || g.clone().reshaped(r, c));
                }
                Op::Sum(x) => {
                    let (r, c) = self.shape(x);
                    let s = g.get(0, 0);
                    self.accumulate(&mut grads, x, || DenseMatrix::filled(r, c, s));
                }
                Op::AbsErrorSum(a, b) => {
                    let s = g.get(0, 0);
                    let signs = {
                        let (av, bv) = (self.val(a), self.val(b));
                        let values = av
                            .values()
                            .iter()
                            .zip(bv.values())
                            .map(|(x, y)| s * sign(x - y))
                            .collect();
                        DenseMatrix::from_vec(av.rows(), av.cols(), values)
                    };
                    if self.needs(b) {
                        self.accumulate(&mut grads, b, || signs.scaled(-1.0));
                    }
                    self.accumulate(&mut grads, a, || signs);
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<DenseMatrix>], target: Var, contribution: impl FnOnce() -> DenseMatrix) {
        if !self.needs(target) {
            return;
        }
        let c = contribution();
        match &mut grads[target.0] {
            Some(existing) => existing.add_assign(&c),
            slot @ None => *slot = Some(c),
        }
    }
}

fn hadamard(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let values = a.values().iter().zip(b.values()).map(|(x, y)| x * y).collect();
    DenseMatrix::from_vec(a.rows(), a.cols(), values)
}

/// Sign with `sign(0) = 0`, the subgradient convention used throughout.
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for `v`, zero-filled to `shape` when absent.
    pub fn take_or_zero(&mut self, v: Var, shape: (usize, usize)) -> DenseMatrix {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| DenseMatrix::zeros(shape.0, shape.1))
    }
}

/// Runs the reverse pass from `output` and returns its value together with
/// one gradient per entry of `leaves` (zeros for leaves the output ignores).
pub fn evaluate_and_backprop(tape: &Tape<'_>, output: Var, leaves: &[Var]) -> Result<(f64, Vec<DenseMatrix>)> {
    let value = tape.scalar(output)?;
    let mut grads = tape.backward(output)?;
    let per_leaf = leaves.iter().map(|&v| grads.take_or_zero(v, tape.shape(v))).collect();
    Ok((value, per_leaf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absolute_error_value_and_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(DenseMatrix::column(vec![1.0, -2.0]));
        let zero = t.constant(DenseMatrix::zeros(2, 1));
        let f = t.abs_error_sum(x, zero);
        let (value, grads) = evaluate_and_backprop(&t, f, &[x]).unwrap();
        assert_eq!(value, 3.0);
        assert_eq!(grads[0].values(), &[1.0, -1.0]);
    }

    #[test]
    fn relu_kink_has_zero_subgradient() {
        let mut t = Tape::new();
        let theta = t.leaf(DenseMatrix::zeros(1, 1));
        let c = t.constant(DenseMatrix::filled(1, 3, 2.0));
        let prod = t.matmul(theta, c);
        let act = t.relu(prod);
        let f = t.sum(act);
        let (value, grads) = evaluate_and_backprop(&t, f, &[theta]).unwrap();
        assert_eq!(value, 0.0);
        assert_eq!(grads[0].values(), &[0.0]);
    }

    #[test]
    fn non_scalar_output_is_a_contract_violation() {
        let mut t = Tape::new();
        let x = t.leaf(DenseMatrix::zeros(2, 2));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_intermediate_names_the_node() {
        let mut t = Tape::new();
        let x = t.leaf(DenseMatrix::filled(1, 1, 1e300));
        let y = t.mul(x, x);
        let f = t.sum(y);
        match t.backward(f) {
            Err(Error::NumericOverflow { node, op }) => {
                assert_eq!(node, y.index());
                assert_eq!(op, "mul");
            }
            other => panic!("expected overflow, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn shape_mismatch_is_sticky_and_reported() {
        let mut t = Tape::new();
        let a = t.leaf(DenseMatrix::zeros(2, 3));
        let b = t.leaf(DenseMatrix::zeros(2, 3));
        let bad = t.matmul(a, b);
        let more = t.relu(bad);
        let f = t.sum(more);
        assert!(matches!(t.backward(f), Err(Error::Contract(_))));
        assert!(t.value(a).is_err());
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(DenseMatrix::filled(1, 2, 3.0));
        let unused = t.leaf(DenseMatrix::zeros(2, 2));
        let f = t.sum(x);
        let (_, grads) = evaluate_and_backprop(&t, f, &[x, unused]).unwrap();
        assert_eq!(grads[0].values(), &[1.0, 1.0]);
        assert_eq!(grads[1], DenseMatrix::zeros(2, 2));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // f = sum(x ⊙ x) → df/dx = 2x
        let mut t = Tape::new();
        let x = t.leaf(DenseMatrix::column(vec![1.5, -0.5]));
        let sq = t.mul(x, x);
        let f = t.sum(sq);
        let (_, grads) = evaluate_and_backprop(&t, f, &[x]).unwrap();
        assert_eq!(grads[0].values(), &[3.0, -1.0]);
    }
}
