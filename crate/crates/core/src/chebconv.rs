//! Chebyshev spectral graph convolution.
//!
//! A filter is a polynomial `Σ_k θ_k T_k(L̃)` in the scaled Laplacian, with
//! `T_0 = I`, `T_1 = L̃` and `T_k = 2 L̃ T_{k-1} - T_{k-2}`. A layer holds one
//! coefficient vector per (input feature, output feature) pair, stored here
//! as `K` matrices of shape `F_in x F_out` so that the layer output is
//! `Σ_k (T_k(L̃) x) Θ_k + bias`.

use crate::error::{ensure, Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::tape::{Tape, Var};

/// Coefficients and bias of one convolution, generic over storage so the
/// same layout can hold values, tape handles or gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct ChebParams<T> {
    /// `theta[k]` is `F_in x F_out`.
    pub theta: Vec<T>,
    /// `1 x F_out`.
    pub bias: T,
}

pub type ChebLayer = ChebParams<DenseMatrix>;

impl<T> ChebParams<T> {
    pub fn order(&self) -> usize {
        self.theta.len()
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> ChebParams<U> {
        ChebParams {
            theta: self.theta.iter().map(&mut f).collect(),
            bias: f(&self.bias),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.theta.iter().chain(std::iter::once(&self.bias))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.theta.iter_mut().chain(std::iter::once(&mut self.bias))
    }
}

impl ChebLayer {
    pub fn zeros(order: usize, f_in: usize, f_out: usize) -> Self {
        Self {
            theta: vec![DenseMatrix::zeros(f_in, f_out); order],
            bias: DenseMatrix::zeros(1, f_out),
        }
    }

    pub fn in_features(&self) -> usize {
        self.theta.first().map_or(0, DenseMatrix::rows)
    }

    pub fn out_features(&self) -> usize {
        self.bias.cols()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.theta.is_empty(), "Chebyshev order must be at least 1");
        let (fi, fo) = self.theta[0].shape();
        ensure!(
            self.theta.iter().all(|t| t.shape() == (fi, fo)),
            "Chebyshev coefficient matrices disagree in shape"
        );
        ensure!(self.bias.shape() == (1, fo), "bias must be 1 x {fo}");
        ensure!(
            self.iter().all(DenseMatrix::is_finite),
            "layer has non-finite parameters"
        );
        Ok(())
    }
}

/// `[T_0(L̃) x, …, T_{K-1}(L̃) x]`.
pub fn cheb_basis(scaled: &SparseMatrix, x: &DenseMatrix, order: usize) -> Result<Vec<DenseMatrix>> {
    ensure!(order >= 1, "Chebyshev order must be at least 1");
    ensure!(
        scaled.rows() == scaled.cols() && scaled.cols() == x.rows(),
        "scaled Laplacian {}x{} does not match input with {} rows",
        scaled.rows(),
        scaled.cols(),
        x.rows()
    );
    let mut basis = Vec::with_capacity(order);
    basis.push(x.clone());
    if order > 1 {
        basis.push(scaled.mul_dense(x));
    }
    for k in 2..order {
        let mut next = scaled.mul_dense(&basis[k - 1]).scaled(2.0);
        next.add_assign(&basis[k - 2].scaled(-1.0));
        basis.push(next);
    }
    Ok(basis)
}

/// Pre-activation output `Σ_k (T_k x) Θ_k + bias`.
pub fn cheb_conv(layer: &ChebLayer, scaled: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    layer.validate()?;
    ensure!(
        x.cols() == layer.in_features(),
        "input has {} features, layer expects {}",
        x.cols(),
        layer.in_features()
    );
    let basis = cheb_basis(scaled, x, layer.order())?;
    let mut y = basis[0].matmul(&layer.theta[0]);
    for (t, theta) in basis.iter().zip(&layer.theta).skip(1) {
        y = y.add(&t.matmul(theta));
    }
    for r in 0..y.rows() {
        for (o, b) in y.row_mut(r).iter_mut().zip(layer.bias.values()) {
            *o += b;
        }
    }
    if !y.is_finite() {
        return Err(Error::Numeric(
            "Chebyshev convolution produced non-finite output".into(),
        ));
    }
    Ok(y)
}

/// Records the same computation as [`cheb_conv`] on a tape.
pub fn cheb_conv_on_tape<'s>(tape: &mut Tape<'s>, layer: &ChebParams<Var>, scaled: &'s SparseMatrix, x: Var) -> Var {
    let order = layer.order();
    let mut basis: Vec<Var> = Vec::with_capacity(order);
    basis.push(x);
    if order > 1 {
        basis.push(tape.sparse_matmul(scaled, x));
    }
    for k in 2..order {
        let lx = tape.sparse_matmul(scaled, basis[k - 1]);
        let two_lx = tape.scale(lx, 2.0);
        let neg = tape.scale(basis[k - 2], -1.0);
        basis.push(tape.add(two_lx, neg));
    }
    let mut y = tape.matmul(basis[0], layer.theta[0]);
    for (&t, &theta) in basis.iter().zip(&layer.theta).skip(1) {
        let term = tape.matmul(t, theta);
        y = tape.add(y, term);
    }
    tape.add_bias(y, layer.bias)
}
