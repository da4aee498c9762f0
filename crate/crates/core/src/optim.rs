//! SGD with classical momentum and an exponentially decaying learning rate.

use crate::error::{ensure, Result};
use crate::linalg::DenseMatrix;

pub const DEFAULT_LEARNING_RATE: f64 = 0.0125;
pub const DEFAULT_LR_DECAY: f64 = 0.99;
pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// `initial * decay^epoch`.
pub fn learning_rate_with(initial: f64, decay: f64, epoch: usize) -> f64 {
    initial * decay.powi(epoch as i32)
}

/// Learning rate for `epoch` under the default schedule.
pub fn learning_rate(epoch: usize) -> f64 {
    learning_rate_with(DEFAULT_LEARNING_RATE, DEFAULT_LR_DECAY, epoch)
}

/// Per-tensor velocities for momentum SGD.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    velocity: Vec<DenseMatrix>,
    momentum: f64,
    epoch: usize,
}

impl OptimizerState {
    /// Zero velocities shaped like `params`.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a DenseMatrix>, momentum: f64) -> Result<Self> {
        ensure!((0.0..1.0).contains(&momentum), "momentum {momentum} outside [0, 1)");
        let velocity = params
            .into_iter()
            .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
            .collect();
        Ok(Self {
            velocity,
            momentum,
            epoch: 0,
        })
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub fn velocity(&self) -> &[DenseMatrix] {
        &self.velocity
    }

    /// One update: `v ← momentum·v − lr·g`, `p ← p + v`.
    pub fn step(&mut self, params: &mut [&mut DenseMatrix], grads: &[&DenseMatrix], lr: f64) -> Result<()> {
        ensure!(lr > 0.0 && lr.is_finite(), "learning rate must be positive, got {lr}");
        ensure!(
            params.len() == self.velocity.len() && grads.len() == self.velocity.len(),
            "optimizer tracks {} tensors, got {} params and {} grads",
            self.velocity.len(),
            params.len(),
            grads.len()
        );
        for (i, ((p, g), v)) in params.iter().zip(grads).zip(&self.velocity).enumerate() {
            ensure!(
                p.shape() == v.shape() && g.shape() == v.shape(),
                "tensor {i}: param {:?}, grad {:?}, velocity {:?}",
                p.shape(),
                g.shape(),
                v.shape()
            );
        }
        let momentum = self.momentum;
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pv, &gv), vv) in p.values_mut().iter_mut().zip(g.values()).zip(v.values_mut()) {
                *vv = momentum * *vv - lr * gv;
                *pv += *vv;
            }
        }
        Ok(())
    }
}

/// Functional form of [`OptimizerState::step`] for a single tensor list.
pub fn sgd_momentum_step(
    params: &[DenseMatrix],
    grads: &[DenseMatrix],
    state: &OptimizerState,
    lr: f64,
) -> Result<(Vec<DenseMatrix>, OptimizerState)> {
    let mut next_params = params.to_vec();
    let mut next_state = state.clone();
    {
        let mut refs: Vec<&mut DenseMatrix> = next_params.iter_mut().collect();
        let grad_refs: Vec<&DenseMatrix> = grads.iter().collect();
        next_state.step(&mut refs, &grad_refs, lr)?;
    }
    Ok((next_params, next_state))
}
