use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};
use crate::linalg::DenseMatrix;
use crate::nmf::LocalWeights;
use crate::optim::{learning_rate_with, OptimizerState, DEFAULT_LEARNING_RATE, DEFAULT_LR_DECAY, DEFAULT_MOMENTUM};
use crate::sampling::Hierarchy;

use super::{
    effective_weights, loss_and_gradient, Checkpoint, ModelContext, ModelParams, ModelSettings, Normalizer,
    DEFAULT_CYCLE_WEIGHT,
};

pub const DEFAULT_EPOCHS: usize = 300;
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub momentum: f64,
    pub cycle_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            lr_decay: DEFAULT_LR_DECAY,
            momentum: DEFAULT_MOMENTUM,
            cycle_weight: DEFAULT_CYCLE_WEIGHT,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.epochs >= 1, "epochs must be positive");
        ensure!(self.batch_size >= 1, "batch size must be positive");
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning rate must be positive"
        );
        ensure!(
            self.lr_decay > 0.0 && self.lr_decay <= 1.0,
            "learning-rate decay must be in (0, 1]"
        );
        ensure!((0.0..1.0).contains(&self.momentum), "momentum must be in [0, 1)");
        ensure!(
            self.cycle_weight >= 0.0 && self.cycle_weight.is_finite(),
            "cycle weight must be non-negative"
        );
        Ok(())
    }
}

/// Sample-averaged losses over one epoch, accumulated while training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    /// Mean absolute coordinate error in input units.
    pub recon_l1: f64,
    pub cycle: f64,
    /// Optimized objective (normalized units).
    pub total: f64,
    pub learning_rate: f64,
}

/// Training stopped on a non-finite loss or parameter.
#[derive(Debug)]
pub struct TrainFailure {
    pub error: Error,
    /// 1-based epoch in which training failed.
    pub epoch: usize,
    /// State after the last completed epoch, if any.
    pub last_good: Option<Box<Checkpoint>>,
}

impl fmt::Display for TrainFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "training failed in epoch {}: {}", self.epoch, self.error)
    }
}

impl std::error::Error for TrainFailure {}

impl From<TrainFailure> for Error {
    fn from(f: TrainFailure) -> Self {
        if f.error.is_numeric() {
            Error::Numeric(f.to_string())
        } else {
            f.error
        }
    }
}

fn setup_failure(error: Error) -> TrainFailure {
    TrainFailure {
        error,
        epoch: 0,
        last_good: None,
    }
}

/// Trains on raw vertex positions (`N₀ x 3` each, in template order).
///
/// Parameters are initialized and batches shuffled from one generator seeded
/// with `config.seed`, so a fixed seed reproduces the run exactly.
pub fn train(
    samples: &[DenseMatrix],
    hierarchy: Hierarchy,
    local_weights: LocalWeights,
    settings: ModelSettings,
    config: &TrainConfig,
    config_echo: String,
) -> Result<Checkpoint, TrainFailure> {
    config.validate().map_err(setup_failure)?;
    settings.validate().map_err(setup_failure)?;
    local_weights.validate().map_err(setup_failure)?;
    if samples.is_empty() {
        return Err(setup_failure(Error::Data("no training samples".into())));
    }
    if samples
        .iter()
        .any(|s| s.shape() != (hierarchy.template().vertex_count(), 3))
    {
        return Err(setup_failure(Error::Data("samples do not match the template".into())));
    }
    let normalizer = Normalizer::fit(samples).map_err(setup_failure)?;
    let normalized = samples
        .iter()
        .map(|s| normalizer.normalize(s))
        .collect::<Result<Vec<_>>>()
        .map_err(setup_failure)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(&settings, &hierarchy, &mut rng).map_err(setup_failure)?;
    let weights = effective_weights(&settings, &local_weights);
    let ctx = ModelContext {
        hierarchy: &hierarchy,
        weights: &weights,
        settings: &settings,
    };
    ctx.validate(&params).map_err(setup_failure)?;
    let mut optimizer = OptimizerState::new(params.iter(), config.momentum).map_err(setup_failure)?;

    let mut metrics: Vec<EpochMetrics> = Vec::with_capacity(config.epochs);
    let mut last_good: Option<ModelParams> = None;
    let mut order: Vec<usize> = (0..normalized.len()).collect();
    for epoch in 0..config.epochs {
        let lr = learning_rate_with(config.learning_rate, config.lr_decay, epoch);
        optimizer.set_epoch(epoch);
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        let result = (|| -> Result<()> {
            for chunk in order.chunks(config.batch_size) {
                let batch: Vec<DenseMatrix> = chunk.iter().map(|&i| normalized[i].clone()).collect();
                let (loss, grad) = loss_and_gradient(&params, &ctx, &batch, config.cycle_weight)?;
                let n = chunk.len() as f64;
                sums.0 += loss.recon * n;
                sums.1 += loss.cycle * n;
                sums.2 += loss.total * n;
                let mut targets: Vec<&mut DenseMatrix> = params.iter_mut().collect();
                let grads: Vec<&DenseMatrix> = grad.iter().collect();
                optimizer.step(&mut targets, &grads, lr)?;
                if !params.iter().all(DenseMatrix::is_finite) {
                    return Err(Error::Numeric("parameters became non-finite".into()));
                }
            }
            Ok(())
        })();
        if let Err(error) = result {
            let last_good = last_good.map(|p| {
                Box::new(Checkpoint {
                    config_echo: config_echo.clone(),
                    settings: settings.clone(),
                    hierarchy: hierarchy.clone(),
                    local_weights: local_weights.clone(),
                    params: p,
                    normalizer: normalizer.clone(),
                    metrics: metrics.clone(),
                })
            });
            return Err(TrainFailure {
                error,
                epoch: epoch + 1,
                last_good,
            });
        }
        let n = normalized.len() as f64;
        let m = EpochMetrics {
            epoch: epoch + 1,
            recon_l1: sums.0 / n * normalizer.scale,
            cycle: sums.1 / n,
            total: sums.2 / n,
            learning_rate: lr,
        };
        log::info!(
            "epoch {:>4}  recon {:.6}  cycle {:.6}  loss {:.6}  lr {:.3e}",
            m.epoch,
            m.recon_l1,
            m.cycle,
            m.total,
            lr
        );
        metrics.push(m);
        last_good = Some(params.clone());
    }

    Ok(Checkpoint {
        config_echo,
        settings,
        hierarchy,
        local_weights,
        params,
        normalizer,
        metrics,
    })
}
