//! End-to-end runs: configuration, synthetic data, training and reports.

mod config;
mod dataset;
mod report;

pub use config::{AblationSection, HierarchySection, ModelSection, NmfSection, RunConfig, TrainSection};
pub use dataset::{
    read_mesh_dir, synth_faces, test_count, BumpBasis, Dataset, BUMP_AMPLITUDE, BUMP_COUNT, BUMP_WIDTH, TEST_FRACTION,
};
pub use report::{diversity_report, pca_embed, DiversityReport, Ellipse};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::model::{train, Checkpoint, TrainFailure};
use crate::nmf::{compute_local_weights, LocalWeights};
use crate::sampling::{build_hierarchy, Hierarchy};

/// Hierarchy and factorization weights for `template` under `config`.
pub fn prepare(template: &Mesh, config: &RunConfig) -> Result<(Hierarchy, LocalWeights)> {
    let hierarchy = build_hierarchy(template, config.hierarchy.levels, config.hierarchy.factor)?;
    let weights = compute_local_weights(
        hierarchy.coarsest(),
        config.model.parts,
        config.nmf.sparsity,
        config.nmf.restarts,
        config.nmf.iterations,
        config.train.seed,
    )?;
    Ok((hierarchy, weights))
}

/// Trains on the dataset's train split.
pub fn train_model(dataset: &Dataset, config: &RunConfig) -> Result<Checkpoint, TrainFailure> {
    let setup = |error| TrainFailure {
        error,
        epoch: 0,
        last_good: None,
    };
    config.validate().map_err(setup)?;
    let (hierarchy, weights) = prepare(&dataset.template, config).map_err(setup)?;
    let settings = config.model_settings().map_err(setup)?;
    train(
        &dataset.train_samples(),
        hierarchy,
        weights,
        settings,
        &config.train_config(),
        config.to_toml(),
    )
}

/// The configuration a checkpoint was trained with, checked against the
/// checkpoint's own hierarchy and settings.
pub fn checkpoint_config(ckpt: &Checkpoint) -> Result<RunConfig> {
    let config = RunConfig::from_toml(&ckpt.config_echo)
        .map_err(|e| Error::Checkpoint(format!("config echo is unreadable: {e}")))?;
    let settings = config.model_settings()?;
    let consistent = ckpt.hierarchy.transitions() == config.hierarchy.levels
        && settings.latent == ckpt.settings.latent
        && settings.parts == ckpt.settings.parts
        && settings.order == ckpt.settings.order
        && settings.channels == ckpt.settings.channels
        && settings.use_local_weights == ckpt.settings.use_local_weights
        && settings.use_projections == ckpt.settings.use_projections;
    if !consistent {
        return Err(Error::Checkpoint("config echo does not match the stored model".into()));
    }
    Ok(config)
}

/// Up to `max` items chosen by a seeded draw, kept in input order.
pub fn subsample<T: Clone>(items: &[T], max: usize, seed: u64) -> Vec<T> {
    if items.len() <= max {
        return items.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, items.len(), max).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}
