//! The locally weighted mesh autoencoder.
//!
//! Encoder: per hierarchy level, Chebyshev convolution + ReLU then
//! down-sampling; the coarsest feature matrix is flattened and mapped to a
//! latent column `z` by a fully connected layer. `K` bias-free square
//! projections split `z` into part encodings, which are spread over the
//! coarsest vertices by the local weights and summed into an `N x Z` latent
//! map. Decoder: a fully connected layer applied to every map row, then per
//! level (coarse to fine) up-sampling and Chebyshev convolution, with ReLU on
//! all but the last convolution.

mod checkpoint;
mod edit;
mod params;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use edit::{locality_ratio, median, PartSwap};
pub use params::{ModelParams, Params};
pub use train::{train, EpochMetrics, TrainConfig, TrainFailure, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS};

use crate::chebconv::{cheb_conv, cheb_conv_on_tape};
use crate::error::{ensure, Error, Result};
use crate::linalg::DenseMatrix;
use crate::nmf::LocalWeights;
use crate::sampling::Hierarchy;
use crate::tape::{evaluate_and_backprop, Tape, Var};

pub const DEFAULT_LATENT: usize = 64;
pub const DEFAULT_ORDER: usize = 6;
pub const DEFAULT_CYCLE_WEIGHT: f64 = 0.5;

/// Per-part latent vectors, each `Z x 1`.
pub type PartEncodings = Vec<DenseMatrix>;

/// Architecture and ablation switches.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSettings {
    pub latent: usize,
    pub order: usize,
    pub parts: usize,
    /// Encoder output width per level; the decoder mirrors it.
    pub channels: Vec<usize>,
    pub use_local_weights: bool,
    pub use_projections: bool,
}

impl ModelSettings {
    /// `[16, …, 16, 32]` with one entry per hierarchy transition.
    pub fn default_channels(transitions: usize) -> Vec<usize> {
        let mut c = vec![16; transitions.saturating_sub(1)];
        c.push(32);
        c
    }

    pub fn new(latent: usize, order: usize, parts: usize, transitions: usize) -> Self {
        Self {
            latent,
            order,
            parts,
            channels: Self::default_channels(transitions),
            use_local_weights: true,
            use_projections: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.latent >= 1, "latent size must be positive");
        ensure!(self.order >= 1, "Chebyshev order must be positive");
        ensure!(self.parts >= 1, "need at least one part");
        ensure!(!self.channels.is_empty(), "need at least one convolution level");
        ensure!(self.channels.iter().all(|&c| c >= 1), "channel widths must be positive");
        Ok(())
    }

    /// Width of the coarsest feature map.
    pub fn bottleneck_width(&self) -> usize {
        *self.channels.last().expect("validated non-empty")
    }
}

/// Per-mesh centering plus a global scale. Inputs are encoded as their
/// offsets from their own centroid divided by the scale; decoded outputs are
/// scaled back and placed at one fixed centroid.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    /// Centroid restored on decode (mean centroid of the fitted samples).
    pub offset: [f64; 3],
    pub scale: f64,
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            offset: [0.0; 3],
            scale: 1.0,
        }
    }

    /// Mean centroid and root-mean-square centered coordinate of `samples`
    /// (each `N x 3`).
    pub fn fit(samples: &[DenseMatrix]) -> Result<Self> {
        ensure!(!samples.is_empty(), "cannot fit a normalizer to no samples");
        ensure!(
            samples
                .iter()
                .all(|s| s.cols() == 3 && s.rows() > 0 && s.rows() == samples[0].rows()),
            "samples must share one N x 3 shape"
        );
        let mut offset = [0.0; 3];
        let mut sq = 0.0;
        for s in samples {
            let c = centroid(s);
            for k in 0..3 {
                offset[k] += c[k];
            }
            sq += centered(s, c).values().iter().map(|v| v * v).sum::<f64>();
        }
        let offset = offset.map(|v| v / samples.len() as f64);
        let rms = (sq / (samples.len() * samples[0].len()) as f64).sqrt();
        let scale = if rms > 0.0 && rms.is_finite() { rms } else { 1.0 };
        Ok(Self { offset, scale })
    }

    pub fn normalize(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        ensure!(
            x.cols() == 3 && x.rows() > 0,
            "positions must be N x 3, got {:?}",
            x.shape()
        );
        Ok(centered(x, centroid(x)).scaled(1.0 / self.scale))
    }

    pub fn denormalize(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        ensure!(x.cols() == 3, "decoded positions must be N x 3, got {:?}", x.shape());
        Ok(DenseMatrix::from_fn(x.rows(), 3, |r, k| {
            x.get(r, k) * self.scale + self.offset[k]
        }))
    }
}

pub fn centroid(x: &DenseMatrix) -> [f64; 3] {
    let n = x.rows() as f64;
    let mut c = [0.0; 3];
    for r in 0..x.rows() {
        for (acc, v) in c.iter_mut().zip(x.row(r)) {
            *acc += v;
        }
    }
    c.map(|v| v / n)
}

fn centered(x: &DenseMatrix, c: [f64; 3]) -> DenseMatrix {
    DenseMatrix::from_fn(x.rows(), 3, |r, k| x.get(r, k) - c[k])
}

/// Everything the forward pass reads besides the trainable parameters.
#[derive(Clone, Copy)]
pub struct ModelContext<'a> {
    pub hierarchy: &'a Hierarchy,
    /// Effective `P x K` weights (all ones when local weights are disabled).
    pub weights: &'a DenseMatrix,
    pub settings: &'a ModelSettings,
}

impl<'a> ModelContext<'a> {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        self.settings.validate()?;
        let h = self.hierarchy;
        ensure!(
            self.settings.channels.len() == h.transitions(),
            "{} channel widths for {} hierarchy transitions",
            self.settings.channels.len(),
            h.transitions()
        );
        ensure!(
            self.weights.shape() == (h.coarsest().vertex_count(), self.settings.parts),
            "local weights {:?} do not match {} coarse vertices and {} parts",
            self.weights.shape(),
            h.coarsest().vertex_count(),
            self.settings.parts
        );
        params.check_shapes(self.settings, h)
    }
}

/// Weights actually fed to the latent map.
pub fn effective_weights(settings: &ModelSettings, weights: &LocalWeights) -> DenseMatrix {
    if settings.use_local_weights {
        weights.weights.clone()
    } else {
        DenseMatrix::filled(weights.vertices(), weights.parts(), 1.0)
    }
}

fn numeric(what: &str) -> Error {
    Error::Numeric(format!("{what} produced non-finite values"))
}

fn relu(x: &DenseMatrix) -> DenseMatrix {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

fn add_bias_row(x: &mut DenseMatrix, bias: &DenseMatrix) {
    for r in 0..x.rows() {
        for (o, b) in x.row_mut(r).iter_mut().zip(bias.values()) {
            *o += b;
        }
    }
}

/// Latent column `z` (`Z x 1`) for normalized positions `x` (`N₀ x 3`).
pub fn encode(params: &ModelParams, hierarchy: &Hierarchy, x: &DenseMatrix) -> Result<DenseMatrix> {
    ensure!(
        x.shape() == (hierarchy.template().vertex_count(), 3),
        "input {:?} does not match a {}-vertex template",
        x.shape(),
        hierarchy.template().vertex_count()
    );
    let mut h = x.clone();
    for (l, layer) in params.encoder.iter().enumerate() {
        h = relu(&cheb_conv(layer, &hierarchy.levels[l].laplacian.scaled, &h)?);
        h = hierarchy.down[l].mul_dense(&h);
    }
    let len = h.len();
    let flat = h.reshaped(len, 1);
    ensure!(
        params.encoder_fc.cols() == flat.rows(),
        "encoder fully connected layer expects {} inputs, got {}",
        params.encoder_fc.cols(),
        flat.rows()
    );
    let z = params.encoder_fc.matmul(&flat).add(&params.encoder_fc_bias);
    if !z.is_finite() {
        return Err(numeric("encoder"));
    }
    Ok(z)
}

/// `part_k = P_k z`, or `z` itself for every part when projections are off.
pub fn project_parts(
    z: &DenseMatrix,
    projections: &[DenseMatrix],
    use_projections: bool,
    parts: usize,
) -> Result<PartEncodings> {
    ensure!(z.cols() == 1, "latent must be a column, got {:?}", z.shape());
    if !use_projections {
        return Ok(vec![z.clone(); parts]);
    }
    ensure!(
        projections.len() == parts,
        "{} projections for {parts} parts",
        projections.len()
    );
    projections
        .iter()
        .map(|p| {
            ensure!(
                p.shape() == (z.rows(), z.rows()),
                "projection {:?} does not fit latent size {}",
                p.shape(),
                z.rows()
            );
            Ok(p.matmul(z))
        })
        .collect()
}

/// `map[n][j] = Σ_k W[n][k] · part_k[j]`.
pub fn weighted_latent_map(parts: &[DenseMatrix], weights: &DenseMatrix) -> Result<DenseMatrix> {
    ensure!(
        parts.len() == weights.cols(),
        "{} part encodings for {} weight columns",
        parts.len(),
        weights.cols()
    );
    ensure!(!parts.is_empty(), "need at least one part");
    let z = parts[0].len();
    ensure!(parts.iter().all(|p| p.len() == z), "part encodings differ in length");
    let mut map = DenseMatrix::zeros(weights.rows(), z);
    for (k, part) in parts.iter().enumerate() {
        for n in 0..weights.rows() {
            let w = weights.get(n, k);
            for (o, p) in map.row_mut(n).iter_mut().zip(part.values()) {
                *o += w * p;
            }
        }
    }
    Ok(map)
}

/// Normalized positions (`N₀ x 3`) from a latent map (`N x Z`).
pub fn decode(params: &ModelParams, hierarchy: &Hierarchy, map: &DenseMatrix) -> Result<DenseMatrix> {
    ensure!(
        map.rows() == hierarchy.coarsest().vertex_count() && map.cols() == params.decoder_fc.rows(),
        "latent map {:?} does not match {} coarse vertices and latent size {}",
        map.shape(),
        hierarchy.coarsest().vertex_count(),
        params.decoder_fc.rows()
    );
    let mut h = map.matmul(&params.decoder_fc);
    add_bias_row(&mut h, &params.decoder_fc_bias);
    let last = params.decoder.len() - 1;
    for (i, layer) in params.decoder.iter().enumerate() {
        let level = hierarchy.transitions() - 1 - i;
        h = hierarchy.up[level].mul_dense(&h);
        h = cheb_conv(layer, &hierarchy.levels[level].laplacian.scaled, &h)?;
        if i != last {
            h = relu(&h);
        }
    }
    if !h.is_finite() {
        return Err(numeric("decoder"));
    }
    Ok(h)
}

/// Part encodings of normalized positions.
pub fn part_encodings(params: &ModelParams, ctx: &ModelContext<'_>, x: &DenseMatrix) -> Result<PartEncodings> {
    let z = encode(params, ctx.hierarchy, x)?;
    project_parts(
        &z,
        &params.projections,
        ctx.settings.use_projections,
        ctx.settings.parts,
    )
}

/// Normalized reconstruction from part encodings.
pub fn decode_parts(params: &ModelParams, ctx: &ModelContext<'_>, parts: &[DenseMatrix]) -> Result<DenseMatrix> {
    let map = weighted_latent_map(parts, ctx.weights)?;
    decode(params, ctx.hierarchy, &map)
}

/// Handles for one forward pass recorded on a tape.
pub(crate) struct SampleLoss {
    pub total: Var,
    pub recon: Var,
    pub cycle: Var,
}

fn encode_on_tape<'s>(tape: &mut Tape<'s>, p: &Params<Var>, h: &'s Hierarchy, x: Var) -> Var {
    let mut v = x;
    for (l, layer) in p.encoder.iter().enumerate() {
        let c = cheb_conv_on_tape(tape, layer, &h.levels[l].laplacian.scaled, v);
        let a = tape.relu(c);
        v = tape.sparse_matmul(&h.down[l], a);
    }
    let (r, c) = tape.value(v).map(DenseMatrix::shape).unwrap_or((0, 0));
    let flat = tape.reshape(v, r * c, 1);
    let z = tape.matmul(p.encoder_fc, flat);
    tape.add(z, p.encoder_fc_bias)
}

fn project_on_tape(tape: &mut Tape<'_>, p: &Params<Var>, settings: &ModelSettings, z: Var) -> Vec<Var> {
    if settings.use_projections {
        p.projections.iter().map(|&pk| tape.matmul(pk, z)).collect()
    } else {
        vec![z; settings.parts]
    }
}

fn decode_on_tape<'s>(
    tape: &mut Tape<'s>,
    p: &Params<Var>,
    h: &'s Hierarchy,
    weight_columns: &[Var],
    parts: &[Var],
) -> Var {
    let mut map = tape.outer(weight_columns[0], parts[0]);
    for (&w, &part) in weight_columns.iter().zip(parts).skip(1) {
        let term = tape.outer(w, part);
        map = tape.add(map, term);
    }
    let fc = tape.matmul(map, p.decoder_fc);
    let mut v = tape.add_bias(fc, p.decoder_fc_bias);
    let last = p.decoder.len() - 1;
    for (i, layer) in p.decoder.iter().enumerate() {
        let level = h.transitions() - 1 - i;
        let up = tape.sparse_matmul(&h.up[level], v);
        v = cheb_conv_on_tape(tape, layer, &h.levels[level].laplacian.scaled, up);
        if i != last {
            v = tape.relu(v);
        }
    }
    v
}

/// Records reconstruction and cycle losses for one normalized sample.
pub(crate) fn sample_loss_on_tape<'s>(
    tape: &mut Tape<'s>,
    p: &Params<Var>,
    ctx: &ModelContext<'s>,
    x: Var,
    cycle_weight: f64,
) -> SampleLoss {
    let h = ctx.hierarchy;
    let weight_columns: Vec<Var> = (0..ctx.settings.parts)
        .map(|k| tape.constant(DenseMatrix::column(ctx.weights.col_values(k))))
        .collect();
    let z = encode_on_tape(tape, p, h, x);
    let parts = project_on_tape(tape, p, ctx.settings, z);
    let recon_x = decode_on_tape(tape, p, h, &weight_columns, &parts);
    let recon = tape.mean_abs_error(recon_x, x);

    let z2 = encode_on_tape(tape, p, h, recon_x);
    let parts2 = project_on_tape(tape, p, ctx.settings, z2);
    let mut cycle = tape.mean_abs_error(parts2[0], parts[0]);
    for (&a, &b) in parts2.iter().zip(&parts).skip(1) {
        let term = tape.mean_abs_error(a, b);
        cycle = tape.add(cycle, term);
    }
    let cycle = tape.scale(cycle, 1.0 / ctx.settings.parts as f64);
    let weighted = tape.scale(cycle, cycle_weight);
    let total = tape.add(recon, weighted);
    SampleLoss { total, recon, cycle }
}

/// Batch-mean loss components.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub recon: f64,
    pub cycle: f64,
}

/// Mean over `batch` of `L1(x̂, x) + γ · cycle` and its gradient with respect
/// to every parameter. Samples are normalized positions.
pub fn loss_and_gradient(
    params: &ModelParams,
    ctx: &ModelContext<'_>,
    batch: &[DenseMatrix],
    cycle_weight: f64,
) -> Result<(LossValue, ModelParams)> {
    ensure!(!batch.is_empty(), "batch is empty");
    let mut grad = params.zeros_like();
    let mut value = LossValue::default();
    let inv = 1.0 / batch.len() as f64;
    for x in batch {
        let mut tape = Tape::new();
        let bound = params.map(|m| tape.leaf(m.clone()));
        let xv = tape.constant(x.clone());
        let loss = sample_loss_on_tape(&mut tape, &bound, ctx, xv, cycle_weight);
        let leaves: Vec<Var> = bound.iter().copied().collect();
        let (total, grads) = evaluate_and_backprop(&tape, loss.total, &leaves)?;
        if !total.is_finite() {
            return Err(numeric("training loss"));
        }
        value.total += total * inv;
        value.recon += tape.scalar(loss.recon)? * inv;
        value.cycle += tape.scalar(loss.cycle)? * inv;
        for (acc, g) in grad.iter_mut().zip(&grads) {
            acc.axpy(inv, g);
        }
    }
    Ok((value, grad))
}

/// Loss value only.
pub fn training_loss(
    params: &ModelParams,
    ctx: &ModelContext<'_>,
    batch: &[DenseMatrix],
    cycle_weight: f64,
) -> Result<LossValue> {
    ensure!(!batch.is_empty(), "batch is empty");
    let mut value = LossValue::default();
    let inv = 1.0 / batch.len() as f64;
    for x in batch {
        let mut tape = Tape::new();
        let bound = params.map(|m| tape.constant(m.clone()));
        let xv = tape.constant(x.clone());
        let loss = sample_loss_on_tape(&mut tape, &bound, ctx, xv, cycle_weight);
        let total = tape.scalar(loss.total)?;
        if !total.is_finite() {
            return Err(numeric("training loss"));
        }
        value.total += total * inv;
        value.recon += tape.scalar(loss.recon)? * inv;
        value.cycle += tape.scalar(loss.cycle)? * inv;
    }
    Ok(value)
}

/// Feature-matrix shapes through the network for the given level sizes:
/// encoder convolution outputs (one per level), the latent length, then the
/// decoder's fully connected output and convolution outputs.
pub fn shape_chain(level_sizes: &[usize], channels: &[usize], latent: usize) -> Vec<(usize, usize)> {
    let levels = channels.len();
    let mut chain: Vec<(usize, usize)> = (0..levels).map(|l| (level_sizes[l], channels[l])).collect();
    chain.push((latent, 1));
    chain.push((level_sizes[levels], channels[levels - 1]));
    for level in (0..levels).rev() {
        let width = if level == 0 { 3 } else { channels[level - 1] };
        chain.push((level_sizes[level], width));
    }
    chain
}
