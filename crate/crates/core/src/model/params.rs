use rand::Rng;

use crate::chebconv::ChebParams;
use crate::error::{ensure, Result};
use crate::linalg::DenseMatrix;
use crate::sampling::Hierarchy;

use super::ModelSettings;

/// Trainable tensors, generic over storage. Iteration order (used by the
/// optimizer, the checkpoint and gradient lists) is the field order below,
/// with each convolution's coefficients before its bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub encoder: Vec<ChebParams<T>>,
    /// `Z x (N_coarse · C)`.
    pub encoder_fc: T,
    /// `Z x 1`.
    pub encoder_fc_bias: T,
    /// `K` matrices, `Z x Z`.
    pub projections: Vec<T>,
    /// `Z x C`, applied to every latent-map row.
    pub decoder_fc: T,
    /// `1 x C`.
    pub decoder_fc_bias: T,
    /// Coarsest level first.
    pub decoder: Vec<ChebParams<T>>,
}

pub type ModelParams = Params<DenseMatrix>;

impl<T> Params<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Params<U> {
        Params {
            encoder: self.encoder.iter().map(|l| l.map(&mut f)).collect(),
            encoder_fc: f(&self.encoder_fc),
            encoder_fc_bias: f(&self.encoder_fc_bias),
            projections: self.projections.iter().map(&mut f).collect(),
            decoder_fc: f(&self.decoder_fc),
            decoder_fc_bias: f(&self.decoder_fc_bias),
            decoder: self.decoder.iter().map(|l| l.map(&mut f)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.encoder
            .iter()
            .flat_map(ChebParams::iter)
            .chain([&self.encoder_fc, &self.encoder_fc_bias])
            .chain(&self.projections)
            .chain([&self.decoder_fc, &self.decoder_fc_bias])
            .chain(self.decoder.iter().flat_map(ChebParams::iter))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.encoder
            .iter_mut()
            .flat_map(ChebParams::iter_mut)
            .chain([&mut self.encoder_fc, &mut self.encoder_fc_bias])
            .chain(self.projections.iter_mut())
            .chain([&mut self.decoder_fc, &mut self.decoder_fc_bias])
            .chain(self.decoder.iter_mut().flat_map(ChebParams::iter_mut))
    }

    /// Group name of every tensor, in iteration order.
    pub fn group_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let conv = |names: &mut Vec<String>, prefix: &str, layers: &[ChebParams<T>]| {
            for (l, layer) in layers.iter().enumerate() {
                for k in 0..layer.order() {
                    names.push(format!("{prefix}[{l}].theta[{k}]"));
                }
                names.push(format!("{prefix}[{l}].bias"));
            }
        };
        conv(&mut names, "encoder", &self.encoder);
        names.push("encoder_fc.weight".into());
        names.push("encoder_fc.bias".into());
        for k in 0..self.projections.len() {
            names.push(format!("projection[{k}]"));
        }
        names.push("decoder_fc.weight".into());
        names.push("decoder_fc.bias".into());
        conv(&mut names, "decoder", &self.decoder);
        names
    }
}

impl ModelParams {
    pub fn zeros_like(&self) -> Self {
        self.map(|m| DenseMatrix::zeros(m.rows(), m.cols()))
    }

    pub fn parameter_count(&self) -> usize {
        self.iter().map(DenseMatrix::len).sum()
    }

    /// Expected shape of every tensor, in iteration order.
    pub fn expected_shapes(settings: &ModelSettings, hierarchy: &Hierarchy) -> Vec<(usize, usize)> {
        let z = settings.latent;
        let ch = &settings.channels;
        let levels = ch.len();
        let mut shapes = Vec::new();
        let conv = |shapes: &mut Vec<(usize, usize)>, fi: usize, fo: usize| {
            shapes.extend(std::iter::repeat_n((fi, fo), settings.order));
            shapes.push((1, fo));
        };
        for l in 0..levels {
            let fi = if l == 0 { 3 } else { ch[l - 1] };
            conv(&mut shapes, fi, ch[l]);
        }
        let c = settings.bottleneck_width();
        let coarse = hierarchy.coarsest().vertex_count();
        shapes.push((z, coarse * c));
        shapes.push((z, 1));
        shapes.extend(std::iter::repeat_n((z, z), settings.parts));
        shapes.push((z, c));
        shapes.push((1, c));
        for level in (0..levels).rev() {
            let fo = if level == 0 { 3 } else { ch[level - 1] };
            conv(&mut shapes, ch[level], fo);
        }
        shapes
    }

    pub fn check_shapes(&self, settings: &ModelSettings, hierarchy: &Hierarchy) -> Result<()> {
        ensure!(
            self.encoder.len() == settings.channels.len() && self.decoder.len() == settings.channels.len(),
            "parameters have {} encoder and {} decoder layers, expected {}",
            self.encoder.len(),
            self.decoder.len(),
            settings.channels.len()
        );
        ensure!(
            self.projections.len() == settings.parts,
            "{} projections for {} parts",
            self.projections.len(),
            settings.parts
        );
        ensure!(
            self.encoder
                .iter()
                .chain(&self.decoder)
                .all(|l| l.order() == settings.order),
            "convolution order differs from {}",
            settings.order
        );
        let expected = Self::expected_shapes(settings, hierarchy);
        let names = self.group_names();
        for ((m, want), name) in self.iter().zip(&expected).zip(&names) {
            ensure!(
                m.shape() == *want,
                "{name} has shape {:?}, expected {want:?}",
                m.shape()
            );
        }
        ensure!(
            self.iter().all(DenseMatrix::is_finite),
            "parameters contain non-finite values"
        );
        Ok(())
    }

    /// All-zero tensors with the shapes `settings` and `hierarchy` imply.
    pub fn zeros(settings: &ModelSettings, hierarchy: &Hierarchy) -> Result<Self> {
        settings.validate()?;
        ensure!(
            settings.channels.len() == hierarchy.transitions(),
            "{} channel widths for {} hierarchy transitions",
            settings.channels.len(),
            hierarchy.transitions()
        );
        let shapes = Self::expected_shapes(settings, hierarchy);
        let levels = settings.channels.len();
        let conv = |shapes: &mut std::slice::Iter<'_, (usize, usize)>| ChebParams {
            theta: (0..settings.order).map(|_| placeholder(shapes.next())).collect(),
            bias: placeholder(shapes.next()),
        };
        let mut it = shapes.iter();
        let encoder = (0..levels).map(|_| conv(&mut it)).collect();
        let encoder_fc = placeholder(it.next());
        let encoder_fc_bias = placeholder(it.next());
        let projections = (0..settings.parts).map(|_| placeholder(it.next())).collect();
        let decoder_fc = placeholder(it.next());
        let decoder_fc_bias = placeholder(it.next());
        let decoder = (0..levels).map(|_| conv(&mut it)).collect();
        Ok(Params {
            encoder,
            encoder_fc,
            encoder_fc_bias,
            projections,
            decoder_fc,
            decoder_fc_bias,
            decoder,
        })
    }

    /// Glorot-uniform weights and zero biases, drawn in iteration order.
    pub fn init(settings: &ModelSettings, hierarchy: &Hierarchy, rng: &mut impl Rng) -> Result<Self> {
        let mut params = Self::zeros(settings, hierarchy)?;
        let names = params.group_names();
        for (m, name) in params.iter_mut().zip(names) {
            if name.ends_with("bias") {
                continue;
            }
            // Stored `rows x cols` maps `rows` inputs to `cols` outputs, except
            // the encoder layer and projections which act on columns. The
            // filter taps of one convolution share a single fan-in.
            let (fan_in, fan_out) = if name.starts_with("encoder_fc") || name.starts_with("projection") {
                (m.cols(), m.rows())
            } else if name.contains(".theta[") {
                (settings.order * m.rows(), m.cols())
            } else {
                (m.rows(), m.cols())
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in m.values_mut() {
                *v = rng.gen_range(-limit..limit);
            }
        }
        Ok(params)
    }
}

fn placeholder(shape: Option<&(usize, usize)>) -> DenseMatrix {
    let &(r, c) = shape.expect("one shape per tensor");
    DenseMatrix::zeros(r, c)
}
