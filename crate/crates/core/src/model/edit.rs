//! Editing in the factorized latent space: blending or exchanging part
//! encodings between two faces, and measuring how local the effect is.

use crate::error::{ensure, Result};
use crate::linalg::DenseMatrix;
use crate::mesh::Mesh;

use super::{Checkpoint, PartEncodings};

/// One output of a source-by-target single-part swap grid.
#[derive(Clone, Debug)]
pub struct PartSwap {
    pub source: usize,
    pub target: usize,
    pub part: usize,
    pub mesh: Mesh,
}

/// `(1 − α) a + α b`, returning the endpoints themselves at `α ∈ {0, 1}`.
fn blend(a: &DenseMatrix, b: &DenseMatrix, alpha: f64) -> DenseMatrix {
    if alpha == 0.0 {
        a.clone()
    } else if alpha == 1.0 {
        b.clone()
    } else {
        a.scaled(1.0 - alpha).add(&b.scaled(alpha))
    }
}

impl Checkpoint {
    /// Source part encodings with part `part` moved `alpha` of the way to
    /// the target's. `alpha` is clamped to `[0, 1]`.
    pub fn interpolated_parts(
        &self,
        source: &PartEncodings,
        target: &PartEncodings,
        part: usize,
        alpha: f64,
    ) -> Result<PartEncodings> {
        ensure!(
            part < self.parts(),
            "part {part} out of range for {} parts",
            self.parts()
        );
        ensure!(!alpha.is_nan(), "alpha is NaN");
        let alpha = alpha.clamp(0.0, 1.0);
        let mut parts = source.clone();
        parts[part] = blend(&source[part], &target[part], alpha);
        Ok(parts)
    }

    pub fn interpolate_part(&self, source: &Mesh, target: &Mesh, part: usize, alpha: f64) -> Result<Mesh> {
        let s = self.part_encodings(source)?;
        let t = self.part_encodings(target)?;
        self.decode_parts(&self.interpolated_parts(&s, &t, part, alpha)?)
    }

    /// Parts listed in `from_target` come from the target, the rest from
    /// the source.
    pub fn swap_parts(&self, source: &Mesh, target: &Mesh, from_target: &[usize]) -> Result<Mesh> {
        ensure!(!from_target.is_empty(), "no parts to swap");
        ensure!(
            from_target.iter().all(|&k| k < self.parts()),
            "part index out of range for {} parts",
            self.parts()
        );
        let mut parts = self.part_encodings(source)?;
        let t = self.part_encodings(target)?;
        for &k in from_target {
            parts[k] = t[k].clone();
        }
        self.decode_parts(&parts)
    }

    /// Every single-part swap of each source with each target, ordered by
    /// source, then target, then part.
    pub fn part_synthesis(&self, sources: &[Mesh], targets: &[Mesh]) -> Result<Vec<PartSwap>> {
        let src: Vec<PartEncodings> = sources.iter().map(|m| self.part_encodings(m)).collect::<Result<_>>()?;
        let tgt: Vec<PartEncodings> = targets.iter().map(|m| self.part_encodings(m)).collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(src.len() * tgt.len() * self.parts());
        for (si, s) in src.iter().enumerate() {
            for (ti, t) in tgt.iter().enumerate() {
                for k in 0..self.parts() {
                    let mut parts = s.clone();
                    parts[k] = t[k].clone();
                    out.push(PartSwap {
                        source: si,
                        target: ti,
                        part: k,
                        mesh: self.decode_parts(&parts)?,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Local weights carried to the template through the up-sampling
    /// operators (`N₀ x K`).
    pub fn template_weights(&self) -> Result<DenseMatrix> {
        self.hierarchy.upsample_to_template(&self.local_weights.weights)
    }

    /// Per-vertex displacement between the `α = 0` and `α = 1` outputs for
    /// part `part`, averaged over source/target pairs.
    pub fn part_displacement(&self, pairs: &[(Mesh, Mesh)], part: usize) -> Result<Vec<f64>> {
        ensure!(!pairs.is_empty(), "need at least one source/target pair");
        let n = self.template().vertex_count();
        let mut total = vec![0.0; n];
        for (source, target) in pairs {
            let s = self.part_encodings(source)?;
            let t = self.part_encodings(target)?;
            let start = self.decode_parts(&self.interpolated_parts(&s, &t, part, 0.0)?)?;
            let end = self.decode_parts(&self.interpolated_parts(&s, &t, part, 1.0)?)?;
            for (acc, (a, b)) in total.iter_mut().zip(start.vertices().iter().zip(end.vertices())) {
                let d: f64 = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum();
                *acc += d.sqrt();
            }
        }
        let inv = 1.0 / pairs.len() as f64;
        Ok(total.into_iter().map(|v| v * inv).collect())
    }

    /// [`locality_ratio`] for every part, using the factorization weights.
    pub fn locality_ratios(&self, pairs: &[(Mesh, Mesh)]) -> Result<Vec<f64>> {
        let weights = self.template_weights()?;
        (0..self.parts())
            .map(|k| {
                let disp = self.part_displacement(pairs, k)?;
                locality_ratio(&disp, &weights.col_values(k))
            })
            .collect()
    }
}

/// Mean displacement over the vertices whose weight is in the top tenth
/// (`ceil(N/10)` vertices) divided by the mean over the bottom half
/// (`floor(N/2)` vertices). Ties in weight are broken by vertex index.
pub fn locality_ratio(displacement: &[f64], weight: &[f64]) -> Result<f64> {
    ensure!(
        displacement.len() == weight.len(),
        "{} displacements for {} weights",
        displacement.len(),
        weight.len()
    );
    let n = weight.len();
    ensure!(n >= 2, "need at least two vertices");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| weight[b].total_cmp(&weight[a]).then(a.cmp(&b)));
    let top = n.div_ceil(10);
    let bottom = n / 2;
    let mean = |idx: &[usize]| idx.iter().map(|&i| displacement[i]).sum::<f64>() / idx.len() as f64;
    let high = mean(&order[..top]);
    let low = mean(&order[n - bottom..]);
    Ok(if low > 0.0 {
        high / low
    } else if high > 0.0 {
        f64::INFINITY
    } else {
        1.0
    })
}

/// Median, averaging the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
