//! Coarse-to-fine mesh hierarchy: repeated quadric decimation with binary
//! down-sampling and barycentric up-sampling operators per transition.

mod decimate;
mod upsample;

pub use decimate::{decimate, Decimation};
pub use upsample::barycentric_up;

use crate::error::{ensure, Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::mesh::{laplacian_bundle, LaplacianBundle, Mesh};

pub const DEFAULT_LEVELS: usize = 4;
pub const DEFAULT_FACTOR: f64 = 4.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Level {
    pub mesh: Mesh,
    pub laplacian: LaplacianBundle,
}

/// `levels[0]` is the template; `down[l]` maps level `l` to `l + 1` and
/// `up[l]` maps level `l + 1` back to `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hierarchy {
    pub levels: Vec<Level>,
    pub down: Vec<SparseMatrix>,
    pub up: Vec<SparseMatrix>,
    pub kept: Vec<Vec<usize>>,
}

impl Hierarchy {
    pub fn transitions(&self) -> usize {
        self.down.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.mesh.vertex_count()).collect()
    }

    pub fn template(&self) -> &Mesh {
        &self.levels[0].mesh
    }

    pub fn coarsest(&self) -> &Mesh {
        &self.levels.last().expect("hierarchy has levels").mesh
    }

    /// Carries a per-vertex field on the coarsest level up to the template.
    pub fn upsample_to_template(&self, coarse: &DenseMatrix) -> Result<DenseMatrix> {
        ensure!(
            coarse.rows() == self.coarsest().vertex_count(),
            "field has {} rows, coarsest level has {} vertices",
            coarse.rows(),
            self.coarsest().vertex_count()
        );
        let mut field = coarse.clone();
        for up in self.up.iter().rev() {
            field = up.mul_dense(&field);
        }
        Ok(field)
    }

    /// Structural consistency between meshes, operators and Laplacians.
    pub fn validate(&self) -> Result<()> {
        let n = self.levels.len();
        ensure!(n >= 2, "hierarchy needs at least two levels");
        ensure!(
            self.down.len() == n - 1 && self.up.len() == n - 1 && self.kept.len() == n - 1,
            "hierarchy operator counts disagree with {n} levels"
        );
        for l in 0..n - 1 {
            let fine = self.levels[l].mesh.vertex_count();
            let coarse = self.levels[l + 1].mesh.vertex_count();
            ensure!(
                self.down[l].rows() == coarse && self.down[l].cols() == fine,
                "down[{l}] has wrong shape"
            );
            ensure!(
                self.up[l].rows() == fine && self.up[l].cols() == coarse,
                "up[{l}] has wrong shape"
            );
            ensure!(self.kept[l].len() == coarse, "kept[{l}] has wrong length");
        }
        for (l, level) in self.levels.iter().enumerate() {
            let size = level.mesh.vertex_count();
            ensure!(
                level.laplacian.scaled.rows() == size && level.laplacian.scaled.cols() == size,
                "scaled Laplacian of level {l} has wrong shape"
            );
        }
        Ok(())
    }
}

/// Vertex counts produced by repeated `ceil(N / factor)`.
pub fn level_sizes(template_vertices: usize, levels: usize, factor: f64) -> Vec<usize> {
    let mut sizes = vec![template_vertices];
    for _ in 0..levels {
        let prev = *sizes.last().expect("non-empty");
        sizes.push((prev as f64 / factor).ceil() as usize);
    }
    sizes
}

/// Decimates `template` `levels` times, each time to `ceil(N / factor)`.
pub fn build_hierarchy(template: &Mesh, levels: usize, factor: f64) -> Result<Hierarchy> {
    ensure!(levels >= 1, "hierarchy needs at least one transition");
    ensure!(factor > 1.0 && factor.is_finite(), "factor must exceed 1, got {factor}");

    let mut meshes = vec![template.clone()];
    let mut down = Vec::with_capacity(levels);
    let mut up = Vec::with_capacity(levels);
    let mut kept = Vec::with_capacity(levels);
    for l in 0..levels {
        let fine = meshes.last().expect("non-empty");
        let target = (fine.vertex_count() as f64 / factor).ceil() as usize;
        if target < 3 || target >= fine.vertex_count() {
            return Err(Error::Contract(format!(
                "template too small for {levels} levels: level {} would have {target} vertices \
                 (from {})",
                l + 1,
                fine.vertex_count()
            )));
        }
        let d = decimate(fine, target)?;
        if d.achieved() != target {
            log::warn!("level {}: requested {target} vertices, got {}", l + 1, d.achieved());
        }
        up.push(barycentric_up(&d.coarse, fine, &d.kept)?);
        down.push(d.down);
        kept.push(d.kept);
        meshes.push(d.coarse);
    }
    let levels = meshes
        .into_iter()
        .map(|mesh| {
            let laplacian = laplacian_bundle(&mesh)?;
            Ok(Level { mesh, laplacian })
        })
        .collect::<Result<Vec<_>>>()?;
    let h = Hierarchy { levels, down, up, kept };
    h.validate()?;
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn paper_scale_chain() {
        assert_eq!(level_sizes(53215, 4, 4.0), vec![53215, 13304, 3326, 832, 208]);
    }

    #[test]
    fn desk_scale_chain() {
        assert_eq!(level_sizes(1280, 4, 4.0), vec![1280, 320, 80, 20, 5]);
    }

    #[test]
    fn zero_levels_rejected_one_level_gives_one_transition() {
        let m = primitives::face_template(10, 8);
        assert!(build_hierarchy(&m, 0, 4.0).is_err());
        let h = build_hierarchy(&m, 1, 4.0).unwrap();
        assert_eq!(h.transitions(), 1);
        assert_eq!(h.levels.len(), 2);
    }

    #[test]
    fn too_deep_names_the_level() {
        let m = primitives::face_template(5, 4);
        let err = build_hierarchy(&m, 4, 4.0).unwrap_err().to_string();
        assert!(err.contains("level 2"), "{err}");
    }

    #[test]
    fn down_then_up_is_identity_on_kept_vertices() {
        let m = primitives::face_template(16, 12);
        let h = build_hierarchy(&m, 2, 3.0).unwrap();
        for l in 0..h.transitions() {
            let du = h.down[l].matmul(&h.up[l]);
            assert_eq!(du, SparseMatrix::identity(h.levels[l + 1].mesh.vertex_count()));
        }
    }

    #[test]
    fn constant_field_survives_upsampling() {
        let m = primitives::face_template(16, 12);
        let h = build_hierarchy(&m, 2, 3.0).unwrap();
        let n = h.coarsest().vertex_count();
        let up = h.upsample_to_template(&DenseMatrix::filled(n, 2, 0.7)).unwrap();
        assert!(up.values().iter().all(|v| (v - 0.7).abs() < 1e-12));
    }
}
