use super::{norm, sub, Mesh};
use crate::error::{ensure, Result};

/// Per-vertex distances between two registered meshes.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceField {
    pub per_vertex: Vec<f64>,
    /// Maximum of `per_vertex`.
    pub hausdorff: f64,
}

/// Distance between corresponding vertices. For meshes in full
/// correspondence this maximum is the Hausdorff distance of the matching.
pub fn vertex_distance_field(a: &Mesh, b: &Mesh) -> Result<DistanceField> {
    ensure!(
        a.vertex_count() == b.vertex_count(),
        "meshes are not in correspondence: {} vs {} vertices",
        a.vertex_count(),
        b.vertex_count()
    );
    let per_vertex: Vec<f64> = a
        .vertices()
        .iter()
        .zip(b.vertices())
        .map(|(&p, &q)| norm(sub(p, q)))
        .collect();
    let hausdorff = per_vertex.iter().copied().fold(0.0, f64::max);
    Ok(DistanceField { per_vertex, hausdorff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn identical_meshes_have_zero_distance() {
        let m = primitives::icosphere(1);
        let d = vertex_distance_field(&m, &m).unwrap();
        assert!(d.per_vertex.iter().all(|&x| x == 0.0));
        assert_eq!(d.hausdorff, 0.0);
    }

    #[test]
    fn rigid_shift_gives_unit_distances() {
        let m = primitives::icosphere(1);
        let mut moved = m.vertex_matrix();
        for r in 0..moved.rows() {
            moved.row_mut(r)[2] += 1.0;
        }
        let shifted = m.with_positions(&moved).unwrap();
        let d = vertex_distance_field(&m, &shifted).unwrap();
        assert!(d.per_vertex.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn vertex_count_mismatch_rejected() {
        assert!(vertex_distance_field(&primitives::icosphere(0), &primitives::icosphere(1)).is_err());
    }
}
