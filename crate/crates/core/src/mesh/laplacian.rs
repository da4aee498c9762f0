//! Adjacency, combinatorial Laplacian and its rescaling into [-1, 1].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Mesh;
use crate::error::{ensure, Result};
use crate::linalg::SparseMatrix;

const POWER_TOLERANCE: f64 = 1e-9;
const POWER_MAX_ITERATIONS: usize = 10_000;
const POWER_SEED: u64 = 0x1a91_ac1a;

/// How `lambda_max` was obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum LambdaEstimate {
    PowerIteration {
        iterations: usize,
    },
    /// Power iteration did not converge; `2 * max_degree` was used instead.
    DegreeBound {
        iterations: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianBundle {
    pub adjacency: SparseMatrix,
    /// `L = D - A`.
    pub laplacian: SparseMatrix,
    pub lambda_max: f64,
    /// `2 L / lambda_max - I`.
    pub scaled: SparseMatrix,
    pub estimate: LambdaEstimate,
    pub components: usize,
}

/// Binary symmetric adjacency from shared face edges.
pub fn adjacency(mesh: &Mesh) -> SparseMatrix {
    let mut triplets = Vec::with_capacity(mesh.face_count() * 6);
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            triplets.push((a, b, 1.0));
            triplets.push((b, a, 1.0));
        }
    }
    // Interior edges appear twice; collapse back to 1.
    let summed = SparseMatrix::from_triplets(mesh.vertex_count(), mesh.vertex_count(), triplets)
        .expect("face indices were validated by Mesh");
    let binary = summed.triplets().map(|(r, c, _)| (r, c, 1.0)).collect();
    SparseMatrix::from_triplets(summed.rows(), summed.cols(), binary).expect("same pattern")
}

pub fn laplacian_bundle(mesh: &Mesh) -> Result<LaplacianBundle> {
    LaplacianBundle::from_adjacency(adjacency(mesh))
}

impl LaplacianBundle {
    pub fn from_adjacency(adjacency: SparseMatrix) -> Result<Self> {
        let n = adjacency.rows();
        ensure!(n == adjacency.cols(), "adjacency must be square");
        ensure!(adjacency.nnz() > 0, "graph has no edges");
        ensure!(adjacency.is_symmetric(), "adjacency must be symmetric");
        ensure!(
            (0..n).all(|i| adjacency.get(i, i) == 0.0),
            "adjacency must have a zero diagonal"
        );

        let degrees: Vec<f64> = (0..n).map(|r| adjacency.row(r).map(|(_, v)| v).sum()).collect();
        let mut triplets: Vec<(usize, usize, f64)> = adjacency.triplets().map(|(r, c, v)| (r, c, -v)).collect();
        triplets.extend(degrees.iter().enumerate().map(|(i, &d)| (i, i, d)));
        let laplacian = SparseMatrix::from_triplets(n, n, triplets)?;

        let components = count_components(&adjacency);
        if components > 1 {
            log::warn!("mesh graph has {components} connected components");
        }

        let (lambda_max, estimate) = match power_iteration(&laplacian) {
            Ok((lambda, iterations)) => (lambda, LambdaEstimate::PowerIteration { iterations }),
            Err(iterations) => {
                let bound = 2.0 * degrees.iter().copied().fold(0.0, f64::max);
                log::warn!("power iteration did not converge in {iterations} steps; using degree bound {bound}");
                (bound, LambdaEstimate::DegreeBound { iterations })
            }
        };

        let scaled = scale_laplacian(&laplacian, lambda_max)?;
        Ok(Self {
            adjacency,
            laplacian,
            lambda_max,
            scaled,
            estimate,
            components,
        })
    }
}

/// `2 L / lambda_max - I`.
pub(crate) fn scale_laplacian(laplacian: &SparseMatrix, lambda_max: f64) -> Result<SparseMatrix> {
    ensure!(lambda_max > 0.0, "lambda_max must be positive, got {lambda_max}");
    let n = laplacian.rows();
    let mut triplets: Vec<(usize, usize, f64)> = laplacian
        .triplets()
        .map(|(r, c, v)| (r, c, 2.0 * v / lambda_max))
        .collect();
    triplets.extend((0..n).map(|i| (i, i, -1.0)));
    SparseMatrix::from_triplets(n, n, triplets)
}

/// Largest eigenvalue of a PSD matrix. `Err(iterations)` on non-convergence.
fn power_iteration(m: &SparseMatrix) -> std::result::Result<(f64, usize), usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut x: Vec<f64> = (0..m.rows()).map(|_| rng.gen_range(0.5..1.5)).collect();
    // Alternate signs so the start is far from the constant null vector.
    for (i, v) in x.iter_mut().enumerate() {
        if i % 2 == 1 {
            *v = -*v;
        }
    }
    normalize(&mut x);
    let mut rayleigh = 0.0;
    for it in 1..=POWER_MAX_ITERATIONS {
        let mut y = m.mul_vec(&x);
        let next: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let len = normalize(&mut y);
        if len == 0.0 || !len.is_finite() {
            return Err(it);
        }
        x = y;
        if (next - rayleigh).abs() <= POWER_TOLERANCE * next.abs().max(1.0) {
            return Ok((next, it));
        }
        rayleigh = next;
    }
    Err(POWER_MAX_ITERATIONS)
}

fn normalize(x: &mut [f64]) -> f64 {
    let len = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len > 0.0 {
        x.iter_mut().for_each(|v| *v /= len);
    }
    len
}

fn count_components(adjacency: &SparseMatrix) -> usize {
    let n = adjacency.rows();
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(v) = stack.pop() {
            for (w, _) in adjacency.row(v) {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives;

    #[test]
    fn single_edge_graph() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let b = LaplacianBundle::from_adjacency(a).unwrap();
        assert_eq!(b.laplacian.to_dense().values(), &[1.0, -1.0, -1.0, 1.0]);
        assert!((b.lambda_max - 2.0).abs() < 1e-9);
        let s = b.scaled.to_dense();
        assert!(s.get(0, 0).abs() < 1e-9 && s.get(1, 1).abs() < 1e-9);
        assert!((s.get(0, 1) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn triangle_graph() {
        let m = Mesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap();
        let b = laplacian_bundle(&m).unwrap();
        let l = b.laplacian.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(i, j), if i == j { 2.0 } else { -1.0 });
            }
        }
        assert!((b.lambda_max - 3.0).abs() < 1e-8);
        assert_eq!(b.components, 1);
    }

    #[test]
    fn adjacency_is_binary_symmetric_with_zero_diagonal() {
        let m = primitives::icosphere(2);
        let a = adjacency(&m);
        assert!(a.is_symmetric());
        assert!(a.values().iter().all(|&v| v == 1.0));
        assert!((0..m.vertex_count()).all(|i| a.get(i, i) == 0.0));
        // icosphere: every vertex has degree 5 or 6
        for r in 0..a.rows() {
            let d = a.row(r).count();
            assert!(d == 5 || d == 6);
        }
    }

    #[test]
    fn disconnected_graph_is_reported() {
        let m = Mesh::new(
            vec![
                [0.0, 0.0, 0.0],
                [1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0],
                [5.0, 0.0, 0.0],
                [6.0, 0.0, 0.0],
                [5.0, 1.0, 0.0],
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let b = laplacian_bundle(&m).unwrap();
        assert_eq!(b.components, 2);
        assert!((b.lambda_max - 3.0).abs() < 1e-8);
    }

    #[test]
    fn edgeless_graph_rejected() {
        let a = SparseMatrix::from_triplets(3, 3, vec![]).unwrap();
        assert!(LaplacianBundle::from_adjacency(a).is_err());
    }
}
