use std::fs;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};
use crate::linalg::DenseMatrix;
use crate::mesh::{read_obj, save_obj, Mesh, Point};

pub const BUMP_COUNT: usize = 8;
/// Bump width as a fraction of the template's bounding-box diagonal.
pub const BUMP_WIDTH: f64 = 0.15;
/// Coefficient range as a fraction of the diagonal.
pub const BUMP_AMPLITUDE: f64 = 0.05;
pub const TEST_FRACTION: f64 = 0.11;
const SMALL_TEMPLATE: usize = 100;

/// Meshes in correspondence with one template, split into train and test.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub template: Mesh,
    /// `N₀ x 3` positions in template vertex order.
    pub samples: Vec<DenseMatrix>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn new(template: Mesh, samples: Vec<DenseMatrix>, train: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let n = template.vertex_count();
        for (i, s) in samples.iter().enumerate() {
            if s.shape() != (n, 3) {
                return Err(Error::Data(format!(
                    "sample {i} has shape {:?}, template has {n} vertices",
                    s.shape()
                )));
            }
        }
        let mut seen = vec![false; samples.len()];
        for &i in train.iter().chain(&test) {
            if i >= samples.len() || seen[i] {
                return Err(Error::Data(format!("split index {i} is out of range or repeated")));
            }
            seen[i] = true;
        }
        Ok(Self {
            template,
            samples,
            train,
            test,
        })
    }

    pub fn mesh(&self, index: usize) -> Result<Mesh> {
        self.template.with_positions(&self.samples[index])
    }

    pub fn train_samples(&self) -> Vec<DenseMatrix> {
        self.train.iter().map(|&i| self.samples[i].clone()).collect()
    }

    pub fn train_meshes(&self) -> Result<Vec<Mesh>> {
        self.train.iter().map(|&i| self.mesh(i)).collect()
    }

    pub fn test_meshes(&self) -> Result<Vec<Mesh>> {
        self.test.iter().map(|&i| self.mesh(i)).collect()
    }

    /// Writes `template.obj`, `train/face_NNNN.obj` and `test/face_NNNN.obj`,
    /// numbered by sample index.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        save_obj(dir.join("template.obj"), &self.template)?;
        for (name, split) in [("train", &self.train), ("test", &self.test)] {
            let sub = dir.join(name);
            fs::create_dir_all(&sub)?;
            for &i in split {
                save_obj(sub.join(format!("face_{i:04}.obj")), &self.mesh(i)?)?;
            }
        }
        Ok(())
    }

    /// Reads a directory written by [`Dataset::save`]. Samples are ordered
    /// train first, then test, each by file name.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let template = read_obj(dir.join("template.obj"))?;
        let train = read_mesh_dir(dir.join("train"))?;
        let test = read_mesh_dir(dir.join("test"))?;
        let mut samples = Vec::with_capacity(train.len() + test.len());
        for (path, mesh) in train.iter().chain(&test) {
            if !mesh.same_topology(&template) {
                return Err(Error::Data(format!(
                    "{} is not in correspondence with the template",
                    path.display()
                )));
            }
            samples.push(mesh.vertex_matrix());
        }
        let n_train = train.len();
        Self::new(
            template,
            samples,
            (0..n_train).collect(),
            (n_train..n_train + test.len()).collect(),
        )
    }
}

/// Every `.obj` file directly inside `dir`, sorted by file name.
pub fn read_mesh_dir(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, Mesh)>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("cannot list {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("obj")))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let m = read_obj(&p)?;
            Ok((p, m))
        })
        .collect()
}

/// Smooth displacement fields along the template normals, each a Gaussian
/// bump around one template vertex.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpBasis {
    pub centers: Vec<usize>,
    pub sigma: f64,
    pub diagonal: f64,
    /// One `N₀ x 3` field per bump.
    pub fields: Vec<DenseMatrix>,
}

impl BumpBasis {
    /// Centers spread by farthest-point sampling starting at vertex 0.
    pub fn new(template: &Mesh, count: usize) -> Result<Self> {
        let n = template.vertex_count();
        ensure!(count >= 1 && count <= n, "cannot place {count} bumps on {n} vertices");
        let pts = template.vertices();
        let mut centers = vec![0];
        let mut nearest: Vec<f64> = pts.iter().map(|p| dist2(p, &pts[0])).collect();
        while centers.len() < count {
            let (next, _) =
                nearest.iter().enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, &d)| if d > best.1 { (i, d) } else { best },
                );
            centers.push(next);
            for (d, p) in nearest.iter_mut().zip(pts) {
                *d = d.min(dist2(p, &pts[next]));
            }
        }
        let diagonal = template.bounding_box_diagonal();
        let sigma = BUMP_WIDTH * diagonal;
        let normals = template.vertex_normals();
        let fields = centers
            .iter()
            .map(|&c| {
                DenseMatrix::from_fn(n, 3, |v, k| {
                    (-dist2(&pts[v], &pts[c]) / (2.0 * sigma * sigma)).exp() * normals[v][k]
                })
            })
            .collect();
        Ok(Self {
            centers,
            sigma,
            diagonal,
            fields,
        })
    }

    /// `template + Σ coefficients[m] · field[m]`.
    pub fn deform(&self, template: &Mesh, coefficients: &[f64]) -> Result<DenseMatrix> {
        ensure!(
            coefficients.len() == self.fields.len(),
            "{} coefficients for {} bumps",
            coefficients.len(),
            self.fields.len()
        );
        let mut x = template.vertex_matrix();
        for (c, f) in coefficients.iter().zip(&self.fields) {
            x.axpy(*c, f);
        }
        Ok(x)
    }
}

fn dist2(a: &Point, b: &Point) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Number of test samples in an `n`-sample split.
pub fn test_count(n: usize) -> usize {
    ((n as f64 * TEST_FRACTION).round() as usize).clamp(1, n - 1)
}

/// `n` random bump deformations of `template`, split 89/11 into train and
/// test by a seeded permutation.
pub fn synth_faces(n: usize, template: &Mesh, seed: u64) -> Result<Dataset> {
    ensure!(n >= 2, "need at least 2 faces, got {n}");
    if template.vertex_count() < SMALL_TEMPLATE {
        log::warn!(
            "template has only {} vertices; bumps will be coarse",
            template.vertex_count()
        );
    }
    let basis = BumpBasis::new(template, BUMP_COUNT.min(template.vertex_count()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = BUMP_AMPLITUDE * basis.diagonal;
    let coeff = Uniform::new_inclusive(-amp, amp);
    let samples = (0..n)
        .map(|_| {
            let c: Vec<f64> = (0..basis.fields.len()).map(|_| coeff.sample(&mut rng)).collect();
            basis.deform(template, &c)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_test = test_count(n);
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Dataset::new(template.clone(), samples, train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::face_template;

    #[test]
    fn equal_seeds_give_identical_datasets() {
        let t = face_template(12, 10);
        assert_eq!(synth_faces(2, &t, 5).unwrap(), synth_faces(2, &t, 5).unwrap());
        assert_ne!(synth_faces(2, &t, 5).unwrap(), synth_faces(2, &t, 6).unwrap());
    }

    #[test]
    fn zero_coefficients_reproduce_the_template() {
        let t = face_template(12, 10);
        let b = BumpBasis::new(&t, BUMP_COUNT).unwrap();
        assert_eq!(b.deform(&t, &[0.0; BUMP_COUNT]).unwrap(), t.vertex_matrix());
    }

    #[test]
    fn displacement_bounded_by_summed_amplitudes() {
        let t = face_template(16, 12);
        let d = synth_faces(40, &t, 3).unwrap();
        let bound = BUMP_COUNT as f64 * BUMP_AMPLITUDE * t.bounding_box_diagonal();
        let base = t.vertex_matrix();
        let mut worst: f64 = 0.0;
        for s in &d.samples {
            let diff = s.sub(&base);
            for r in 0..diff.rows() {
                worst = worst.max(diff.row(r).iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
        assert!(worst > 0.0 && worst <= bound, "{worst} vs {bound}");
    }

    #[test]
    fn bump_centers_are_distinct_and_start_at_vertex_zero() {
        let t = face_template(12, 10);
        let b = BumpBasis::new(&t, BUMP_COUNT).unwrap();
        assert_eq!(b.centers[0], 0);
        let mut c = b.centers.clone();
        c.sort_unstable();
        c.dedup();
        assert_eq!(c.len(), BUMP_COUNT);
    }

    #[test]
    fn split_mirrors_reference_proportions() {
        assert_eq!(test_count(2000), 220);
        assert_eq!(test_count(200), 22);
        assert_eq!(test_count(2), 1);
        let d = synth_faces(200, &face_template(12, 10), 1).unwrap();
        assert_eq!((d.train.len(), d.test.len()), (178, 22));
        assert!(d.train.iter().all(|i| !d.test.contains(i)));
    }

    #[test]
    fn too_few_faces_rejected() {
        assert!(synth_faces(1, &face_template(12, 10), 0).is_err());
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = synth_faces(9, &face_template(8, 6), 2).unwrap();
        d.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back.train.len(), d.train.len());
        assert_eq!(back.test.len(), d.test.len());
        let original: Vec<&DenseMatrix> = d.train.iter().chain(&d.test).map(|&i| &d.samples[i]).collect();
        for (a, b) in original.iter().zip(&back.samples) {
            assert!(a.max_abs_diff(b) <= 1e-12);
        }
    }
}
