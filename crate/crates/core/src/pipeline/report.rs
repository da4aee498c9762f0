use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};

use crate::error::{ensure, Error, Result};
use crate::linalg::DenseMatrix;
use crate::mesh::Mesh;
use crate::model::Checkpoint;

/// Coordinates of the rows of `vectors` (`M x Z`) on the two leading
/// principal axes. Each axis is signed so its largest-magnitude component
/// is positive.
pub fn pca_embed(vectors: &DenseMatrix) -> Result<DenseMatrix> {
    let (m, z) = vectors.shape();
    ensure!(m >= 2, "PCA needs at least 2 rows, got {m}");
    ensure!(z >= 1, "PCA needs at least 1 column");
    let data = DMatrix::from_row_slice(m, z, vectors.values());
    let mean = data.row_mean();
    let centered = DMatrix::from_fn(m, z, |r, c| data[(r, c)] - mean[c]);
    let cov = centered.transpose() * &centered / (m - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..z).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = DenseMatrix::zeros(m, 2);
    for (slot, &axis) in order.iter().take(2).enumerate() {
        let mut v = eig.eigenvectors.column(axis).clone_owned();
        let lead = v
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if lead < 0.0 {
            v = -v;
        }
        let proj = &centered * v;
        for r in 0..m {
            out.set(r, slot, proj[r]);
        }
    }
    Ok(out)
}

/// Two-sigma covariance ellipse of one labeled point set.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipse {
    pub label: String,
    pub count: usize,
    pub center: [f64; 2],
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Major-axis direction in radians, in `(-π/2, π/2]`.
    pub angle: f64,
    pub area: f64,
}

impl Ellipse {
    pub fn fit(label: &str, points: &[[f64; 2]]) -> Result<Self> {
        ensure!(!points.is_empty(), "set '{label}' is empty");
        let n = points.len() as f64;
        let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
        let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
        let mut cov = Matrix2::zeros();
        if points.len() > 1 {
            for p in points {
                let d = [p[0] - cx, p[1] - cy];
                for i in 0..2 {
                    for j in 0..2 {
                        cov[(i, j)] += d[i] * d[j];
                    }
                }
            }
            cov /= n - 1.0;
        }
        let eig = SymmetricEigen::new(cov);
        let (major, minor) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
            (0, 1)
        } else {
            (1, 0)
        };
        let semi_major = 2.0 * eig.eigenvalues[major].max(0.0).sqrt();
        let semi_minor = 2.0 * eig.eigenvalues[minor].max(0.0).sqrt();
        let dir = eig.eigenvectors.column(major);
        let mut angle = dir[1].atan2(dir[0]);
        if angle <= -std::f64::consts::FRAC_PI_2 {
            angle += std::f64::consts::PI;
        } else if angle > std::f64::consts::FRAC_PI_2 {
            angle -= std::f64::consts::PI;
        }
        Ok(Self {
            label: label.to_string(),
            count: points.len(),
            center: [cx, cy],
            semi_major,
            semi_minor,
            angle,
            area: std::f64::consts::PI * semi_major * semi_minor,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiversityReport {
    /// `(label, pc1, pc2)` in input order.
    pub points: Vec<(String, f64, f64)>,
    /// One per label, in first-appearance order.
    pub ellipses: Vec<Ellipse>,
}

impl DiversityReport {
    /// Joint PCA over every set's encodings (`count x Z` each).
    pub fn from_encodings(sets: &[(String, DenseMatrix)]) -> Result<Self> {
        ensure!(!sets.is_empty(), "no encoding sets");
        for (i, (label, m)) in sets.iter().enumerate() {
            if m.rows() == 0 {
                return Err(Error::Data(format!("set '{label}' is empty")));
            }
            if sets[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::Data(format!("label '{label}' used twice")));
            }
            ensure!(
                m.cols() == sets[0].1.cols(),
                "set '{label}' has a different latent size"
            );
        }
        let z = sets[0].1.cols();
        let stacked: Vec<f64> = sets.iter().flat_map(|(_, m)| m.values().iter().copied()).collect();
        let rows = stacked.len() / z;
        let embedded = pca_embed(&DenseMatrix::new(rows, z, stacked)?)?;
        let mut points = Vec::with_capacity(rows);
        let mut ellipses = Vec::with_capacity(sets.len());
        let mut r = 0;
        for (label, m) in sets {
            let pts: Vec<[f64; 2]> = (r..r + m.rows())
                .map(|i| [embedded.get(i, 0), embedded.get(i, 1)])
                .collect();
            points.extend(pts.iter().map(|p| (label.clone(), p[0], p[1])));
            ellipses.push(Ellipse::fit(label, &pts)?);
            r += m.rows();
        }
        Ok(Self { points, ellipses })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,pc1,pc2\n");
        for (l, a, b) in &self.points {
            writeln!(s, "{l},{a},{b}").unwrap();
        }
        s
    }

    pub fn ellipses_csv(&self) -> String {
        let mut s = String::from("label,count,cx,cy,semi_major,semi_minor,angle,area\n");
        for e in &self.ellipses {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                e.label, e.count, e.center[0], e.center[1], e.semi_major, e.semi_minor, e.angle, e.area
            )
            .unwrap();
        }
        s
    }

    pub fn count(&self, label: &str) -> usize {
        self.ellipses.iter().find(|e| e.label == label).map_or(0, |e| e.count)
    }
}

/// Encodes every mesh of every labeled set and embeds them jointly.
pub fn diversity_report(ckpt: &Checkpoint, sets: &[(String, Vec<Mesh>)]) -> Result<DiversityReport> {
    let z = ckpt.latent();
    let encoded = sets
        .iter()
        .map(|(label, meshes)| {
            let mut values = Vec::with_capacity(meshes.len() * z);
            for m in meshes {
                values.extend_from_slice(ckpt.encode(m)?.values());
            }
            Ok((label.clone(), DenseMatrix::new(meshes.len(), z, values)?))
        })
        .collect::<Result<Vec<_>>>()?;
    DiversityReport::from_encodings(&encoded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn matches_svd_of_centered_data() {
        let x = random(50, 64, 11);
        let got = pca_embed(&x).unwrap();
        let data = DMatrix::from_row_slice(50, 64, x.values());
        let mean = data.row_mean();
        let centered = DMatrix::from_fn(50, 64, |r, c| data[(r, c)] - mean[c]);
        let svd = centered.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        for slot in 0..2 {
            let v = vt.row(idx[slot]).transpose();
            let proj = &centered * v;
            let sign = if (0..50).map(|r| proj[r] * got.get(r, slot)).sum::<f64>() < 0.0 {
                -1.0
            } else {
                1.0
            };
            for r in 0..50 {
                assert!((sign * proj[r] - got.get(r, slot)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn collinear_points_have_no_second_coordinate() {
        let x = DenseMatrix::from_fn(7, 4, |r, c| (r as f64 - 2.0) * [1.0, -2.0, 0.5, 3.0][c] + 10.0);
        let e = pca_embed(&x).unwrap();
        assert!((0..7).all(|r| e.get(r, 1).abs() <= 1e-9));
        assert!(e.get(0, 0) != 0.0);
    }

    #[test]
    fn centered_planar_data_is_recovered() {
        let x = DenseMatrix::from_rows(&[vec![3.0, 0.5], vec![-3.0, -0.5], vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        let e = pca_embed(&x).unwrap();
        let d = |m: &DenseMatrix, a: usize, b: usize| {
            ((m.get(a, 0) - m.get(b, 0)).powi(2) + (m.get(a, 1) - m.get(b, 1)).powi(2)).sqrt()
        };
        for a in 0..4 {
            for b in 0..4 {
                assert!((d(&x, a, b) - d(&e, a, b)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_zero_gives_zeros() {
        let e = pca_embed(&DenseMatrix::filled(5, 3, 2.5)).unwrap();
        assert!(e.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_points_give_zero_area() {
        let r = DiversityReport::from_encodings(&[
            ("same".into(), DenseMatrix::filled(4, 3, 1.0)),
            ("other".into(), random(5, 3, 1)),
        ])
        .unwrap();
        assert_eq!(r.ellipses[0].area, 0.0);
        assert!(r.ellipses[1].area > 0.0);
    }

    #[test]
    fn separated_clusters_keep_their_separation() {
        let mut a = random(20, 6, 2).scaled(0.1);
        let mut b = random(20, 6, 3).scaled(0.1);
        for r in 0..20 {
            a.row_mut(r)[0] -= 5.0;
            b.row_mut(r)[0] += 5.0;
        }
        let rep = DiversityReport::from_encodings(&[("a".into(), a), ("b".into(), b)]).unwrap();
        let (ca, cb) = (rep.ellipses[0].center, rep.ellipses[1].center);
        let gap = ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2)).sqrt();
        assert!((gap - 10.0).abs() < 0.2, "{gap}");
        assert!(rep.ellipses[0].semi_major < 1.0);
    }

    #[test]
    fn collisions_and_empty_sets_rejected() {
        let m = random(3, 2, 0);
        assert!(DiversityReport::from_encodings(&[("x".into(), m.clone()), ("x".into(), m.clone())]).is_err());
        assert!(DiversityReport::from_encodings(&[("x".into(), m), ("y".into(), DenseMatrix::zeros(0, 2))]).is_err());
    }

    #[test]
    fn csv_keeps_input_order() {
        let rep =
            DiversityReport::from_encodings(&[("a".into(), random(2, 3, 4)), ("b".into(), random(1, 3, 5))]).unwrap();
        let csv = rep.to_csv();
        let labels: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(labels, ["a", "a", "b"]);
        assert!(rep.ellipses_csv().starts_with("label,count,cx,cy"));
        assert_eq!(rep.count("a"), 2);
    }
}
