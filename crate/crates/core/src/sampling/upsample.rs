use crate::error::{ensure, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{dot, sub, Mesh, Point};

/// Closest point on triangle `abc` to `p` as barycentric weights, with the
/// squared distance.
fn closest_barycentric(p: Point, a: Point, b: Point, c: Point) -> ([f64; 3], f64) {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(ab, ap);
    let d2 = dot(ac, ap);
    let bary = 'region: {
        if d1 <= 0.0 && d2 <= 0.0 {
            break 'region [1.0, 0.0, 0.0];
        }
        let bp = sub(p, b);
        let d3 = dot(ab, bp);
        let d4 = dot(ac, bp);
        if d3 >= 0.0 && d4 <= d3 {
            break 'region [0.0, 1.0, 0.0];
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            let v = d1 / (d1 - d3);
            break 'region [1.0 - v, v, 0.0];
        }
        let cp = sub(p, c);
        let d5 = dot(ab, cp);
        let d6 = dot(ac, cp);
        if d6 >= 0.0 && d5 <= d6 {
            break 'region [0.0, 0.0, 1.0];
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            let w = d2 / (d2 - d6);
            break 'region [1.0 - w, 0.0, w];
        }
        let va = d3 * d6 - d5 * d4;
        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
            break 'region [0.0, 1.0 - w, w];
        }
        let denom = va + vb + vc;
        if denom == 0.0 {
            break 'region [1.0, 0.0, 0.0];
        }
        let v = vb / denom;
        let w = vc / denom;
        [1.0 - v - w, v, w]
    };
    let q = [0, 1, 2].map(|k| bary[0] * a[k] + bary[1] * b[k] + bary[2] * c[k]);
    let d = sub(p, q);
    (bary, dot(d, d))
}

/// Negative weights set to zero, then renormalized to sum to one.
fn clamp_convex(bary: [f64; 3]) -> [f64; 3] {
    let clamped = bary.map(|w| if w.is_finite() { w.max(0.0) } else { 0.0 });
    let total: f64 = clamped.iter().sum();
    if total > 0.0 {
        clamped.map(|w| w / total)
    } else {
        [1.0, 0.0, 0.0]
    }
}

/// `fine.N x coarse.N` interpolation operator. Vertices that survived
/// decimation copy their coarse counterpart; the others take barycentric
/// weights of their projection onto the nearest coarse triangle (lowest
/// triangle index on ties).
pub fn barycentric_up(coarse: &Mesh, fine: &Mesh, kept: &[usize]) -> Result<SparseMatrix> {
    ensure!(coarse.face_count() > 0, "coarse mesh has no faces");
    ensure!(
        kept.len() == coarse.vertex_count(),
        "kept has {} entries for {} coarse vertices",
        kept.len(),
        coarse.vertex_count()
    );
    let mut coarse_row = vec![None; fine.vertex_count()];
    for (r, &v) in kept.iter().enumerate() {
        ensure!(v < fine.vertex_count(), "kept index {v} out of range");
        coarse_row[v] = Some(r);
    }

    let mut triplets = Vec::with_capacity(fine.vertex_count() * 3);
    for (i, &p) in fine.vertices().iter().enumerate() {
        if let Some(r) = coarse_row[i] {
            triplets.push((i, r, 1.0));
            continue;
        }
        let mut best: Option<(f64, usize, [f64; 3])> = None;
        for (ti, f) in coarse.faces().iter().enumerate() {
            let [a, b, c] = f.map(|v| coarse.vertices()[v]);
            let (bary, d2) = closest_barycentric(p, a, b, c);
            if best.is_none_or(|(bd, _, _)| d2 < bd) {
                best = Some((d2, ti, bary));
            }
        }
        let (_, ti, bary) = best.expect("coarse mesh has faces");
        let f = coarse.faces()[ti];
        for (k, w) in clamp_convex(bary).into_iter().enumerate() {
            if w > 0.0 {
                triplets.push((i, f[k], w));
            }
        }
    }
    SparseMatrix::from_triplets(fine.vertex_count(), coarse.vertex_count(), triplets)
}
