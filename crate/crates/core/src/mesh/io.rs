//! ASCII OBJ in/out and colored ASCII PLY out.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Face, Mesh, Point};
use crate::error::{ensure, Error, Result};

/// Parses `v` and `f` records; everything else is skipped. Face tokens may
/// carry `/vt/vn` suffixes, which are ignored. Polygons are fan-triangulated
/// from their first corner.
pub fn load_obj(text: &str) -> Result<Mesh> {
    let mut vertices: Vec<Point> = Vec::new();
    // (line, polygon) so index errors can be reported once all vertices are known
    let mut polygons: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut last_line = 0;

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for slot in &mut p {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| Error::parse(line_no, "vertex needs 3 coordinates"))?;
                    *slot = tok
                        .parse::<f64>()
                        .map_err(|_| Error::parse(line_no, format!("malformed number '{tok}'")))?;
                    if !slot.is_finite() {
                        return Err(Error::parse(line_no, format!("non-finite coordinate '{tok}'")));
                    }
                }
                vertices.push(p);
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in tokens {
                    let head = tok.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(line_no, format!("malformed index '{tok}'")))?;
                    if idx < 1 {
                        return Err(Error::parse(line_no, format!("index {idx} out of range")));
                    }
                    poly.push(idx as usize - 1);
                }
                if poly.len() < 3 {
                    return Err(Error::parse(line_no, "face needs at least 3 corners"));
                }
                polygons.push((line_no, poly));
            }
            _ => {}
        }
    }

    let n = vertices.len();
    if n < 3 {
        return Err(Error::parse(
            last_line,
            format!("mesh needs at least 3 vertices, found {n}"),
        ));
    }
    let mut faces: Vec<Face> = Vec::new();
    for (line_no, poly) in polygons {
        if let Some(&bad) = poly.iter().find(|&&v| v >= n) {
            return Err(Error::parse(
                line_no,
                format!("index {} out of range (have {n} vertices)", bad + 1),
            ));
        }
        for k in 1..poly.len() - 1 {
            let f = [poly[0], poly[k], poly[k + 1]];
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::parse(line_no, format!("degenerate face {:?}", f.map(|v| v + 1))));
            }
            faces.push(f);
        }
    }
    Mesh::new(vertices, faces)
}

pub fn read_obj(path: impl AsRef<Path>) -> Result<Mesh> {
    let text = fs::read_to_string(path.as_ref())?;
    load_obj(&text)
}

/// Serializes with shortest round-trip float formatting, so re-parsing
/// reproduces positions exactly.
pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(mesh.vertex_count() * 40 + mesh.face_count() * 20);
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn save_obj(path: impl AsRef<Path>, mesh: &Mesh) -> Result<()> {
    fs::write(path.as_ref(), write_obj(mesh))?;
    Ok(())
}

/// Blue at the field minimum, red at the maximum, linear in between.
/// A constant field is all blue.
pub(crate) fn blue_red(scalar: &[f64]) -> Vec<[u8; 3]> {
    let lo = scalar.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scalar.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    scalar
        .iter()
        .map(|&s| {
            let t = if range > 0.0 {
                ((s - lo) / range).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let red = (255.0 * t).round() as u8;
            [red, 0, 255 - red]
        })
        .collect()
}

/// ASCII PLY with per-vertex colors mapped from `scalar`.
pub fn write_ply_colored(mesh: &Mesh, scalar: &[f64]) -> Result<Vec<u8>> {
    ensure!(
        scalar.len() == mesh.vertex_count(),
        "scalar field has {} values for {} vertices",
        scalar.len(),
        mesh.vertex_count()
    );
    ensure!(
        scalar.iter().all(|s| s.is_finite()),
        "scalar field has non-finite values"
    );
    let colors = blue_red(scalar);
    let mut out = String::new();
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.vertex_count(),
        mesh.face_count()
    );
    for (v, c) in mesh.vertices().iter().zip(&colors) {
        let _ = writeln!(out, "{} {} {} {} {} {}", v[0], v[1], v[2], c[0], c[1], c[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    Ok(out.into_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_triangle() {
        let m = load_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3").unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn quad_is_fan_triangulated() {
        let m = load_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn attribute_suffixes_and_other_records_ignored() {
        let text = "# head\no thing\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf 1/1/1 2//1 3/2\n";
        let m = load_obj(text).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match load_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        match load_obj("v 0 0 0\nv 1 x 0\n") {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("malformed number"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_obj("v 0 0 0\nv 1 0 0\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn constant_field_is_all_blue() {
        let m = load_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3").unwrap();
        assert!(blue_red(&[0.4; 3]).iter().all(|c| *c == [0, 0, 255]));
        let ply = String::from_utf8(write_ply_colored(&m, &[0.4; 3]).unwrap()).unwrap();
        assert!(ply.contains("0 1 0 0 0 255"));
    }

    #[test]
    fn field_endpoints_map_to_blue_and_red() {
        assert_eq!(blue_red(&[0.0, 1.0]), vec![[0, 0, 255], [255, 0, 0]]);
    }

    #[test]
    fn ply_length_mismatch_rejected() {
        let m = load_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3").unwrap();
        assert!(write_ply_colored(&m, &[1.0, 2.0]).is_err());
    }
}
