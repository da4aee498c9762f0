//! Trained model container and its binary file format.
//!
//! Layout: the magic bytes `MPGC`, a little-endian `u32` version, then
//! sections of a 4-byte tag, a `u64` payload length and the payload. All
//! integers are little-endian `u64` and all reals little-endian `f64`.
//!
//! | tag    | payload                                                    |
//! |--------|------------------------------------------------------------|
//! | `CONF` | configuration echo, UTF-8                                  |
//! | `ARCH` | latent, order, parts, channel widths, ablation flags       |
//! | `HIER` | per level mesh and `lambda_max`; per transition operators  |
//! | `LWTS` | local weights and their provenance                         |
//! | `PARM` | every parameter tensor as rows, cols, values               |
//! | `NORM` | normalization scale and decode centroid                         |
//! | `METR` | per-epoch training metrics                                 |

use std::path::Path;

use crate::error::{ensure, Error, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::mesh::{laplacian_bundle, Mesh};
use crate::nmf::LocalWeights;
use crate::sampling::{Hierarchy, Level};

use super::{
    decode_parts, effective_weights, encode, part_encodings, EpochMetrics, ModelContext, ModelParams, ModelSettings,
    Normalizer, PartEncodings,
};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MPGC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config_echo: String,
    pub settings: ModelSettings,
    pub hierarchy: Hierarchy,
    /// Factorization weights; kept even when training ignored them so that
    /// regions stay defined for evaluation.
    pub local_weights: LocalWeights,
    pub params: ModelParams,
    pub normalizer: Normalizer,
    pub metrics: Vec<EpochMetrics>,
}

impl Checkpoint {
    pub fn template(&self) -> &Mesh {
        self.hierarchy.template()
    }

    pub fn parts(&self) -> usize {
        self.settings.parts
    }

    pub fn latent(&self) -> usize {
        self.settings.latent
    }

    pub fn effective_weights(&self) -> DenseMatrix {
        effective_weights(&self.settings, &self.local_weights)
    }

    pub fn validate(&self) -> Result<()> {
        self.hierarchy.validate()?;
        self.local_weights.validate()?;
        let w = self.effective_weights();
        let ctx = ModelContext {
            hierarchy: &self.hierarchy,
            weights: &w,
            settings: &self.settings,
        };
        ctx.validate(&self.params)?;
        ensure!(
            self.normalizer.offset.iter().all(|v| v.is_finite())
                && self.normalizer.scale > 0.0
                && self.normalizer.scale.is_finite(),
            "normalizer scale must be positive"
        );
        Ok(())
    }

    fn positions(&self, mesh: &Mesh) -> Result<DenseMatrix> {
        ensure!(
            mesh.vertex_count() == self.template().vertex_count(),
            "mesh has {} vertices, template has {}",
            mesh.vertex_count(),
            self.template().vertex_count()
        );
        self.normalizer.normalize(&mesh.vertex_matrix())
    }

    /// Whole-shape latent column of a mesh in correspondence with the template.
    pub fn encode(&self, mesh: &Mesh) -> Result<DenseMatrix> {
        encode(&self.params, &self.hierarchy, &self.positions(mesh)?)
    }

    pub fn part_encodings(&self, mesh: &Mesh) -> Result<PartEncodings> {
        let w = self.effective_weights();
        let ctx = ModelContext {
            hierarchy: &self.hierarchy,
            weights: &w,
            settings: &self.settings,
        };
        part_encodings(&self.params, &ctx, &self.positions(mesh)?)
    }

    /// Mesh (template connectivity) decoded from part encodings.
    pub fn decode_parts(&self, parts: &[DenseMatrix]) -> Result<Mesh> {
        ensure!(
            parts.len() == self.parts(),
            "{} part encodings for a {}-part model",
            parts.len(),
            self.parts()
        );
        let w = self.effective_weights();
        let ctx = ModelContext {
            hierarchy: &self.hierarchy,
            weights: &w,
            settings: &self.settings,
        };
        let x = decode_parts(&self.params, &ctx, parts)?;
        self.template().with_positions(&self.normalizer.denormalize(&x)?)
    }

    pub fn reconstruct(&self, mesh: &Mesh) -> Result<Mesh> {
        let parts = self.part_encodings(mesh)?;
        self.decode_parts(&parts)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());

        section(&mut out, b"CONF", |w| w.bytes(self.config_echo.as_bytes()));

        section(&mut out, b"ARCH", |w| {
            let s = &self.settings;
            w.usize(s.latent);
            w.usize(s.order);
            w.usize(s.parts);
            w.usizes(&s.channels);
            w.u8(s.use_local_weights as u8);
            w.u8(s.use_projections as u8);
        });

        section(&mut out, b"HIER", |w| {
            let h = &self.hierarchy;
            w.usize(h.levels.len());
            for level in &h.levels {
                w.mesh(&level.mesh);
                w.f64(level.laplacian.lambda_max);
            }
            for t in 0..h.transitions() {
                w.sparse(&h.down[t]);
                w.sparse(&h.up[t]);
                w.usizes(&h.kept[t]);
            }
        });

        section(&mut out, b"LWTS", |w| {
            let lw = &self.local_weights;
            w.u64(lw.seed);
            w.f64(lw.sparsity);
            w.usize(lw.iterations);
            w.f64(lw.objective);
            w.dense(&lw.weights);
        });

        section(&mut out, b"PARM", |w| {
            let tensors: Vec<&DenseMatrix> = self.params.iter().collect();
            w.usize(tensors.len());
            for t in tensors {
                w.dense(t);
            }
        });

        section(&mut out, b"NORM", |w| {
            w.f64(self.normalizer.scale);
            for v in self.normalizer.offset {
                w.f64(v);
            }
        });

        section(&mut out, b"METR", |w| {
            w.usize(self.metrics.len());
            for m in &self.metrics {
                w.usize(m.epoch);
                w.f64(m.recon_l1);
                w.f64(m.cycle);
                w.f64(m.total);
                w.f64(m.learning_rate);
            }
        });
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
            )));
        }

        let mut conf = None;
        let mut arch = None;
        let mut hier = None;
        let mut lwts = None;
        let mut parm = None;
        let mut norm = None;
        let mut metr = None;
        while !r.is_empty() {
            let tag: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
            let len = r.usize()?;
            let payload = r.take(len)?;
            let slot = match &tag {
                b"CONF" => &mut conf,
                b"ARCH" => &mut arch,
                b"HIER" => &mut hier,
                b"LWTS" => &mut lwts,
                b"PARM" => &mut parm,
                b"NORM" => &mut norm,
                b"METR" => &mut metr,
                _ => {
                    log::warn!(
                        "skipping unknown checkpoint section {:?}",
                        String::from_utf8_lossy(&tag)
                    );
                    continue;
                }
            };
            if slot.replace(payload).is_some() {
                return Err(Error::Checkpoint(format!(
                    "duplicate section {}",
                    String::from_utf8_lossy(&tag)
                )));
            }
        }

        let config_echo = String::from_utf8(need(conf, "CONF")?.to_vec())
            .map_err(|_| Error::Checkpoint("configuration echo is not UTF-8".into()))?;

        let mut a = Reader::new(need(arch, "ARCH")?);
        let settings = ModelSettings {
            latent: a.usize()?,
            order: a.usize()?,
            parts: a.usize()?,
            channels: a.usizes()?,
            use_local_weights: a.flag()?,
            use_projections: a.flag()?,
        };
        a.finish("ARCH")?;

        let hierarchy = read_hierarchy(need(hier, "HIER")?)?;

        let mut l = Reader::new(need(lwts, "LWTS")?);
        let local_weights = LocalWeights {
            seed: l.u64()?,
            sparsity: l.f64()?,
            iterations: l.usize()?,
            objective: l.f64()?,
            weights: l.dense()?,
        };
        l.finish("LWTS")?;

        let mut p = Reader::new(need(parm, "PARM")?);
        let count = p.usize()?;
        let expected = ModelParams::expected_shapes(&settings, &hierarchy);
        if count != expected.len() {
            return Err(Error::Checkpoint(format!(
                "{count} parameter tensors stored, architecture needs {}",
                expected.len()
            )));
        }
        let tensors = (0..count).map(|_| p.dense()).collect::<Result<Vec<_>>>()?;
        p.finish("PARM")?;
        let mut params = ModelParams::zeros(&settings, &hierarchy)
            .map_err(|e| Error::Checkpoint(format!("invalid architecture: {e}")))?;
        for (slot, t) in params.iter_mut().zip(tensors) {
            *slot = t;
        }

        let mut n = Reader::new(need(norm, "NORM")?);
        let scale = n.f64()?;
        let offset = [n.f64()?, n.f64()?, n.f64()?];
        n.finish("NORM")?;
        let normalizer = Normalizer { offset, scale };

        let mut m = Reader::new(need(metr, "METR")?);
        let epochs = m.usize()?;
        let mut metrics = Vec::with_capacity(epochs.min(1 << 20));
        for _ in 0..epochs {
            metrics.push(EpochMetrics {
                epoch: m.usize()?,
                recon_l1: m.f64()?,
                cycle: m.f64()?,
                total: m.f64()?,
                learning_rate: m.f64()?,
            });
        }
        m.finish("METR")?;

        let ckpt = Self {
            config_echo,
            settings,
            hierarchy,
            local_weights,
            params,
            normalizer,
            metrics,
        };
        ckpt.validate()
            .map_err(|e| Error::Checkpoint(format!("inconsistent checkpoint: {e}")))?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn need<'a>(section: Option<&'a [u8]>, name: &str) -> Result<&'a [u8]> {
    section.ok_or_else(|| Error::Checkpoint(format!("missing section {name}")))
}

fn read_hierarchy(bytes: &[u8]) -> Result<Hierarchy> {
    let mut r = Reader::new(bytes);
    let count = r.usize()?;
    if !(2..=64).contains(&count) {
        return Err(Error::Checkpoint(format!("implausible level count {count}")));
    }
    let mut levels = Vec::with_capacity(count);
    for l in 0..count {
        let mesh = r.mesh()?;
        let stored = r.f64()?;
        let laplacian = laplacian_bundle(&mesh)?;
        if laplacian.lambda_max.to_bits() != stored.to_bits() {
            return Err(Error::Checkpoint(format!(
                "level {l}: recomputed lambda_max {} differs from stored {stored}",
                laplacian.lambda_max
            )));
        }
        levels.push(Level { mesh, laplacian });
    }
    let mut down = Vec::new();
    let mut up = Vec::new();
    let mut kept = Vec::new();
    for _ in 0..count - 1 {
        down.push(r.sparse()?);
        up.push(r.sparse()?);
        kept.push(r.usizes()?);
    }
    r.finish("HIER")?;
    let h = Hierarchy { levels, down, up, kept };
    h.validate()?;
    Ok(h)
}

fn section(out: &mut Vec<u8>, tag: &[u8; 4], body: impl FnOnce(&mut Writer)) {
    let mut w = Writer(Vec::new());
    body(&mut w);
    out.extend_from_slice(tag);
    out.extend_from_slice(&(w.0.len() as u64).to_le_bytes());
    out.extend_from_slice(&w.0);
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }

    fn usizes(&mut self, v: &[usize]) {
        self.usize(v.len());
        for &x in v {
            self.usize(x);
        }
    }

    fn f64s(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }

    fn dense(&mut self, m: &DenseMatrix) {
        self.usize(m.rows());
        self.usize(m.cols());
        self.f64s(m.values());
    }

    fn sparse(&mut self, m: &SparseMatrix) {
        self.usize(m.rows());
        self.usize(m.cols());
        self.usizes(m.row_ptr());
        self.usizes(m.col_indices());
        self.f64s(m.values());
    }

    fn mesh(&mut self, mesh: &Mesh) {
        self.usize(mesh.vertex_count());
        for v in mesh.vertices() {
            self.f64s(v);
        }
        self.usize(mesh.face_count());
        for f in mesh.faces() {
            for &i in f {
                self.usize(i);
            }
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn is_empty(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn finish(&self, name: &str) -> Result<()> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(Error::Checkpoint(format!("trailing bytes in section {name}")))
        }
    }

    fn flag(&mut self) -> Result<bool> {
        match self.take(1)?[0] {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Checkpoint(format!("invalid flag byte {b}"))),
        }
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("count overflows usize".into()))
    }

    /// A count whose elements occupy at least `unit` bytes each.
    fn count(&mut self, unit: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(unit) > self.bytes.len() - self.pos {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        Ok(n)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.count(8)?;
        (0..n).map(|_| self.usize()).collect()
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.saturating_mul(8) > self.bytes.len() - self.pos {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn dense(&mut self) -> Result<DenseMatrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Checkpoint("matrix size overflows".into()))?;
        let values = self.f64s(len)?;
        DenseMatrix::new(rows, cols, values).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn sparse(&mut self) -> Result<SparseMatrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let row_ptr = self.usizes()?;
        let col_indices = self.usizes()?;
        let values = self.f64s(col_indices.len())?;
        SparseMatrix::from_csr(rows, cols, row_ptr, col_indices, values).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn mesh(&mut self) -> Result<Mesh> {
        let nv = self.count(24)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            vertices.push([self.f64()?, self.f64()?, self.f64()?]);
        }
        let nf = self.count(24)?;
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            faces.push([self.usize()?, self.usize()?, self.usize()?]);
        }
        Mesh::new(vertices, faces).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}
