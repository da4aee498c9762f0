//! Quadric-error edge contraction onto existing vertices.
//!
//! Every contraction keeps one endpoint where it is, so the surviving
//! vertices are a subset of the input and the down-sampling operator is a
//! binary row selector.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use crate::error::{ensure, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::{cross, dot, norm, sub, Face, Mesh, Point};

/// Result of [`decimate`].
#[derive(Clone, Debug)]
pub struct Decimation {
    pub coarse: Mesh,
    /// `coarse.N x fine.N` selector with `down[r, kept[r]] = 1`.
    pub down: SparseMatrix,
    /// Fine-mesh index of each coarse vertex, ascending.
    pub kept: Vec<usize>,
}

impl Decimation {
    pub fn achieved(&self) -> usize {
        self.kept.len()
    }
}

/// Symmetric 4x4 quadric, upper triangle.
#[derive(Clone, Copy, Debug, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn from_plane(n: Point, d: f64) -> Self {
        let [a, b, c] = n;
        Self([a * a, a * b, a * c, a * d, b * b, b * c, b * d, c * c, c * d, d * d])
    }

    fn add(&self, other: &Quadric) -> Quadric {
        let mut q = *self;
        for (a, b) in q.0.iter_mut().zip(other.0) {
            *a += b;
        }
        q
    }

    fn error(&self, p: Point) -> f64 {
        let q = &self.0;
        let [x, y, z] = p;
        q[0] * x * x
            + 2.0 * q[1] * x * y
            + 2.0 * q[2] * x * z
            + 2.0 * q[3] * x
            + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }
}

/// Heap entry; ordered so the cheapest, lowest-indexed edge pops first.
#[derive(Clone, Copy, Debug)]
struct Candidate {
    cost: f64,
    edge: (usize, usize),
    /// Vertex that survives the contraction.
    keep: usize,
    stamps: (u32, u32),
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.edge.cmp(&self.edge))
    }
}

struct Collapser {
    positions: Vec<Point>,
    faces: Vec<Face>,
    face_alive: Vec<bool>,
    vertex_faces: Vec<BTreeSet<usize>>,
    vertex_alive: Vec<bool>,
    quadrics: Vec<Quadric>,
    stamps: Vec<u32>,
    alive_vertices: usize,
    alive_faces: usize,
    /// Scale used to decide when a triangle has collapsed to zero area.
    area_epsilon: f64,
}

impl Collapser {
    fn new(mesh: &Mesh) -> Self {
        let n = mesh.vertex_count();
        let positions = mesh.vertices().to_vec();
        let faces = mesh.faces().to_vec();
        let mut vertex_faces = vec![BTreeSet::new(); n];
        let mut quadrics = vec![Quadric::default(); n];
        for (fi, f) in faces.iter().enumerate() {
            let [a, b, c] = f.map(|i| positions[i]);
            let normal = cross(sub(b, a), sub(c, a));
            let len = norm(normal);
            let q = if len > 0.0 {
                let unit = normal.map(|x| x / len);
                Quadric::from_plane(unit, -dot(unit, a))
            } else {
                Quadric::default()
            };
            for &v in f {
                vertex_faces[v].insert(fi);
                quadrics[v] = quadrics[v].add(&q);
            }
        }
        let diag = mesh.bounding_box_diagonal().max(f64::MIN_POSITIVE);
        Self {
            positions,
            face_alive: vec![true; faces.len()],
            alive_faces: faces.len(),
            faces,
            vertex_faces,
            vertex_alive: vec![true; n],
            quadrics,
            stamps: vec![0; n],
            alive_vertices: n,
            area_epsilon: 1e-14 * diag * diag,
        }
    }

    fn neighbors(&self, v: usize) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for &fi in &self.vertex_faces[v] {
            for &w in &self.faces[fi] {
                if w != v {
                    out.insert(w);
                }
            }
        }
        out
    }

    fn edge_faces(&self, a: usize, b: usize) -> Vec<usize> {
        self.vertex_faces[a]
            .intersection(&self.vertex_faces[b])
            .copied()
            .collect()
    }

    fn is_boundary_vertex(&self, v: usize) -> bool {
        self.neighbors(v).into_iter().any(|w| self.edge_faces(v, w).len() == 1)
    }

    fn candidate(&self, a: usize, b: usize) -> Candidate {
        let (a, b) = (a.min(b), a.max(b));
        let q = self.quadrics[a].add(&self.quadrics[b]);
        let cost_a = q.error(self.positions[a]);
        let cost_b = q.error(self.positions[b]);
        let (cost, keep) = if cost_b < cost_a { (cost_b, b) } else { (cost_a, a) };
        Candidate {
            cost,
            edge: (a, b),
            keep,
            stamps: (self.stamps[a], self.stamps[b]),
        }
    }

    fn all_candidates(&self) -> BinaryHeap<Candidate> {
        let mut heap = BinaryHeap::new();
        for v in 0..self.positions.len() {
            if !self.vertex_alive[v] {
                continue;
            }
            for w in self.neighbors(v) {
                if v < w {
                    heap.push(self.candidate(v, w));
                }
            }
        }
        heap
    }

    fn is_current(&self, c: &Candidate) -> bool {
        let (a, b) = c.edge;
        self.vertex_alive[a] && self.vertex_alive[b] && self.stamps[a] == c.stamps.0 && self.stamps[b] == c.stamps.1
    }

    /// Whether contracting `remove` into `keep` preserves a manifold,
    /// non-flipped, non-degenerate surface.
    fn is_legal(&self, remove: usize, keep: usize) -> bool {
        let shared = self.edge_faces(remove, keep);
        if shared.is_empty() || shared.len() > 2 || self.alive_faces <= shared.len() {
            return false;
        }
        // link condition
        let opposite: BTreeSet<usize> = shared
            .iter()
            .map(|&fi| {
                *self.faces[fi]
                    .iter()
                    .find(|&&w| w != remove && w != keep)
                    .expect("face has three distinct vertices")
            })
            .collect();
        let common: BTreeSet<usize> = self
            .neighbors(remove)
            .intersection(&self.neighbors(keep))
            .copied()
            .collect();
        if common != opposite {
            return false;
        }
        if shared.len() == 2 && self.is_boundary_vertex(remove) && self.is_boundary_vertex(keep) {
            return false;
        }
        // opposite vertices must keep at least one face
        for &w in &opposite {
            if self.vertex_faces[w].iter().all(|fi| shared.contains(fi)) {
                return false;
            }
        }
        // surviving faces around `remove` must not flip or degenerate
        let target = self.positions[keep];
        for &fi in &self.vertex_faces[remove] {
            if shared.contains(&fi) {
                continue;
            }
            let f = self.faces[fi];
            let old = f.map(|i| self.positions[i]);
            let new = f.map(|i| if i == remove { target } else { self.positions[i] });
            let n_old = cross(sub(old[1], old[0]), sub(old[2], old[0]));
            let n_new = cross(sub(new[1], new[0]), sub(new[2], new[0]));
            if norm(n_new) <= self.area_epsilon || dot(n_old, n_new) <= 0.0 {
                return false;
            }
        }
        true
    }

    fn contract(&mut self, remove: usize, keep: usize) {
        let shared = self.edge_faces(remove, keep);
        for &fi in &shared {
            self.face_alive[fi] = false;
            self.alive_faces -= 1;
            for &v in &self.faces[fi] {
                self.vertex_faces[v].remove(&fi);
            }
        }
        let moved: Vec<usize> = self.vertex_faces[remove].iter().copied().collect();
        for fi in moved {
            for v in self.faces[fi].iter_mut() {
                if *v == remove {
                    *v = keep;
                }
            }
            self.vertex_faces[keep].insert(fi);
        }
        self.vertex_faces[remove].clear();
        self.vertex_alive[remove] = false;
        self.alive_vertices -= 1;
        self.quadrics[keep] = self.quadrics[keep].add(&self.quadrics[remove]);
        self.stamps[keep] += 1;
        self.stamps[remove] += 1;
    }

    fn run(&mut self, target: usize) {
        let mut heap = self.all_candidates();
        let mut collapsed_since_rebuild = 0usize;
        while self.alive_vertices > target {
            let Some(c) = heap.pop() else {
                if collapsed_since_rebuild == 0 {
                    break;
                }
                // Edges skipped as illegal earlier may have become legal.
                heap = self.all_candidates();
                collapsed_since_rebuild = 0;
                continue;
            };
            if !self.is_current(&c) {
                continue;
            }
            let remove = if c.keep == c.edge.0 { c.edge.1 } else { c.edge.0 };
            if !self.is_legal(remove, c.keep) {
                continue;
            }
            self.contract(remove, c.keep);
            collapsed_since_rebuild += 1;
            for w in self.neighbors(c.keep) {
                heap.push(self.candidate(c.keep, w));
            }
        }
    }
}

/// Contracts minimum-quadric-error edges until `target_count` vertices
/// remain, or no legal contraction is left (then fewer are removed; check
/// [`Decimation::achieved`]).
pub fn decimate(mesh: &Mesh, target_count: usize) -> Result<Decimation> {
    let n = mesh.vertex_count();
    ensure!(
        (3..=n).contains(&target_count),
        "decimation target {target_count} outside [3, {n}]"
    );
    let mut state = Collapser::new(mesh);
    state.run(target_count);
    if state.alive_vertices > target_count {
        log::warn!(
            "decimation stopped at {} vertices (target {target_count}): no legal edge left",
            state.alive_vertices
        );
    }

    let kept: Vec<usize> = (0..n).filter(|&v| state.vertex_alive[v]).collect();
    let mut remap = vec![usize::MAX; n];
    for (r, &v) in kept.iter().enumerate() {
        remap[v] = r;
    }
    let faces = state
        .faces
        .iter()
        .zip(&state.face_alive)
        .filter(|(_, &alive)| alive)
        .map(|(f, _)| f.map(|v| remap[v]))
        .collect();
    let vertices = kept.iter().map(|&v| mesh.vertices()[v]).collect();
    let coarse = Mesh::new(vertices, faces)?;
    let down = SparseMatrix::from_triplets(
        kept.len(),
        n,
        kept.iter().enumerate().map(|(r, &v)| (r, v, 1.0)).collect(),
    )?;
    Ok(Decimation { coarse, down, kept })
}
