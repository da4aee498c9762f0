//! Local weights from a sparse non-negative factorization of the coarsest
//! template's vertex positions.
//!
//! `V ≈ W H` with `V` the `P x 3` embedded positions, `W` the `P x K` basis
//! and `H` the `K x 3` coefficients. The objective is
//! `‖V − WH‖²_F + λ Σ H`, minimized by multiplicative updates, each outer
//! iteration repeating the cheap inner steps for one factor before moving to
//! the other. Several seeded restarts are run and the one whose basis columns
//! overlap least is kept.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Error, Result};
use crate::linalg::DenseMatrix;
use crate::mesh::Mesh;

pub const DEFAULT_SPARSITY: f64 = 7.5;
pub const DEFAULT_RESTARTS: usize = 5;
pub const DEFAULT_ITERATIONS: usize = 2000;
pub const DEFAULT_PARTS: usize = 4;

/// Entries are never allowed below this, so multiplicative updates cannot
/// get stuck at zero.
pub const CLAMP_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct NmfRun {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub objective_trace: Vec<f64>,
    pub seed: u64,
    pub sparsity: f64,
}

impl NmfRun {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Column-normalized basis used to bind part encodings to regions.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalWeights {
    /// `P x K`, non-negative, each column peaking at 1.
    pub weights: DenseMatrix,
    pub seed: u64,
    pub sparsity: f64,
    pub iterations: usize,
    pub objective: f64,
}

impl LocalWeights {
    /// All-ones weights: every part influences every vertex equally.
    pub fn uniform(vertices: usize, parts: usize) -> Self {
        Self {
            weights: DenseMatrix::filled(vertices, parts, 1.0),
            seed: 0,
            sparsity: 0.0,
            iterations: 0,
            objective: 0.0,
        }
    }

    pub fn vertices(&self) -> usize {
        self.weights.rows()
    }

    pub fn parts(&self) -> usize {
        self.weights.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        ensure!(w.rows() > 0 && w.cols() > 0, "local weights are empty");
        ensure!(
            w.values().iter().all(|v| v.is_finite() && *v >= 0.0),
            "local weights must be finite and non-negative"
        );
        for k in 0..w.cols() {
            let max = w.col_values(k).into_iter().fold(0.0, f64::max);
            ensure!(max > 0.0, "local weight column {k} is all zero");
        }
        Ok(())
    }

    /// `P` rows of `K` comma-separated weights under a `part_0,…` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.parts()).map(|k| format!("part_{k}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for r in 0..self.vertices() {
            for (k, v) in self.weights.row(r).iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                write!(out, "{v}").expect("writing to a String");
            }
            out.push('\n');
        }
        out
    }
}

/// Shifts and scales each column of `vertices` into `[0, 1]`. Constant
/// columns become zero.
pub fn nonneg_embed(vertices: &DenseMatrix) -> Result<DenseMatrix> {
    ensure!(vertices.rows() >= 1, "need at least one vertex");
    ensure!(vertices.is_finite(), "vertex positions must be finite");
    let mut out = vertices.clone();
    for c in 0..vertices.cols() {
        let col = vertices.col_values(c);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for r in 0..vertices.rows() {
            let v = if span > 0.0 { (col[r] - lo) / span } else { 0.0 };
            out.set(r, c, v);
        }
    }
    Ok(out)
}

/// `‖V − WH‖²_F + λ Σ H`.
pub fn objective(v: &DenseMatrix, w: &DenseMatrix, h: &DenseMatrix, sparsity: f64) -> f64 {
    let residual = v.sub(&w.matmul(h));
    let fit: f64 = residual.values().iter().map(|x| x * x).sum();
    fit + sparsity * h.sum()
}

/// Inner multiplicative steps per factor and outer iteration.
pub const INNER_H_STEPS: usize = 100;
pub const INNER_W_STEPS: usize = 50;
/// Inner steps stop once a step moves the factor by less than this fraction
/// of the first step's (squared) movement.
pub const INNER_STOP: f64 = 0.01;

/// Repeats `x ← max(x ⊙ numer / (gram_product(x) + shift), floor)`.
fn inner_steps(
    x: &mut DenseMatrix,
    numer: &DenseMatrix,
    shift: f64,
    max_steps: usize,
    gram_product: impl Fn(&DenseMatrix) -> DenseMatrix,
) {
    let mut first = 0.0;
    for step in 0..max_steps {
        let denom = gram_product(x);
        let mut moved = 0.0;
        for ((v, n), d) in x.values_mut().iter_mut().zip(numer.values()).zip(denom.values()) {
            let next = (*v * n / (d + shift)).max(CLAMP_FLOOR);
            moved += (next - *v) * (next - *v);
            *v = next;
        }
        if step == 0 {
            first = moved;
        } else if moved <= INNER_STOP * first {
            break;
        }
    }
}

/// One outer iteration: several multiplicative updates of `H`, then of `W`.
/// Each step is a monotone Lee–Seung step for the penalized objective.
pub(crate) fn update(v: &DenseMatrix, w: &mut DenseMatrix, h: &mut DenseMatrix, sparsity: f64) {
    let wtw = w.matmul_tn(w);
    inner_steps(h, &w.matmul_tn(v), 0.5 * sparsity, INNER_H_STEPS, |h| wtw.matmul(h));
    let hht = h.matmul_nt(h);
    inner_steps(w, &v.matmul_nt(h), 0.0, INNER_W_STEPS, |w| w.matmul(&hht));
}

pub fn sparse_nmf(v: &DenseMatrix, parts: usize, sparsity: f64, iterations: usize, seed: u64) -> Result<NmfRun> {
    ensure!(parts >= 1, "need at least one part");
    ensure!(
        sparsity >= 0.0 && sparsity.is_finite(),
        "sparsity must be a finite non-negative value"
    );
    ensure!(iterations >= 1, "need at least one iteration");
    ensure!(!v.is_empty(), "input matrix is empty");
    ensure!(
        v.values().iter().all(|x| x.is_finite() && *x >= 0.0),
        "input matrix must be finite and non-negative"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positive = || 1.0 - rng.gen::<f64>();
    let mut w = DenseMatrix::from_fn(v.rows(), parts, |_, _| positive());
    let mut h = DenseMatrix::from_fn(parts, v.cols(), |_, _| positive());

    let mut trace = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        update(v, &mut w, &mut h, sparsity);
        let obj = objective(v, &w, &h, sparsity);
        if !obj.is_finite() {
            return Err(Error::Numeric(format!(
                "factorization objective became non-finite after {} iterations",
                trace.len() + 1
            )));
        }
        trace.push(obj);
    }
    Ok(NmfRun {
        w,
        h,
        objective_trace: trace,
        seed,
        sparsity,
    })
}

/// Mean over column pairs of `1 − cos(w_a, w_b)`; 0 for a single column.
pub fn disjointness(w: &DenseMatrix) -> f64 {
    let cols: Vec<Vec<f64>> = (0..w.cols()).map(|k| w.col_values(k)).collect();
    let norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..cols.len() {
        for b in a + 1..cols.len() {
            let dot: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
            total += 1.0 - dot / (norms[a] * norms[b]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

fn has_zero_column(w: &DenseMatrix) -> bool {
    (0..w.cols()).any(|k| w.col_values(k).iter().all(|&x| x <= CLAMP_FLOOR))
}

/// Picks the run with the most disjoint basis columns (earliest run on
/// ties) and scales each of its columns to peak at 1.
pub fn select_local_weights(runs: &[NmfRun]) -> Result<LocalWeights> {
    ensure!(!runs.is_empty(), "no factorization runs to select from");
    let shape = runs[0].w.shape();
    ensure!(
        runs.iter().all(|r| r.w.shape() == shape),
        "factorization runs disagree in shape"
    );
    let mut best: Option<(f64, &NmfRun)> = None;
    for run in runs {
        if has_zero_column(&run.w) {
            log::warn!("factorization run with seed {} has an empty part; skipped", run.seed);
            continue;
        }
        let score = disjointness(&run.w);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, run));
        }
    }
    let Some((_, run)) = best else {
        return Err(Error::Numeric("every factorization run has an empty part".into()));
    };

    let mut weights = run.w.clone();
    for k in 0..weights.cols() {
        let max = weights.col_values(k).into_iter().fold(0.0, f64::max);
        for r in 0..weights.rows() {
            weights.set(r, k, weights.get(r, k) / max);
        }
    }
    Ok(LocalWeights {
        weights,
        seed: run.seed,
        sparsity: run.sparsity,
        iterations: run.objective_trace.len(),
        objective: run.final_objective(),
    })
}

/// Embeds `mesh` positions, runs `restarts` factorizations with seeds
/// `seed, seed + 1, …` and selects among them.
pub fn compute_local_weights(
    mesh: &Mesh,
    parts: usize,
    sparsity: f64,
    restarts: usize,
    iterations: usize,
    seed: u64,
) -> Result<LocalWeights> {
    ensure!(restarts >= 1, "need at least one restart");
    let v = nonneg_embed(&mesh.vertex_matrix())?;
    let runs = (0..restarts as u64)
        .map(|r| sparse_nmf(&v, parts, sparsity, iterations, seed.wrapping_add(r)))
        .collect::<Result<Vec<_>>>()?;
    select_local_weights(&runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::{prop_assert, prop_assert_eq, proptest};

    fn random_nonneg(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen::<f64>())
    }

    fn run_with(w: DenseMatrix, seed: u64) -> NmfRun {
        NmfRun {
            h: DenseMatrix::filled(w.cols(), 3, 1.0),
            w,
            objective_trace: vec![1.0],
            seed,
            sparsity: 0.0,
        }
    }

    #[test]
    fn embed_maps_column_to_unit_interval() {
        let v = DenseMatrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.5]]).unwrap();
        let e = nonneg_embed(&v).unwrap();
        assert_eq!(e.col_values(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(e.col_values(1), vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn embed_constant_column_is_zero() {
        let v = DenseMatrix::from_fn(4, 1, |_, _| 3.0);
        assert_eq!(nonneg_embed(&v).unwrap(), DenseMatrix::zeros(4, 1));
    }

    proptest! {
        #[test]
        fn embed_spans_unit_interval(seed in 0u64..1000, rows in 1usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = DenseMatrix::from_fn(rows, 3, |_, _| rng.gen_range(-5.0..5.0));
            let e = nonneg_embed(&v).unwrap();
            for c in 0..3 {
                let col = e.col_values(c);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(lo, 0.0);
                prop_assert!(hi == 1.0 || col.iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn rank_one_is_recovered() {
        let w = random_nonneg(30, 1, 1);
        let h = random_nonneg(1, 3, 2);
        let v = w.matmul(&h);
        let run = sparse_nmf(&v, 1, 0.0, 500, 9).unwrap();
        let err = v.sub(&run.w.matmul(&run.h)).frobenius_norm() / v.frobenius_norm();
        assert!(err <= 1e-3, "relative error {err}");
    }

    #[test]
    fn zero_sparsity_objective_is_plain_fit() {
        let v = random_nonneg(10, 3, 3);
        let run = sparse_nmf(&v, 2, 0.0, 20, 4).unwrap();
        let fit: f64 = v.sub(&run.w.matmul(&run.h)).values().iter().map(|x| x * x).sum();
        assert!((run.final_objective() - fit).abs() <= 1e-12 * fit.max(1.0));
    }

    #[test]
    fn updates_keep_factors_nonnegative_and_objective_monotone() {
        for seed in 0..20 {
            let v = random_nonneg(25, 3, 100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w = DenseMatrix::from_fn(25, 3, |_, _| 1.0 - rng.gen::<f64>());
            let mut h = DenseMatrix::from_fn(3, 3, |_, _| 1.0 - rng.gen::<f64>());
            let mut prev = objective(&v, &w, &h, 7.5);
            for _ in 0..200 {
                update(&v, &mut w, &mut h, 7.5);
                assert!(w.values().iter().chain(h.values()).all(|&x| x >= 0.0));
                let obj = objective(&v, &w, &h, 7.5);
                assert!(obj <= prev + 1e-10, "seed {seed}: {obj} > {prev}");
                prev = obj;
            }
        }
    }

    #[test]
    fn deterministic() {
        let v = random_nonneg(12, 3, 5);
        assert_eq!(
            sparse_nmf(&v, 3, 7.5, 50, 8).unwrap(),
            sparse_nmf(&v, 3, 7.5, 50, 8).unwrap()
        );
    }

    #[test]
    fn invalid_inputs_rejected() {
        let mut v = random_nonneg(5, 3, 6);
        assert!(sparse_nmf(&v, 0, 0.0, 10, 0).is_err());
        assert!(sparse_nmf(&v, 2, -1.0, 10, 0).is_err());
        assert!(sparse_nmf(&v, 2, 0.0, 0, 0).is_err());
        v.set(0, 0, -0.1);
        assert!(sparse_nmf(&v, 2, 0.0, 10, 0).is_err());
    }

    #[test]
    fn single_run_is_selected_and_normalized() {
        let lw = select_local_weights(&[run_with(random_nonneg(8, 2, 7), 3)]).unwrap();
        assert_eq!(lw.seed, 3);
        for k in 0..2 {
            assert_eq!(lw.weights.col_values(k).into_iter().fold(0.0, f64::max), 1.0);
        }
        lw.validate().unwrap();
    }

    #[test]
    fn orthogonal_columns_beat_identical_ones() {
        let identical = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let orthogonal = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let lw = select_local_weights(&[run_with(identical, 1), run_with(orthogonal, 2)]).unwrap();
        assert_eq!(lw.seed, 2);
    }

    #[test]
    fn empty_part_runs_are_excluded() {
        let dead = DenseMatrix::from_rows(&[vec![1.0, CLAMP_FLOOR], vec![0.5, CLAMP_FLOOR]]).unwrap();
        let ok = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.5, 0.6]]).unwrap();
        assert_eq!(
            select_local_weights(&[run_with(dead.clone(), 1), run_with(ok, 2)])
                .unwrap()
                .seed,
            2
        );
        assert!(select_local_weights(&[run_with(dead, 1)]).is_err());
    }

    #[test]
    fn selection_matches_brute_force_score() {
        let v = random_nonneg(20, 3, 11);
        let runs: Vec<_> = (0..5).map(|s| sparse_nmf(&v, 4, 7.5, 100, s).unwrap()).collect();
        let score = |w: &DenseMatrix| {
            let mut total = 0.0;
            let mut n = 0.0;
            for a in 0..w.cols() {
                for b in 0..w.cols() {
                    if a < b {
                        let (x, y) = (w.col_values(a), w.col_values(b));
                        let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
                        let nx = x.iter().map(|p| p * p).sum::<f64>().sqrt();
                        let ny = y.iter().map(|p| p * p).sum::<f64>().sqrt();
                        total += 1.0 - dot / (nx * ny);
                        n += 1.0;
                    }
                }
            }
            total / n
        };
        let mut best = 0;
        for i in 1..runs.len() {
            if score(&runs[i].w) > score(&runs[best].w) {
                best = i;
            }
        }
        assert_eq!(select_local_weights(&runs).unwrap().seed, runs[best].seed);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let lw = LocalWeights::uniform(3, 2);
        assert_eq!(lw.to_csv(), "part_0,part_1\n1,1\n1,1\n1,1\n");
    }
}
