//! Randomized subspace embeddings.
//!
//! An embedding is a short, fat map S (s-by-n, s much smaller than n) that
//! approximately preserves the norm of every vector in a fixed d-dimensional
//! subspace: (1 - eps)||x|| <= ||S x|| <= (1 + eps)||x||. Two families are
//! provided: a subsampled randomized trigonometric transform (random signs,
//! orthonormal DCT-II, random row restriction) and a sparse sign map with a
//! fixed number of nonzeros per column. Construction is fully determined by
//! `(kind, n, s, seed)`.

mod dct;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::kernels::{norm2, solve_upper_transposed, DenseMatrix, KernelError};
use dct::Dct2;

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("embedding dimension {s} must lie in 1..={n}")]
    InvalidDimensions { n: usize, s: usize },
    #[error("column sparsity {zeta} exceeds embedding dimension {s}")]
    SparsityTooLarge { zeta: usize, s: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Family of randomized embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbeddingKind {
    /// Signs, orthonormal trigonometric transform, row subsampling.
    Trig,
    /// Fixed count of random signs per column.
    Sparse,
}

/// Default number of nonzeros per column for the sparse map targeting a
/// subspace of dimension `d`: ceil(2 ln(1 + d)).
pub fn sparsity_level(d: usize) -> usize {
    (2.0 * (1.0 + d as f64).ln()).ceil() as usize
}

#[derive(Clone, Debug)]
enum Detail {
    Trig {
        /// Random +-1 per input coordinate.
        signs: Vec<f64>,
        /// The s transform rows kept.
        rows: Vec<usize>,
        dct: Dct2,
    },
    Sparse {
        zeta: usize,
        /// Row indices, zeta consecutive entries per input column.
        rows: Vec<usize>,
        /// Matching +-1 signs.
        signs: Vec<f64>,
    },
}

/// A realized s-by-n subspace embedding.
#[derive(Clone, Debug)]
pub struct Embedding {
    kind: EmbeddingKind,
    n: usize,
    s: usize,
    seed: u64,
    scale: f64,
    detail: Detail,
}

impl Embedding {
    /// Draw an embedding from `(kind, n, s, seed)`. The sparse family picks
    /// its per-column sparsity from the implied subspace dimension `s / 2`.
    pub fn new(kind: EmbeddingKind, n: usize, s: usize, seed: u64) -> Result<Self, SketchError> {
        match kind {
            EmbeddingKind::Trig => Self::new_trig(n, s, seed, false),
            EmbeddingKind::Sparse => {
                let zeta = sparsity_level(s / 2).clamp(1, s.max(1));
                Self::sparse_with_sparsity(n, s, zeta, seed)
            }
        }
    }

    /// Sparse sign embedding with an explicit per-column sparsity.
    pub fn sparse_with_sparsity(
        n: usize,
        s: usize,
        zeta: usize,
        seed: u64,
    ) -> Result<Self, SketchError> {
        if s == 0 || s > n {
            return Err(SketchError::InvalidDimensions { n, s });
        }
        if zeta == 0 || zeta > s {
            return Err(SketchError::SparsityTooLarge { zeta, s });
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n * zeta);
        let mut signs = Vec::with_capacity(n * zeta);
        let mut pool: Vec<usize> = (0..s).collect();
        for _ in 0..n {
            // Partial Fisher-Yates: zeta distinct rows for this column.
            for k in 0..zeta {
                let pick = rng.gen_range(k..s);
                pool.swap(k, pick);
                rows.push(pool[k]);
                signs.push(if rng.gen::<bool>() { 1.0 } else { -1.0 });
            }
        }
        Ok(Embedding {
            kind: EmbeddingKind::Sparse,
            n,
            s,
            seed,
            scale: 1.0 / (zeta as f64).sqrt(),
            detail: Detail::Sparse { zeta, rows, signs },
        })
    }

    fn new_trig(n: usize, s: usize, seed: u64, unit_signs: bool) -> Result<Self, SketchError> {
        if s == 0 || s > n {
            return Err(SketchError::InvalidDimensions { n, s });
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let signs: Vec<f64> = (0..n)
            .map(|_| {
                let flip = rng.gen::<bool>();
                if unit_signs || flip {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        // Sample s distinct transform rows without replacement.
        let mut pool: Vec<usize> = (0..n).collect();
        let mut rows = Vec::with_capacity(s);
        for k in 0..s {
            let pick = rng.gen_range(k..n);
            pool.swap(k, pick);
            rows.push(pool[k]);
        }
        Ok(Embedding {
            kind: EmbeddingKind::Trig,
            n,
            s,
            seed,
            scale: (n as f64 / s as f64).sqrt(),
            detail: Detail::Trig {
                signs,
                rows,
                dct: Dct2::new(n),
            },
        })
    }

    /// Trig embedding with all sign flips suppressed (test hook).
    #[cfg(test)]
    fn trig_unit_signs(n: usize, s: usize, seed: u64) -> Result<Self, SketchError> {
        Self::new_trig(n, s, seed, true)
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Per-column sparsity (sparse family only).
    pub fn zeta(&self) -> Option<usize> {
        match &self.detail {
            Detail::Sparse { zeta, .. } => Some(*zeta),
            Detail::Trig { .. } => None,
        }
    }

    /// Apply to a single vector: `S x`.
    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>, SketchError> {
        if x.len() != self.n {
            return Err(SketchError::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.s];
        match &self.detail {
            Detail::Trig { signs, rows, dct } => {
                let mut dct = dct.clone();
                let flipped: Vec<f64> = x.iter().zip(signs).map(|(a, b)| a * b).collect();
                let mut full = vec![0.0; self.n];
                dct.transform(&flipped, &mut full);
                for (o, &r) in out.iter_mut().zip(rows) {
                    *o = self.scale * full[r];
                }
            }
            Detail::Sparse { zeta, rows, signs } => {
                for (j, &xj) in x.iter().enumerate() {
                    if xj == 0.0 {
                        continue;
                    }
                    let base = j * zeta;
                    for k in 0..*zeta {
                        out[rows[base + k]] += signs[base + k] * xj;
                    }
                }
                for o in &mut out {
                    *o *= self.scale;
                }
            }
        }
        Ok(out)
    }

    /// Apply to every column of a matrix: `S M`.
    pub fn apply_mat(&self, m: &DenseMatrix) -> Result<DenseMatrix, SketchError> {
        if m.nrows() != self.n {
            return Err(SketchError::DimensionMismatch {
                expected: self.n,
                got: m.nrows(),
            });
        }
        let mut out = DenseMatrix::zeros(self.s, m.ncols());
        match &self.detail {
            Detail::Trig { signs, rows, dct } => {
                // One reusable plan across all columns.
                let mut dct = dct.clone();
                let mut flipped = vec![0.0; self.n];
                let mut full = vec![0.0; self.n];
                for j in 0..m.ncols() {
                    for ((f, x), sg) in flipped.iter_mut().zip(m.col(j)).zip(signs) {
                        *f = x * sg;
                    }
                    dct.transform(&flipped, &mut full);
                    let oc = out.col_mut(j);
                    for (o, &r) in oc.iter_mut().zip(rows) {
                        *o = self.scale * full[r];
                    }
                }
            }
            Detail::Sparse { .. } => {
                for j in 0..m.ncols() {
                    let col = self.apply_vec(m.col(j))?;
                    out.col_mut(j).copy_from_slice(&col);
                }
            }
        }
        Ok(out)
    }

    /// Materialize row `i` of the embedding as a length-n vector. Used when
    /// a sketch must act on the rows of an operator via transposed products.
    pub fn row(&self, i: usize) -> Vec<f64> {
        assert!(i < self.s);
        let mut out = vec![0.0; self.n];
        match &self.detail {
            Detail::Trig { signs, rows, .. } => {
                let r = rows[i] as f64;
                let n = self.n as f64;
                let w = if rows[i] == 0 {
                    (1.0 / n).sqrt()
                } else {
                    (2.0 / n).sqrt()
                };
                for (t, o) in out.iter_mut().enumerate() {
                    let angle =
                        std::f64::consts::PI * r * (2.0 * t as f64 + 1.0) / (2.0 * n);
                    *o = self.scale * w * angle.cos() * signs[t];
                }
            }
            Detail::Sparse { zeta, rows, signs } => {
                for j in 0..self.n {
                    let base = j * zeta;
                    for k in 0..*zeta {
                        if rows[base + k] == i {
                            out[j] = self.scale * signs[base + k];
                        }
                    }
                }
            }
        }
        out
    }
}

/// Whiten a basis against the triangular factor of its own sketch:
/// given B and the T from a QR of S B, return `B T^{-1}`, whose condition
/// number is bounded by (1 + eps) / (1 - eps) for a distortion-eps embedding.
pub fn whiten(b: &DenseMatrix, t: &DenseMatrix) -> Result<DenseMatrix, SketchError> {
    let d = b.ncols();
    if t.nrows() != d || t.ncols() != d {
        return Err(SketchError::DimensionMismatch {
            expected: d,
            got: t.nrows(),
        });
    }
    let n = b.nrows();
    let mut out = DenseMatrix::zeros(n, d);
    let mut row = vec![0.0; d];
    for i in 0..n {
        for (j, r) in row.iter_mut().enumerate() {
            *r = b.get(i, j);
        }
        // Row i of B T^{-1} solves T^T x = (row i of B).
        let x = solve_upper_transposed(t, &row)?;
        for (j, v) in x.iter().enumerate() {
            out.set(i, j, *v);
        }
    }
    Ok(out)
}

/// Monte-Carlo estimate of the distortion of `emb` on the span of `b`:
/// max over random unit coefficient vectors y of | ||S B y|| / ||B y|| - 1 |.
pub fn empirical_distortion(
    emb: &Embedding,
    b: &DenseMatrix,
    trials: usize,
    seed: u64,
) -> Result<f64, SketchError> {
    let sb = emb.apply_mat(b)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let d = b.ncols();
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let mut y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let ny = norm2(&y);
        if ny == 0.0 {
            continue;
        }
        for v in &mut y {
            *v /= ny;
        }
        let den = norm2(&b.matvec(&y)?);
        if den == 0.0 {
            continue;
        }
        let num = norm2(&sb.matvec(&y)?);
        worst = worst.max((num / den - 1.0).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{cond_estimate, householder_qr, singular_values};
    use crate::testing::{seeded_orthonormal, seeded_vector};

    #[test]
    fn sparsity_level_examples() {
        assert_eq!(sparsity_level(100), 10);
        assert!(sparsity_level(1) >= 2);
    }

    #[test]
    fn full_trig_selection_is_permutation() {
        let emb = Embedding::new(EmbeddingKind::Trig, 8, 8, 7).unwrap();
        match &emb.detail {
            Detail::Trig { rows, .. } => {
                let mut sorted = rows.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..8).collect::<Vec<_>>());
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn trig_with_unit_signs_preserves_norm_at_full_dimension() {
        let n = 64;
        let emb = Embedding::trig_unit_signs(n, n, 3).unwrap();
        let x = seeded_vector(n, 5);
        let y = emb.apply_vec(&x).unwrap();
        let nx = norm2(&x);
        assert!((norm2(&y) - nx).abs() < 1e-13 * nx);
    }

    #[test]
    fn sparse_columns_have_exact_sparsity() {
        let emb = Embedding::sparse_with_sparsity(40, 12, 5, 1).unwrap();
        for j in 0..40 {
            let mut e = vec![0.0; 40];
            e[j] = 1.0;
            let col = emb.apply_vec(&e).unwrap();
            let nz: Vec<f64> = col.iter().copied().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), 5, "column {j}");
            for v in nz {
                assert!((v.abs() - 1.0 / 5.0_f64.sqrt()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn default_sparse_sparsity_follows_embedding_dimension() {
        // s = 2d + 1 with d = 100 implies zeta = ceil(2 ln 101) = 10.
        let emb = Embedding::new(EmbeddingKind::Sparse, 4096, 201, 0).unwrap();
        assert_eq!(emb.zeta(), Some(10));
    }

    #[test]
    fn distortion_on_orthonormal_basis_is_bounded() {
        let b = seeded_orthonormal(1024, 16, 10);
        for (kind, seed) in [(EmbeddingKind::Trig, 11), (EmbeddingKind::Sparse, 12)] {
            let emb = Embedding::new(kind, 1024, 32, seed).unwrap();
            let eps = empirical_distortion(&emb, &b, 200, 99).unwrap();
            assert!(eps <= 0.75, "{kind:?}: distortion {eps}");
        }
    }

    #[test]
    fn whitening_flattens_ill_conditioned_basis() {
        // B = [e1, e1 + 1e-8 e2] has condition number ~2e8.
        let n = 100;
        let mut b = DenseMatrix::zeros(n, 2);
        b.set(0, 0, 1.0);
        b.set(0, 1, 1.0);
        b.set(1, 1, 1e-8);
        for (kind, seed) in [(EmbeddingKind::Trig, 2), (EmbeddingKind::Sparse, 3)] {
            let emb = Embedding::new(kind, n, 20, seed).unwrap();
            let sb = emb.apply_mat(&b).unwrap();
            let qr = householder_qr(&sb).unwrap();
            let white = whiten(&b, &qr.t).unwrap();
            let sv = singular_values(&white);
            let kappa = sv[0] / sv[sv.len() - 1];
            assert!(kappa <= 6.0, "{kind:?}: whitened condition {kappa}");
        }
    }

    #[test]
    fn sketched_condition_tracks_basis_condition() {
        // Ill-conditioned B via planted singular values 1 .. 1e-6.
        let n = 400;
        let d = 8;
        let u = seeded_orthonormal(n, d, 21);
        let mut b = DenseMatrix::zeros(n, d);
        for k in 0..d {
            let sv = 10f64.powf(-(k as f64) * 6.0 / (d - 1) as f64);
            for i in 0..n {
                b.set(i, k, b.get(i, k) + u.get(i, k) * sv);
            }
        }
        let kappa_b = {
            let sv = singular_values(&b);
            sv[0] / sv[d - 1]
        };
        let emb = Embedding::new(EmbeddingKind::Trig, n, 2 * d, 4).unwrap();
        let sb = emb.apply_mat(&b).unwrap();
        let kappa_t = cond_estimate(&householder_qr(&sb).unwrap().t);
        // Distortion at s = 2d is below 1/sqrt(2); use the eps = 0.75 budget.
        let factor = (1.0 + 0.75) / (1.0 - 0.75);
        assert!(kappa_t <= factor * kappa_b, "{kappa_t} vs {kappa_b}");
        assert!(kappa_t >= kappa_b / factor, "{kappa_t} vs {kappa_b}");
    }

    #[test]
    fn construction_is_deterministic() {
        for kind in [EmbeddingKind::Trig, EmbeddingKind::Sparse] {
            let a = Embedding::new(kind, 300, 40, 5).unwrap();
            let b = Embedding::new(kind, 300, 40, 5).unwrap();
            let x = seeded_vector(300, 8);
            let ya = a.apply_vec(&x).unwrap();
            let yb = b.apply_vec(&x).unwrap();
            assert_eq!(ya, yb, "{kind:?} not reproducible");
            let c = Embedding::new(kind, 300, 40, 6).unwrap();
            assert_ne!(ya, c.apply_vec(&x).unwrap());
        }
    }

    #[test]
    fn materialized_rows_match_application() {
        for kind in [EmbeddingKind::Trig, EmbeddingKind::Sparse] {
            let emb = Embedding::new(kind, 50, 9, 13).unwrap();
            let x = seeded_vector(50, 14);
            let y = emb.apply_vec(&x).unwrap();
            for i in 0..9 {
                let row = emb.row(i);
                let dot: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
                assert!((dot - y[i]).abs() < 1e-12, "{kind:?} row {i}");
            }
        }
    }

    #[test]
    fn dimension_validation() {
        assert!(Embedding::new(EmbeddingKind::Trig, 10, 11, 0).is_err());
        assert!(Embedding::new(EmbeddingKind::Sparse, 10, 0, 0).is_err());
        assert!(Embedding::sparse_with_sparsity(10, 4, 5, 0).is_err());
        let emb = Embedding::new(EmbeddingKind::Trig, 10, 4, 0).unwrap();
        assert!(emb.apply_vec(&[0.0; 9]).is_err());
    }
}
