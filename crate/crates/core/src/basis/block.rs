//! Block Krylov basis construction.
//!
//! Starting from a block of vectors, these constructions alternate
//! operator applications with (partial) orthogonalisation.  For the
//! orthogonalising variants the operator products come for free: the raw
//! image `A * B_j` is exactly the input of the next block's QR step, so it
//! is recorded as the `A B` block before being orthogonalised.  The
//! Chebyshev variant instead runs an independent scalar recurrence per
//! starting column.

use std::collections::VecDeque;

use super::{BasisError, BasisMethod, BasisStepper, KrylovBasis, ResolvedBasis, SpectralBox};
use super::BREAKDOWN_TOL;
use crate::kernels::{axpy, dot, householder_qr, norm2, DenseMatrix};
use crate::operators::LinearOperator;

/// Block construction strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockVariant {
    /// Orthonormalise within each block only; successive blocks are raw
    /// operator images.
    MonomialOrth,
    /// Additionally orthogonalise each new block against the previous `k`
    /// blocks.
    PartialOrth { k: usize },
    /// Independent Chebyshev recurrence per starting column with
    /// column-wise normalisation; no orthogonalisation at all.
    Chebyshev { spectral_box: SpectralBox },
}

/// Build a block Krylov basis of `depth` blocks from the starting block
/// `omega` (one column per block vector).  Columns are grouped block by
/// block.  A rank-deficient block is truncated to its numerical rank and
/// construction stops there with the breakdown flag set.
pub fn block_basis<A: LinearOperator + ?Sized>(
    op: &A,
    omega: &DenseMatrix,
    depth: usize,
    variant: BlockVariant,
) -> Result<KrylovBasis, BasisError> {
    if op.nrows() != op.ncols() {
        return Err(BasisError::DimensionMismatch {
            expected: op.nrows(),
            got: op.ncols(),
        });
    }
    if omega.nrows() != op.ncols() {
        return Err(BasisError::DimensionMismatch {
            expected: op.ncols(),
            got: omega.nrows(),
        });
    }
    if omega.ncols() == 0 || depth == 0 {
        return Err(BasisError::InvalidParameter(
            "block basis needs at least one starting column and one block".into(),
        ));
    }
    if !omega.is_finite() {
        return Err(BasisError::InvalidParameter(
            "starting block contains non-finite entries".into(),
        ));
    }
    let method = BasisMethod::Block(variant.clone());
    let block_size = omega.ncols();
    let mut basis = match variant {
        BlockVariant::MonomialOrth => orthogonalising_blocks(op, omega, depth, 0),
        BlockVariant::PartialOrth { k } => {
            if k == 0 {
                return Err(BasisError::InvalidParameter(
                    "partial orthogonalisation depth k must be at least 1".into(),
                ));
            }
            orthogonalising_blocks(op, omega, depth, k)
        }
        BlockVariant::Chebyshev { spectral_box } => {
            chebyshev_blocks(op, omega, depth, spectral_box)
        }
    }?;
    basis.method = method;
    basis.block_size = block_size;
    Ok(basis)
}

/// Shared driver for the orthogonalising variants; `k = 0` means no
/// inter-block orthogonalisation.
fn orthogonalising_blocks<A: LinearOperator + ?Sized>(
    op: &A,
    omega: &DenseMatrix,
    depth: usize,
    k: usize,
) -> Result<KrylovBasis, BasisError> {
    let n = omega.nrows();
    let mut b = DenseMatrix::zeros(n, 0);
    let mut ab = DenseMatrix::zeros(n, 0);
    let mut recent: VecDeque<DenseMatrix> = VecDeque::new();

    let (first, first_deficient) = orthonormal_block(omega)?;
    if first.ncols() == 0 {
        return Err(BasisError::ZeroStart);
    }
    let mut breakdown = first_deficient;
    let mut cur = first;
    let mut blocks_done = 0;
    loop {
        for j in 0..cur.ncols() {
            b.push_column(cur.col(j))?;
        }
        let image = apply_block(op, &cur);
        for j in 0..image.ncols() {
            ab.push_column(image.col(j))?;
        }
        blocks_done += 1;
        if blocks_done == depth || breakdown {
            break;
        }
        let mut w = image;
        if k > 0 {
            recent.push_back(cur);
            while recent.len() > k {
                recent.pop_front();
            }
            project_against(&mut w, &recent);
        }
        let (next, deficient) = orthonormal_block(&w)?;
        if deficient {
            breakdown = true;
        }
        if next.ncols() == 0 {
            break;
        }
        cur = next;
    }
    KrylovBasis::from_parts(b, ab, BasisMethod::Monomial, 1, breakdown)
}

/// Run an independent Chebyshev stream per starting column and interleave
/// the emitted columns block by block.
fn chebyshev_blocks<A: LinearOperator + ?Sized>(
    op: &A,
    omega: &DenseMatrix,
    depth: usize,
    spectral_box: SpectralBox,
) -> Result<KrylovBasis, BasisError> {
    let n = omega.nrows();
    let mut steppers: Vec<BasisStepper<A>> = Vec::with_capacity(omega.ncols());
    for c in 0..omega.ncols() {
        steppers.push(BasisStepper::new(
            op,
            omega.col(c),
            ResolvedBasis::Chebyshev { spectral_box },
            depth,
        )?);
    }
    let mut b = DenseMatrix::zeros(n, 0);
    let mut ab = DenseMatrix::zeros(n, 0);
    let mut breakdown = false;
    'outer: for _ in 0..depth {
        let mut block_cols: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(steppers.len());
        for stepper in steppers.iter_mut() {
            match stepper.next_column()? {
                Some(pair) => block_cols.push(pair),
                None => {
                    // One stream ended early: drop the incomplete block.
                    breakdown = true;
                    break 'outer;
                }
            }
        }
        for (col, acol) in &block_cols {
            b.push_column(col)?;
            ab.push_column(acol)?;
        }
    }
    KrylovBasis::from_parts(b, ab, BasisMethod::Monomial, 1, breakdown)
}

fn apply_block<A: LinearOperator + ?Sized>(op: &A, m: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.nrows(), 0);
    for j in 0..m.ncols() {
        out.push_column(&op.apply_vec(m.col(j)))
            .expect("image column length matches the block");
    }
    out
}

/// Two classical Gram-Schmidt passes of every column of `w` against the
/// orthonormal columns of the given blocks.
fn project_against(w: &mut DenseMatrix, blocks: &VecDeque<DenseMatrix>) {
    for j in 0..w.ncols() {
        let col = w.col_mut(j);
        for _ in 0..2 {
            for block in blocks {
                for q in 0..block.ncols() {
                    let qcol = block.col(q);
                    let c = dot(qcol, col);
                    axpy(-c, qcol, col);
                }
            }
        }
    }
}

/// Orthonormalise the columns of `w`, truncating at the first column whose
/// QR diagonal collapses relative to the column's own norm.  Returns the
/// kept columns and whether truncation happened.
fn orthonormal_block(w: &DenseMatrix) -> Result<(DenseMatrix, bool), BasisError> {
    let norms: Vec<f64> = (0..w.ncols()).map(|j| norm2(w.col(j))).collect();
    let qr = householder_qr(w)?;
    let mut rank = w.ncols();
    for q in 0..w.ncols() {
        if qr.t.get(q, q) <= BREAKDOWN_TOL * norms[q].max(f64::MIN_POSITIVE) {
            rank = q;
            break;
        }
    }
    if rank == w.ncols() {
        Ok((qr.u, false))
    } else {
        Ok((qr.u.leading_columns(rank), true))
    }
}
