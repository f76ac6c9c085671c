//! M-matrix predicates, Schur complements, and the block Cholesky
//! factorization A = C·D·Cᵀ with C unit block-lower-triangular and D block
//! diagonal.
//!
//! Everything here is dense: the target scale is desk-size grids where dense
//! block algebra is simple and exactly testable. The block order is part of
//! the semantics (it encodes the attachment hierarchy), so no pivoting is
//! performed.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::DEFAULT_EPSILON;

/// Entries with magnitude at or below this floor are treated as zero in sign
/// and sparsity-pattern checks.
pub const SIGN_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("block sizes must be positive (block {block} has size 0)")]
    EmptyBlock { block: usize },
    #[error("block sizes sum to {total}, expected {expected}")]
    StructureMismatch { total: usize, expected: usize },
    #[error("matrix is not symmetric: |a[{row},{col}] - a[{col},{row}]| = {diff:e}")]
    NotSymmetric { row: usize, col: usize, diff: f64 },
    #[error("diagonal block {block} is singular or not positive definite")]
    SingularDiagonalBlock { block: usize },
    #[error("leading principal block is singular")]
    SingularLeadingBlock,
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("duplicate index {index} in block selection")]
    DuplicateIndex { index: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Sizes of the contiguous diagonal blocks of a partitioned square matrix.
///
/// An empty structure is the (valid) partition of the 0x0 matrix. All block
/// sizes are strictly positive otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockStructure {
    sizes: Vec<usize>,
}

impl BlockStructure {
    pub fn new(sizes: Vec<usize>) -> Result<Self, LinalgError> {
        for (block, &size) in sizes.iter().enumerate() {
            if size == 0 {
                return Err(LinalgError::EmptyBlock { block });
            }
        }
        Ok(Self { sizes })
    }

    /// The finest partition: every block has size one.
    pub fn scalar(n: usize) -> Self {
        Self { sizes: vec![1; n] }
    }

    /// A single block spanning the whole matrix.
    pub fn single(n: usize) -> Self {
        if n == 0 {
            Self { sizes: Vec::new() }
        } else {
            Self { sizes: vec![n] }
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn block_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Row range covered by the given block.
    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        let start: usize = self.sizes[..block].iter().sum();
        start..start + self.sizes[block]
    }

    /// The structure restricted to the first `blocks` blocks.
    pub fn leading(&self, blocks: usize) -> Self {
        Self {
            sizes: self.sizes[..blocks].to_vec(),
        }
    }
}

/// Why a matrix failed the invertible M-matrix test.
#[derive(Debug, Clone, PartialEq)]
pub enum MMatrixViolation {
    PositiveOffDiagonal { row: usize, col: usize, value: f64 },
    WeakDominanceFails { row: usize, deficit: f64 },
    NoDominantRowReachable { row: usize },
}

/// Outcome of [`is_invertible_m_matrix`], carrying a witness row on failure.
#[derive(Debug, Clone)]
pub struct MMatrixCheck {
    pub holds: bool,
    pub violation: Option<MMatrixViolation>,
}

impl MMatrixCheck {
    fn pass() -> Self {
        Self {
            holds: true,
            violation: None,
        }
    }

    fn fail(violation: MMatrixViolation) -> Self {
        Self {
            holds: false,
            violation: Some(violation),
        }
    }
}

/// Tests whether `a` is an invertible M-matrix, via weakly chained diagonal
/// dominance: all off-diagonal entries are nonpositive, every row is weakly
/// diagonally dominant, and every row reaches a strictly dominant row through
/// the nonzero pattern.
///
/// This route is sufficient (not necessary) for the M-matrix property, and it
/// is exactly the condition that holds for the load block of a grid in which
/// every load is path-connected to a source. Strict dominance is tested with
/// the absolute margin `epsilon`.
pub fn is_invertible_m_matrix_with(a: &DMatrix<f64>, epsilon: f64) -> MMatrixCheck {
    assert!(a.is_square(), "M-matrix test requires a square matrix");
    let n = a.nrows();

    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] > SIGN_FLOOR {
                return MMatrixCheck::fail(MMatrixViolation::PositiveOffDiagonal {
                    row: i,
                    col: j,
                    value: a[(i, j)],
                });
            }
        }
    }

    // Row surpluses a_ii - sum_{j != i} |a_ij|; weak dominance allows a tiny
    // negative slack to absorb assembly roundoff.
    let mut surplus = vec![0.0f64; n];
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if i != j {
                off += a[(i, j)].abs();
            }
        }
        surplus[i] = a[(i, i)] - off;
        if surplus[i] < -SIGN_FLOOR {
            return MMatrixCheck::fail(MMatrixViolation::WeakDominanceFails {
                row: i,
                deficit: -surplus[i],
            });
        }
    }

    // Breadth-first search backwards from the strictly dominant rows over the
    // nonzero pattern: row i is chained if a_ij != 0 for some chained row j.
    let mut chained: Vec<bool> = surplus.iter().map(|&s| s > epsilon).collect();
    let mut queue: Vec<usize> = (0..n).filter(|&i| chained[i]).collect();
    while let Some(j) = queue.pop() {
        for i in 0..n {
            if !chained[i] && a[(i, j)].abs() > SIGN_FLOOR {
                chained[i] = true;
                queue.push(i);
            }
        }
    }
    match (0..n).find(|&i| !chained[i]) {
        None => MMatrixCheck::pass(),
        Some(row) => MMatrixCheck::fail(MMatrixViolation::NoDominantRowReachable { row }),
    }
}

/// [`is_invertible_m_matrix_with`] at the default strictness margin.
pub fn is_invertible_m_matrix(a: &DMatrix<f64>) -> MMatrixCheck {
    is_invertible_m_matrix_with(a, DEFAULT_EPSILON)
}

/// Tests whether `a` is order-preserving: `a >= 0` elementwise and `a·1 > 0`
/// elementwise. Multiplication by such a matrix preserves strict vector
/// inequalities.
pub fn is_order_preserving(a: &DMatrix<f64>) -> bool {
    is_order_preserving_with(a, DEFAULT_EPSILON)
}

pub fn is_order_preserving_with(a: &DMatrix<f64>, epsilon: f64) -> bool {
    if a.iter().any(|&x| x < -SIGN_FLOOR) {
        return false;
    }
    (0..a.nrows()).all(|i| a.row(i).sum() > epsilon)
}

/// Maximum absolute row sum (the operator infinity norm).
pub fn inf_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| a.row(i).iter().map(|x| x.abs()).sum())
        .fold(0.0, f64::max)
}

/// Schur complement of the leading index set in `a`: with the 2x2 block split
/// induced by `leading` (eliminated) versus its complement (kept, in
/// ascending order), returns `a22 - a21·a11⁻¹·a12`.
pub fn schur_complement(a: &DMatrix<f64>, leading: &[usize]) -> Result<DMatrix<f64>, LinalgError> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let mut seen = vec![false; n];
    for &idx in leading {
        if idx >= n {
            return Err(LinalgError::IndexOutOfRange { index: idx, dim: n });
        }
        if seen[idx] {
            return Err(LinalgError::DuplicateIndex { index: idx });
        }
        seen[idx] = true;
    }
    let trailing: Vec<usize> = (0..n).filter(|&i| !seen[i]).collect();

    let a11 = a.select_rows(leading.iter()).select_columns(leading.iter());
    let a12 = a
        .select_rows(leading.iter())
        .select_columns(trailing.iter());
    let a21 = a
        .select_rows(trailing.iter())
        .select_columns(leading.iter());
    let a22 = a
        .select_rows(trailing.iter())
        .select_columns(trailing.iter());

    let lu = a11.lu();
    let x = lu.solve(&a12).ok_or(LinalgError::SingularLeadingBlock)?;
    Ok(a22 - a21 * x)
}

/// The factors of A = C·D·Cᵀ for a block partition of a symmetric matrix.
///
/// C is unit block-lower-triangular and D is block diagonal. C⁻¹ falls out of
/// the same recursion that builds C, so only the diagonal blocks of D are
/// ever inverted (through their per-block symmetric factorizations). When A
/// is an invertible M-matrix, C⁻¹ and D⁻¹ are elementwise nonnegative.
#[derive(Debug, Clone)]
pub struct BlockCholesky {
    structure: BlockStructure,
    c: DMatrix<f64>,
    c_inv: DMatrix<f64>,
    d_blocks: Vec<DMatrix<f64>>,
    d_factors: Vec<Cholesky<f64, Dyn>>,
}

/// Computes the block Cholesky factors of a symmetric positive definite
/// matrix for the given block partition.
///
/// Taking the scalar structure (all blocks of size one) yields the classic
/// LDLᵀ factors. Each diagonal block of D is the coupling of its block after
/// all earlier blocks are eliminated, and is factored symmetrically; a block
/// whose factorization fails is reported by index.
pub fn block_cholesky(
    a: &DMatrix<f64>,
    structure: &BlockStructure,
) -> Result<BlockCholesky, LinalgError> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if structure.total() != n {
        return Err(LinalgError::StructureMismatch {
            total: structure.total(),
            expected: n,
        });
    }
    let scale = inf_norm(a).max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (a[(i, j)] - a[(j, i)]).abs();
            if diff > 1e-9 * scale {
                return Err(LinalgError::NotSymmetric {
                    row: i,
                    col: j,
                    diff,
                });
            }
        }
    }

    let mut c = DMatrix::<f64>::identity(n, n);
    let mut c_inv = DMatrix::<f64>::identity(n, n);
    let mut d_blocks: Vec<DMatrix<f64>> = Vec::with_capacity(structure.block_count());
    let mut d_factors: Vec<Cholesky<f64, Dyn>> = Vec::with_capacity(structure.block_count());

    let mut offset = 0;
    for (block, &size) in structure.sizes().iter().enumerate() {
        let d_block = if block == 0 {
            a.view((0, 0), (size, size)).into_owned()
        } else {
            let alpha = a.view((offset, 0), (size, offset)).into_owned();
            // w = alpha · A_prev⁻¹, via A_prev⁻¹ = C⁻ᵀ D⁻¹ C⁻¹ restricted to
            // the leading blocks already built.
            let mut y = c_inv.view((0, 0), (offset, offset)) * alpha.transpose();
            let mut base = 0;
            for (&bs, factor) in structure.sizes()[..block].iter().zip(&d_factors) {
                let mut rows = y.rows_mut(base, bs);
                let solved = factor.solve(&rows.clone_owned());
                rows.copy_from(&solved);
                base += bs;
            }
            let w = (c_inv.view((0, 0), (offset, offset)).transpose() * y).transpose();

            let c_rows = &w * c.view((0, 0), (offset, offset));
            c.view_mut((offset, 0), (size, offset)).copy_from(&c_rows);
            c_inv
                .view_mut((offset, 0), (size, offset))
                .copy_from(&(-&w));

            a.view((offset, offset), (size, size)).into_owned() - &w * alpha.transpose()
        };
        let factor =
            Cholesky::new(d_block.clone()).ok_or(LinalgError::SingularDiagonalBlock { block })?;
        d_blocks.push(d_block);
        d_factors.push(factor);
        offset += size;
    }

    Ok(BlockCholesky {
        structure: structure.clone(),
        c,
        c_inv,
        d_blocks,
        d_factors,
    })
}

impl BlockCholesky {
    pub fn structure(&self) -> &BlockStructure {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// The unit block-lower-triangular factor.
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    /// The explicit inverse of C, built alongside C by the recursion.
    pub fn c_inv(&self) -> &DMatrix<f64> {
        &self.c_inv
    }

    /// The block diagonal factor, assembled.
    pub fn d(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut d = DMatrix::zeros(n, n);
        for (block, d_block) in self.d_blocks.iter().enumerate() {
            let range = self.structure.range(block);
            d.view_mut(
                (range.start, range.start),
                (d_block.nrows(), d_block.ncols()),
            )
            .copy_from(d_block);
        }
        d
    }

    pub fn d_block(&self, block: usize) -> &DMatrix<f64> {
        &self.d_blocks[block]
    }

    /// Explicit inverse of a diagonal block, materialized for reports and
    /// pattern checks.
    pub fn d_block_inverse(&self, block: usize) -> DMatrix<f64> {
        self.d_factors[block].inverse()
    }

    /// Explicit D⁻¹, assembled from the per-block inverses.
    pub fn d_inv(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut d = DMatrix::zeros(n, n);
        for block in 0..self.structure.block_count() {
            let inv = self.d_block_inverse(block);
            let range = self.structure.range(block);
            d.view_mut((range.start, range.start), (inv.nrows(), inv.ncols()))
                .copy_from(&inv);
        }
        d
    }

    fn check_dim(&self, got: usize) -> Result<(), LinalgError> {
        if got != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// D⁻¹x applied blockwise through the cached factorizations.
    pub fn block_diag_solve(&self, x: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
        self.check_dim(x.len())?;
        let mut out = x.clone();
        for block in 0..self.structure.block_count() {
            let range = self.structure.range(block);
            let mut rows = out.rows_mut(range.start, range.end - range.start);
            let solved = self.d_factors[block].solve(&rows.clone_owned());
            rows.copy_from(&solved);
        }
        Ok(out)
    }

    /// D⁻¹C⁻¹x, the descending-action solve used by the directional
    /// feasibility condition.
    pub fn apply_inverse_factors(&self, x: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
        self.check_dim(x.len())?;
        self.block_diag_solve(&(&self.c_inv * x))
    }

    /// Cᵀx.
    pub fn apply_ct(&self, x: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
        self.check_dim(x.len())?;
        Ok(self.c.transpose() * x)
    }

    /// Full solve A⁻¹x = C⁻ᵀD⁻¹C⁻¹x. No explicit inverse of A is formed.
    pub fn solve(&self, x: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
        let y = self.apply_inverse_factors(x)?;
        Ok(self.c_inv.transpose() * y)
    }

    /// Column-wise [`Self::solve`] for a matrix right-hand side.
    pub fn solve_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
        self.check_dim(m.nrows())?;
        let mut y = &self.c_inv * m;
        for block in 0..self.structure.block_count() {
            let range = self.structure.range(block);
            let mut rows = y.rows_mut(range.start, range.end - range.start);
            let solved = self.d_factors[block].solve(&rows.clone_owned());
            rows.copy_from(&solved);
        }
        Ok(self.c_inv.transpose() * y)
    }

    /// Reassembles C·D·Cᵀ.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.c * self.d() * self.c.transpose()
    }

    /// Extends the factors by one trailing block without touching the
    /// existing ones.
    ///
    /// `w` is the action of the new rows on the factored matrix,
    /// `a_new·A⁻¹`, and `d_new` the new diagonal block of D (the Schur
    /// complement of A in the bordered matrix). The new block row of C is
    /// `w·C` and of C⁻¹ is `-w`.
    pub fn extended(
        &self,
        w: &DMatrix<f64>,
        d_new: DMatrix<f64>,
    ) -> Result<BlockCholesky, LinalgError> {
        let old = self.dim();
        let size = d_new.nrows();
        if !d_new.is_square() {
            return Err(LinalgError::NotSquare {
                rows: d_new.nrows(),
                cols: d_new.ncols(),
            });
        }
        if w.nrows() != size || w.ncols() != old {
            return Err(LinalgError::DimensionMismatch {
                expected: old,
                got: w.ncols(),
            });
        }
        if size == 0 {
            return Err(LinalgError::EmptyBlock {
                block: self.structure.block_count(),
            });
        }
        let factor = Cholesky::new(d_new.clone()).ok_or(LinalgError::SingularDiagonalBlock {
            block: self.structure.block_count(),
        })?;

        let n = old + size;
        let mut c = DMatrix::identity(n, n);
        c.view_mut((0, 0), (old, old)).copy_from(&self.c);
        c.view_mut((old, 0), (size, old)).copy_from(&(w * &self.c));
        let mut c_inv = DMatrix::identity(n, n);
        c_inv.view_mut((0, 0), (old, old)).copy_from(&self.c_inv);
        c_inv.view_mut((old, 0), (size, old)).copy_from(&(-w));

        let mut sizes = self.structure.sizes().to_vec();
        sizes.push(size);
        let mut d_blocks = self.d_blocks.clone();
        d_blocks.push(d_new);
        let mut d_factors = self.d_factors.clone();
        d_factors.push(factor);

        Ok(BlockCholesky {
            structure: BlockStructure::new(sizes)?,
            c,
            c_inv,
            d_blocks,
            d_factors,
        })
    }

    /// The factors restricted to the first `blocks` blocks. These coincide
    /// with the factors of the corresponding leading principal submatrix.
    pub fn leading(&self, blocks: usize) -> BlockCholesky {
        let structure = self.structure.leading(blocks);
        let n = structure.total();
        BlockCholesky {
            structure,
            c: self.c.view((0, 0), (n, n)).into_owned(),
            c_inv: self.c_inv.view((0, 0), (n, n)).into_owned(),
            d_blocks: self.d_blocks[..blocks].to_vec(),
            d_factors: self.d_blocks[..blocks]
                .iter()
                .map(|b| Cholesky::new(b.clone()).expect("leading block was factorable"))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn strictly_dominant_matrix_is_invertible_m_matrix() {
        let a = mat(&[&[2.0, -1.0], &[-1.0, 3.0]]);
        assert!(is_invertible_m_matrix(&a).holds);
    }

    #[test]
    fn singular_laplacian_is_not_invertible() {
        let a = mat(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let check = is_invertible_m_matrix(&a);
        assert!(!check.holds);
        assert!(matches!(
            check.violation,
            Some(MMatrixViolation::NoDominantRowReachable { .. })
        ));
    }

    #[test]
    fn weakly_dominant_row_chained_through_pattern() {
        // Load block of the interconnected two-microgrid example: the row of
        // the source-less load has zero surplus but couples to a strictly
        // dominant row.
        let a = mat(&[
            &[2.0, 0.0, -1.0, 0.0, 0.0],
            &[0.0, 3.0, 0.0, -1.0, -1.0],
            &[-1.0, 0.0, 1.0, 0.0, 0.0],
            &[0.0, -1.0, 0.0, 4.0, -1.0],
            &[0.0, -1.0, 0.0, -1.0, 3.0],
        ]);
        assert!(is_invertible_m_matrix(&a).holds);
    }

    #[test]
    fn positive_off_diagonal_is_rejected() {
        let a = mat(&[&[2.0, 0.5], &[-1.0, 3.0]]);
        let check = is_invertible_m_matrix(&a);
        assert!(matches!(
            check.violation,
            Some(MMatrixViolation::PositiveOffDiagonal { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn order_preserving_accepts_identity_rejects_zero_row() {
        assert!(is_order_preserving(&DMatrix::identity(3, 3)));
        assert!(!is_order_preserving(&mat(&[&[1.0, 0.0], &[0.0, 0.0]])));
        assert!(!is_order_preserving(&mat(&[&[1.0, -0.5], &[0.0, 1.0]])));
    }

    #[test]
    fn schur_complement_of_2x2() {
        let a = mat(&[&[2.0, -1.0], &[-1.0, 3.0]]);
        let s = schur_complement(&a, &[0]).unwrap();
        assert_eq!(s.nrows(), 1);
        assert_abs_diff_eq!(s[(0, 0)], 2.5, epsilon = 1e-15);
    }

    #[test]
    fn schur_complement_ignores_decoupled_blocks() {
        let a = mat(&[&[2.0, 0.0, 0.0], &[0.0, 3.0, -1.0], &[0.0, -1.0, 4.0]]);
        let s = schur_complement(&a, &[0]).unwrap();
        assert_eq!(s, mat(&[&[3.0, -1.0], &[-1.0, 4.0]]));
    }

    #[test]
    fn schur_complement_rejects_singular_leading_block() {
        let a = mat(&[&[0.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(
            schur_complement(&a, &[0]),
            Err(LinalgError::SingularLeadingBlock)
        ));
    }

    #[test]
    fn block_cholesky_of_diagonal_matrix_is_trivial() {
        let a = mat(&[&[2.0, 0.0, 0.0], &[0.0, 5.0, 0.0], &[0.0, 0.0, 7.0]]);
        let structure = BlockStructure::new(vec![2, 1]).unwrap();
        let f = block_cholesky(&a, &structure).unwrap();
        assert_eq!(f.c(), &DMatrix::identity(3, 3));
        assert_eq!(f.d(), a);
    }

    #[test]
    fn block_cholesky_two_scalar_blocks() {
        let a = mat(&[&[2.0, -1.0], &[-1.0, 3.0]]);
        let f = block_cholesky(&a, &BlockStructure::scalar(2)).unwrap();
        assert_abs_diff_eq!(f.c()[(1, 0)], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(f.d_block(0)[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.d_block(1)[(0, 0)], 2.5, epsilon = 1e-15);
        let r = f.reconstruct();
        assert_abs_diff_eq!(inf_norm(&(r - a)), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn scalar_structure_matches_dense_cholesky() {
        let a = mat(&[&[4.0, -1.0, 0.0], &[-1.0, 5.0, -2.0], &[0.0, -2.0, 6.0]]);
        let f = block_cholesky(&a, &BlockStructure::scalar(3)).unwrap();
        // C·D^{1/2} must equal the classic lower Cholesky factor.
        let mut d_sqrt = f.d();
        for i in 0..3 {
            d_sqrt[(i, i)] = d_sqrt[(i, i)].sqrt();
        }
        let l = f.c() * d_sqrt;
        let l_ref = Cholesky::new(a).unwrap().l().clone_owned();
        assert_abs_diff_eq!(inf_norm(&(l - l_ref)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn block_cholesky_rejects_nonsymmetric_input() {
        let a = mat(&[&[2.0, -1.0], &[0.5, 3.0]]);
        assert!(matches!(
            block_cholesky(&a, &BlockStructure::scalar(2)),
            Err(LinalgError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn block_cholesky_reports_singular_block_index() {
        let a = mat(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        let structure = BlockStructure::new(vec![1, 1, 1]).unwrap();
        assert!(matches!(
            block_cholesky(&a, &structure),
            Err(LinalgError::SingularDiagonalBlock { block: 1 })
        ));
    }

    #[test]
    fn apply_inverse_factors_on_identity_c_is_blockwise_division() {
        // With C = I the action is a plain block-diagonal solve; these are
        // the worked example's virtual open-circuit voltages.
        let a = mat(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let f = block_cholesky(&a, &BlockStructure::single(2)).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let y = f.apply_inverse_factors(&x).unwrap();
        assert_abs_diff_eq!(y[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn solve_matches_lu() {
        let a = mat(&[
            &[4.0, -1.0, 0.0, -1.0],
            &[-1.0, 5.0, -2.0, 0.0],
            &[0.0, -2.0, 6.0, -1.0],
            &[-1.0, 0.0, -1.0, 3.0],
        ]);
        let f = block_cholesky(&a, &BlockStructure::new(vec![2, 2]).unwrap()).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
        let via_factors = f.solve(&x).unwrap();
        let via_lu = a.lu().solve(&x).unwrap();
        assert_abs_diff_eq!((via_factors - via_lu).amax(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_matrix_factors() {
        let a = DMatrix::<f64>::zeros(0, 0);
        let f = block_cholesky(&a, &BlockStructure::single(0)).unwrap();
        assert_eq!(f.dim(), 0);
        assert_eq!(f.reconstruct().nrows(), 0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = mat(&[&[2.0, 0.0], &[0.0, 4.0]]);
        let f = block_cholesky(&a, &BlockStructure::scalar(2)).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert!(matches!(
            f.apply_inverse_factors(&x),
            Err(LinalgError::DimensionMismatch { .. })
        ));
    }
}
