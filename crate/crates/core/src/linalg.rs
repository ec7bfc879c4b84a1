//! Dense symmetric helpers on top of nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::Scalar;

/// Eigenvalues of a symmetric matrix, largest first.
///
/// The input is symmetrized as `(A + Aᵀ)/2` before decomposition.
pub fn sym_eigenvalues_desc<T: Scalar>(a: &DMatrix<T>) -> Vec<T> {
    let sym = symmetrize(a);
    let mut vals: Vec<T> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    vals
}

pub fn symmetrize<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * T::lit(0.5)
}

/// `A ⊗ I_m`.
pub fn kron_identity<T: Scalar>(a: &DMatrix<T>, m: usize) -> DMatrix<T> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(r * m, c * m);
    for i in 0..r {
        for j in 0..c {
            let v = a[(i, j)];
            if v != T::zero() {
                for k in 0..m {
                    out[(i * m + k, j * m + k)] = v;
                }
            }
        }
    }
    out
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag<T: Scalar>(blocks: &[DMatrix<T>]) -> DMatrix<T> {
    let size: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(size, size);
    let mut off = 0;
    for b in blocks {
        let m = b.nrows();
        out.view_mut((off, off), (m, b.ncols())).copy_from(b);
        off += m;
    }
    out
}

/// Count of eigenvalues above `tol`.
pub fn numerical_rank<T: Scalar>(a: &DMatrix<T>, tol: T) -> usize {
    sym_eigenvalues_desc(a).into_iter().filter(|&v| v > tol).count()
}
