//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvalue floor applied before inverting or taking inverse square roots.
pub const EIG_FLOOR: f64 = 1e-12;

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(a.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Descending eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues_desc(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `V g(Λ) Vᵀ` for a symmetric matrix with the scalar map `g` applied to its eigenvalues.
pub fn sym_apply(a: &DMatrix<f64>, g: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_desc(a);
    let scaled = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * g(vals[j]));
    let out = scaled * vecs.transpose();
    (&out + out.transpose()) * 0.5
}

/// Inverse square root of a symmetric positive semi-definite matrix, flooring
/// eigenvalues at [`EIG_FLOOR`].
pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(a, |x| 1.0 / x.max(EIG_FLOOR).sqrt())
}

/// Symmetric square root, with negative eigenvalues treated as zero.
pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(a, |x| x.max(0.0).sqrt())
}

/// Largest absolute asymmetry `|aᵢⱼ − aⱼᵢ|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let (vals, vecs) = sym_eigen_desc(&a);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let rebuilt = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert_relative_eq!(rebuilt, a, epsilon = 1e-12);
    }

    #[test]
    fn inverse_square_root() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = sym_inv_sqrt(&a);
        let id = &r * &a * &r;
        assert_relative_eq!(id, DMatrix::identity(2, 2), epsilon = 1e-12);
        let s = sym_sqrt(&a);
        assert_relative_eq!(&s * &s, a, epsilon = 1e-12);
    }
}
