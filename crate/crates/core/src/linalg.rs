//! Thin helpers over nalgebra used across the solvers.

use nalgebra::{DMatrix, DVector};

/// Solves `a x = b` by LU with partial pivoting. Returns `None` when the
/// smallest pivot is below `rel_tol` times the largest.
pub fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> Option<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return None;
    }
    if a.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let diag = u.diagonal();
    let largest = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let smallest = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if largest == 0.0 || smallest <= rel_tol * largest {
        return None;
    }
    lu.solve(b)
}

/// Minimum-norm least-squares solution of `a x ~ b` via SVD, discarding
/// singular values below `rel_tol` times the largest.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let largest = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if largest == 0.0 {
        return DVector::zeros(a.ncols());
    }
    svd.solve(b, rel_tol * largest)
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Infinity norm of a slice.
pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_detects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(lu_solve(&a, &DVector::from_vec(vec![1.0, 2.0]), 1e-12).is_none());
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = lu_solve(&a, &DVector::from_vec(vec![3.0, 5.0]), 1e-12).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14 && (x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn lstsq_matches_normal_equations() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 1.0, 0.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        let x = lstsq(&a, &b, 1e-12);
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!(x[1].abs() < 1e-12);
    }
}
