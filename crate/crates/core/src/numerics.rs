//! Tolerance-aware complex linear algebra.
//!
//! Alignment conditions are statements about column spaces and column sets,
//! which are exact in exact arithmetic. Every predicate here takes a
//! [`Tolerance`] so that double-precision round-off does not flip them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative and absolute thresholds used by every numerical predicate.
///
/// A singular value `s` counts as zero when `s <= rel_tol * s_max + abs_tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Tolerance {
    pub fn new(rel_tol: f64, abs_tol: f64) -> Result<Self> {
        if !(rel_tol.is_finite() && rel_tol > 0.0 && abs_tol.is_finite() && abs_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerances must be positive and finite (rel_tol={rel_tol}, abs_tol={abs_tol})"
            )));
        }
        Ok(Self { rel_tol, abs_tol })
    }

    /// Cutoff for a quantity whose natural magnitude is `scale`.
    pub fn threshold(&self, scale: f64) -> f64 {
        self.rel_tol * scale + self.abs_tol
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
        }
    }
}

/// A column space represented by an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: CMat,
}

impl Subspace {
    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    /// Norm of the component of `x` orthogonal to this subspace.
    pub fn residual_of(&self, x: &CVec) -> f64 {
        if self.dim() == 0 {
            return x.norm();
        }
        let coeffs = self.basis.adjoint() * x;
        (x - &self.basis * coeffs).norm()
    }
}

fn check_finite(m: &CMat, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} has non-finite entries")))
    }
}

/// Orthonormal basis of the numerically significant column space of `m`.
pub fn orthonormal_basis(m: &CMat, tol: &Tolerance) -> Result<Subspace> {
    if m.nrows() == 0 {
        return Err(Error::InvalidInput("matrix has no rows".into()));
    }
    check_finite(m, "matrix")?;
    if m.ncols() == 0 {
        return Ok(Subspace {
            basis: CMat::zeros(m.nrows(), 0),
        });
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let s_max = sv.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol.threshold(s_max);

    let mut keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > cutoff).collect();
    keep.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let cols: Vec<CVec> = keep.iter().map(|&i| u.column(i).into_owned()).collect();
    let basis = if cols.is_empty() {
        CMat::zeros(m.nrows(), 0)
    } else {
        CMat::from_columns(&cols)
    };
    Ok(Subspace { basis })
}

pub fn numerical_rank(m: &CMat, tol: &Tolerance) -> Result<usize> {
    Ok(orthonormal_basis(m, tol)?.dim())
}

/// Largest projection residual of either basis onto the other subspace.
///
/// Zero exactly when the two subspaces coincide.
pub fn subspace_residual(a: &Subspace, b: &Subspace) -> Result<f64> {
    if a.ambient() != b.ambient() {
        return Err(Error::Shape(format!(
            "ambient dimensions differ: {} vs {}",
            a.ambient(),
            b.ambient()
        )));
    }
    let one_way = |x: &Subspace, y: &Subspace| {
        x.basis
            .column_iter()
            .map(|c| y.residual_of(&c.into_owned()))
            .fold(0.0, f64::max)
    };
    Ok(one_way(a, b).max(one_way(b, a)))
}

pub fn subspace_equal(a: &Subspace, b: &Subspace, tol: &Tolerance) -> Result<bool> {
    let residual = subspace_residual(a, b)?;
    Ok(a.dim() == b.dim() && residual <= tol.threshold(1.0))
}

/// Mismatch between two columns and the magnitude it is judged against.
fn column_mismatch(p: &CVec, q: &CVec, up_to_scale: bool) -> (f64, f64) {
    let p_norm = p.norm();
    let q_norm = q.norm();
    if !up_to_scale {
        return ((p - q).norm(), p_norm.max(q_norm));
    }
    if q_norm == 0.0 {
        return (p_norm, p_norm);
    }
    let alpha = q.dotc(p) / C64::from(q_norm * q_norm);
    if p_norm > 0.0 && alpha.norm() == 0.0 {
        return (p_norm, p_norm);
    }
    ((p - q * alpha).norm(), p_norm)
}

fn check_same_rows(p: &CMat, q: &CMat) -> Result<()> {
    if p.nrows() != q.nrows() {
        return Err(Error::Shape(format!(
            "row counts differ: {} vs {}",
            p.nrows(),
            q.nrows()
        )));
    }
    Ok(())
}

/// Whether every column of `p` matches some column of `q`.
///
/// Columns match when they are equal within tolerance, or, with
/// `up_to_scale`, when one is a nonzero complex multiple of the other.
pub fn column_subset(p: &CMat, q: &CMat, tol: &Tolerance, up_to_scale: bool) -> Result<bool> {
    check_same_rows(p, q)?;
    Ok(p.column_iter().all(|pc| {
        let pc = pc.into_owned();
        q.column_iter().any(|qc| {
            let (residual, scale) = column_mismatch(&pc, &qc.into_owned(), up_to_scale);
            residual <= tol.threshold(scale)
        })
    }))
}

/// Worst relative best-match residual of the columns of `p` against `q`.
///
/// Zero for an empty `p`, infinite when `p` is nonempty and `q` is empty.
pub fn column_subset_residual(p: &CMat, q: &CMat, up_to_scale: bool) -> Result<f64> {
    check_same_rows(p, q)?;
    let worst = p
        .column_iter()
        .map(|pc| {
            let pc = pc.into_owned();
            q.column_iter()
                .map(|qc| {
                    let (residual, scale) = column_mismatch(&pc, &qc.into_owned(), up_to_scale);
                    if scale > 0.0 {
                        residual / scale
                    } else {
                        0.0
                    }
                })
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

pub fn is_hermitian(q: &CMat, tol: &Tolerance) -> bool {
    q.is_square() && (q - q.adjoint()).norm() <= tol.threshold(q.norm())
}

/// Full Hermitian eigendecomposition with eigenvalues in ascending order.
pub fn hermitian_eigen(q: &CMat, tol: &Tolerance) -> Result<(Vec<f64>, CMat)> {
    if !q.is_square() || q.nrows() == 0 {
        return Err(Error::InvalidInput(format!(
            "expected a nonempty square matrix, got {}x{}",
            q.nrows(),
            q.ncols()
        )));
    }
    check_finite(q, "covariance")?;
    if !is_hermitian(q, tol) {
        return Err(Error::InvalidInput("matrix is not Hermitian".into()));
    }
    let sym = (q + q.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let cols: Vec<CVec> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    Ok((values, CMat::from_columns(&cols)))
}

/// Unit-norm eigenvectors for the `m` smallest eigenvalues, ascending.
pub fn smallest_eigvecs(q: &CMat, m: usize, tol: &Tolerance) -> Result<CMat> {
    if m == 0 || m > q.nrows() {
        return Err(Error::InvalidInput(format!(
            "requested {m} eigenvectors of a {}x{} matrix",
            q.nrows(),
            q.ncols()
        )));
    }
    let (_, vectors) = hermitian_eigen(q, tol)?;
    Ok(vectors.columns(0, m).into_owned())
}

/// Scales every nonzero column to unit norm; zero columns are left as is.
pub fn normalize_columns(m: &CMat) -> CMat {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col.unscale_mut(norm);
        }
    }
    out
}

/// `m` without column `index` (0-based).
pub fn drop_column(m: &CMat, index: usize) -> CMat {
    m.clone().remove_column(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(rows, cols, |_, _| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            C64::new(re, im)
        })
    }

    fn e(tau: usize, k: usize) -> CMat {
        CMat::from_fn(tau, 1, |r, _| if r == k { C64::from(1.0) } else { C64::from(0.0) })
    }

    #[test]
    fn tolerance_rejects_bad_values() {
        assert!(Tolerance::new(0.0, 1e-12).is_err());
        assert!(Tolerance::new(1e-9, -1.0).is_err());
        assert!(Tolerance::new(f64::NAN, 1e-12).is_err());
        assert!(Tolerance::new(1e-9, 1e-12).is_ok());
    }

    #[test]
    fn identity_has_full_basis() {
        let tol = Tolerance::default();
        let s = orthonormal_basis(&CMat::identity(2, 2), &tol).unwrap();
        assert_eq!(s.dim(), 2);
        let gram = s.basis().adjoint() * s.basis();
        assert!((gram - CMat::identity(2, 2)).norm() < 1e-12);
        // Each basis column is a coordinate vector up to phase.
        for c in s.basis().column_iter() {
            let mags: Vec<f64> = c.iter().map(|z| z.norm()).collect();
            assert!(mags.iter().any(|&m| (m - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn duplicated_column_has_rank_one() {
        let w = gaussian(4, 1, 3);
        let m = CMat::from_columns(&[w.column(0).into_owned(), w.column(0).into_owned()]);
        assert_eq!(numerical_rank(&m, &Tolerance::default()).unwrap(), 1);
    }

    #[test]
    fn random_tall_matrix_has_full_rank() {
        // Oracle: count singular values above the cutoff directly.
        let m = gaussian(4, 2, 11);
        let sv = m.clone().singular_values();
        let s_max = sv.max();
        let oracle = sv.iter().filter(|&&s| s > 1e-9 * s_max + 1e-12).count();
        assert_eq!(oracle, 2);
        assert_eq!(numerical_rank(&m, &Tolerance::default()).unwrap(), oracle);
    }

    #[test]
    fn non_finite_and_empty_rows_rejected() {
        let mut m = CMat::identity(2, 2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(
            orthonormal_basis(&m, &Tolerance::default()),
            Err(Error::InvalidInput(_))
        ));
        assert!(orthonormal_basis(&CMat::zeros(0, 2), &Tolerance::default()).is_err());
    }

    #[test]
    fn span_equality_cases() {
        let tol = Tolerance::default();
        let a = orthonormal_basis(&e(3, 0), &tol).unwrap();
        let b = orthonormal_basis(&e(3, 0).scale(2.0), &tol).unwrap();
        let c = orthonormal_basis(&e(3, 1), &tol).unwrap();
        assert!(subspace_equal(&a, &b, &tol).unwrap());
        assert!(!subspace_equal(&a, &c, &tol).unwrap());
        let d = orthonormal_basis(&e(4, 0), &tol).unwrap();
        assert!(matches!(subspace_equal(&a, &d, &tol), Err(Error::Shape(_))));
    }

    #[test]
    fn column_subset_cases() {
        let tol = Tolerance::default();
        let q = gaussian(5, 4, 21);
        assert!(column_subset(&CMat::zeros(5, 0), &q, &tol, false).unwrap());
        assert!(column_subset(&q, &q, &tol, false).unwrap());
        assert!(!column_subset(&q, &CMat::zeros(5, 0), &tol, false).unwrap());

        // First n-1 columns of q, shuffled. Oracle: exhaustive exact matching.
        let shuffled = CMat::from_columns(&[
            q.column(2).into_owned(),
            q.column(0).into_owned(),
            q.column(1).into_owned(),
        ]);
        let oracle = shuffled
            .column_iter()
            .all(|p| q.column_iter().any(|c| c == p));
        assert!(oracle);
        assert!(column_subset(&shuffled, &q, &tol, false).unwrap());

        // Scaled columns only match in scale-tolerant mode.
        let scaled = shuffled.map(|z| z * C64::new(0.0, 3.0));
        assert!(!column_subset(&scaled, &q, &tol, false).unwrap());
        assert!(column_subset(&scaled, &q, &tol, true).unwrap());
        assert!(column_subset_residual(&scaled, &q, true).unwrap() < 1e-12);

        assert!(column_subset(&CMat::zeros(4, 1), &q, &tol, false).is_err());
    }

    #[test]
    fn smallest_eigvecs_of_diagonal() {
        let tol = Tolerance::default();
        let q = CMat::from_diagonal(&CVec::from_vec(vec![3.0, 1.0, 2.0].into_iter().map(C64::from).collect()));
        let v = smallest_eigvecs(&q, 1, &tol).unwrap();
        assert!((v[(1, 0)].norm() - 1.0).abs() < 1e-12);
        assert!(v[(0, 0)].norm() < 1e-12 && v[(2, 0)].norm() < 1e-12);
    }

    #[test]
    fn smallest_eigvecs_of_identity() {
        let tol = Tolerance::default();
        let q = CMat::identity(3, 3);
        let v = smallest_eigvecs(&q, 2, &tol).unwrap();
        assert!((&q * &v - &v).norm() < 1e-12);
        assert!((v.adjoint() * &v - CMat::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn smallest_eigvecs_residuals() {
        let tol = Tolerance::default();
        let a = gaussian(5, 5, 8);
        let q = a.adjoint() * &a;
        let (values, _) = hermitian_eigen(&q, &tol).unwrap();
        assert!(values.windows(2).all(|w| w[0] <= w[1]));
        let v = smallest_eigvecs(&q, 2, &tol).unwrap();
        for i in 0..2 {
            let col = v.column(i).into_owned();
            let resid = (&q * &col - col.scale(values[i])).norm();
            assert!(resid <= 1e-9 * q.norm(), "residual {resid}");
            assert!((col.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smallest_eigvecs_errors() {
        let tol = Tolerance::default();
        let mut q = CMat::identity(3, 3);
        assert!(smallest_eigvecs(&q, 0, &tol).is_err());
        assert!(smallest_eigvecs(&q, 4, &tol).is_err());
        q[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(smallest_eigvecs(&q, 1, &tol), Err(Error::InvalidInput(_))));
    }
}
