//! Dense linear-algebra primitives and the instance-level spectral quantities
//! that govern label complexity: reduced rank, statistical dimension,
//! effective dimension and leverage scores.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Default relative threshold below which singular values are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Eigenvalues of a kernel matrix in `[-PSD_NEGATIVE_TOL * ||K||_2, 0)` are clamped to zero.
pub const PSD_NEGATIVE_TOL: f64 = 1e-8;

/// Dense real matrix whose entries are guaranteed finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows * cols != entries.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, &entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        let entries: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_major(rows.len(), cols, entries)
    }

    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if let Some(bad) = m.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite matrix entry {bad}")));
        }
        Ok(Matrix(m))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Matrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::from_dmatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn row_vec(&self, i: usize) -> Vec<f64> {
        self.0.row(i).iter().copied().collect()
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for i in 0..self.rows() {
            out.extend(self.0.row(i).iter());
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::from_dmatrix(&self.0 * factor)
    }

    /// Stacks `self` on top of `below`.
    pub fn vstack(&self, below: &Matrix) -> Result<Self> {
        if self.cols() != below.cols() {
            return Err(Error::DimensionMismatch(format!(
                "cannot stack {} columns on {} columns",
                self.cols(),
                below.cols()
            )));
        }
        let (n1, n2, d) = (self.rows(), below.rows(), self.cols());
        let mut out = DMatrix::zeros(n1 + n2, d);
        out.rows_mut(0, n1).copy_from(&self.0);
        out.rows_mut(n1, n2).copy_from(&below.0);
        Ok(Matrix(out))
    }

    /// Selects rows by index (repeats allowed).
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.rows()) {
            return Err(Error::InvalidInput(format!(
                "row index {bad} out of range for {} rows",
                self.rows()
            )));
        }
        Ok(Matrix(self.0.select_rows(indices)))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} against {} columns",
                v.len(),
                self.cols()
            )));
        }
        Ok((&self.0 * DVector::from_column_slice(v)).iter().copied().collect())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn transpose(&self) -> Self {
        Matrix(self.0.transpose())
    }
}

impl Deref for Matrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// A semi-supervised instance: an unlabeled block whose labels cost one query
/// each, and a labeled block whose labels are known up front.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x_unlabeled: Matrix,
    x_labeled: Matrix,
    y_labeled: Vec<f64>,
}

impl Dataset {
    pub fn new(x_unlabeled: Matrix, x_labeled: Matrix, y_labeled: Vec<f64>) -> Result<Self> {
        if x_unlabeled.cols() != x_labeled.cols() {
            return Err(Error::DimensionMismatch(format!(
                "unlabeled block has {} columns, labeled block {}",
                x_unlabeled.cols(),
                x_labeled.cols()
            )));
        }
        if y_labeled.len() != x_labeled.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} labeled rows",
                y_labeled.len(),
                x_labeled.rows()
            )));
        }
        if y_labeled.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite label".into()));
        }
        let d = x_unlabeled.cols();
        if x_unlabeled.rows() + x_labeled.rows() < d {
            return Err(Error::InvalidInput(format!(
                "underconstrained instance: n1 + n2 = {} < d = {d}",
                x_unlabeled.rows() + x_labeled.rows()
            )));
        }
        Ok(Dataset {
            x_unlabeled,
            x_labeled,
            y_labeled,
        })
    }

    pub fn x_unlabeled(&self) -> &Matrix {
        &self.x_unlabeled
    }

    pub fn x_labeled(&self) -> &Matrix {
        &self.x_labeled
    }

    pub fn y_labeled(&self) -> &[f64] {
        &self.y_labeled
    }

    pub fn n_unlabeled(&self) -> usize {
        self.x_unlabeled.rows()
    }

    pub fn n_labeled(&self) -> usize {
        self.x_labeled.rows()
    }

    pub fn n_rows(&self) -> usize {
        self.n_unlabeled() + self.n_labeled()
    }

    pub fn dim(&self) -> usize {
        self.x_unlabeled.cols()
    }

    /// The stacked design matrix `[X1; X2]`; unlabeled rows come first.
    pub fn stacked(&self) -> Matrix {
        self.x_unlabeled
            .vstack(&self.x_labeled)
            .expect("column counts validated on construction")
    }

    /// Squared loss of `beta` on the stacked instance given the hidden labels `y1`.
    pub fn stacked_loss(&self, beta: &[f64], y1: &[f64]) -> Result<f64> {
        if y1.len() != self.n_unlabeled() {
            return Err(Error::DimensionMismatch(format!(
                "{} hidden labels for {} unlabeled rows",
                y1.len(),
                self.n_unlabeled()
            )));
        }
        let p1 = self.x_unlabeled.mul_vec(beta)?;
        let p2 = self.x_labeled.mul_vec(beta)?;
        let r1: f64 = p1.iter().zip(y1).map(|(p, y)| (p - y).powi(2)).sum();
        let r2: f64 = p2
            .iter()
            .zip(&self.y_labeled)
            .map(|(p, y)| (p - y).powi(2))
            .sum();
        Ok(r1 + r2)
    }
}

/// Thin singular value decomposition truncated at a relative rank tolerance.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
    pub rank_tol: f64,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn n_rows(&self) -> usize {
        self.u.rows()
    }

    /// Row `i` of `U`, i.e. `U(x_i)`.
    pub fn u_row(&self, i: usize) -> Vec<f64> {
        self.u.row_vec(i)
    }
}

pub fn thin_svd(x: &Matrix, rank_tol: f64) -> Result<SvdFactors> {
    if !(rank_tol > 0.0 && rank_tol <= 1e-3) {
        return Err(Error::InvalidInput(format!(
            "rank_tol must lie in (0, 1e-3], got {rank_tol}"
        )));
    }
    let (n, d) = (x.rows(), x.cols());
    if n == 0 || d == 0 {
        return Ok(SvdFactors {
            u: Matrix::zeros(n, 0),
            sigma: Vec::new(),
            v: Matrix::zeros(d, 0),
            rank_tol,
        });
    }
    let (u, sigma_all, v) = dense_svd(x.as_dmatrix())?;
    let sigma_max = sigma_all.first().copied().unwrap_or(0.0);
    let r = sigma_all
        .iter()
        .take_while(|&&s| sigma_max > 0.0 && s > rank_tol * sigma_max)
        .count();
    let u_thin = u.columns(0, r).into_owned();
    let v_thin = v.columns(0, r).into_owned();
    let sigma = sigma_all[..r].to_vec();
    Ok(SvdFactors {
        u: Matrix(u_thin),
        sigma,
        v: Matrix(v_thin),
        rank_tol,
    })
}

/// Thin SVD `A = U diag(sigma) V'` with singular values in nonincreasing order.
pub(crate) fn dense_svd(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>, DMatrix<f64>)> {
    let (n, d) = a.shape();
    let fa = faer::Mat::<f64>::from_fn(n, d, |i, j| a[(i, j)]);
    let svd = fa
        .thin_svd()
        .map_err(|e| Error::NumericalBreakdown(format!("SVD did not converge: {e:?}")))?;
    let (fu, fv) = (svd.U(), svd.V());
    let k = n.min(d);
    let s = svd.S().column_vector();
    let u = DMatrix::from_fn(n, k, |i, j| fu[(i, j)]);
    let v = DMatrix::from_fn(d, k, |i, j| fv[(i, j)]);
    let sigma = (0..k).map(|i| s[i]).collect();
    Ok((u, sigma, v))
}

/// Squared row norms of `U`.
pub fn leverage_scores(svd: &SvdFactors) -> Vec<f64> {
    svd.u.row_iter().map(|r| r.norm_squared()).collect()
}

/// Reduced rank computed from the stacked SVD as the leverage mass of the
/// unlabeled rows. Well defined even when the stacked Gram matrix is singular.
pub fn reduced_rank(ds: &Dataset, rank_tol: f64) -> Result<f64> {
    let svd = thin_svd(&ds.stacked(), rank_tol)?;
    Ok(leverage_scores(&svd)[..ds.n_unlabeled()].iter().sum())
}

/// Reduced rank through the explicit inverse `Tr((X1'X1 + X2'X2)^-1 X1'X1)`.
/// Fails when the stacked Gram matrix is not numerically invertible.
pub fn reduced_rank_by_inverse(ds: &Dataset) -> Result<f64> {
    let x1 = ds.x_unlabeled().as_dmatrix();
    let x2 = ds.x_labeled().as_dmatrix();
    let g1 = x1.transpose() * x1;
    let gram = &g1 + x2.transpose() * x2;
    let chol = gram.clone().cholesky().ok_or_else(|| {
        Error::SingularMatrix("stacked Gram matrix is not positive definite".into())
    })?;
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.amax();
    let min = eig.eigenvalues.min();
    if max == 0.0 || min <= DEFAULT_RANK_TOL * DEFAULT_RANK_TOL * max {
        return Err(Error::SingularMatrix(format!(
            "stacked Gram matrix has rank below d (eigenvalue ratio {:e})",
            min / max
        )));
    }
    Ok(chol.solve(&g1).trace())
}

pub fn statistical_dimension(sigma: &[f64], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(sigma
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|s| 1.0 / (1.0 + lambda / (s * s)))
        .sum())
}

pub fn effective_dimension(eigs: &[f64], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(eigs
        .iter()
        .filter(|&&e| e > 0.0)
        .map(|e| 1.0 / (1.0 + lambda / e))
        .sum())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "regularization must be a finite non-negative number, got {lambda}"
        )));
    }
    Ok(())
}

/// Eigen-decomposition of a symmetric matrix after explicit symmetrization.
pub(crate) fn sym_eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

fn check_symmetric(k: &Matrix) -> Result<()> {
    if k.rows() != k.cols() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            k.rows(),
            k.cols()
        )));
    }
    let scale = k.amax().max(f64::MIN_POSITIVE);
    let asym = (k.as_dmatrix() - k.transpose().as_dmatrix()).amax();
    if asym > 1e-8 * scale {
        return Err(Error::InvalidInput(format!(
            "matrix is not symmetric (relative asymmetry {:e})",
            asym / scale
        )));
    }
    Ok(())
}

/// Eigenvalues of a symmetric PSD matrix, with round-off negatives clamped to zero.
pub fn psd_eigenvalues(k: &Matrix) -> Result<Vec<f64>> {
    check_symmetric(k)?;
    let eig = sym_eigen(k.as_dmatrix());
    clamp_spectrum(eig.eigenvalues.as_slice(), k.rows())
}

fn clamp_spectrum(eigs: &[f64], n: usize) -> Result<Vec<f64>> {
    let norm2 = eigs.iter().fold(0.0f64, |acc, e| acc.max(e.abs()));
    let neg_tol = PSD_NEGATIVE_TOL * norm2;
    // Below this level an eigenvalue is indistinguishable from round-off.
    let zero_floor = (n.max(1) as f64) * f64::EPSILON * norm2;
    eigs.iter()
        .map(|&e| {
            if e < -neg_tol {
                Err(Error::NotPsd {
                    min_eigenvalue: e,
                    tolerance: neg_tol,
                })
            } else if e <= zero_floor {
                Ok(0.0)
            } else {
                Ok(e)
            }
        })
        .collect()
}

/// The symmetric PSD square root `Z` with `Z Z = K`.
pub fn psd_sqrt(k: &Matrix) -> Result<Matrix> {
    check_symmetric(k)?;
    let n = k.rows();
    if n == 0 {
        return Ok(Matrix::zeros(0, 0));
    }
    let eig = sym_eigen(k.as_dmatrix());
    let clamped = clamp_spectrum(eig.eigenvalues.as_slice(), n)?;
    let roots = DVector::from_iterator(n, clamped.iter().map(|e| e.sqrt()));
    let vecs = &eig.eigenvectors;
    let z = vecs * DMatrix::from_diagonal(&roots) * vecs.transpose();
    Matrix::from_dmatrix((&z + z.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seeded_rng(seed);
        let entries = (0..rows * cols)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Matrix::from_row_major(rows, cols, entries).unwrap()
    }

    fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn matrix_rejects_non_finite() {
        assert!(Matrix::from_row_major(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::from_row_major(1, 2, vec![1.0, f64::INFINITY]).is_err());
        assert!(Matrix::from_row_major(2, 2, vec![1.0]).is_err());
    }

    // [K; sqrt(lambda) sqrt(K)] with rank-one K = g g' has the single singular
    // value sqrt(t^2 + lambda t), t = |g|^2. Some LAPACK-free SVDs get this wrong.
    #[test]
    fn svd_of_rank_deficient_stack() {
        let g = gaussian(8, 1, 31).into_dmatrix();
        let k = &g * g.transpose();
        let t = g.norm_squared();
        let lambda: f64 = 3.0;
        let root = &g * g.transpose() / t.sqrt();
        let mut stacked = DMatrix::zeros(16, 8);
        stacked.rows_mut(0, 8).copy_from(&k);
        stacked.rows_mut(8, 8).copy_from(&(root * lambda.sqrt()));
        let (u, sigma, v) = dense_svd(&stacked).unwrap();
        assert!((sigma[0] - (t * t + lambda * t).sqrt()).abs() < 1e-10 * sigma[0]);
        assert!(sigma[1] < 1e-10 * sigma[0]);
        let rebuilt = &u * DMatrix::from_diagonal(&DVector::from_vec(sigma)) * v.transpose();
        assert!(max_abs_diff(&rebuilt, &stacked) < 1e-10 * t);
        let svd = thin_svd(&Matrix(stacked), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(svd.rank(), 1);
    }

    #[test]
    fn svd_of_identity() {
        let f = thin_svd(&Matrix::identity(3), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(f.sigma, vec![1.0, 1.0, 1.0]);
        let recon = f.u.as_dmatrix() * f.v.transpose().as_dmatrix();
        assert!(max_abs_diff(&recon, &DMatrix::identity(3, 3)) < 1e-14);
        assert!(leverage_scores(&f).iter().all(|&s| (s - 1.0).abs() < 1e-14));
    }

    #[test]
    fn svd_drops_null_directions() {
        let x = Matrix::from_diagonal(&[3.0, 0.0]).unwrap();
        let f = thin_svd(&x, 1e-9).unwrap();
        assert_eq!(f.rank(), 1);
        assert!((f.sigma[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn svd_rejects_bad_tolerance() {
        assert!(thin_svd(&Matrix::identity(2), 0.0).is_err());
        assert!(thin_svd(&Matrix::identity(2), 1e-2).is_err());
    }

    #[test]
    fn svd_invariants_on_random_matrix() {
        let x = gaussian(6, 3, 11);
        let f = thin_svd(&x, DEFAULT_RANK_TOL).unwrap();
        let r = f.rank();
        assert_eq!(r, 3);
        let utu = f.u.transpose().as_dmatrix() * f.u.as_dmatrix();
        let vtv = f.v.transpose().as_dmatrix() * f.v.as_dmatrix();
        assert!(max_abs_diff(&utu, &DMatrix::identity(r, r)) <= 1e-10);
        assert!(max_abs_diff(&vtv, &DMatrix::identity(r, r)) <= 1e-10);
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&f.sigma));
        let recon = f.u.as_dmatrix() * s * f.v.transpose().as_dmatrix();
        assert!((recon - x.as_dmatrix()).norm() <= 1e-8 * x.frobenius_norm());
        assert!(f.sigma.windows(2).all(|w| w[0] >= w[1] && w[1] > 0.0));
    }

    #[test]
    fn leverage_of_duplicated_row_pair() {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 2.0],
        ])
        .unwrap();
        let lev = leverage_scores(&thin_svd(&x, DEFAULT_RANK_TOL).unwrap());
        assert!((lev[0] - 0.5).abs() < 1e-12);
        assert!((lev[1] - 0.5).abs() < 1e-12);
        assert!((lev[2] - 1.0).abs() < 1e-12);
        assert!((lev[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn leverage_sums_to_rank() {
        let x = gaussian(10, 4, 5);
        let lev = leverage_scores(&thin_svd(&x, DEFAULT_RANK_TOL).unwrap());
        assert!((lev.iter().sum::<f64>() - 4.0).abs() <= 1e-10);
        assert!(lev.iter().all(|&s| (0.0..=1.0 + 1e-12).contains(&s)));
    }

    #[test]
    fn reduced_rank_without_labeled_rows() {
        let ds = Dataset::new(gaussian(9, 4, 3), Matrix::zeros(0, 4), vec![]).unwrap();
        assert!((reduced_rank(&ds, DEFAULT_RANK_TOL).unwrap() - 4.0).abs() < 1e-10);
        assert!((reduced_rank_by_inverse(&ds).unwrap() - 4.0).abs() < 1e-10);
    }

    #[test]
    fn reduced_rank_of_scaled_identity_pair() {
        let d = 5;
        let lambda: f64 = 3.0;
        let x2 = Matrix::identity(d).scaled(lambda.sqrt()).unwrap();
        let ds = Dataset::new(Matrix::identity(d), x2, vec![0.0; d]).unwrap();
        let expect = d as f64 / (1.0 + lambda);
        assert!((reduced_rank(&ds, DEFAULT_RANK_TOL).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn reduced_rank_two_routes_agree() {
        let ds = Dataset::new(gaussian(8, 3, 21), gaussian(5, 3, 22), vec![0.0; 5]).unwrap();
        let by_u = reduced_rank(&ds, DEFAULT_RANK_TOL).unwrap();
        let by_inv = reduced_rank_by_inverse(&ds).unwrap();
        assert!((by_u - by_inv).abs() <= 1e-8);
        assert!(by_u > 0.0 && by_u < 3.0);
    }

    #[test]
    fn reduced_rank_inverse_route_rejects_singular() {
        let x1 = Matrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let ds = Dataset::new(x1, Matrix::zeros(0, 2), vec![]).unwrap();
        assert!(matches!(
            reduced_rank_by_inverse(&ds),
            Err(Error::SingularMatrix(_))
        ));
        assert!((reduced_rank(&ds, DEFAULT_RANK_TOL).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn statistical_dimension_values() {
        assert_eq!(statistical_dimension(&[1.0, 1.0, 1.0], 0.0).unwrap(), 3.0);
        assert!((statistical_dimension(&[1.0, 1.0], 1.0).unwrap() - 1.0).abs() < 1e-15);
        let v = statistical_dimension(&[2.0, 1.0], 3.0).unwrap();
        assert!((v - (4.0 / 7.0 + 0.25)).abs() < 1e-15);
        assert!(statistical_dimension(&[1.0], -1.0).is_err());
    }

    #[test]
    fn effective_dimension_values() {
        assert_eq!(effective_dimension(&[1.0, 1.0], 0.0).unwrap(), 2.0);
        assert!((effective_dimension(&[4.0], 4.0).unwrap() - 0.5).abs() < 1e-15);
        let v = effective_dimension(&[3.0, 2.0, 1.0], 2.0).unwrap();
        assert!((v - (0.6 + 0.5 + 1.0 / 3.0)).abs() < 1e-15);
        assert!(effective_dimension(&[1.0], -0.5).is_err());
    }

    #[test]
    fn psd_sqrt_closed_forms() {
        let z = psd_sqrt(&Matrix::identity(4)).unwrap();
        assert!(max_abs_diff(z.as_dmatrix(), &DMatrix::identity(4, 4)) < 1e-14);
        let z = psd_sqrt(&Matrix::from_diagonal(&[4.0, 9.0]).unwrap()).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 3.0]));
        assert!(max_abs_diff(z.as_dmatrix(), &expect) < 1e-14);
    }

    #[test]
    fn psd_sqrt_reconstructs_random_gram() {
        let b = gaussian(5, 5, 9);
        let k = Matrix::from_dmatrix(b.transpose().as_dmatrix() * b.as_dmatrix()).unwrap();
        let z = psd_sqrt(&k).unwrap();
        let zz = z.as_dmatrix() * z.as_dmatrix();
        assert!((zz - k.as_dmatrix()).norm() <= 1e-7 * k.frobenius_norm());
        assert!(max_abs_diff(z.as_dmatrix(), &z.transpose()) < 1e-12);
    }

    #[test]
    fn psd_sqrt_clamps_round_off_and_rejects_indefinite() {
        let k = Matrix::from_diagonal(&[1.0, -1e-12]).unwrap();
        let z = psd_sqrt(&k).unwrap();
        assert_eq!(z[(1, 1)], 0.0);
        let k = Matrix::from_diagonal(&[1.0, -1e-3]).unwrap();
        assert!(matches!(psd_sqrt(&k), Err(Error::NotPsd { .. })));
        let asym = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(psd_sqrt(&asym).is_err());
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(Matrix::zeros(1, 3), Matrix::zeros(1, 2), vec![0.0]).is_err());
        assert!(Dataset::new(Matrix::zeros(1, 3), Matrix::zeros(1, 3), vec![]).is_err());
        assert!(Dataset::new(Matrix::zeros(1, 3), Matrix::zeros(1, 3), vec![0.0]).is_err());
    }
}
