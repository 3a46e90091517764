//! Empirical covariance of the normalized data, its observation/horizon block
//! partition, and its eigen-decomposition.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::pipeline::DataMatrix;

/// Smallest singular value at or below `SINGULAR_RATIO * largest` counts as zero.
pub const SINGULAR_RATIO: f64 = 1e-15;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Divisor applied to `XᵀX` when forming the sample covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denominator {
    /// `K - 1` for `K` training rows (unbiased).
    #[default]
    SampleCountMinusOne,
    /// `N - 1` for window length `N`, the literal alternative reading.
    WindowMinusOne,
}

/// Covariance of the normalized vector `x = [y, z]` with cached blocks and
/// eigen-decomposition (eigenvalues descending).
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    sigma_xx: DMatrix<f64>,
    split: usize,
    sigma_yy: DMatrix<f64>,
    sigma_yz: DMatrix<f64>,
    sigma_zy: DMatrix<f64>,
    sigma_zz: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl CovarianceModel {
    /// Wraps a known covariance, observation block = first `split` coordinates.
    pub fn from_covariance(sigma: DMatrix<f64>, split: usize) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() < 2 {
            return Err(Error::argument(format!(
                "covariance must be square with dimension >= 2, got {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let d = sigma.nrows();
        if split < 1 || split >= d {
            return Err(Error::argument(format!(
                "split {split} must satisfy 1 <= m < D = {d}"
            )));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("covariance has non-finite entries"));
        }
        if asymmetry(&sigma) > SYMMETRY_TOL * sigma.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::domain("covariance is not symmetric"));
        }
        let sigma = symmetrize(sigma);
        let (eigenvalues, eigenvectors) = sorted_eigen(&sigma);
        let top = eigenvalues[0].max(0.0);
        if eigenvalues[d - 1] < -PSD_TOL * top.max(f64::MIN_POSITIVE) {
            return Err(Error::domain(format!(
                "covariance is not positive semidefinite (eigenvalue {:e})",
                eigenvalues[d - 1]
            )));
        }
        let eigenvalues = eigenvalues.map(|s| s.max(0.0));
        let h = d - split;
        let sigma_yy = sigma.view((0, 0), (split, split)).into_owned();
        let sigma_yz = sigma.view((0, split), (split, h)).into_owned();
        let sigma_zy = sigma_yz.transpose();
        let sigma_zz = sigma.view((split, split), (h, h)).into_owned();
        Ok(Self {
            sigma_xx: sigma,
            split,
            sigma_yy,
            sigma_yz,
            sigma_zy,
            sigma_zz,
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn sigma_xx(&self) -> &DMatrix<f64> {
        &self.sigma_xx
    }

    pub fn sigma_yy(&self) -> &DMatrix<f64> {
        &self.sigma_yy
    }

    pub fn sigma_yz(&self) -> &DMatrix<f64> {
        &self.sigma_yz
    }

    pub fn sigma_zy(&self) -> &DMatrix<f64> {
        &self.sigma_zy
    }

    pub fn sigma_zz(&self) -> &DMatrix<f64> {
        &self.sigma_zz
    }

    /// Eigenvalues of `sigma_xx`, descending, clamped at zero.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthonormal eigenvectors, column `k` paired with `eigenvalues[k]`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Total dimension `D`.
    pub fn dim(&self) -> usize {
        self.sigma_xx.nrows()
    }

    /// Observation block length `m`.
    pub fn observation_dim(&self) -> usize {
        self.split
    }

    /// Horizon block length `H`.
    pub fn horizon(&self) -> usize {
        self.dim() - self.split
    }

    /// Condition number of the observation block.
    pub fn condition_yy(&self) -> f64 {
        symmetric_condition(&self.sigma_yy)
    }

    /// Row-major CSV dump of `sigma_xx` in scientific notation.
    pub fn to_csv(&self) -> String {
        matrix_to_csv(&self.sigma_xx)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Row-major CSV with shortest round-trip scientific notation.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", line.join(","));
    }
    out
}

/// Parses a numeric CSV matrix (no header).
pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    message: format!("bad number `{}`", f.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {} columns, got {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_row_iterator(
        rows.len(),
        ncols,
        rows.into_iter().flatten(),
    ))
}

/// Sample covariance `XᵀX / (K - 1)` of centered training rows.
pub fn empirical_covariance(train: &DataMatrix) -> Result<CovarianceModel> {
    empirical_covariance_with(train, Denominator::default())
}

pub fn empirical_covariance_with(train: &DataMatrix, denominator: Denominator) -> Result<CovarianceModel> {
    let k = train.rows();
    if k < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            available: k,
        });
    }
    let split = train.config().observation_dim()?;
    let divisor = match denominator {
        Denominator::SampleCountMinusOne => (k - 1) as f64,
        Denominator::WindowMinusOne => (train.config().window() - 1) as f64,
    };
    let x = train.data();
    let sigma = x.tr_mul(x) / divisor;
    CovarianceModel::from_covariance(symmetrize(sigma), split)
}

/// Ratio of extreme singular values; infinite when the smallest is negligible.
pub fn condition_number(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() || a.is_empty() {
        return Err(Error::argument(format!(
            "condition number needs a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if asymmetry(a) <= SYMMETRY_TOL * a.amax() {
        Ok(symmetric_condition(a))
    } else {
        let sv = a.singular_values();
        Ok(ratio(sv.max(), sv.min()))
    }
}

/// Condition number of a symmetric matrix from its eigenvalue magnitudes.
pub(crate) fn symmetric_condition(a: &DMatrix<f64>) -> f64 {
    let ev = a.symmetric_eigenvalues();
    let (lo, hi) = ev
        .iter()
        .map(|v| v.abs())
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    ratio(hi, lo)
}

fn ratio(hi: f64, lo: f64) -> f64 {
    if !(hi.is_finite() && lo.is_finite()) || lo <= hi * SINGULAR_RATIO {
        f64::INFINITY
    } else {
        hi / lo
    }
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).amax()
}

pub(crate) fn symmetrize(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

fn sorted_eigen(sigma: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sigma.clone());
    let mut order: Vec<usize> = (0..sigma.nrows()).collect();
    // stable, so tied eigenvalues keep the solver's order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(order.len(), order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&k| eig.eigenvectors.column(k).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Leading `L` principal directions of a covariance model.
#[derive(Debug, Clone)]
pub struct Subspace {
    dim: usize,
    basis: DMatrix<f64>,
    observed_basis: DMatrix<f64>,
    energy_fraction: f64,
}

impl Subspace {
    /// Number of retained components `L`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// First `L` eigenvectors (`D x L`).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Observation rows of the basis (`m x L`).
    pub fn observed_basis(&self) -> &DMatrix<f64> {
        &self.observed_basis
    }

    /// Share of total variance carried by the retained eigenvalues.
    pub fn energy_fraction(&self) -> f64 {
        self.energy_fraction
    }
}

pub fn choose_subspace(model: &CovarianceModel, l: usize) -> Result<Subspace> {
    let d = model.dim();
    if l < 1 || l > d {
        return Err(Error::argument(format!("subspace size {l} must satisfy 1 <= L <= D = {d}")));
    }
    let basis = model.eigenvectors.columns(0, l).into_owned();
    let observed_basis = basis.rows(0, model.split).into_owned();
    let total = model.eigenvalues.sum();
    let energy_fraction = if total > 0.0 {
        (model.eigenvalues.rows(0, l).sum() / total).min(1.0)
    } else {
        1.0
    };
    Ok(Subspace {
        dim: l,
        basis,
        observed_basis,
        energy_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{normalize_and_center, WindowConfig};
    use approx::assert_relative_eq;

    #[test]
    fn two_sample_covariance() {
        let cfg = WindowConfig::new(3, 2, 2).unwrap();
        let raw = DMatrix::from_row_slice(2, 3, &[2.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
        let x = normalize_and_center(&raw, cfg).unwrap();
        assert_eq!(x.data(), &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]));
        let model = empirical_covariance(&x).unwrap();
        assert_eq!(model.sigma_xx(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn single_row_is_insufficient() {
        let cfg = WindowConfig::new(3, 2, 2).unwrap();
        let x = normalize_and_center(&DMatrix::from_row_slice(1, 3, &[1., 2., 3.]), cfg).unwrap();
        assert!(matches!(
            empirical_covariance(&x),
            Err(Error::InsufficientData { required: 2, available: 1 })
        ));
    }

    #[test]
    fn denominator_choice() {
        let cfg = WindowConfig::new(3, 2, 2).unwrap();
        let raw = DMatrix::from_row_slice(3, 3, &[1., 1., 1.2, 1.1, 1., 0.9, 0.9, 1., 1.0]);
        let x = normalize_and_center(&raw, cfg).unwrap();
        let a = empirical_covariance(&x).unwrap();
        let b = empirical_covariance_with(&x, Denominator::WindowMinusOne).unwrap();
        // K - 1 = 2 and N - 1 = 2 coincide here
        assert_relative_eq!(a.sigma_xx(), b.sigma_xx());
        let expected = x.data().tr_mul(x.data()) / 2.0;
        assert_relative_eq!(a.sigma_xx(), &expected, epsilon = 1e-15);
    }

    #[test]
    fn condition_examples() {
        assert_eq!(condition_number(&DMatrix::identity(5, 5)).unwrap(), 1.0);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        assert_relative_eq!(condition_number(&d).unwrap(), 4.0, max_relative = 1e-14);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert_eq!(condition_number(&s).unwrap(), f64::INFINITY);
        assert!(condition_number(&DMatrix::zeros(2, 3)).is_err());
        let ns = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 1.0]);
        let sv = ns.singular_values();
        assert_relative_eq!(condition_number(&ns).unwrap(), sv.max() / sv.min(), max_relative = 1e-12);
    }

    #[test]
    fn subspace_energy() {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let model = CovarianceModel::from_covariance(sigma, 1).unwrap();
        assert_relative_eq!(choose_subspace(&model, 1).unwrap().energy_fraction(), 0.75);
        assert_eq!(choose_subspace(&model, 2).unwrap().energy_fraction(), 1.0);
        assert!(choose_subspace(&model, 0).is_err());
        assert!(choose_subspace(&model, 3).is_err());
    }

    #[test]
    fn identity_keeps_natural_order() {
        let model = CovarianceModel::from_covariance(DMatrix::identity(6, 6), 4).unwrap();
        assert_eq!(model.eigenvectors(), &DMatrix::identity(6, 6));
        let sub = choose_subspace(&model, 3).unwrap();
        assert_eq!(sub.observed_basis().nrows(), 4);
    }

    #[test]
    fn rejects_bad_covariances() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(matches!(CovarianceModel::from_covariance(asym, 1), Err(Error::Domain(_))));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(CovarianceModel::from_covariance(indefinite, 1), Err(Error::Domain(_))));
        assert!(CovarianceModel::from_covariance(DMatrix::identity(3, 3), 3).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, 1e-20, 1e-20, 2.5]);
        let back = matrix_from_csv(&matrix_to_csv(&m)).unwrap();
        assert_eq!(m, back);
    }
}
