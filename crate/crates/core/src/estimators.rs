//! Linear-Gaussian point estimators of the horizon block `z` from the
//! observation block `y`.
//!
//! Every estimator reduces to a coefficient matrix applied to the centered
//! observation, together with the posterior covariance it implies:
//!
//! * unconditional: `ẑ = 0`, posterior `Σ_zz`;
//! * Gauss-Bayes: `ẑ = Σ_zy Σ_yy⁻¹ y`, posterior is the Schur complement;
//! * reduced-dimension: `y` is first resolved onto the leading principal
//!   directions, `w = G y` with `G = (V_MLᵀ V_ML)⁻¹ V_MLᵀ`, then
//!   `ẑ = Σ_zw Σ_ww⁻¹ w`.
//!
//! Inverses are never formed; each one is a linear solve.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::covariance::{symmetric_condition, symmetrize, CovarianceModel, Subspace};
use crate::error::{Error, Result};

/// Which estimator produced a forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    #[serde(rename = "UNC")]
    Unconditional,
    #[serde(rename = "GB")]
    GaussBayes,
    #[serde(rename = "RD")]
    ReducedDimension,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Unconditional, Method::GaussBayes, Method::ReducedDimension];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Unconditional => "UNC",
            Method::GaussBayes => "GB",
            Method::ReducedDimension => "RD",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unc" => Ok(Method::Unconditional),
            "gb" => Ok(Method::GaussBayes),
            "rd" => Ok(Method::ReducedDimension),
            other => Err(Error::argument(format!("unknown method `{other}` (expected unc, gb or rd)"))),
        }
    }
}

/// Condition number of the matrix that was inverted, and `L` for RD.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub condition: Option<f64>,
    pub subspace_dim: Option<usize>,
}

/// A fitted linear map from centered observations to centered forecasts.
#[derive(Debug, Clone)]
pub struct Estimator {
    method: Method,
    coeff: DMatrix<f64>,
    posterior_cov: DMatrix<f64>,
    diagnostics: Diagnostics,
}

impl Estimator {
    pub fn method(&self) -> Method {
        self.method
    }

    /// `H x m` coefficient matrix.
    pub fn coeff(&self) -> &DMatrix<f64> {
        &self.coeff
    }

    /// `H x H` posterior covariance.
    pub fn posterior_cov(&self) -> &DMatrix<f64> {
        &self.posterior_cov
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn observation_dim(&self) -> usize {
        self.coeff.ncols()
    }

    pub fn horizon(&self) -> usize {
        self.coeff.nrows()
    }

    /// Replaces the coefficients, keeping everything else. Used to build
    /// deliberately wrong estimators for negative controls.
    pub fn with_coeff(mut self, coeff: DMatrix<f64>) -> Result<Self> {
        if coeff.shape() != self.coeff.shape() {
            return Err(Error::argument(format!(
                "coefficient shape {:?} does not match {:?}",
                coeff.shape(),
                self.coeff.shape()
            )));
        }
        self.coeff = coeff;
        Ok(self)
    }

    /// Centered forecast `coeff · y`.
    pub fn predict(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.coeff.ncols() {
            return Err(Error::argument(format!(
                "observation has length {}, estimator expects {}",
                y.len(),
                self.coeff.ncols()
            )));
        }
        Ok(&self.coeff * y)
    }

    /// Forecasts for every row of a `K x m` observation matrix (`K x H`).
    pub fn predict_rows(&self, ys: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if ys.ncols() != self.coeff.ncols() {
            return Err(Error::argument(format!(
                "observations have {} columns, estimator expects {}",
                ys.ncols(),
                self.coeff.ncols()
            )));
        }
        Ok(ys * self.coeff.transpose())
    }
}

/// The training mean: zero forecast in centered units, posterior `Σ_zz`.
pub fn fit_unconditional(model: &CovarianceModel) -> Estimator {
    Estimator {
        method: Method::Unconditional,
        coeff: DMatrix::zeros(model.horizon(), model.observation_dim()),
        posterior_cov: model.sigma_zz().clone(),
        diagnostics: Diagnostics::default(),
    }
}

/// Conditional mean of `z` given `y`.
///
/// Runs in the ill-conditioned regime and records `cond(Σ_yy)`; only an
/// exactly singular `Σ_yy` is an error.
pub fn fit_gauss_bayes(model: &CovarianceModel) -> Result<Estimator> {
    let condition = model.condition_yy();
    if !condition.is_finite() {
        return Err(Error::IllConditioned {
            context: "observation covariance",
            condition,
        });
    }
    // Σ_yy Dᵀ = Σ_yz
    let coeff_t = solve_symmetric(model.sigma_yy(), model.sigma_yz()).ok_or(Error::IllConditioned {
        context: "observation covariance",
        condition,
    })?;
    let coeff = coeff_t.transpose();
    let posterior_cov = symmetrize(model.sigma_zz() - &coeff * model.sigma_yz());
    Ok(Estimator {
        method: Method::GaussBayes,
        coeff,
        posterior_cov,
        diagnostics: Diagnostics {
            condition: Some(condition),
            subspace_dim: None,
        },
    })
}

/// Least-squares filter onto a principal subspace and the covariances of its
/// output `w = G y`.
#[derive(Debug, Clone)]
pub struct ProjectionOperator {
    filter: DMatrix<f64>,
    observed_basis: DMatrix<f64>,
    sigma_ww: DMatrix<f64>,
    sigma_zw: DMatrix<f64>,
}

impl ProjectionOperator {
    /// `G`, `L x m`.
    pub fn filter(&self) -> &DMatrix<f64> {
        &self.filter
    }

    /// `V_ML`, `m x L`.
    pub fn observed_basis(&self) -> &DMatrix<f64> {
        &self.observed_basis
    }

    /// `G Σ_yy Gᵀ`.
    pub fn sigma_ww(&self) -> &DMatrix<f64> {
        &self.sigma_ww
    }

    /// `Σ_zy Gᵀ`.
    pub fn sigma_zw(&self) -> &DMatrix<f64> {
        &self.sigma_zw
    }

    pub fn dim(&self) -> usize {
        self.filter.nrows()
    }

    /// `cond(Σ_ww)`.
    pub fn condition(&self) -> f64 {
        symmetric_condition(&self.sigma_ww)
    }

    /// Subspace coordinates `w = G y`.
    pub fn apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.filter.ncols() {
            return Err(Error::argument(format!(
                "observation has length {}, filter expects {}",
                y.len(),
                self.filter.ncols()
            )));
        }
        Ok(&self.filter * y)
    }
}

pub fn build_projection(model: &CovarianceModel, sub: &Subspace) -> Result<ProjectionOperator> {
    let m = model.observation_dim();
    if sub.dim() > m {
        return Err(Error::argument(format!(
            "subspace size {} exceeds observation length {m}",
            sub.dim()
        )));
    }
    let v_ml = sub.observed_basis();
    if v_ml.nrows() != m {
        return Err(Error::argument("subspace was built for a different split"));
    }
    let gram = symmetrize(v_ml.tr_mul(v_ml));
    let gram_condition = symmetric_condition(&gram);
    if !gram_condition.is_finite() {
        return Err(Error::IllConditioned {
            context: "subspace Gram matrix",
            condition: gram_condition,
        });
    }
    let filter = solve_symmetric(&gram, &v_ml.transpose()).ok_or(Error::IllConditioned {
        context: "subspace Gram matrix",
        condition: gram_condition,
    })?;
    let sigma_ww = symmetrize(&filter * model.sigma_yy() * filter.transpose());
    let sigma_zw = model.sigma_zy() * filter.transpose();
    Ok(ProjectionOperator {
        filter,
        observed_basis: v_ml.clone(),
        sigma_ww,
        sigma_zw,
    })
}

/// Conditional mean of `z` given the filtered observation `w`, expressed as
/// one `H x m` map `C = Σ_zw Σ_ww⁻¹ G`.
pub fn fit_reduced_dimension(model: &CovarianceModel, proj: &ProjectionOperator) -> Result<Estimator> {
    if proj.filter.ncols() != model.observation_dim() || proj.sigma_zw.nrows() != model.horizon() {
        return Err(Error::argument("projection was built for a different model"));
    }
    let condition = proj.condition();
    if !condition.is_finite() {
        return Err(Error::IllConditioned {
            context: "projected covariance",
            condition,
        });
    }
    // Σ_ww Kᵀ = Σ_wz
    let gain_t = solve_symmetric(&proj.sigma_ww, &proj.sigma_zw.transpose()).ok_or(Error::IllConditioned {
        context: "projected covariance",
        condition,
    })?;
    let gain = gain_t.transpose();
    let coeff = &gain * &proj.filter;
    let posterior_cov = symmetrize(model.sigma_zz() - &gain * proj.sigma_zw.transpose());
    Ok(Estimator {
        method: Method::ReducedDimension,
        coeff,
        posterior_cov,
        diagnostics: Diagnostics {
            condition: Some(condition),
            subspace_dim: Some(proj.dim()),
        },
    })
}

/// Subspace, projection and RD fit for `L` leading components in one call.
pub fn fit_reduced_dimension_with(model: &CovarianceModel, l: usize) -> Result<(Estimator, ProjectionOperator)> {
    let sub = crate::covariance::choose_subspace(model, l)?;
    let proj = build_projection(model, &sub)?;
    let est = fit_reduced_dimension(model, &proj)?;
    Ok((est, proj))
}

/// Solves `A X = B` for symmetric `A`: Cholesky first, LU if `A` is not
/// numerically positive definite.
pub(crate) fn solve_symmetric(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(chol) = a.clone().cholesky() {
        let x = chol.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    a.clone().lu().solve(b).filter(|x| x.iter().all(|v| v.is_finite()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::choose_subspace;
    use approx::assert_relative_eq;

    fn two_by_two() -> CovarianceModel {
        CovarianceModel::from_covariance(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]), 1).unwrap()
    }

    #[test]
    fn unconditional_is_zero_map() {
        let model = two_by_two();
        let est = fit_unconditional(&model);
        assert_eq!(est.posterior_cov(), model.sigma_zz());
        assert_eq!(est.predict(&DVector::from_vec(vec![3.0])).unwrap()[0], 0.0);
    }

    #[test]
    fn gauss_bayes_closed_form() {
        let est = fit_gauss_bayes(&two_by_two()).unwrap();
        assert_relative_eq!(est.coeff()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(est.posterior_cov()[(0, 0)], 0.75, epsilon = 1e-15);
        assert_relative_eq!(est.predict(&DVector::from_vec(vec![2.0])).unwrap()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn gauss_bayes_independent_blocks() {
        let model = CovarianceModel::from_covariance(DMatrix::identity(5, 5), 3).unwrap();
        let est = fit_gauss_bayes(&model).unwrap();
        assert_eq!(est.coeff(), &DMatrix::zeros(2, 3));
        assert_eq!(est.posterior_cov(), model.sigma_zz());
    }

    #[test]
    fn gauss_bayes_singular_errors() {
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0, 1.0]));
        let model = CovarianceModel::from_covariance(s, 2).unwrap();
        assert!(matches!(fit_gauss_bayes(&model), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn orthonormal_basis_gives_transpose_filter() {
        let model = CovarianceModel::from_covariance(DMatrix::identity(5, 5), 3).unwrap();
        let sub = choose_subspace(&model, 2).unwrap();
        let proj = build_projection(&model, &sub).unwrap();
        assert_relative_eq!(proj.filter(), &sub.observed_basis().transpose(), epsilon = 1e-15);
    }

    #[test]
    fn reduced_on_identity_collapses_to_unconditional() {
        let model = CovarianceModel::from_covariance(DMatrix::identity(5, 5), 3).unwrap();
        let (est, _) = fit_reduced_dimension_with(&model, 1).unwrap();
        assert_eq!(est.coeff(), &DMatrix::zeros(2, 3));
        assert_eq!(est.posterior_cov(), model.sigma_zz());
        assert_eq!(est.diagnostics().subspace_dim, Some(1));
    }

    #[test]
    fn oversize_subspace_rejected() {
        let model = CovarianceModel::from_covariance(DMatrix::identity(5, 5), 2).unwrap();
        let sub = choose_subspace(&model, 3).unwrap();
        assert!(matches!(build_projection(&model, &sub), Err(Error::Argument(_))));
    }

    #[test]
    fn rank_deficient_basis_rejected() {
        // leading eigenvector lives entirely in the horizon block
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 5.0]));
        let model = CovarianceModel::from_covariance(s, 2).unwrap();
        let sub = choose_subspace(&model, 1).unwrap();
        assert!(matches!(build_projection(&model, &sub), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn predict_length_checked() {
        let est = fit_gauss_bayes(&two_by_two()).unwrap();
        assert!(matches!(est.predict(&DVector::zeros(2)), Err(Error::Argument(_))));
    }

    #[test]
    fn method_parsing() {
        assert_eq!("RD".parse::<Method>().unwrap(), Method::ReducedDimension);
        assert!("xx".parse::<Method>().is_err());
    }
}
