//! Closed-form and empirical performance measures.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::covariance::{symmetric_condition, CovarianceModel};
use crate::error::{Error, Result};
use crate::estimators::{solve_symmetric, Estimator, Method};

/// Squared-error summary for one estimator, in centered-normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseBreakdown {
    pub method: Method,
    pub theoretical_mse: f64,
    pub empirical_mse: Option<f64>,
    pub bias_sq: f64,
    pub variance: f64,
}

fn check_shapes(model: &CovarianceModel, est: &Estimator) -> Result<()> {
    if est.observation_dim() != model.observation_dim() || est.horizon() != model.horizon() {
        return Err(Error::argument(format!(
            "estimator is {}x{}, model split is {}x{}",
            est.horizon(),
            est.observation_dim(),
            model.horizon(),
            model.observation_dim()
        )));
    }
    Ok(())
}

/// Expected `‖z - ẑ‖²` summed over the horizon, under the model covariance.
pub fn theoretical_mse(model: &CovarianceModel, est: &Estimator) -> Result<f64> {
    check_shapes(model, est)?;
    let base = model.sigma_zz().trace();
    let c = est.coeff();
    Ok(match est.method() {
        Method::Unconditional => base,
        Method::GaussBayes => base - (model.sigma_zy() * c.transpose()).trace(),
        Method::ReducedDimension => linear_mse(model, c),
    })
}

/// `trace(Σ_zz) + trace(C Σ_yy Cᵀ) - 2 trace(Σ_zy Cᵀ)` for any linear map `C`.
pub fn linear_mse(model: &CovarianceModel, coeff: &DMatrix<f64>) -> f64 {
    model.sigma_zz().trace() + (coeff * model.sigma_yy() * coeff.transpose()).trace()
        - 2.0 * (model.sigma_zy() * coeff.transpose()).trace()
}

/// `E‖E[ẑ | z] - z‖²` for `ẑ = C y`: `trace((I - CR) Σ_zz (I - CR)ᵀ)` with
/// `R = Σ_yz Σ_zz⁻¹`. Needs an invertible `Σ_zz`.
pub fn linear_estimator_bias(model: &CovarianceModel, coeff: &DMatrix<f64>) -> Result<f64> {
    let condition = symmetric_condition(model.sigma_zz());
    if !condition.is_finite() {
        return Err(Error::IllConditioned {
            context: "horizon covariance",
            condition,
        });
    }
    // Σ_zz Rᵀ = Σ_zy
    let r_t = solve_symmetric(model.sigma_zz(), model.sigma_zy()).ok_or(Error::IllConditioned {
        context: "horizon covariance",
        condition,
    })?;
    let h = model.horizon();
    let resid = DMatrix::identity(h, h) - coeff * r_t.transpose();
    Ok((&resid * model.sigma_zz() * resid.transpose()).trace())
}

/// Squared bias and variance, summing to the theoretical MSE.
///
/// Gauss-Bayes is reported as unbiased (all of its error is variance) and the
/// unconditional estimator as pure bias. Reduced-dimension uses
/// [`linear_estimator_bias`].
pub fn bias_decomposition(model: &CovarianceModel, est: &Estimator) -> Result<(f64, f64)> {
    let mse = theoretical_mse(model, est)?;
    let bias_sq = match est.method() {
        Method::GaussBayes => 0.0,
        Method::Unconditional => model.sigma_zz().trace(),
        Method::ReducedDimension => linear_estimator_bias(model, est.coeff())?,
    };
    Ok((bias_sq, mse - bias_sq))
}

pub fn mse_breakdown(model: &CovarianceModel, est: &Estimator, empirical_mse: Option<f64>) -> Result<MseBreakdown> {
    let theoretical_mse = theoretical_mse(model, est)?;
    let (bias_sq, variance) = bias_decomposition(model, est)?;
    Ok(MseBreakdown {
        method: est.method(),
        theoretical_mse,
        empirical_mse,
        bias_sq,
        variance,
    })
}

/// Per-day and summed mean squared error over samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMse {
    pub per_day: Vec<f64>,
    pub total: f64,
}

/// `predictions` and `actuals` are `K x H`, one sample per row.
pub fn empirical_mse(predictions: &DMatrix<f64>, actuals: &DMatrix<f64>) -> Result<EmpiricalMse> {
    if predictions.shape() != actuals.shape() {
        return Err(Error::argument(format!(
            "prediction shape {:?} differs from actual shape {:?}",
            predictions.shape(),
            actuals.shape()
        )));
    }
    if predictions.nrows() == 0 {
        return Err(Error::argument("no samples"));
    }
    let k = predictions.nrows() as f64;
    let per_day: Vec<f64> = (0..predictions.ncols())
        .map(|j| {
            predictions
                .column(j)
                .iter()
                .zip(actuals.column(j).iter())
                .map(|(p, a)| (a - p).powi(2))
                .sum::<f64>()
                / k
        })
        .collect();
    let total = per_day.iter().sum();
    Ok(EmpiricalMse { per_day, total })
}

/// Fraction of samples whose forecast moves the same way as the actual
/// price, relative to the last observed price, for each horizon day.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionalReport {
    pub per_day: Vec<f64>,
    pub mean_over_days: f64,
    pub n_samples: usize,
}

/// Scores `1` when `(actual - z0)(forecast - z0) > 0`, else `0`; a flat move
/// on either side scores `0`.
pub fn directional_statistic(
    predictions: &DMatrix<f64>,
    actuals: &DMatrix<f64>,
    z0: &[f64],
) -> Result<DirectionalReport> {
    if predictions.shape() != actuals.shape() || z0.len() != predictions.nrows() {
        return Err(Error::argument(format!(
            "shapes disagree: predictions {:?}, actuals {:?}, {} reference prices",
            predictions.shape(),
            actuals.shape(),
            z0.len()
        )));
    }
    if z0.is_empty() {
        return Err(Error::argument("no samples"));
    }
    if let Some(bad) = z0.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::domain(format!("reference price {bad} is not positive")));
    }
    let k = z0.len();
    let per_day: Vec<f64> = (0..predictions.ncols())
        .map(|j| {
            let hits = (0..k)
                .filter(|&i| (actuals[(i, j)] - z0[i]) * (predictions[(i, j)] - z0[i]) > 0.0)
                .count();
            hits as f64 / k as f64
        })
        .collect();
    let mean_over_days = if per_day.is_empty() {
        0.0
    } else {
        per_day.iter().sum::<f64>() / per_day.len() as f64
    };
    Ok(DirectionalReport {
        per_day,
        mean_over_days,
        n_samples: k,
    })
}

/// Per-day forecast standard deviation: square root of the posterior
/// covariance diagonal, round-off negatives clamped to zero.
pub fn volatility(est: &Estimator) -> DVector<f64> {
    est.posterior_cov().diagonal().map(|v| v.max(0.0).sqrt())
}

/// [`volatility`] converted to price units.
pub fn volatility_scaled(est: &Estimator, scale: f64) -> DVector<f64> {
    volatility(est) * scale
}
