//! Reproducible synthetic inputs: covariances with controlled spectra and
//! price series with known structure. Used by the verification suite, the
//! tests and the benches.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::pipeline::PriceSeries;

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, signs fixed).
pub fn random_orthogonal(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..dim {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// `V diag(spectrum) Vᵀ` with random orthogonal `V`.
pub fn covariance_with_spectrum(spectrum: &[f64], seed: u64) -> DMatrix<f64> {
    let v = random_orthogonal(spectrum.len(), seed);
    let s = DMatrix::from_diagonal(&DVector::from_column_slice(spectrum));
    let sigma = &v * s * v.transpose();
    (&sigma + sigma.transpose()) * 0.5
}

/// Log-spaced eigenvalues from 1 down to `1 / condition`.
pub fn log_spaced_spectrum(dim: usize, condition: f64) -> Vec<f64> {
    if dim == 1 {
        return vec![1.0];
    }
    (0..dim)
        .map(|k| condition.powf(-(k as f64) / (dim - 1) as f64))
        .collect()
}

/// Eigenvalues `ratio^k` for `k = 1..=dim`.
pub fn geometric_spectrum(dim: usize, ratio: f64) -> Vec<f64> {
    (1..=dim).map(|k| ratio.powi(k as i32)).collect()
}

/// 30-dimensional covariance, condition number 100, split 20 / 10.
pub fn oracle_covariance(seed: u64) -> (DMatrix<f64>, usize) {
    (covariance_with_spectrum(&log_spaced_spectrum(30, 100.0), seed), 20)
}

/// 30-dimensional covariance with eigenvalues `2^-k`, split 20 / 10.
pub fn decaying_covariance(seed: u64) -> (DMatrix<f64>, usize) {
    (covariance_with_spectrum(&geometric_spectrum(30, 0.5), seed), 20)
}

/// Prices `exp(a_t)` where `a` is a stationary AR(1) with coefficient `phi`
/// and innovation standard deviation `sigma`, around a level of 100.
pub fn ar1_log_prices(len: usize, phi: f64, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stationary_sd = sigma / (1.0 - phi * phi).sqrt();
    let e0: f64 = StandardNormal.sample(&mut rng);
    let mut a = stationary_sd * e0;
    (0..len)
        .map(|_| {
            let p = 100.0 * a.exp();
            let e: f64 = StandardNormal.sample(&mut rng);
            a = phi * a + sigma * e;
            p
        })
        .collect()
}

/// Exact covariance of one normalized window of [`ar1_log_prices`]: the
/// vector `exp(a_j - a_Q)` over days `j != Q`, for a window of `window` days
/// anchored on day `anchor` (1-based).
pub fn ar1_ratio_covariance(window: usize, anchor: usize, phi: f64, sigma: f64) -> DMatrix<f64> {
    let gamma = |lag: usize| sigma * sigma * phi.powi(lag as i32) / (1.0 - phi * phi);
    let q = anchor - 1;
    let days: Vec<usize> = (0..window).filter(|&j| j != q).collect();
    // d_j = a_j - a_q is Gaussian; exp(d) is lognormal
    let cov_d = |i: usize, j: usize| gamma(i.abs_diff(j)) - gamma(i.abs_diff(q)) - gamma(j.abs_diff(q)) + gamma(0);
    let n = days.len();
    DMatrix::from_fn(n, n, |a, b| {
        let (i, j) = (days[a], days[b]);
        let (vi, vj, c) = (cov_d(i, i), cov_d(j, j), cov_d(i, j));
        ((vi + vj) / 2.0).exp() * (c.exp() - 1.0)
    })
}

/// Parameters of a synthetic equity-like price path.
#[derive(Debug, Clone, Copy)]
pub struct PricePathParams {
    pub start: f64,
    pub drift: f64,
    pub volatility: f64,
    pub cycle_phi: f64,
    pub cycle_sigma: f64,
}

impl Default for PricePathParams {
    fn default() -> Self {
        Self {
            start: 25.0,
            drift: 2e-4,
            volatility: 0.015,
            cycle_phi: 0.97,
            cycle_sigma: 0.004,
        }
    }
}

/// Log price = geometric random walk plus a mean-reverting AR(1) component.
pub fn price_path(len: usize, params: PricePathParams, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walk = params.start.ln();
    let mut cycle = 0.0_f64;
    (0..len)
        .map(|_| {
            let p = (walk + cycle).exp();
            let e1: f64 = StandardNormal.sample(&mut rng);
            let e2: f64 = StandardNormal.sample(&mut rng);
            walk += params.drift + params.volatility * e1;
            cycle = params.cycle_phi * cycle + params.cycle_sigma * e2;
            p
        })
        .collect()
}

/// [`price_path`] wrapped as a series.
pub fn price_series(ticker: &str, len: usize, seed: u64) -> PriceSeries {
    PriceSeries::from_prices(ticker, price_path(len, PricePathParams::default(), seed))
        .expect("synthetic prices are positive")
}

/// Windows in the full-size experiment: 12300 samples of `M + H = 340`
/// days, the last 2200 held out.
pub const GE_STYLE_ROWS: usize = 12_300;

/// Long equity-like series sized for the full experiment at `M = 330`,
/// `H = 10`.
pub fn ge_style_series(seed: u64) -> PriceSeries {
    price_series("GE", GE_STYLE_ROWS + 340 - 1, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn orthogonal_is_orthogonal() {
        let q = random_orthogonal(12, 4);
        assert_relative_eq!(q.tr_mul(&q), DMatrix::identity(12, 12), epsilon = 1e-12);
    }

    #[test]
    fn spectrum_is_reproduced() {
        let spectrum = log_spaced_spectrum(8, 100.0);
        let sigma = covariance_with_spectrum(&spectrum, 1);
        let mut ev: Vec<f64> = sigma.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert_relative_eq!(ev.as_slice(), spectrum.as_slice(), epsilon = 1e-12);
        assert_relative_eq!(ev[0] / ev[7], 100.0, max_relative = 1e-10);
    }

    #[test]
    fn paths_are_positive_and_seeded() {
        let a = price_path(500, PricePathParams::default(), 3);
        assert!(a.iter().all(|p| *p > 0.0));
        assert_eq!(a, price_path(500, PricePathParams::default(), 3));
        assert_eq!(ar1_log_prices(10, 0.5, 0.01, 2), ar1_log_prices(10, 0.5, 0.01, 2));
    }
}
