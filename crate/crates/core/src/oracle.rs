//! Monte-Carlo ground truth for the closed-form estimator quantities.
//!
//! Draws come in fixed-size chunks, each from its own ChaCha stream keyed by
//! `(seed, chunk index)`, so results do not depend on how chunks are scheduled.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::covariance::{matrix_from_csv, symmetric_condition, symmetrize};
use crate::error::{Error, Result};
use crate::estimators::{solve_symmetric, Estimator};
use crate::par;

const CHUNK: usize = 4096;
const BIAS_CHUNK: usize = 512;
/// Conditional observations drawn per horizon draw in [`mc_bias`].
pub const BIAS_INNER_DRAWS: usize = 10;
const BIAS_STREAM_OFFSET: u64 = 1 << 32;
const PSD_TOL: f64 = 1e-10;

/// A multivariate Gaussian with a fixed seed.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    true_cov: DMatrix<f64>,
    true_mean: DVector<f64>,
    seed: u64,
    factor: DMatrix<f64>,
}

impl GaussianSpec {
    pub fn new(true_cov: DMatrix<f64>, true_mean: DVector<f64>, seed: u64) -> Result<Self> {
        if !true_cov.is_square() || true_cov.is_empty() {
            return Err(Error::argument("covariance must be a non-empty square matrix"));
        }
        if true_mean.len() != true_cov.nrows() {
            return Err(Error::argument(format!(
                "mean has length {}, covariance is {}x{}",
                true_mean.len(),
                true_cov.nrows(),
                true_cov.ncols()
            )));
        }
        let factor = psd_sqrt(&true_cov)?;
        Ok(Self {
            true_cov,
            true_mean,
            seed,
            factor,
        })
    }

    /// Zero-mean Gaussian.
    pub fn centered(true_cov: DMatrix<f64>, seed: u64) -> Result<Self> {
        let d = true_cov.nrows();
        Self::new(true_cov, DVector::zeros(d), seed)
    }

    /// Zero-mean Gaussian with covariance read from a CSV matrix file.
    pub fn from_csv(path: impl AsRef<Path>, seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::centered(matrix_from_csv(&text)?, seed)
    }

    pub fn dim(&self) -> usize {
        self.true_cov.nrows()
    }

    pub fn true_cov(&self) -> &DMatrix<f64> {
        &self.true_cov
    }

    pub fn true_mean(&self) -> &DVector<f64> {
        &self.true_mean
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same distribution, different seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// `D x count` block of draws for one chunk.
    fn chunk(&self, index: usize, count: usize) -> DMatrix<f64> {
        let mut rng = stream_rng(self.seed, index as u64);
        let eps = normals(&mut rng, self.dim(), count);
        let mut x = &self.factor * eps;
        for mut col in x.column_iter_mut() {
            col += &self.true_mean;
        }
        x
    }
}

/// Symmetric square root `V diag(√s) Vᵀ` of a PSD matrix.
fn psd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = a.amax();
    if (a - a.transpose()).amax() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::domain("covariance is not symmetric"));
    }
    let eig = SymmetricEigen::new(symmetrize(a.clone()));
    let top = eig.eigenvalues.max().max(0.0);
    if eig.eigenvalues.min() < -PSD_TOL * top.max(f64::MIN_POSITIVE) {
        return Err(Error::domain(format!(
            "covariance is not positive semidefinite (eigenvalue {:e})",
            eig.eigenvalues.min()
        )));
    }
    let roots = eig.eigenvalues.map(|s| s.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normals(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn chunk_sizes(n: usize, chunk: usize) -> Vec<usize> {
    (0..n.div_ceil(chunk))
        .map(|c| chunk.min(n - c * chunk))
        .collect()
}

/// `n x D` matrix of i.i.d. draws, one per row.
pub fn sample(spec: &GaussianSpec, n: usize) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::argument("sample count must be positive"));
    }
    let sizes = chunk_sizes(n, CHUNK);
    let blocks = par::map_range(0..sizes.len(), |c| spec.chunk(c, sizes[c]));
    let mut out = DMatrix::zeros(n, spec.dim());
    let mut row = 0;
    for block in blocks {
        let count = block.ncols();
        out.rows_mut(row, count).copy_from(&block.transpose());
        row += count;
    }
    Ok(out)
}

/// Mean of i.i.d. values with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleStats {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl SampleStats {
    /// Standard error is infinite for fewer than two values.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_error = if n < 2 {
            f64::INFINITY
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { mean, std_error, n }
    }

    /// Stats of the paired differences `a[i] - b[i]`.
    pub fn of_difference(a: &[f64], b: &[f64]) -> Self {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Self::from_values(&diff)
    }
}

fn check_split(spec: &GaussianSpec, est: &Estimator, split: usize) -> Result<()> {
    if split == 0 || split >= spec.dim() {
        return Err(Error::argument(format!(
            "split {split} must satisfy 0 < m < D = {}",
            spec.dim()
        )));
    }
    if est.observation_dim() != split || est.horizon() != spec.dim() - split {
        return Err(Error::argument(format!(
            "estimator is {}x{} but the split gives {}x{split}",
            est.horizon(),
            est.observation_dim(),
            spec.dim() - split
        )));
    }
    Ok(())
}

/// Per-draw squared errors `‖z - ẑ‖²` for each estimator over the same `n`
/// draws; indexed `[estimator][draw]`.
pub fn mc_losses(spec: &GaussianSpec, ests: &[&Estimator], split: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::argument("sample count must be positive"));
    }
    for est in ests {
        check_split(spec, est, split)?;
    }
    let h = spec.dim() - split;
    let mean_y = spec.true_mean.rows(0, split).into_owned();
    let mean_z = spec.true_mean.rows(split, h).into_owned();
    let sizes = chunk_sizes(n, CHUNK);
    let per_chunk = par::map_range(0..sizes.len(), |c| {
        let x = spec.chunk(c, sizes[c]);
        let mut y = x.rows(0, split).into_owned();
        for mut col in y.column_iter_mut() {
            col -= &mean_y;
        }
        let z = x.rows(split, h);
        ests.iter()
            .map(|est| {
                let pred = est.coeff() * &y;
                (0..x.ncols())
                    .map(|b| (z.column(b) - pred.column(b) - &mean_z).norm_squared())
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    });
    let mut out = vec![Vec::with_capacity(n); ests.len()];
    for chunk in per_chunk {
        for (dst, losses) in out.iter_mut().zip(chunk) {
            dst.extend(losses);
        }
    }
    Ok(out)
}

/// Monte-Carlo estimate of `E‖z - ẑ‖²` from `n` fresh draws.
///
/// Forecasts are `mean_z + coeff (y - mean_y)`.
pub fn mc_mse(spec: &GaussianSpec, est: &Estimator, split: usize, n: usize) -> Result<SampleStats> {
    let losses = mc_losses(spec, &[est], split, n)?;
    Ok(SampleStats::from_values(&losses[0]))
}

/// Monte-Carlo estimate of the squared bias `E‖E[ẑ | z] - z‖²`.
///
/// Draws `n / BIAS_INNER_DRAWS` horizon vectors `z`, and for each one
/// `BIAS_INNER_DRAWS` observations from the reverse conditional `y | z`. The
/// squared distance of the group-mean forecast from `z` is corrected by the
/// within-group variance so every group contributes an unbiased term.
pub fn mc_bias(spec: &GaussianSpec, est: &Estimator, split: usize, n: usize) -> Result<SampleStats> {
    check_split(spec, est, split)?;
    let d = spec.dim();
    let h = d - split;
    let sigma = &spec.true_cov;
    let s_yy = sigma.view((0, 0), (split, split)).into_owned();
    let s_zy = sigma.view((split, 0), (h, split)).into_owned();
    let s_zz = sigma.view((split, split), (h, h)).into_owned();
    let condition = symmetric_condition(&s_zz);
    if !condition.is_finite() {
        return Err(Error::IllConditioned {
            context: "horizon covariance",
            condition,
        });
    }
    // Σ_zz Rᵀ = Σ_zy, so R = Σ_yz Σ_zz⁻¹
    let r_t = solve_symmetric(&s_zz, &s_zy).ok_or(Error::IllConditioned {
        context: "horizon covariance",
        condition,
    })?;
    let r = r_t.transpose();
    let cond_cov = symmetrize(&s_yy - &r * &s_zy);
    // round-off can leave tiny negative eigenvalues in the conditional covariance
    let cond_factor = psd_sqrt(&clamp_psd(&cond_cov))?;
    let z_factor = psd_sqrt(&s_zz)?;

    let groups = (n / BIAS_INNER_DRAWS).max(1);
    let sizes = chunk_sizes(groups, BIAS_CHUNK);
    let coeff = est.coeff();
    let per_chunk = par::map_range(0..sizes.len(), |c| {
        let mut rng = stream_rng(spec.seed, BIAS_STREAM_OFFSET + c as u64);
        (0..sizes[c])
            .map(|_| {
                let z_dev = &z_factor * normals(&mut rng, h, 1);
                let y_center = &r * &z_dev;
                let eps = normals(&mut rng, split, BIAS_INNER_DRAWS);
                let mut y_dev = &cond_factor * eps;
                for mut col in y_dev.column_iter_mut() {
                    col += &y_center;
                }
                // forecasts relative to mean_z, so the target is z_dev
                let preds = coeff * y_dev;
                let avg = preds.column_mean();
                let spread: f64 = preds
                    .column_iter()
                    .map(|p| (p - &avg).norm_squared())
                    .sum::<f64>()
                    / (BIAS_INNER_DRAWS - 1) as f64;
                (&avg - z_dev.column(0)).norm_squared() - spread / BIAS_INNER_DRAWS as f64
            })
            .collect::<Vec<f64>>()
    });
    let values: Vec<f64> = per_chunk.into_iter().flatten().collect();
    Ok(SampleStats::from_values(&values))
}

fn clamp_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&eig.eigenvalues.map(|s| s.max(0.0))) * v.transpose()
}
