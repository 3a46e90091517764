//! Price ingestion and the normalized, centered Hankel data matrix.
//!
//! A price series is cut into overlapping windows of `N` trading days (one row
//! per one-day shift). Each row is divided by its own price on the anchor day
//! `Q`, the column means are removed, and the anchor column, which is
//! identically one before centering, is dropped. The first `M - 1` remaining
//! columns are the observation block and the last `N - M` columns the horizon.

use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ordered end-of-day prices with their calendar labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    ticker: String,
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series, requiring strictly increasing dates and positive prices.
    pub fn new(ticker: impl Into<String>, dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(Error::argument(format!(
                "{} dates but {} prices",
                dates.len(),
                prices.len()
            )));
        }
        if let Some((i, p)) = prices
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(Error::domain(format!("price {p} at position {i} is not positive")));
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::domain(format!(
                "dates not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            ticker: ticker.into(),
            dates,
            prices,
        })
    }

    /// Series with synthetic consecutive daily labels starting 2000-01-03.
    pub fn from_prices(ticker: impl Into<String>, prices: Vec<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
        let dates = (0..prices.len())
            .map(|i| start.checked_add_days(Days::new(i as u64)).expect("date in range"))
            .collect();
        Self::new(ticker, dates, prices)
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

/// Reads a `date,close` CSV file. See [`parse_csv`].
pub fn load_csv(path: impl AsRef<Path>, ticker: &str) -> Result<PriceSeries> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, ticker)
}

/// Parses `YYYY-MM-DD,<price>` lines with an optional `date,close` header.
///
/// Rows are sorted by date; duplicate dates are rejected.
pub fn parse_csv(text: &str, ticker: &str) -> Result<PriceSeries> {
    let mut rows: Vec<(NaiveDate, f64, usize)> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        if rows.is_empty() && line.eq_ignore_ascii_case("date,close") {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(date_field), Some(close_field), None) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected `date,close`, got `{line}`"),
            });
        };
        let date = NaiveDate::parse_from_str(date_field.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad date `{}`: {e}", date_field.trim()),
        })?;
        let close: f64 = close_field.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad price `{}`", close_field.trim()),
        })?;
        if !(close.is_finite() && close > 0.0) {
            return Err(Error::domain(format!(
                "non-positive price {close} on line {line_no}"
            )));
        }
        rows.push((date, close, line_no));
    }
    if rows.len() < 2 {
        return Err(Error::InsufficientData {
            required: 2,
            available: rows.len(),
        });
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::domain(format!(
            "duplicate date {} on lines {} and {}",
            w[0].0, w[0].2, w[1].2
        )));
    }
    let (dates, prices) = rows.into_iter().map(|(d, p, _)| (d, p)).unzip();
    PriceSeries::new(ticker, dates, prices)
}

/// Window geometry: `window` days in total, the first `observed` of which are
/// known, normalized by the price on day `anchor` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct WindowConfig {
    window: usize,
    observed: usize,
    anchor: usize,
}

impl WindowConfig {
    pub fn new(window: usize, observed: usize, anchor: usize) -> Result<Self> {
        if observed < 1 || observed >= window {
            return Err(Error::argument(format!(
                "observation length {observed} must satisfy 1 <= M < N = {window}"
            )));
        }
        if anchor < 1 || anchor > window {
            return Err(Error::argument(format!(
                "anchor day {anchor} must satisfy 1 <= Q <= N = {window}"
            )));
        }
        Ok(Self {
            window,
            observed,
            anchor,
        })
    }

    /// `M` observed days, `horizon` forecast days, anchored on day `M`.
    pub fn with_horizon(observed: usize, horizon: usize) -> Result<Self> {
        Self::new(observed + horizon, observed, observed)
    }

    /// Total window length `N`.
    pub fn window(&self) -> usize {
        self.window
    }

    /// Observation length `M`.
    pub fn observed(&self) -> usize {
        self.observed
    }

    /// Normalization day `Q` (1-based).
    pub fn anchor(&self) -> usize {
        self.anchor
    }

    /// Forecast horizon `H = N - M`.
    pub fn horizon(&self) -> usize {
        self.window - self.observed
    }

    /// Length of the normalized observation block once the anchor column is
    /// gone. Requires the anchor to lie inside the observed days; otherwise the
    /// scale would be a future price.
    pub fn observation_dim(&self) -> Result<usize> {
        if self.anchor > self.observed {
            return Err(Error::argument(format!(
                "anchor day {} lies beyond the observed {} days",
                self.anchor, self.observed
            )));
        }
        Ok(self.observed - 1)
    }
}

/// Stacks every one-day shifted window: row `i` is `prices[i..i + window]`.
pub fn build_hankel(prices: &[f64], window: usize, rows: usize) -> Result<DMatrix<f64>> {
    if window == 0 || rows == 0 {
        return Err(Error::argument("window length and row count must be positive"));
    }
    let required = rows + window - 1;
    if prices.len() < required {
        return Err(Error::InsufficientData {
            required,
            available: prices.len(),
        });
    }
    Ok(DMatrix::from_fn(rows, window, |i, j| prices[i + j]))
}

/// Normalized, centered samples plus everything needed to undo the transform.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    data: DMatrix<f64>,
    mean: DVector<f64>,
    scales: Vec<f64>,
    config: WindowConfig,
    first_row: usize,
}

impl DataMatrix {
    /// `K x (N - 1)` centered matrix.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Column means that were removed (normalized units).
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Per-row anchor prices `t_i(Q)`.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn config(&self) -> &WindowConfig {
        &self.config
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    /// 1-based index (in the original window) of the removed unit column.
    pub fn dropped_col(&self) -> usize {
        self.config.anchor
    }

    /// Series offset of the first row's first day.
    pub fn first_row(&self) -> usize {
        self.first_row
    }

    /// Series offsets of each row's first day.
    pub fn row_starts(&self) -> impl Iterator<Item = usize> + '_ {
        self.first_row..self.first_row + self.rows()
    }

    /// Centered observation block `y` for every row (`K x m`).
    pub fn observations(&self) -> Result<DMatrix<f64>> {
        let m = self.config.observation_dim()?;
        Ok(self.data.columns(0, m).into_owned())
    }

    /// Centered horizon block `z` for every row (`K x H`).
    pub fn targets(&self) -> Result<DMatrix<f64>> {
        let m = self.config.observation_dim()?;
        Ok(self.data.columns(m, self.data.ncols() - m).into_owned())
    }

    /// Recovers the raw prices of row `i`, reinserting the anchor day.
    pub fn denormalize_row(&self, i: usize) -> Vec<f64> {
        let q = self.config.anchor - 1;
        let scale = self.scales[i];
        let mut out = Vec::with_capacity(self.config.window);
        for j in 0..self.data.ncols() {
            if j == q {
                out.push(scale);
            }
            out.push((self.data[(i, j)] + self.mean[j]) * scale);
        }
        if q == self.data.ncols() {
            out.push(scale);
        }
        out
    }

    fn subset(&self, start: usize, len: usize, mean: &DVector<f64>) -> DataMatrix {
        let normalized = self.data.rows(start, len).into_owned()
            + DMatrix::from_fn(len, self.data.ncols(), |_, j| self.mean[j]);
        let data = DMatrix::from_fn(len, self.data.ncols(), |i, j| normalized[(i, j)] - mean[j]);
        DataMatrix {
            data,
            mean: mean.clone(),
            scales: self.scales[start..start + len].to_vec(),
            config: self.config,
            first_row: self.first_row + start,
        }
    }
}

/// Divides each row by its anchor-day entry, removes the column means and
/// drops the anchor column.
pub fn normalize_and_center(raw: &DMatrix<f64>, config: WindowConfig) -> Result<DataMatrix> {
    normalize_and_center_from(raw, config, 0)
}

/// As [`normalize_and_center`], recording that row 0 starts at series offset
/// `first_row`.
pub fn normalize_and_center_from(
    raw: &DMatrix<f64>,
    config: WindowConfig,
    first_row: usize,
) -> Result<DataMatrix> {
    if raw.ncols() != config.window {
        return Err(Error::argument(format!(
            "raw matrix has {} columns, window is {}",
            raw.ncols(),
            config.window
        )));
    }
    if raw.nrows() == 0 {
        return Err(Error::InsufficientData {
            required: 1,
            available: 0,
        });
    }
    let q = config.anchor - 1;
    let k = raw.nrows();
    let d = config.window - 1;
    let mut scales = Vec::with_capacity(k);
    let mut normalized = DMatrix::zeros(k, d);
    for i in 0..k {
        let scale = raw[(i, q)];
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::domain(format!(
                "row {i} has non-positive anchor value {scale}"
            )));
        }
        scales.push(scale);
        for (dst, j) in (0..config.window).filter(|&j| j != q).enumerate() {
            normalized[(i, dst)] = raw[(i, j)] / scale;
        }
    }
    let mean = column_means(&normalized);
    for mut row in normalized.row_iter_mut() {
        for (x, mu) in row.iter_mut().zip(mean.iter()) {
            *x -= mu;
        }
    }
    Ok(DataMatrix {
        data: normalized,
        mean,
        scales,
        config,
        first_row,
    })
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let k = m.nrows() as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / k))
}

/// Chronological split: the last `n_test` rows are the test set. Centering is
/// recomputed from the training rows and applied unchanged to the test rows.
pub fn split_train_test(x: &DataMatrix, n_test: usize) -> Result<(DataMatrix, DataMatrix)> {
    let k = x.rows();
    if n_test == 0 || n_test >= k {
        return Err(Error::argument(format!(
            "test size {n_test} must satisfy 0 < n_test < K = {k}"
        )));
    }
    let n_train = k - n_test;
    let train_normalized = x.data.rows(0, n_train).into_owned()
        + DMatrix::from_fn(n_train, x.data.ncols(), |_, j| x.mean[j]);
    let train_mean = column_means(&train_normalized);
    Ok((x.subset(0, n_train, &train_mean), x.subset(n_train, n_test, &train_mean)))
}

/// Maps a centered-normalized forecast back to prices: `(zhat + mean tail) * scale`.
pub fn denormalize_forecast(zhat: &DVector<f64>, mean: &DVector<f64>, scale: f64) -> Result<DVector<f64>> {
    let h = zhat.len();
    if mean.len() < h {
        return Err(Error::argument(format!(
            "mean has {} components, forecast needs {h}",
            mean.len()
        )));
    }
    let tail = mean.rows(mean.len() - h, h);
    Ok((zhat + tail) * scale)
}

/// Turns the last `M` raw prices into a centered observation vector using
/// training statistics. Returns the vector and the anchor price.
pub fn prepare_observation(
    window_prices: &[f64],
    config: &WindowConfig,
    mean: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let m = config.observation_dim()?;
    if window_prices.len() != config.observed {
        return Err(Error::argument(format!(
            "observation needs {} prices, got {}",
            config.observed,
            window_prices.len()
        )));
    }
    if mean.len() < m {
        return Err(Error::argument("mean shorter than the observation block"));
    }
    let q = config.anchor - 1;
    let scale = window_prices[q];
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::domain(format!("non-positive anchor price {scale}")));
    }
    let y = window_prices
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != q)
        .zip(mean.iter())
        .map(|((_, p), mu)| p / scale - mu);
    Ok((DVector::from_iterator(m, y), scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn csv_parses_and_sorts() {
        let a = parse_csv("2020-01-02,10.0\n2020-01-03,10.5", "T").unwrap();
        assert_eq!(a.prices(), &[10.0, 10.5]);
        let b = parse_csv("date,close\n2020-01-03,10.5\n2020-01-02,10.0\n", "T").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            parse_csv("2020-01-02,-3\n2020-01-03,1", "T"),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            parse_csv("2020-01-02,1\n2020-01-03;1\n", "T"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_csv("2020-01-02,1\n", "T"),
            Err(Error::InsufficientData { required: 2, available: 1 })
        ));
        assert!(matches!(
            parse_csv("2020-01-02,1\n2020-01-02,2\n", "T"),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            parse_csv("2020-13-02,1\n2020-01-02,2\n", "T"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn hankel_layout() {
        let h = build_hankel(&[1.0, 2.0, 3.0, 4.0, 5.0], 3, 3).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(3, 3, &[1., 2., 3., 2., 3., 4., 3., 4., 5.]));
        assert_eq!(build_hankel(&[7.0], 1, 1).unwrap(), DMatrix::from_element(1, 1, 7.0));
        assert!(matches!(
            build_hankel(&[1.0, 2.0, 3.0], 3, 2),
            Err(Error::InsufficientData { required: 4, available: 3 })
        ));
    }

    #[test]
    fn single_row_centering() {
        let raw = DMatrix::from_row_slice(1, 3, &[2.0, 4.0, 8.0]);
        let cfg = WindowConfig::new(3, 2, 2).unwrap();
        let x = normalize_and_center(&raw, cfg).unwrap();
        assert_eq!(x.data(), &DMatrix::zeros(1, 2));
        assert_eq!(x.mean().as_slice(), &[0.5, 2.0]);
        assert_eq!(x.scales(), &[4.0]);
        assert_eq!(x.denormalize_row(0), vec![2.0, 4.0, 8.0]);
    }

    #[test]
    fn ratio_rows_and_arithmetic() {
        let cfg = WindowConfig::new(2, 1, 1).unwrap();
        let x = normalize_and_center(&DMatrix::from_row_slice(2, 2, &[1., 2., 3., 6.]), cfg).unwrap();
        assert_eq!(x.data(), &DMatrix::zeros(2, 1));
        assert_eq!(x.mean().as_slice(), &[2.0]);

        let x = normalize_and_center(&DMatrix::from_row_slice(2, 2, &[1., 2., 1., 4.]), cfg).unwrap();
        assert_eq!(x.mean().as_slice(), &[3.0]);
        assert_eq!(x.data().as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn anchor_must_be_positive() {
        let cfg = WindowConfig::new(2, 1, 1).unwrap();
        let raw = DMatrix::from_row_slice(2, 2, &[1., 2., 0., 4.]);
        assert!(matches!(normalize_and_center(&raw, cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn split_sizes_and_errors() {
        let prices: Vec<f64> = (0..110).map(|i| 100.0 + (i as f64 * 0.7).sin()).collect();
        let cfg = WindowConfig::with_horizon(8, 3).unwrap();
        let raw = build_hankel(&prices, cfg.window(), 100).unwrap();
        let x = normalize_and_center(&raw, cfg).unwrap();
        let (train, test) = split_train_test(&x, 20).unwrap();
        assert_eq!((train.rows(), test.rows()), (80, 20));
        assert!(train.row_starts().max().unwrap() < test.row_starts().min().unwrap());
        assert!(matches!(split_train_test(&x, 100), Err(Error::Argument(_))));
        assert!(matches!(split_train_test(&x, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn denormalize_examples() {
        let z = denormalize_forecast(
            &DVector::zeros(2),
            &DVector::from_vec(vec![0.9, 1.01, 1.02]),
            100.0,
        )
        .unwrap();
        assert_relative_eq!(z.as_slice(), [101.0, 102.0].as_slice(), max_relative = 1e-14);
        let z = denormalize_forecast(
            &DVector::from_vec(vec![0.01, -0.02]),
            &DVector::from_vec(vec![1.0, 1.0]),
            10.0,
        )
        .unwrap();
        assert_relative_eq!(z.as_slice(), [10.1, 9.8].as_slice(), max_relative = 1e-14);
        assert!(denormalize_forecast(&DVector::zeros(3), &DVector::zeros(2), 1.0).is_err());
    }

    #[test]
    fn observation_matches_matrix_row() {
        let prices: Vec<f64> = (0..40).map(|i| 50.0 * (1.0 + 0.01 * (i as f64).cos())).collect();
        let cfg = WindowConfig::with_horizon(6, 2).unwrap();
        let raw = build_hankel(&prices, cfg.window(), 30).unwrap();
        let x = normalize_and_center(&raw, cfg).unwrap();
        let (y, scale) = prepare_observation(&prices[4..10], &cfg, x.mean()).unwrap();
        let expected = x.observations().unwrap().row(4).transpose();
        assert_relative_eq!(y, expected, epsilon = 1e-14);
        assert_eq!(scale, prices[9]);
    }

    #[test]
    fn anchor_beyond_observation_rejected() {
        let cfg = WindowConfig::new(5, 2, 4).unwrap();
        assert!(cfg.observation_dim().is_err());
        assert!(WindowConfig::new(5, 5, 1).is_err());
        assert!(WindowConfig::new(5, 2, 6).is_err());
    }
}
