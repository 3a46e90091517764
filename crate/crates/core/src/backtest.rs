//! Out-of-sample experiments over observation lengths and condition caps.
//!
//! For each observation length `M` the series is cut into windows of
//! `N = M + H` days anchored on day `M`, split chronologically, and the
//! covariance is fitted on the training rows only. The three estimators are
//! then scored on the held-out rows. The reduced-dimension estimator is
//! refitted once per condition cap, using the subspace size `L` that the
//! selection objective prefers among those with `cond(Σ_ww) <= cap`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::covariance::{empirical_covariance, CovarianceModel};
use crate::error::{Error, Result};
use crate::estimators::{fit_gauss_bayes, fit_reduced_dimension_with, fit_unconditional, Estimator, Method};
use crate::metrics::{directional_statistic, empirical_mse, mse_breakdown, volatility, DirectionalReport, MseBreakdown};
use crate::par;
use crate::pipeline::{build_hankel, normalize_and_center, split_train_test, DataMatrix, PriceSeries, WindowConfig};
use crate::report::float;

/// How `L` is chosen among the feasible subspace sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Closed-form RD MSE under the training covariance.
    #[default]
    TheoreticalRdMse,
    /// Empirical RD MSE on the last `fraction` of the training rows, with the
    /// candidate estimators fitted on the rows before them.
    ValidationMse { fraction: f64 },
}

/// Grid of experiments to run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub m_values: Vec<usize>,
    pub horizon: usize,
    pub caps: Vec<f64>,
    pub n_test: usize,
    pub objective: ObjectiveKind,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            m_values: Self::default_m_values(),
            horizon: 10,
            caps: vec![1e3, 1e4],
            n_test: 2200,
            objective: ObjectiveKind::default(),
        }
    }
}

impl SweepConfig {
    /// 20, 50, ..., 440.
    pub fn default_m_values() -> Vec<usize> {
        (20..=440).step_by(30).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = self.m_values.iter().find(|&&m| m < 2) {
            return Err(Error::argument(format!("observation length {m} must be at least 2")));
        }
        if self.horizon < 1 {
            return Err(Error::argument("horizon must be at least 1"));
        }
        if let Some(c) = self.caps.iter().find(|c| c.is_nan() || **c < 1.0) {
            return Err(Error::argument(format!("condition cap {c} must be at least 1")));
        }
        if self.n_test < 1 {
            return Err(Error::argument("test size must be at least 1"));
        }
        if let ObjectiveKind::ValidationMse { fraction } = self.objective {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(Error::argument(format!("validation fraction {fraction} must lie in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// What `select_l` minimizes.
#[derive(Debug, Clone, Copy)]
pub enum SelectionObjective<'a> {
    TheoreticalRdMse,
    /// RD fitted on `fit_model`, scored on held-out rows.
    ValidationMse {
        fit_model: &'a CovarianceModel,
        observations: &'a DMatrix<f64>,
        targets: &'a DMatrix<f64>,
    },
}

/// One subspace size and how it fared.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub l: usize,
    /// `cond(Σ_ww)`; infinite when the subspace could not be built.
    pub condition_ww: f64,
    pub theoretical_mse: Option<f64>,
    pub objective: Option<f64>,
    pub estimator: Option<Estimator>,
}

/// Fits RD for every `L = 1..=m` and records condition number and objective.
pub fn evaluate_candidates(model: &CovarianceModel, objective: SelectionObjective<'_>) -> Vec<Candidate> {
    let m = model.observation_dim();
    par::map_range(1..m + 1, |l| {
        let fitted = fit_reduced_dimension_with(model, l);
        let (condition_ww, estimator) = match fitted {
            Ok((est, proj)) => (proj.condition(), Some(est)),
            Err(Error::IllConditioned { condition, .. }) => (condition, None),
            Err(_) => (f64::INFINITY, None),
        };
        let theoretical_mse = estimator
            .as_ref()
            .and_then(|est| crate::metrics::theoretical_mse(model, est).ok());
        let objective = match objective {
            SelectionObjective::TheoreticalRdMse => theoretical_mse,
            SelectionObjective::ValidationMse {
                fit_model,
                observations,
                targets,
            } => fit_reduced_dimension_with(fit_model, l)
                .ok()
                .and_then(|(est, _)| est.predict_rows(observations).ok())
                .and_then(|pred| empirical_mse(&pred, targets).ok())
                .map(|e| e.total),
        };
        Candidate {
            l,
            condition_ww,
            theoretical_mse,
            objective,
            estimator,
        }
    })
}

/// Feasible candidate (`cond(Σ_ww) <= cap`) with the smallest objective;
/// ties go to the smaller `L`.
pub fn choose_candidate(candidates: &[Candidate], cap: f64) -> Result<&Candidate> {
    let mut best: Option<&Candidate> = None;
    for c in candidates {
        let (Some(value), Some(_)) = (c.objective, c.estimator.as_ref()) else {
            continue;
        };
        if c.condition_ww > cap || !value.is_finite() {
            continue;
        }
        if best.is_none_or(|b| value < b.objective.unwrap_or(f64::INFINITY)) {
            best = Some(c);
        }
    }
    best.ok_or_else(|| Error::NoFeasibleSubspace {
        cap,
        min_condition: candidates
            .iter()
            .map(|c| c.condition_ww)
            .fold(f64::INFINITY, f64::min),
    })
}

/// The chosen subspace size and its fitted RD estimator.
#[derive(Debug, Clone)]
pub struct Selection {
    pub l: usize,
    pub condition_ww: f64,
    pub objective_value: f64,
    pub estimator: Estimator,
}

pub fn select_l(model: &CovarianceModel, cap: f64, objective: SelectionObjective<'_>) -> Result<Selection> {
    if cap.is_nan() || cap < 1.0 {
        return Err(Error::argument(format!("condition cap {cap} must be at least 1")));
    }
    let candidates = evaluate_candidates(model, objective);
    let best = choose_candidate(&candidates, cap)?;
    Ok(Selection {
        l: best.l,
        condition_ww: best.condition_ww,
        objective_value: best.objective.expect("chosen candidate has an objective"),
        estimator: best.estimator.clone().expect("chosen candidate has an estimator"),
    })
}

/// Scores for one estimator on the test rows.
#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub method: Method,
    pub mse: MseBreakdown,
    pub empirical_mse_per_day: Vec<f64>,
    /// Summed per-day MSE in price units.
    pub price_mse: f64,
    #[serde(serialize_with = "float::option")]
    pub condition: Option<f64>,
    pub directional: DirectionalReport,
    /// Per-day posterior standard deviation, normalized units.
    pub volatility: Vec<f64>,
}

/// One `(M, cap)` grid cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellReport {
    pub m: usize,
    pub cap: f64,
    pub best_l: usize,
    pub energy_fraction: f64,
    #[serde(serialize_with = "float::plain")]
    pub cond_yy: f64,
    pub cond_ww: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub methods: Vec<MethodResult>,
    pub notes: Vec<String>,
}

impl CellReport {
    pub fn method(&self, method: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == method)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub l: usize,
    #[serde(serialize_with = "float::plain")]
    pub cond_ww: f64,
    pub mse_rd: Option<f64>,
}

/// Theoretical RD MSE against `L` for one `M`.
#[derive(Debug, Clone, Serialize)]
pub struct MseCurve {
    pub m: usize,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedCell {
    pub m: usize,
    pub cap: Option<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BacktestReport {
    pub ticker: String,
    pub sweep: SweepConfig,
    pub curves: Vec<MseCurve>,
    pub cells: Vec<CellReport>,
    pub skipped: Vec<SkippedCell>,
}

impl BacktestReport {
    pub fn empty(ticker: impl Into<String>, sweep: SweepConfig) -> Self {
        Self {
            ticker: ticker.into(),
            sweep,
            curves: Vec::new(),
            cells: Vec::new(),
            skipped: Vec::new(),
        }
    }
}

/// Runs every `(M, cap)` cell of the sweep. Cells that cannot be evaluated
/// are recorded in `skipped`; only an invalid sweep is an error.
pub fn run_backtest(series: &PriceSeries, sweep: &SweepConfig) -> Result<BacktestReport> {
    sweep.validate()?;
    let per_m = par::map_slice(&sweep.m_values, |&m| run_one(series, sweep, m));
    let mut report = BacktestReport::empty(series.ticker(), sweep.clone());
    for outcome in per_m {
        if let Some(curve) = outcome.curve {
            report.curves.push(curve);
        }
        report.cells.extend(outcome.cells);
        report.skipped.extend(outcome.skipped);
    }
    Ok(report)
}

#[derive(Default)]
struct PerM {
    curve: Option<MseCurve>,
    cells: Vec<CellReport>,
    skipped: Vec<SkippedCell>,
}

impl PerM {
    fn skip_all(m: usize, reason: String) -> Self {
        Self {
            skipped: vec![SkippedCell { m, cap: None, reason }],
            ..Self::default()
        }
    }
}

/// Windows, split and fitted training covariance for one observation length.
pub struct Prepared {
    pub train: DataMatrix,
    pub test: DataMatrix,
    pub model: CovarianceModel,
}

/// Builds the Hankel matrix for `M + H`-day windows, splits off the last
/// `n_test` rows and fits the training covariance.
pub fn prepare(series: &PriceSeries, m: usize, horizon: usize, n_test: usize) -> Result<Prepared> {
    let config = WindowConfig::with_horizon(m, horizon)?;
    let window = config.window();
    let required = window + n_test + 1;
    if series.len() < required {
        return Err(Error::InsufficientData {
            required,
            available: series.len(),
        });
    }
    let rows = series.len() - window + 1;
    let raw = build_hankel(series.prices(), window, rows)?;
    let x = normalize_and_center(&raw, config)?;
    let (train, test) = split_train_test(&x, n_test)?;
    let model = empirical_covariance(&train)?;
    Ok(Prepared { train, test, model })
}

fn run_one(series: &PriceSeries, sweep: &SweepConfig, m: usize) -> PerM {
    let prepared = match prepare(series, m, sweep.horizon, sweep.n_test) {
        Ok(p) => p,
        Err(e) => return PerM::skip_all(m, e.to_string()),
    };
    let Prepared { train, test, model } = prepared;

    let validation = match sweep.objective {
        ObjectiveKind::TheoreticalRdMse => None,
        ObjectiveKind::ValidationMse { fraction } => match validation_split(&train, fraction) {
            Ok(v) => Some(v),
            Err(e) => return PerM::skip_all(m, format!("validation split: {e}")),
        },
    };
    let objective = match &validation {
        None => SelectionObjective::TheoreticalRdMse,
        Some((fit_model, ys, zs)) => SelectionObjective::ValidationMse {
            fit_model,
            observations: ys,
            targets: zs,
        },
    };
    let candidates = evaluate_candidates(&model, objective);
    let curve = MseCurve {
        m,
        points: candidates
            .iter()
            .map(|c| CurvePoint {
                l: c.l,
                cond_ww: c.condition_ww,
                mse_rd: c.theoretical_mse,
            })
            .collect(),
    };

    let cond_yy = model.condition_yy();
    let mut notes = Vec::new();
    let mut baseline = Vec::new();
    let unc = fit_unconditional(&model);
    match evaluate_method(&model, &unc, &test) {
        Ok(r) => baseline.push(r),
        Err(e) => notes.push(format!("UNC: {e}")),
    }
    match fit_gauss_bayes(&model).and_then(|gb| evaluate_method(&model, &gb, &test)) {
        Ok(r) => baseline.push(r),
        Err(e) => notes.push(format!("GB: {e}")),
    }

    let mut out = PerM {
        curve: Some(curve),
        ..PerM::default()
    };
    for &cap in &sweep.caps {
        let chosen = match choose_candidate(&candidates, cap) {
            Ok(c) => c,
            Err(e) => {
                out.skipped.push(SkippedCell {
                    m,
                    cap: Some(cap),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let rd = chosen.estimator.as_ref().expect("feasible candidate has an estimator");
        let mut methods = baseline.clone();
        let mut cell_notes = notes.clone();
        match evaluate_method(&model, rd, &test) {
            Ok(r) => methods.push(r),
            Err(e) => {
                out.skipped.push(SkippedCell {
                    m,
                    cap: Some(cap),
                    reason: format!("RD: {e}"),
                });
                continue;
            }
        }
        let energy_fraction = crate::covariance::choose_subspace(&model, chosen.l)
            .map(|s| s.energy_fraction())
            .unwrap_or(f64::NAN);
        if chosen.condition_ww > cap {
            cell_notes.push("selected subspace exceeds cap".into());
        }
        out.cells.push(CellReport {
            m,
            cap,
            best_l: chosen.l,
            energy_fraction,
            cond_yy,
            cond_ww: chosen.condition_ww,
            train_rows: train.rows(),
            test_rows: test.rows(),
            methods,
            notes: cell_notes,
        });
    }
    out
}

fn validation_split(train: &DataMatrix, fraction: f64) -> Result<(CovarianceModel, DMatrix<f64>, DMatrix<f64>)> {
    let n_val = ((train.rows() as f64) * fraction).round().max(1.0) as usize;
    let (fit, val) = split_train_test(train, n_val)?;
    let fit_model = empirical_covariance(&fit)?;
    Ok((fit_model, val.observations()?, val.targets()?))
}

/// Scores one estimator on the test rows: normalized and price-unit MSE,
/// directional statistic against the anchor-day price, and volatility.
pub fn evaluate_method(model: &CovarianceModel, est: &Estimator, test: &DataMatrix) -> Result<MethodResult> {
    let ys = test.observations()?;
    let zs = test.targets()?;
    let preds = est.predict_rows(&ys)?;
    let normalized = empirical_mse(&preds, &zs)?;
    let breakdown = mse_breakdown(model, est, Some(normalized.total))?;

    let h = zs.ncols();
    let mean = test.mean();
    let tail = mean.rows(mean.len() - h, h);
    let scales = test.scales();
    let to_prices = |m: &DMatrix<f64>| DMatrix::from_fn(m.nrows(), h, |i, j| (m[(i, j)] + tail[j]) * scales[i]);
    let pred_prices = to_prices(&preds);
    let actual_prices = to_prices(&zs);
    let price_mse = empirical_mse(&pred_prices, &actual_prices)?.total;
    // the anchor day is the last observed day, so its price is the row scale
    let reference = reference_prices(test)?;
    let directional = directional_statistic(&pred_prices, &actual_prices, &reference)?;

    Ok(MethodResult {
        method: est.method(),
        mse: breakdown,
        empirical_mse_per_day: normalized.per_day,
        price_mse,
        condition: est.diagnostics().condition,
        directional,
        volatility: volatility(est).iter().copied().collect(),
    })
}

/// Price on the last observed day of each row.
fn reference_prices(x: &DataMatrix) -> Result<Vec<f64>> {
    let cfg = x.config();
    if cfg.anchor() == cfg.observed() {
        return Ok(x.scales().to_vec());
    }
    let col = if cfg.anchor() < cfg.observed() {
        cfg.observed() - 2
    } else {
        cfg.observed() - 1
    };
    Ok((0..x.rows())
        .map(|i| (x.data()[(i, col)] + x.mean()[col]) * x.scales()[i])
        .collect())
}
