//! Writes a [`BacktestReport`] as CSV tables plus a JSON summary.
//!
//! Column layouts are fixed so downstream plotting scripts can rely on them.
//! Floats use Rust's shortest round-trip formatting, so values survive a
//! write/read cycle exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::backtest::BacktestReport;
use crate::error::Result;

pub const MSE_VS_L: &str = "mse_vs_L.csv";
pub const BEST_MSE: &str = "best_mse.csv";
pub const CONDITION: &str = "condition.csv";
pub const DIRECTIONAL: &str = "directional.csv";
pub const VOLATILITY: &str = "volatility.csv";
pub const SUMMARY: &str = "summary.json";

/// The six files, in the order they are written.
pub const FILES: [&str; 6] = [MSE_VS_L, BEST_MSE, CONDITION, DIRECTIONAL, VOLATILITY, SUMMARY];

/// Serde helpers that keep non-finite floats visible in JSON (as strings)
/// instead of collapsing them to `null`.
pub mod float {
    use serde::Serializer;

    pub fn plain<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn option<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => plain(x, s),
            None => s.serialize_none(),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn mse_vs_l_csv(report: &BacktestReport) -> String {
    let mut out = String::from("M,L,cond_ww,mse_rd\n");
    for curve in &report.curves {
        for p in &curve.points {
            let _ = writeln!(out, "{},{},{},{}", curve.m, p.l, p.cond_ww, opt(p.mse_rd));
        }
    }
    out
}

/// Empirical (out-of-sample) MSE per method; blank where a method could not
/// be fitted.
pub fn best_mse_csv(report: &BacktestReport) -> String {
    use crate::estimators::Method::*;
    let mut out = String::from("M,cap,best_L,mse_unc,mse_gb,mse_rd\n");
    for c in &report.cells {
        let e = |m| opt(c.method(m).and_then(|r| r.mse.empirical_mse));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            c.m,
            c.cap,
            c.best_l,
            e(Unconditional),
            e(GaussBayes),
            e(ReducedDimension)
        );
    }
    out
}

/// One row per cell, in the same order as `best_mse.csv`.
pub fn condition_csv(report: &BacktestReport) -> String {
    let mut out = String::from("M,cond_yy,cond_ww\n");
    for c in &report.cells {
        let _ = writeln!(out, "{},{},{}", c.m, c.cond_yy, c.cond_ww);
    }
    out
}

pub fn directional_csv(report: &BacktestReport) -> String {
    let mut out = String::from("M,cap,method,day,D_j\n");
    for c in &report.cells {
        for r in &c.methods {
            for (j, d) in r.directional.per_day.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{},{}", c.m, c.cap, r.method, j + 1, d);
            }
        }
    }
    out
}

pub fn volatility_csv(report: &BacktestReport) -> String {
    let mut out = String::from("M,cap,method,day,std\n");
    for c in &report.cells {
        for r in &c.methods {
            for (j, s) in r.volatility.iter().enumerate() {
                let _ = writeln!(out, "{},{},{},{},{}", c.m, c.cap, r.method, j + 1, s);
            }
        }
    }
    out
}

pub fn summary_json(report: &BacktestReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| crate::Error::domain(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes all six files into `dir`, creating it if needed. Returns the paths
/// written.
pub fn emit_report(report: &BacktestReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let contents = [
        mse_vs_l_csv(report),
        best_mse_csv(report),
        condition_csv(report),
        directional_csv(report),
        volatility_csv(report),
        summary_json(report)?,
    ];
    let mut written = Vec::with_capacity(FILES.len());
    for (name, text) in FILES.iter().zip(contents) {
        let path = dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}
