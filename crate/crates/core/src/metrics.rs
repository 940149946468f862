//! Error measures against known eigen-elements, and error ratios against a
//! baseline estimator.

use serde::{Deserialize, Serialize};

use crate::data::Grid;
use crate::eigen::{sign_align, EigenResult};
use crate::error::{FpcaError, Result};

/// `|λ̂ − λ|`.
pub fn eigenvalue_error(estimate: f64, truth: f64) -> f64 {
    (estimate - truth).abs()
}

/// `‖sign(⟨ψ̂, ψ⟩) ψ̂ − ψ‖` under the grid quadrature.
pub fn l2_error(psi_hat: &[f64], psi_true: &[f64], grid: &Grid) -> f64 {
    assert_eq!(psi_hat.len(), psi_true.len(), "eigenfunction lengths differ");
    let aligned = sign_align(psi_hat, psi_true, grid);
    let diff: Vec<f64> = aligned.iter().zip(psi_true).map(|(a, b)| a - b).collect();
    grid.inner(&diff, &diff).max(0.0).sqrt()
}

/// `num / den`, or `None` (reported as NA) when `den` is 0.
pub fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

/// Errors of one eigen-element of one replication.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub replication: usize,
    /// 1-based element index.
    pub j: usize,
    pub lambda_error: f64,
    pub psi_error: f64,
    pub baseline_lambda_error: f64,
    pub baseline_psi_error: f64,
    pub lambda_ratio: Option<f64>,
    pub psi_ratio: Option<f64>,
    /// Bandwidths the adaptive estimates were read at.
    pub lambda_h: f64,
    pub psi_h: f64,
}

/// The adaptive estimates as plain sequences.
#[derive(Clone, Debug)]
pub struct Estimates<'a> {
    pub eigenvalues: &'a [f64],
    pub eigenfunctions: &'a [Vec<f64>],
    pub lambda_h: &'a [f64],
    pub psi_h: &'a [f64],
}

/// Rows for `j = 1..=J` where `J` is the smallest of the three lengths.
pub fn compare(replication: usize, adaptive: &Estimates, baseline: &EigenResult, truth: &EigenResult) -> Result<Vec<MetricsRow>> {
    let grid = &truth.grid;
    if baseline.grid != *grid || adaptive.eigenfunctions.first().is_some_and(|f| f.len() != grid.len()) {
        return Err(FpcaError::InvalidArgument("estimates and truth live on different grids".into()));
    }
    let n = adaptive.eigenvalues.len().min(baseline.len()).min(truth.len());
    Ok((0..n)
        .map(|k| {
            let lambda_error = eigenvalue_error(adaptive.eigenvalues[k], truth.eigenvalues[k]);
            let psi_error = l2_error(&adaptive.eigenfunctions[k], &truth.eigenfunctions[k], grid);
            let baseline_lambda_error = eigenvalue_error(baseline.eigenvalues[k], truth.eigenvalues[k]);
            let baseline_psi_error = l2_error(&baseline.eigenfunctions[k], &truth.eigenfunctions[k], grid);
            MetricsRow {
                replication,
                j: k + 1,
                lambda_error,
                psi_error,
                baseline_lambda_error,
                baseline_psi_error,
                lambda_ratio: ratio(lambda_error, baseline_lambda_error),
                psi_ratio: ratio(psi_error, baseline_psi_error),
                lambda_h: adaptive.lambda_h[k],
                psi_h: adaptive.psi_h[k],
            }
        })
        .collect())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

pub const METRICS_HEADER: &str =
    "replication,j,lambda_error,psi_error,baseline_lambda_error,baseline_psi_error,lambda_ratio,psi_ratio,lambda_h,psi_h";

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.replication,
            r.j,
            r.lambda_error,
            r.psi_error,
            r.baseline_lambda_error,
            r.baseline_psi_error,
            fmt_opt(r.lambda_ratio),
            fmt_opt(r.psi_ratio),
            r.lambda_h,
            r.psi_h
        ));
    }
    out
}

/// Parses [`metrics_csv`] output.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_HEADER => {}
        _ => return Err(FpcaError::Parse { line: 1, message: "unexpected metrics header".into() }),
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let err = |m: String| FpcaError::Parse { line: k + 1, message: m };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 10 {
                return Err(err(format!("expected 10 fields, got {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
            let opt = |s: &str| if s == "NA" { Ok(None) } else { num(s).map(Some) };
            let int = |s: &str| s.parse::<usize>().map_err(|e| err(format!("{s:?}: {e}")));
            Ok(MetricsRow {
                replication: int(f[0])?,
                j: int(f[1])?,
                lambda_error: num(f[2])?,
                psi_error: num(f[3])?,
                baseline_lambda_error: num(f[4])?,
                baseline_psi_error: num(f[5])?,
                lambda_ratio: opt(f[6])?,
                psi_ratio: opt(f[7])?,
                lambda_h: num(f[8])?,
                psi_h: num(f[9])?,
            })
        })
        .collect()
}

/// Linear-interpolation quantile of sorted data (`p ∈ [0, 1]`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(quantile(&v, 0.5))
}

/// Nearest-rank quantile: the smallest value with at least a fraction `p`
/// of the data at or below it.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let rank = (p.clamp(0.0, 1.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Boxplot summary after dropping values below the 5% and above the 95%
/// quantile. The cut points are nearest-rank quantiles, so something is
/// always kept.
#[derive(Clone, Debug, PartialEq)]
pub struct TrimmedSummary {
    pub n: usize,
    pub n_kept: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

pub fn trimmed_summary(values: &[f64]) -> Option<TrimmedSummary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (lo, hi) = (nearest_rank(&v, 0.05), nearest_rank(&v, 0.95));
    let kept: Vec<f64> = v.iter().copied().filter(|&x| x >= lo && x <= hi).collect();
    Some(TrimmedSummary {
        n: v.len(),
        n_kept: kept.len(),
        min: kept[0],
        q25: quantile(&kept, 0.25),
        median: quantile(&kept, 0.5),
        q75: quantile(&kept, 0.75),
        max: kept[kept.len() - 1],
    })
}

/// Per-element trimmed summaries of both ratios; NA ratios are left out.
pub fn ratio_quantiles_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("quantity,j,n,n_kept,min,q25,median,q75,max\n");
    let j_max = rows.iter().map(|r| r.j).max().unwrap_or(0);
    for (name, pick) in [
        ("lambda_ratio", (|r: &MetricsRow| r.lambda_ratio) as fn(&MetricsRow) -> Option<f64>),
        ("psi_ratio", |r: &MetricsRow| r.psi_ratio),
    ] {
        for j in 1..=j_max {
            let vals: Vec<f64> = rows.iter().filter(|r| r.j == j).filter_map(pick).collect();
            match trimmed_summary(&vals) {
                Some(s) => out.push_str(&format!(
                    "{name},{j},{},{},{},{},{},{},{}\n",
                    s.n, s.n_kept, s.min, s.q25, s.median, s.q75, s.max
                )),
                None => out.push_str(&format!("{name},{j},0,0,NA,NA,NA,NA,NA\n")),
            }
        }
    }
    out
}
