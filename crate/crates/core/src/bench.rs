//! Monte Carlo harness: simulate, fit, compare with a fixed-bandwidth
//! baseline and the truth, many times over.
//!
//! Replications run in parallel, each from its own seed derived from the
//! scenario seed; results are collected in replication order, so the
//! aggregate tables do not depend on the number of threads.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::Grid;
use crate::eigen::EigenResult;
use crate::error::Result;
use crate::io::Scenario;
use crate::metrics::{metrics_csv, ratio_quantiles_csv, Estimates, MetricsRow};
use crate::pipeline::{fit, fit_fixed_bandwidth, FitConfig, StageTimings};
use crate::rng::{derive_seed, TAG_REPLICATION};
use crate::simulator::{simulate, truth_eigen, Mfbm};

pub const DEFAULT_BASELINE_H: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub replications: usize,
    pub baseline_h: f64,
    pub config: FitConfig,
}

#[derive(Clone, Debug)]
pub struct ReplicationOutcome {
    pub replication: usize,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    /// Set when simulation or fitting failed; `rows` is then empty.
    pub error: Option<String>,
    pub timings: StageTimings,
    pub baseline_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub truth: EigenResult,
    pub outcomes: Vec<ReplicationOutcome>,
}

impl BenchReport {
    pub fn rows(&self) -> Vec<MetricsRow> {
        self.outcomes.iter().flat_map(|o| o.rows.iter().cloned()).collect()
    }

    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.rows())
    }

    pub fn ratio_quantiles_csv(&self) -> String {
        ratio_quantiles_csv(&self.rows())
    }

    pub fn failures_csv(&self) -> String {
        let mut out = String::from("replication,seed,error\n");
        for o in &self.outcomes {
            if let Some(e) = &o.error {
                out.push_str(&format!("{},{},\"{}\"\n", o.replication, o.seed, e.replace('"', "'")));
            }
        }
        out
    }

    /// Wall-clock seconds; differs from run to run.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from(
            "replication,presmoothing,regularity,moments,noise_variance,first_run_bounds,preliminary_covariance,second_run_bounds,final_covariance,baseline\n",
        );
        for o in &self.outcomes {
            let t = &o.timings;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                o.replication,
                t.presmoothing,
                t.regularity,
                t.moments,
                t.noise_variance,
                t.first_run_bounds,
                t.preliminary_covariance,
                t.second_run_bounds,
                t.final_covariance,
                o.baseline_seconds
            ));
        }
        out
    }

    /// Writes `metrics.csv`, `ratio_quantiles.csv`, `failures.csv` and
    /// `timing.csv` into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), self.metrics_csv())?;
        std::fs::write(dir.join("ratio_quantiles.csv"), self.ratio_quantiles_csv())?;
        std::fs::write(dir.join("failures.csv"), self.failures_csv())?;
        std::fs::write(dir.join("timing.csv"), self.timing_csv())?;
        Ok(())
    }
}

/// True eigen-elements of the scenario's process on `grid`.
pub fn scenario_truth(scenario: &Scenario, grid: &Grid, n_elements: usize) -> Result<EigenResult> {
    let model = Mfbm::new(scenario.process.clone())?;
    truth_eigen(&model, grid, n_elements, scenario.truth.fine_points)
}

fn replicate(scenario: &Scenario, opts: &BenchOptions, truth: &EigenResult, r: usize) -> ReplicationOutcome {
    let seed = derive_seed(scenario.seed, TAG_REPLICATION, r as u64);
    let mut outcome = ReplicationOutcome {
        replication: r,
        seed,
        rows: Vec::new(),
        error: None,
        timings: StageTimings::default(),
        baseline_seconds: 0.0,
    };
    let run = |outcome: &mut ReplicationOutcome| -> Result<Vec<MetricsRow>> {
        let sample = simulate(&scenario.process, &scenario.design, seed)?;
        let config = FitConfig { seed, ..opts.config.clone() };
        let res = fit(&sample, &config)?;
        outcome.timings = res.timings.clone();
        let start = Instant::now();
        let baseline = fit_fixed_bandwidth(&sample, &truth.grid, opts.baseline_h, &config)?;
        outcome.baseline_seconds = start.elapsed().as_secs_f64();
        let est = Estimates {
            eigenvalues: &res.eigenvalues,
            eigenfunctions: &res.eigenfunctions,
            lambda_h: &res.lambda_bandwidths,
            psi_h: &res.psi_bandwidths,
        };
        crate::metrics::compare(r, &est, &baseline, truth)
    };
    match run(&mut outcome) {
        Ok(rows) => outcome.rows = rows,
        Err(e) => outcome.error = Some(e.to_string()),
    }
    outcome
}

/// Runs `opts.replications` replications. Failed replications are recorded,
/// not fatal.
pub fn run_bench(scenario: &Scenario, opts: &BenchOptions) -> Result<BenchReport> {
    opts.config.validate()?;
    let grid = Grid::uniform(opts.config.grid_size, 1.0)?;
    let truth = scenario_truth(scenario, &grid, opts.config.n_elements)?;
    let outcomes = (0..opts.replications)
        .into_par_iter()
        .map(|r| replicate(scenario, opts, &truth, r))
        .collect();
    Ok(BenchReport { truth, outcomes })
}
