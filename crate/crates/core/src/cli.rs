//! Command-line front end.
//!
//! Exit codes: 0 success, 2 malformed input, 3 infeasible configuration,
//! 4 numerical failure, 1 anything else.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bench::{run_bench, BenchOptions, DEFAULT_BASELINE_H};
use crate::data::Grid;
use crate::error::{ErrorClass, FpcaError, Result};
use crate::io::{
    read_config_file, read_curves_file, read_json, read_scenario_file, write_curves_file, write_json, FitDocument,
    TruthDocument, SCHEMA_VERSION,
};
use crate::metrics::{compare, metrics_csv, Estimates};
use crate::pipeline::{fit, fit_fixed_bandwidth, FitConfig};
use crate::simulator::{simulate, truth_eigen, Mfbm};

#[derive(Parser, Debug)]
#[command(name = "afpca", version, about = "Adaptive functional principal components analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate curves from a scenario; the true eigen-elements go to `<out>.truth.json`.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the adaptive estimator to a curve file.
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// TOML configuration; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a fit and a fixed-bandwidth baseline with the truth.
    Eval {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BASELINE_H)]
        baseline_h: f64,
        #[arg(long)]
        out: PathBuf,
        /// Curve file for the baseline; defaults to the one recorded in the fit.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Repeated simulate, fit and eval with aggregate tables.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        replications: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_BASELINE_H)]
        baseline_h: f64,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; all cores when omitted.
        #[arg(long)]
        threads: Option<usize>,
    },
}

pub fn exit_code(err: &FpcaError) -> i32 {
    match err.class() {
        ErrorClass::Parse => 2,
        ErrorClass::Infeasible => 3,
        ErrorClass::Numerical => 4,
        ErrorClass::Other => 1,
    }
}

/// Path of the truth file written next to simulated data.
pub fn truth_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".truth.json");
    PathBuf::from(s)
}

fn load_config(path: Option<&Path>) -> Result<FitConfig> {
    path.map_or_else(|| Ok(FitConfig::default()), read_config_file)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { scenario, out, seed } => {
            let mut sc = read_scenario_file(&scenario)?;
            if let Some(seed) = seed {
                sc.seed = seed;
            }
            let sample = simulate(&sc.process, &sc.design, sc.seed)?;
            write_curves_file(&out, &sample)?;
            let grid = Grid::uniform(sc.truth.grid_size, 1.0)?;
            let truth = truth_eigen(&Mfbm::new(sc.process.clone())?, &grid, sc.truth.n_elements, sc.truth.fine_points)?;
            let doc = TruthDocument {
                schema_version: SCHEMA_VERSION,
                scenario: sc,
                truth,
            };
            write_json(&truth_path(&out), &doc)?;
            println!("wrote {} curves to {}", sample.n_curves(), out.display());
        }
        Command::Fit { data, config, out } => {
            let config = load_config(config.as_deref())?;
            let sample = read_curves_file(&data)?;
            let result = fit(&sample, &config)?;
            if !result.eigenvalues_monotone {
                eprintln!("warning: eigenvalues read at different bandwidths are not monotone");
            }
            let doc = FitDocument {
                schema_version: SCHEMA_VERSION,
                data_path: Some(data.to_string_lossy().into_owned()),
                result,
            };
            write_json(&out, &doc)?;
            println!("wrote fit to {}", out.display());
        }
        Command::Eval {
            fit,
            truth,
            baseline_h,
            out,
            data,
        } => {
            let fit_doc: FitDocument = read_json(&fit)?;
            let truth_doc: TruthDocument = read_json(&truth)?;
            let data = data
                .or_else(|| fit_doc.data_path.as_ref().map(PathBuf::from))
                .ok_or_else(|| FpcaError::Config("no curve file: pass --data".into()))?;
            let sample = read_curves_file(&data)?;
            let res = &fit_doc.result;
            let baseline = fit_fixed_bandwidth(&sample, truth_doc.grid(), baseline_h, &res.config)?;
            let est = Estimates {
                eigenvalues: &res.eigenvalues,
                eigenfunctions: &res.eigenfunctions,
                lambda_h: &res.lambda_bandwidths,
                psi_h: &res.psi_bandwidths,
            };
            let rows = compare(0, &est, &baseline, &truth_doc.truth)?;
            std::fs::write(&out, metrics_csv(&rows))?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Bench {
            scenario,
            replications,
            out,
            config,
            baseline_h,
            seed,
            threads,
        } => {
            let mut sc = read_scenario_file(&scenario)?;
            if let Some(seed) = seed {
                sc.seed = seed;
            }
            let opts = BenchOptions {
                replications,
                baseline_h,
                config: load_config(config.as_deref())?,
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| FpcaError::InvalidArgument(e.to_string()))?;
            let report = pool.install(|| run_bench(&sc, &opts))?;
            report.write(&out)?;
            let failed = report.outcomes.iter().filter(|o| o.error.is_some()).count();
            println!("{replications} replications ({failed} failed), tables in {}", out.display());
        }
    }
    Ok(())
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
