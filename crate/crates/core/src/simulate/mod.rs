//! Monte-Carlo engine over the simulation designs.
//!
//! Each replication draws from its own RNG substream, so the per-replication
//! records and every aggregate are identical for any number of workers.

pub mod stats;
pub mod theory;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::Selector;
use crate::designs::Design;
use crate::error::{Error, Result};
use crate::estimator::{estimate_with, EstimateOptions};
use crate::kernels::KernelKind;
use crate::lpr::Side;
use stats::{ecdf, mean, sd, trimmed_moments, TrimMode};
pub use stats::median;
pub use theory::{rmse_star, rmse_star_table, RmseStar};

/// Largest tolerated fraction of failed replications per selector.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub design: Design,
    pub n: usize,
    pub reps: usize,
    pub selectors: Vec<Selector>,
    pub trim: f64,
    pub trim_mode: TrimMode,
    pub seed: u64,
    pub kernel: KernelKind,
}

impl SimulationConfig {
    pub fn new(design: Design, n: usize, reps: usize, selectors: Vec<Selector>, seed: u64) -> Self {
        SimulationConfig {
            design,
            n,
            reps,
            selectors,
            trim: 0.05,
            trim_mode: TrimMode::Absolute,
            seed,
            kernel: KernelKind::Triangular,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::ConfigInvalid("reps must be at least 1".into()));
        }
        if self.n < 2 {
            return Err(Error::ConfigInvalid("n must be at least 2".into()));
        }
        if !(0.0..0.5).contains(&self.trim) {
            return Err(Error::ConfigInvalid(format!("trim {} is outside [0, 0.5)", self.trim)));
        }
        if self.selectors.is_empty() {
            return Err(Error::ConfigInvalid("no selectors requested".into()));
        }
        if self.selectors.contains(&Selector::Manual) {
            return Err(Error::ConfigInvalid("the manual selector cannot be simulated".into()));
        }
        self.design.validate()
    }
}

/// Outcome of one selector on one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub h1: f64,
    pub h0: f64,
    pub tau_error: f64,
    pub m1_error: f64,
    pub m0_error: f64,
}

/// Per-replication results, one entry per configured selector.
#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub rep: usize,
    pub outcomes: Vec<std::result::Result<RepOutcome, Error>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorSummary {
    pub selector: Selector,
    pub mean_h1: f64,
    pub sd_h1: f64,
    pub mean_h0: f64,
    pub sd_h0: f64,
    pub trimmed_bias: f64,
    pub trimmed_rmse: f64,
    pub eff: f64,
    pub rmse_star: Option<f64>,
    pub eff_star: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub design: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub trim: f64,
    pub trim_mode: TrimMode,
    pub tau: f64,
    pub selectors: Vec<SelectorSummary>,
}

/// Summary plus the raw records behind it.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub config: SimulationConfig,
    pub summary: SimulationSummary,
    pub records: Vec<RepRecord>,
}

impl SimulationRun {
    /// Successful outcomes of the `i`-th configured selector, in replication order.
    pub fn outcomes(&self, i: usize) -> Vec<RepOutcome> {
        self.records
            .iter()
            .filter_map(|r| r.outcomes[i].as_ref().ok().copied())
            .collect()
    }
}

fn run_rep(config: &SimulationConfig, rep: usize) -> RepRecord {
    let sample = config.design.sample_rep(config.n, config.seed, rep as u64);
    let m1 = config.design.mean_limit(Side::Right);
    let m0 = config.design.mean_limit(Side::Left);
    let outcomes = config
        .selectors
        .iter()
        .map(|&selector| {
            let opts = EstimateOptions {
                selector,
                kernel: config.kernel,
                ..EstimateOptions::default()
            };
            estimate_with(&sample, &opts).map(|e| RepOutcome {
                h1: e.bandwidths.h1,
                h0: e.bandwidths.h0,
                tau_error: e.tau_hat - (m1 - m0),
                m1_error: e.m1_hat - m1,
                m0_error: e.m0_hat - m0,
            })
        })
        .collect();
    RepRecord { rep, outcomes }
}

/// Runs every replication on the current rayon pool.
pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationRun> {
    config.validate()?;
    let records: Vec<RepRecord> = (0..config.reps)
        .into_par_iter()
        .map(|rep| run_rep(config, rep))
        .collect();

    let star = theory::rmse_star_table(&config.design, config.n, &config.selectors, config.kernel).ok();
    let mut selectors = Vec::with_capacity(config.selectors.len());
    for (i, &selector) in config.selectors.iter().enumerate() {
        let ok: Vec<RepOutcome> = records
            .iter()
            .filter_map(|r| r.outcomes[i].as_ref().ok().copied())
            .collect();
        let failures = config.reps - ok.len();
        if failures as f64 > MAX_FAILURE_RATE * config.reps as f64 || ok.is_empty() {
            let first = records.iter().find_map(|r| r.outcomes[i].as_ref().err());
            if let Some(e) = first {
                log::error!("{selector}: first failure: {e}");
            }
            return Err(Error::TooManyFailures {
                selector: selector.to_string(),
                failures,
                reps: config.reps,
            });
        }
        let h1: Vec<f64> = ok.iter().map(|o| o.h1).collect();
        let h0: Vec<f64> = ok.iter().map(|o| o.h0).collect();
        let errs: Vec<f64> = ok.iter().map(|o| o.tau_error).collect();
        let (bias, rmse) = trimmed_moments(&errs, config.trim, config.trim_mode);
        selectors.push(SelectorSummary {
            selector,
            mean_h1: mean(&h1),
            sd_h1: sd(&h1),
            mean_h0: mean(&h0),
            sd_h0: sd(&h0),
            trimmed_bias: bias,
            trimmed_rmse: rmse,
            eff: 1.0,
            rmse_star: star.as_ref().map(|s| s[i].rmse_star),
            eff_star: star.as_ref().map(|s| s[i].eff_star),
            failures,
        });
    }
    let best = selectors.iter().map(|s| s.trimmed_rmse).fold(f64::INFINITY, f64::min);
    for s in &mut selectors {
        s.eff = if s.trimmed_rmse > 0.0 { best / s.trimmed_rmse } else { 1.0 };
    }

    Ok(SimulationRun {
        summary: SimulationSummary {
            design: config.design.label(),
            n: config.n,
            reps: config.reps,
            seed: config.seed,
            trim: config.trim,
            trim_mode: config.trim_mode,
            tau: config.design.tau(),
            selectors,
        },
        config: config.clone(),
        records,
    })
}

/// Runs the simulation on a dedicated pool of `jobs` threads.
pub fn run_simulation_with_jobs(config: &SimulationConfig, jobs: usize) -> Result<SimulationRun> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    pool.install(|| run_simulation(config))
}

/// Rows `(t, F(t))` of the empirical CDF of `|τ̂ - τ|` per selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    pub grid: Vec<f64>,
    pub selectors: Vec<Selector>,
    /// `values[i][g]` is selector `i` at grid point `g`.
    pub values: Vec<Vec<f64>>,
}

/// CDF of absolute errors on `0, step, 2 step, ...` up to the largest error.
pub fn error_cdf(run: &SimulationRun, step: f64) -> CdfTable {
    let abs: Vec<Vec<f64>> = (0..run.config.selectors.len())
        .map(|i| run.outcomes(i).iter().map(|o| o.tau_error.abs()).collect())
        .collect();
    let max = abs.iter().flatten().copied().fold(0.0, f64::max);
    let points = (max / step).ceil() as usize + 1;
    let grid: Vec<f64> = (0..points).map(|g| g as f64 * step).collect();
    CdfTable {
        values: abs.iter().map(|a| ecdf(a, &grid)).collect(),
        grid,
        selectors: run.config.selectors.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFunctionErrors {
    pub selector: Selector,
    pub m1_bias: f64,
    pub m1_rmse: f64,
    pub m0_bias: f64,
    pub m0_rmse: f64,
}

/// Trimmed bias and RMSE of the one-sided limits.
pub fn mean_function_errors(run: &SimulationRun) -> Vec<MeanFunctionErrors> {
    let c = &run.config;
    c.selectors
        .iter()
        .enumerate()
        .map(|(i, &selector)| {
            let ok = run.outcomes(i);
            let e1: Vec<f64> = ok.iter().map(|o| o.m1_error).collect();
            let e0: Vec<f64> = ok.iter().map(|o| o.m0_error).collect();
            let (m1_bias, m1_rmse) = trimmed_moments(&e1, c.trim, c.trim_mode);
            let (m0_bias, m0_rmse) = trimmed_moments(&e0, c.trim, c.trim_mode);
            MeanFunctionErrors {
                selector,
                m1_bias,
                m1_rmse,
                m0_bias,
                m0_rmse,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(selectors: Vec<Selector>) -> SimulationConfig {
        SimulationConfig::new(Design::builtin(1).unwrap(), 400, 40, selectors, 3)
    }

    #[test]
    fn validation() {
        let mut c = small(vec![Selector::Mmse]);
        c.reps = 0;
        assert!(matches!(run_simulation(&c), Err(Error::ConfigInvalid(_))));
        let mut c = small(vec![Selector::Mmse]);
        c.trim = 0.5;
        assert!(c.validate().is_err());
        assert!(small(vec![]).validate().is_err());
    }

    #[test]
    fn summary_invariants() {
        let run = run_simulation(&small(vec![Selector::Mmse, Selector::Ind, Selector::Ik])).unwrap();
        let s = &run.summary;
        assert!(s.selectors.iter().any(|x| x.eff == 1.0));
        for x in &s.selectors {
            assert!(x.eff > 0.0 && x.eff <= 1.0);
            assert!(x.trimmed_rmse >= x.trimmed_bias.abs());
            assert!(x.rmse_star.is_some());
        }
        let cdf = error_cdf(&run, 0.005);
        for row in &cdf.values {
            assert!(row.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*row.last().unwrap(), 1.0);
        }
        assert_eq!(mean_function_errors(&run).len(), 3);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let c = small(vec![Selector::Mmse, Selector::Ik]);
        let a = run_simulation_with_jobs(&c, 1).unwrap();
        let b = run_simulation_with_jobs(&c, 4).unwrap();
        assert_eq!(a.summary, b.summary);
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn noiseless_designs() {
        let d = Design {
            id: None,
            m1_coeffs: vec![1.0],
            m0_coeffs: vec![0.5],
            cutoff: 0.0,
            noise_sd: 0.0,
            x_law: Default::default(),
        };
        // Constant means leave only rounding-level residual variance, so a
        // plug-in selector may or may not be defined; when it is, the limits
        // are exact.
        match run_simulation(&SimulationConfig::new(d, 300, 5, vec![Selector::Ik], 1)) {
            Ok(run) => {
                for m in mean_function_errors(&run) {
                    assert!(m.m1_rmse < 1e-10 && m.m0_rmse < 1e-10);
                }
            }
            Err(e) => assert!(matches!(e, Error::TooManyFailures { .. })),
        }

        let mut d3 = Design::builtin(3).unwrap();
        d3.noise_sd = 0.0;
        let run = run_simulation(&SimulationConfig::new(d3, 500, 20, vec![Selector::Mmse], 2)).unwrap();
        // Without noise every error is a pure smoothing bias.
        let s = &run.summary.selectors[0];
        assert!(s.trimmed_rmse < 0.05);
        assert!(s.trimmed_rmse >= s.trimmed_bias.abs());
    }
}
