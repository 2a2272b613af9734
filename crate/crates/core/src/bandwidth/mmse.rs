//! Numerical minimization of the MMSE over a compact bandwidth box.

use serde::{Deserialize, Serialize};

use super::optimize::nelder_mead_box;
use super::{mmse_objective, BandwidthPair, CutoffQuantities, Diagnostics, Selector};
use crate::error::{Error, Result};
use crate::kernels::KernelConstants;
use crate::lpr::{RegressionSample, Side, Sides};

/// Log-space tolerance on the simplex diameter.
const XTOL: f64 = 1e-10;

/// Search box `[h_min, h_max]` per side and the multi-start grid size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub h_min: Sides<f64>,
    pub h_max: Sides<f64>,
    /// Starts per axis; the grid is `starts × starts`, log-spaced.
    pub starts: usize,
}

impl SearchConfig {
    pub const DEFAULT_STARTS: usize = 8;

    /// Same bounds on both sides.
    pub fn uniform(h_min: f64, h_max: f64) -> Self {
        SearchConfig {
            h_min: Sides::new(h_min, h_min),
            h_max: Sides::new(h_max, h_max),
            starts: Self::DEFAULT_STARTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for side in Side::BOTH {
            let (lo, hi) = (self.h_min.at(side), self.h_max.at(side));
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::ConfigInvalid(format!(
                    "search interval [{lo}, {hi}] on the {side} side is not a positive interval"
                )));
            }
        }
        if self.starts == 0 {
            return Err(Error::ConfigInvalid("at least one start per axis is required".into()));
        }
        Ok(())
    }
}

/// Box derived from the data: `h_max` is the side's range and `h_min` the
/// larger of `1e-4` times the range and the smallest window holding 4 points.
pub fn search_config_default(sample: &RegressionSample) -> Result<SearchConfig> {
    let mut h_min = Sides::new(0.0, 0.0);
    let mut h_max = Sides::new(0.0, 0.0);
    for side in Side::BOTH {
        let d = sample.side_distances(side);
        if d.len() < 4 {
            return Err(Error::InsufficientData {
                side,
                needed: 4,
                found: d.len(),
            });
        }
        let range = d[d.len() - 1];
        if !(range > 0.0) {
            return Err(Error::SingularDesign {
                side,
                condition: f64::INFINITY,
            });
        }
        *h_max.get_mut(side) = range;
        *h_min.get_mut(side) = (1e-4 * range).max(d[3]);
    }
    Ok(SearchConfig {
        h_min,
        h_max,
        starts: SearchConfig::DEFAULT_STARTS,
    })
}

fn log_points(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m == 1 || lo == hi {
        return vec![0.5 * (lo.ln() + hi.ln())];
    }
    (0..m)
        .map(|i| lo.ln() + (hi.ln() - lo.ln()) * (i as f64 + 0.5) / m as f64)
        .collect()
}

fn order(a: &(f64, [f64; 2]), b: &(f64, [f64; 2])) -> std::cmp::Ordering {
    a.0.total_cmp(&b.0)
        .then(a.1[0].total_cmp(&b.1[0]))
        .then(a.1[1].total_cmp(&b.1[1]))
}

/// Multi-start minimizer of [`mmse_objective`] over the search box.
pub fn select_mmse(
    q: &CutoffQuantities,
    k: &KernelConstants,
    n: f64,
    search: &SearchConfig,
) -> Result<BandwidthPair> {
    q.check_positive()?;
    q.check_second_derivatives()?;
    search.validate()?;

    let lo = [search.h_min.right.ln(), search.h_min.left.ln()];
    let hi = [search.h_max.right.ln(), search.h_max.left.ln()];
    let step = [
        ((hi[0] - lo[0]) / search.starts as f64).max(0.05),
        ((hi[1] - lo[1]) / search.starts as f64).max(0.05),
    ];
    let g = |u: [f64; 2]| mmse_objective((u[0].exp(), u[1].exp()), q, k, n);

    let s1 = log_points(search.h_min.right, search.h_max.right, search.starts);
    let s0 = log_points(search.h_min.left, search.h_max.left, search.starts);
    let mut best: Option<(f64, [f64; 2])> = None;
    let mut best_start: Option<(f64, [f64; 2])> = None;
    let mut restarts = 0usize;
    let mut converged = 0usize;
    for &a in &s1 {
        for &b in &s0 {
            restarts += 1;
            let start = (g([a, b]), [a, b]);
            if best_start.as_ref().is_none_or(|s| order(&start, s).is_lt()) {
                best_start = Some(start);
            }
            let r = nelder_mead_box(g, [a, b], step, lo, hi, XTOL);
            if !r.converged || !r.fx.is_finite() {
                continue;
            }
            converged += 1;
            let cand = (r.fx, r.x);
            if best.as_ref().is_none_or(|s| order(&cand, s).is_lt()) {
                best = Some(cand);
            }
        }
    }

    let Some((fx, u)) = best else {
        let (_, u) = best_start.expect("start grid is nonempty");
        return Err(Error::OptimizerFailure {
            h1: u[0].exp(),
            h0: u[1].exp(),
        });
    };
    Ok(BandwidthPair {
        h1: u[0].exp(),
        h0: u[1].exp(),
        selector: Selector::Mmse,
        diagnostics: Some(Diagnostics {
            objective: Some(fx),
            m2_product_sign: q.m2_product_sign(),
            restarts,
            converged,
            afo_case: None,
        }),
    })
}
