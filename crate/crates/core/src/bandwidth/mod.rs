//! Bandwidth selectors and the objectives they minimize.
//!
//! Every selector reads the cutoff quantities through [`CutoffQuantities`],
//! which can come from pilot estimates or from the true DGP.

mod closed_form;
mod mmse;
mod optimize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelConstants;
use crate::lpr::{RegressionSample, Side, Sides};
use crate::pilot::PilotEstimates;

pub use closed_form::{afo_bandwidths, ik_bandwidth, ind_bandwidths, AfoCase, IK_H2_CONSTANT, IK_R_CONSTANT};
pub use mmse::{search_config_default, select_mmse, SearchConfig};
pub use optimize::{nelder_mead_box, NelderMeadResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Mmse,
    Afo,
    Ind,
    Ik,
    Manual,
}

impl Selector {
    pub fn name(self) -> &'static str {
        match self {
            Selector::Mmse => "mmse",
            Selector::Afo => "afo",
            Selector::Ind => "ind",
            Selector::Ik => "ik",
            Selector::Manual => "manual",
        }
    }
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Selector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mmse" => Ok(Selector::Mmse),
            "afo" => Ok(Selector::Afo),
            "ind" => Ok(Selector::Ind),
            "ik" => Ok(Selector::Ik),
            "manual" => Ok(Selector::Manual),
            other => Err(Error::InvalidInput(format!("unknown selector '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Objective value at the returned pair, when the selector minimizes one.
    pub objective: Option<f64>,
    /// Sign of `m1'' * m0''` (-1, 0 or 1).
    pub m2_product_sign: f64,
    /// Multi-start runs launched and how many of them converged.
    pub restarts: usize,
    pub converged: usize,
    pub afo_case: Option<AfoCase>,
}

/// Right (`h1`) and left (`h0`) bandwidths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthPair {
    pub h1: f64,
    pub h0: f64,
    pub selector: Selector,
    pub diagnostics: Option<Diagnostics>,
}

impl BandwidthPair {
    pub fn manual(h1: f64, h0: f64) -> Self {
        BandwidthPair {
            h1,
            h0,
            selector: Selector::Manual,
            diagnostics: None,
        }
    }

    pub fn get(&self, side: Side) -> f64 {
        match side {
            Side::Right => self.h1,
            Side::Left => self.h0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h1 > 0.0 && self.h0 > 0.0 && self.h1.is_finite() && self.h0.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "bandwidths <{}, {}> must be positive and finite",
                self.h1, self.h0
            )))
        }
    }
}

/// The plug-in quantities at the cutoff that every selector consumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffQuantities {
    pub f_c: f64,
    pub f1_c: f64,
    pub m2: Sides<f64>,
    pub m3: Sides<f64>,
    pub sigma2: Sides<f64>,
    pub b2: Sides<f64>,
}

impl CutoffQuantities {
    pub fn m2_product_sign(&self) -> f64 {
        let p = self.m2.right * self.m2.left;
        if p > 0.0 {
            1.0
        } else if p < 0.0 {
            -1.0
        } else {
            0.0
        }
    }

    /// Errors when either second derivative is zero relative to the other.
    pub(crate) fn check_second_derivatives(&self) -> Result<()> {
        let (r, l) = (self.m2.right, self.m2.left);
        let scale = r.abs().max(l.abs());
        if !(r.abs() > 1e-8 * scale) || !(l.abs() > 1e-8 * scale) {
            return Err(Error::ZeroSecondDerivative {
                m2_right: r,
                m2_left: l,
            });
        }
        Ok(())
    }

    pub(crate) fn check_positive(&self) -> Result<()> {
        if !(self.f_c > 0.0) {
            return Err(Error::InvalidInput(format!(
                "density at the cutoff must be positive, got {}",
                self.f_c
            )));
        }
        if !(self.sigma2.right > 0.0 && self.sigma2.left > 0.0) {
            return Err(Error::InvalidInput(format!(
                "conditional variances must be positive, got ({}, {})",
                self.sigma2.right, self.sigma2.left
            )));
        }
        Ok(())
    }

    /// Copy with the outcome rescaled by `a`.
    pub fn scale_y(&self, a: f64) -> Self {
        CutoffQuantities {
            f_c: self.f_c,
            f1_c: self.f1_c,
            m2: self.m2.map(|v| a * v),
            m3: self.m3.map(|v| a * v),
            sigma2: self.sigma2.map(|v| a * a * v),
            b2: self.b2.map(|v| a * v),
        }
    }
}

impl From<&PilotEstimates> for CutoffQuantities {
    fn from(p: &PilotEstimates) -> Self {
        CutoffQuantities {
            f_c: p.f_c,
            f1_c: p.f1_c,
            m2: p.m2,
            m3: p.m3,
            sigma2: p.sigma2,
            b2: p.b2,
        }
    }
}

/// Population values at the cutoff, plus the one-sided probability masses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueQuantities {
    pub f_c: f64,
    pub f1_c: f64,
    pub m2: Sides<f64>,
    pub m3: Sides<f64>,
    pub sigma2: Sides<f64>,
    pub b2: Sides<f64>,
    pub p1: f64,
    pub p0: f64,
}

impl From<&TrueQuantities> for CutoffQuantities {
    fn from(t: &TrueQuantities) -> Self {
        CutoffQuantities {
            f_c: t.f_c,
            f1_c: t.f1_c,
            m2: t.m2,
            m3: t.m3,
            sigma2: t.sigma2,
            b2: t.b2,
        }
    }
}

/// Counts feeding the IK regularization: the number of observations on a
/// side and within distance `h` of the cutoff on that side.
pub trait SideMass {
    fn side_count(&self, side: Side) -> f64;
    fn window_count(&self, side: Side, h: f64) -> f64;
}

impl SideMass for RegressionSample {
    fn side_count(&self, side: Side) -> f64 {
        RegressionSample::side_count(self, side) as f64
    }

    fn window_count(&self, side: Side, h: f64) -> f64 {
        RegressionSample::window_count(self, side, h) as f64
    }
}

fn variance_term(h: (f64, f64), q: &CutoffQuantities, k: &KernelConstants, n: f64) -> f64 {
    k.v / (n * q.f_c) * (q.sigma2.right / h.0 + q.sigma2.left / h.1)
}

fn first_order_bias(h: (f64, f64), q: &CutoffQuantities, k: &KernelConstants) -> f64 {
    0.5 * k.b1 * (q.m2.right * h.0 * h.0 - q.m2.left * h.1 * h.1)
}

fn second_order_bias(h: (f64, f64), q: &CutoffQuantities) -> f64 {
    q.b2.right * h.0.powi(3) - q.b2.left * h.1.powi(3)
}

/// First-order AMSE at `h = (h1, h0)`.
pub fn amse1(h: (f64, f64), q: &CutoffQuantities, k: &KernelConstants, n: f64) -> f64 {
    first_order_bias(h, q, k).powi(2) + variance_term(h, q, k, n)
}

/// AMSE with only the second-order bias term.
pub fn amse2(h: (f64, f64), q: &CutoffQuantities, k: &KernelConstants, n: f64) -> f64 {
    second_order_bias(h, q).powi(2) + variance_term(h, q, k, n)
}

/// Both squared bias terms plus the variance.
pub fn mmse_objective(h: (f64, f64), q: &CutoffQuantities, k: &KernelConstants, n: f64) -> f64 {
    first_order_bias(h, q, k).powi(2) + second_order_bias(h, q).powi(2) + variance_term(h, q, k, n)
}

/// Runs `selector` on the given quantities. `counts` feeds IK only; `search`
/// feeds MMSE only.
pub fn select(
    selector: Selector,
    q: &CutoffQuantities,
    k: &KernelConstants,
    n: f64,
    counts: &dyn SideMass,
    search: &SearchConfig,
) -> Result<BandwidthPair> {
    match selector {
        Selector::Mmse => select_mmse(q, k, n, search),
        Selector::Afo => afo_bandwidths(q, k, n),
        Selector::Ind => ind_bandwidths(q, k, n),
        Selector::Ik => ik_bandwidth(q, k, n, counts),
        Selector::Manual => Err(Error::InvalidInput(
            "manual bandwidths must be supplied as overrides".into(),
        )),
    }
}
