//! Kernel functions and their one-sided moment constants.
//!
//! Every AMSE formula in the crate is parameterized by the half-line moments
//! `mu_j = ∫_0^∞ u^j K(u) du` and `nu_j = ∫_0^∞ u^j K(u)^2 du`. They are stored
//! here as exact rationals rather than integrated at runtime.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `(1 - |u|) 1{|u| < 1}`, the default for the RD estimator.
    Triangular,
    /// `0.75 (1 - u^2) 1{|u| < 1}`, used by the density pilot.
    Epanechnikov,
    /// `0.5 1{|u| < 1}`, used by the curvature pilots.
    Uniform,
    /// `-15 u (1 - u^2) / 4 on |u| < 1`: the derivative of the biweight kernel,
    /// used for the density-derivative pilot. Not a weight kernel.
    JonesDerivative,
}

impl KernelKind {
    pub const WEIGHT_KERNELS: [KernelKind; 3] = [
        KernelKind::Triangular,
        KernelKind::Epanechnikov,
        KernelKind::Uniform,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Triangular => "triangular",
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Uniform => "uniform",
            KernelKind::JonesDerivative => "jones-derivative",
        }
    }

    #[inline]
    pub fn eval(self, u: f64) -> f64 {
        if u.abs() >= 1.0 {
            return 0.0;
        }
        match self {
            KernelKind::Triangular => 1.0 - u.abs(),
            KernelKind::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelKind::Uniform => 0.5,
            KernelKind::JonesDerivative => -15.0 * u * (1.0 - u * u) / 4.0,
        }
    }

    pub fn constants(self) -> Result<KernelConstants> {
        kernel_constants(self)
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "triangular" | "tri" => Ok(KernelKind::Triangular),
            "epanechnikov" | "epa" => Ok(KernelKind::Epanechnikov),
            "uniform" | "rectangular" => Ok(KernelKind::Uniform),
            "jones" | "jones-derivative" => Ok(KernelKind::JonesDerivative),
            other => Err(Error::InvalidInput(format!("unknown kernel '{other}'"))),
        }
    }
}

/// Evaluates `K(u)`; exactly zero for `|u| >= 1`.
pub fn kernel_eval(kind: KernelKind, u: f64) -> f64 {
    kind.eval(u)
}

/// One-sided moments and the bias/variance constants derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub kernel: KernelKind,
    /// `mu_{j,0}` for `j = 0..=4`.
    pub mu: [f64; 5],
    /// `nu_{j,0}` for `j = 0..=2`.
    pub nu: [f64; 3],
    /// First-order bias constant.
    pub b1: f64,
    /// Variance constant.
    pub v: f64,
    pub xi1: f64,
    pub xi2: f64,
}

impl KernelConstants {
    /// Derives `b1`, `v`, `xi1` and `xi2` from the half-line moments.
    pub fn from_moments(kernel: KernelKind, mu: [f64; 5], nu: [f64; 3]) -> Self {
        let det = mu[0] * mu[2] - mu[1] * mu[1];
        let b1 = (mu[2] * mu[2] - mu[1] * mu[3]) / det;
        let v = (mu[2] * mu[2] * nu[0] - 2.0 * mu[1] * mu[2] * nu[1] + mu[1] * mu[1] * nu[2])
            / (det * det);
        let xi1 = (mu[2] * mu[3] - mu[1] * mu[4]) / det;
        let xi2 = (mu[2] * mu[2] - mu[1] * mu[3]) * (mu[0] * mu[3] - mu[1] * mu[2]) / (det * det);
        KernelConstants {
            kernel,
            mu,
            nu,
            b1,
            v,
            xi1,
            xi2,
        }
    }

    /// `(v / b1^2)^{1/5}`; 3.4375 for the triangular kernel.
    pub fn rule_of_thumb_constant(&self) -> f64 {
        (self.v / (self.b1 * self.b1)).powf(0.2)
    }
}

fn half_line_moments(kind: KernelKind) -> Option<([f64; 5], [f64; 3])> {
    let mu = |j: f64| -> f64 {
        match kind {
            KernelKind::Triangular => 1.0 / ((j + 1.0) * (j + 2.0)),
            KernelKind::Epanechnikov => 1.5 / ((j + 1.0) * (j + 3.0)),
            KernelKind::Uniform => 1.0 / (2.0 * (j + 1.0)),
            KernelKind::JonesDerivative => unreachable!(),
        }
    };
    let nu = |j: f64| -> f64 {
        match kind {
            KernelKind::Triangular => 2.0 / ((j + 1.0) * (j + 2.0) * (j + 3.0)),
            // 9/16 * (1/(j+1) - 2/(j+3) + 1/(j+5))
            KernelKind::Epanechnikov => 4.5 / ((j + 1.0) * (j + 3.0) * (j + 5.0)),
            KernelKind::Uniform => 1.0 / (4.0 * (j + 1.0)),
            KernelKind::JonesDerivative => unreachable!(),
        }
    };
    match kind {
        KernelKind::JonesDerivative => None,
        _ => Some((
            [mu(0.0), mu(1.0), mu(2.0), mu(3.0), mu(4.0)],
            [nu(0.0), nu(1.0), nu(2.0)],
        )),
    }
}

/// Moment constants for a symmetric second-order weight kernel.
pub fn kernel_constants(kind: KernelKind) -> Result<KernelConstants> {
    let (mu, nu) =
        half_line_moments(kind).ok_or(Error::UnsupportedKernel(KernelKind::JonesDerivative.name()))?;
    Ok(KernelConstants::from_moments(kind, mu, nu))
}
