//! Closed-form selectors: AFO, IND and the regularized common IK bandwidth.

use serde::{Deserialize, Serialize};

use super::{BandwidthPair, CutoffQuantities, Diagnostics, Selector, SideMass};
use crate::error::{Error, Result};
use crate::kernels::KernelConstants;
use crate::lpr::{Side, Sides};

/// Multiplier of the IK pilot bandwidth `h_2`.
pub const IK_H2_CONSTANT: f64 = 3.56;
/// Numerator constant of the IK regularization terms.
pub const IK_R_CONSTANT: f64 = 2160.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AfoCase {
    /// `m1'' m0'' < 0`: rate `n^{-1/5}`.
    NegativeProduct,
    /// `m1'' m0'' > 0`: rate `n^{-1/7}`.
    PositiveProduct,
}

/// Asymptotically first-order optimal `(h1, h0)`.
pub fn afo_bandwidths(q: &CutoffQuantities, k: &KernelConstants, n: f64) -> Result<BandwidthPair> {
    q.check_positive()?;
    q.check_second_derivatives()?;
    let (m1, m0) = (q.m2.right, q.m2.left);
    let (s1, s0) = (q.sigma2.right, q.sigma2.left);
    let (h1, h0, case) = if m1 * m0 < 0.0 {
        let lambda = (-s0 * m1 / (s1 * m0)).cbrt();
        let theta = (k.v * s1 / (k.b1 * k.b1 * q.f_c * m1 * (m1 - lambda * lambda * m0))).powf(0.2);
        let h1 = theta * n.powf(-0.2);
        (h1, lambda * h1, AfoCase::NegativeProduct)
    } else {
        let lambda = (m1 / m0).sqrt();
        let gap = q.b2.right - lambda.powi(3) * q.b2.left;
        let scale = q.b2.right.abs().max(lambda.powi(3) * q.b2.left.abs());
        if !(gap.abs() > 1e-12 * scale) {
            return Err(Error::BiasCancellation);
        }
        let theta = (k.v * (s1 + s0 / lambda) / (6.0 * q.f_c * gap * gap)).powf(1.0 / 7.0);
        let h1 = theta * n.powf(-1.0 / 7.0);
        (h1, lambda * h1, AfoCase::PositiveProduct)
    };
    Ok(BandwidthPair {
        h1,
        h0,
        selector: Selector::Afo,
        diagnostics: Some(Diagnostics {
            objective: None,
            m2_product_sign: q.m2_product_sign(),
            restarts: 0,
            converged: 0,
            afo_case: Some(case),
        }),
    })
}

/// Per-side AMSE-optimal bandwidths chosen independently.
pub fn ind_bandwidths(q: &CutoffQuantities, k: &KernelConstants, n: f64) -> Result<BandwidthPair> {
    q.check_positive()?;
    q.check_second_derivatives()?;
    let h = |s: Side| {
        let m = q.m2.at(s);
        (k.v * q.sigma2.at(s) / (k.b1 * k.b1 * q.f_c * m * m)).powf(0.2) * n.powf(-0.2)
    };
    Ok(BandwidthPair {
        h1: h(Side::Right),
        h0: h(Side::Left),
        selector: Selector::Ind,
        diagnostics: Some(Diagnostics {
            objective: None,
            m2_product_sign: q.m2_product_sign(),
            restarts: 0,
            converged: 0,
            afo_case: None,
        }),
    })
}

/// Regularization terms `r_+` and `r_-` of the IK bandwidth.
pub fn ik_regularization(q: &CutoffQuantities, counts: &dyn SideMass) -> Result<Sides<f64>> {
    Sides::try_from_fn(|side| {
        let s2 = q.sigma2.at(side);
        let m3 = q.m3.at(side);
        let n_side = counts.side_count(side);
        if !(n_side > 0.0) {
            return Err(Error::InsufficientData {
                side,
                needed: 1,
                found: 0,
            });
        }
        let h2 = IK_H2_CONSTANT * (s2 / (q.f_c * m3 * m3)).powf(1.0 / 7.0) * n_side.powf(-1.0 / 7.0);
        let n2 = if h2.is_finite() {
            counts.window_count(side, h2)
        } else {
            n_side
        };
        if !(n2 > 0.0) {
            return Err(Error::InsufficientData {
                side,
                needed: 1,
                found: 0,
            });
        }
        Ok(IK_R_CONSTANT * s2 / (n2 * h2.powi(4)))
    })
}

/// Common bandwidth minimizing the first-order AMSE with regularized bias.
pub fn ik_bandwidth(
    q: &CutoffQuantities,
    k: &KernelConstants,
    n: f64,
    counts: &dyn SideMass,
) -> Result<BandwidthPair> {
    q.check_positive()?;
    let r = ik_regularization(q, counts)?;
    let gap = q.m2.right - q.m2.left;
    let denom = k.b1 * k.b1 * q.f_c * (gap * gap + r.right + r.left);
    let h = (k.v * (q.sigma2.right + q.sigma2.left) / denom).powf(0.2) * n.powf(-0.2);
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::BiasCancellation);
    }
    Ok(BandwidthPair {
        h1: h,
        h0: h,
        selector: Selector::Ik,
        diagnostics: Some(Diagnostics {
            objective: None,
            m2_product_sign: q.m2_product_sign(),
            restarts: 0,
            converged: 0,
            afo_case: None,
        }),
    })
}
