//! Population-level calculators: RMSE* from the true DGP, relative
//! efficiency surfaces and the bias-cancellation sequence for positive
//! curvature products.

use serde::{Deserialize, Serialize};

use crate::bandwidth::{
    afo_bandwidths, amse1, ik_bandwidth, ind_bandwidths, select_mmse, CutoffQuantities, SearchConfig, Selector,
};
use crate::designs::{design_truth, Design, PopulationMass};
use crate::error::{Error, Result};
use crate::kernels::{KernelConstants, KernelKind};
use crate::lpr::Sides;

/// Search box for population MMSE minimization.
pub fn population_search() -> SearchConfig {
    SearchConfig::uniform(1e-5, 1e2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RmseStar {
    pub selector: Selector,
    pub h1: f64,
    pub h0: f64,
    pub rmse_star: f64,
    pub eff_star: f64,
}

/// Square root of the first-order AMSE at the selector's population
/// bandwidths. MMSE bandwidths minimize the population MMSE; IK uses the
/// population counts `n p_j` and `n ∫ f` over its pilot windows.
pub fn rmse_star(design: &Design, n: usize, selector: Selector, kernel: KernelKind) -> Result<RmseStar> {
    let k = kernel.constants()?;
    let truth = design_truth(design, kernel)?;
    let q = CutoffQuantities::from(&truth);
    let nf = n as f64;
    let h = match selector {
        Selector::Mmse => select_mmse(&q, &k, nf, &population_search())?,
        Selector::Afo => afo_bandwidths(&q, &k, nf)?,
        Selector::Ind => ind_bandwidths(&q, &k, nf)?,
        Selector::Ik => ik_bandwidth(&q, &k, nf, &PopulationMass { design, n: nf })?,
        Selector::Manual => {
            return Err(Error::InvalidInput("RMSE* needs a data-driven selector".into()));
        }
    };
    Ok(RmseStar {
        selector,
        h1: h.h1,
        h0: h.h0,
        rmse_star: amse1((h.h1, h.h0), &q, &k, nf).sqrt(),
        eff_star: 1.0,
    })
}

/// RMSE* for each selector with `eff_star` relative to the smallest.
pub fn rmse_star_table(
    design: &Design,
    n: usize,
    selectors: &[Selector],
    kernel: KernelKind,
) -> Result<Vec<RmseStar>> {
    let mut rows = selectors
        .iter()
        .map(|&s| rmse_star(design, n, s, kernel))
        .collect::<Result<Vec<_>>>()?;
    let best = rows.iter().map(|r| r.rmse_star).fold(f64::INFINITY, f64::min);
    for r in &mut rows {
        r.eff_star = best / r.rmse_star;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EfficiencyCase {
    /// `m1'' m0'' < 0`, parameterized by `γ1 = -m1''/m0''` and `γ2 = σ1²/σ0²`.
    NegativeProduct,
    /// `m1'' = m0''`, parameterized by `γ = θ_IK / θ_AFO`.
    EqualSecondDerivs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub gamma1: f64,
    pub gamma2: Option<f64>,
    /// AMSE at the AFO bandwidths over AMSE at the IK bandwidth.
    pub afo_ik: f64,
    /// AMSE at the AFO bandwidths over AMSE at the IND bandwidths.
    pub afo_ind: Option<f64>,
}

fn negative_case_quantities(g1: f64, g2: f64) -> CutoffQuantities {
    CutoffQuantities {
        f_c: 1.0,
        f1_c: 0.0,
        m2: Sides::new(-g1, 1.0),
        m3: Sides::new(0.0, 0.0),
        sigma2: Sides::new(g2, 1.0),
        b2: Sides::new(0.0, 0.0),
    }
}

/// Common bandwidth minimizing the first-order AMSE without regularization,
/// the large-sample limit of IK when the second derivatives differ.
fn common_bandwidth(q: &CutoffQuantities, k: &KernelConstants, n: f64) -> f64 {
    let gap = q.m2.right - q.m2.left;
    (k.v * (q.sigma2.right + q.sigma2.left) / (k.b1 * k.b1 * q.f_c * gap * gap)).powf(0.2) * n.powf(-0.2)
}

/// `(AMSE(h*) / AMSE(h_IK), AMSE(h*) / AMSE(h_IND))` in the negative case.
/// The ratios do not depend on `n`, the kernel or the density.
pub fn negative_case_ratios(gamma1: f64, gamma2: f64) -> Result<(f64, f64)> {
    if !(gamma1 > 0.0 && gamma2 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "efficiency ratios need positive gammas, got ({gamma1}, {gamma2})"
        )));
    }
    let k = KernelKind::Triangular.constants()?;
    let q = negative_case_quantities(gamma1, gamma2);
    let afo = afo_bandwidths(&q, &k, 1.0)?;
    let ind = ind_bandwidths(&q, &k, 1.0)?;
    let h = common_bandwidth(&q, &k, 1.0);
    let a = amse1((afo.h1, afo.h0), &q, &k, 1.0);
    Ok((a / amse1((h, h), &q, &k, 1.0), a / amse1((ind.h1, ind.h0), &q, &k, 1.0)))
}

/// `1 / ((1/7) γ^6 + (6/7) / γ)`.
pub fn equal_case_ratio(gamma: f64) -> f64 {
    1.0 / (gamma.powi(6) / 7.0 + 6.0 / (7.0 * gamma))
}

/// Ratio table over the grid; `gamma2` is ignored in the equal case.
pub fn efficiency_surface(case: EfficiencyCase, gamma1: &[f64], gamma2: &[f64]) -> Result<Vec<EfficiencyRow>> {
    match case {
        EfficiencyCase::NegativeProduct => {
            let mut rows = Vec::with_capacity(gamma1.len() * gamma2.len());
            for &g1 in gamma1 {
                for &g2 in gamma2 {
                    let (ik, ind) = negative_case_ratios(g1, g2)?;
                    rows.push(EfficiencyRow {
                        gamma1: g1,
                        gamma2: Some(g2),
                        afo_ik: ik,
                        afo_ind: Some(ind),
                    });
                }
            }
            Ok(rows)
        }
        EfficiencyCase::EqualSecondDerivs => gamma1
            .iter()
            .map(|&g| {
                if g > 0.0 {
                    Ok(EfficiencyRow {
                        gamma1: g,
                        gamma2: None,
                        afo_ik: equal_case_ratio(g),
                        afo_ind: None,
                    })
                } else {
                    Err(Error::InvalidInput(format!("gamma must be positive, got {g}")))
                }
            })
            .collect(),
    }
}

/// Coefficients `C_0..=C_k` (k ≤ 2) of `C(h1, k)` with `h0² = C(h1, k) h1²`.
pub fn cancellation_coefficients(q: &CutoffQuantities, k: &KernelConstants, order: usize) -> Result<Vec<f64>> {
    if order > 2 {
        return Err(Error::InvalidInput("cancellation order above 2 is not supported".into()));
    }
    let (m1, m0) = (q.m2.right, q.m2.left);
    if !(m1 * m0 > 0.0) {
        return Err(Error::InvalidInput(
            "bias cancellation needs second derivatives of the same sign".into(),
        ));
    }
    let c0 = m1 / m0;
    let c1 = 2.0 * (q.b2.right - c0.powf(1.5) * q.b2.left) / (k.b1 * m0);
    let c2 = -3.0 * c0.sqrt() * c1 * q.b2.left / (k.b1 * m0);
    Ok([c0, c1, c2][..=order].to_vec())
}

/// First- plus second-order bias at `(h1, h0)` with `h0² = C(h1, k) h1²`.
pub fn cancellation_bias(q: &CutoffQuantities, k: &KernelConstants, h1: f64, order: usize) -> Result<f64> {
    let c = cancellation_coefficients(q, k, order)?;
    let ch: f64 = c.iter().enumerate().map(|(i, ci)| ci * h1.powi(i as i32)).sum();
    let first = 0.5 * k.b1 * (q.m2.right - ch * q.m2.left) * h1 * h1;
    let second = (q.b2.right - ch.powf(1.5) * q.b2.left) * h1.powi(3);
    Ok(first + second)
}
