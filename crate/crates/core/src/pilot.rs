//! Pilot estimates of every unknown in the plug-in MMSE.
//!
//! Step 1 estimates the density and its derivative at the cutoff, step 2 fits
//! a global quartic per side to get the pilot bandwidths of the local cubic
//! fits, and step 3 runs those fits for the second and third derivatives and
//! the conditional variance.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelConstants, KernelKind};
use crate::lpr::{fit_window, RegressionSample, Side, Sides, Window};

/// Rule-of-thumb constants `C_{nu,3}` for the uniform kernel local cubic fit.
pub const C_2_3: f64 = 5.2088;
pub const C_3_3: f64 = 4.8227;

/// Pilot windows with fewer points than this are widened.
pub const MIN_WINDOW_POINTS: usize = 5;

/// Bandwidth overrides for the step-1 density pilots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub density_bandwidth: Option<f64>,
    pub density_derivative_bandwidth: Option<f64>,
}

/// Pilot windows used on one side, with flags for the fallbacks that fired.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotWindows {
    pub h2: f64,
    pub h3: f64,
    /// The rule was undefined or exceeded the data range and was capped.
    pub capped: bool,
    /// A window held fewer than five points and was widened.
    pub widened: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotEstimates {
    pub f_c: f64,
    pub f1_c: f64,
    pub m2: Sides<f64>,
    pub m3: Sides<f64>,
    pub sigma2: Sides<f64>,
    pub b2: Sides<f64>,
    pub n_side: Sides<usize>,
    pub m4: Sides<f64>,
    pub s2: Sides<f64>,
    pub windows: Sides<PilotWindows>,
}

fn sample_sd(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n < 2 {
        return Err(Error::DegenerateSample(format!(
            "need at least 2 observations for a scale estimate, found {n}"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if !(var > 0.0) {
        return Err(Error::DegenerateSample("assignment variable has zero variance".into()));
    }
    Ok(var.sqrt())
}

/// Normal-scale Epanechnikov bandwidth `2.34 σ n^{-1/5}`.
pub fn density_bandwidth(x: &[f64]) -> Result<f64> {
    Ok(2.34 * sample_sd(x)? * (x.len() as f64).powf(-0.2))
}

/// Bandwidth `σ (112 √π / n)^{1/7}` for the density derivative.
pub fn density_derivative_bandwidth(x: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    Ok(sample_sd(x)? * (112.0 * std::f64::consts::PI.sqrt() / n).powf(1.0 / 7.0))
}

pub fn kde_at(x: &[f64], c: f64, h: f64) -> f64 {
    let s: f64 = x.iter().map(|xi| KernelKind::Epanechnikov.eval((c - xi) / h)).sum();
    s / (x.len() as f64 * h)
}

pub fn kde_derivative_at(x: &[f64], c: f64, h: f64) -> f64 {
    let s: f64 = x.iter().map(|xi| KernelKind::JonesDerivative.eval((c - xi) / h)).sum();
    s / (x.len() as f64 * h * h)
}

/// Epanechnikov kernel density estimate at `c`.
pub fn density_at_cutoff(x: &[f64], c: f64) -> Result<f64> {
    Ok(kde_at(x, c, density_bandwidth(x)?))
}

/// Density derivative at `c` with the biweight-derivative kernel.
pub fn density_derivative_at_cutoff(x: &[f64], c: f64) -> Result<f64> {
    Ok(kde_derivative_at(x, c, density_derivative_bandwidth(x)?))
}

/// Global quartic OLS on one side: `(24 * γ4, residual variance)`.
pub fn quartic_pilot(sample: &RegressionSample, side: Side) -> Result<(f64, f64)> {
    let n = sample.side_count(side);
    if n < 6 {
        return Err(Error::InsufficientData {
            side,
            needed: 6,
            found: n,
        });
    }
    let fit = fit_window(sample, side, 4, Window::All)?;
    let s2 = fit.residual_variance.unwrap_or(0.0);
    Ok((24.0 * fit.coeffs[4], s2))
}

/// `C_{nu,3} (s2 / (f m4^2 n))^{1/9}` for `nu` in {2, 3}.
pub fn pilot_bandwidth(nu: u8, s2: f64, f_c: f64, m4: f64, n_side: usize, side: Side) -> Result<f64> {
    let c = match nu {
        2 => C_2_3,
        3 => C_3_3,
        _ => return Err(Error::InvalidInput(format!("pilot order {nu} is not 2 or 3"))),
    };
    if m4 == 0.0 {
        return Err(Error::ZeroFourthDerivative { side });
    }
    if !(f_c > 0.0) || n_side == 0 {
        return Err(Error::InvalidInput(
            "pilot bandwidth needs a positive density and a nonempty side".into(),
        ));
    }
    Ok(c * (s2 / (f_c * m4 * m4 * n_side as f64)).powf(1.0 / 9.0))
}

/// Local cubic uniform-kernel fits: `(m2, m3, sigma2)`.
pub fn curvature_and_variance(
    sample: &RegressionSample,
    side: Side,
    h2: f64,
    h3: f64,
) -> Result<(f64, f64, f64)> {
    let fit2 = fit_window(sample, side, 3, Window::Inclusive(h2))?;
    let fit3 = fit_window(sample, side, 3, Window::Inclusive(h3))?;
    let sigma2 = fit2.residual_variance.ok_or(Error::InsufficientData {
        side,
        needed: 5,
        found: fit2.n_effective,
    })?;
    Ok((fit2.derivative(2), fit3.derivative(3), sigma2))
}

/// `b_{2,j}`: second-order bias coefficient of the side-`j` intercept.
pub fn second_order_bias_coeff(
    side: Side,
    m2: f64,
    m3: f64,
    f_c: f64,
    f1_c: f64,
    k: &KernelConstants,
) -> f64 {
    let g = m2 * f1_c / (2.0 * f_c);
    side.sign() * (k.xi1 * (g + m3 / 6.0) - k.xi2 * g)
}

/// Widens `h` to cover the `MIN_WINDOW_POINTS` nearest side points if needed;
/// caps at the side's range.
fn adjust_window(dist: &[f64], h: Option<f64>, side: Side, w: &mut PilotWindows) -> f64 {
    let range = dist.last().copied().unwrap_or(0.0);
    let mut h = match h {
        Some(h) if h.is_finite() && h <= range => h,
        _ => {
            w.capped = true;
            warn!("{side} pilot bandwidth capped at the side range {range:.4}");
            range
        }
    };
    let inside = dist.partition_point(|d| *d <= h);
    if inside < MIN_WINDOW_POINTS && dist.len() >= MIN_WINDOW_POINTS {
        h = dist[MIN_WINDOW_POINTS - 1];
        w.widened = true;
        warn!(
            "{side} pilot window held {inside} points; widened to {h:.4} to cover {MIN_WINDOW_POINTS}"
        );
    }
    h
}

pub fn assemble_pilots(sample: &RegressionSample, kernel: KernelKind) -> Result<PilotEstimates> {
    assemble_pilots_with(sample, kernel, &PilotConfig::default())
}

pub fn assemble_pilots_with(
    sample: &RegressionSample,
    kernel: KernelKind,
    config: &PilotConfig,
) -> Result<PilotEstimates> {
    let k = kernel.constants()?;
    let x = sample.x();
    let c = sample.cutoff();

    let step1 = |e: Error| e.at_pilot_step(1, None);
    let hf = match config.density_bandwidth {
        Some(h) => h,
        None => density_bandwidth(x).map_err(step1)?,
    };
    let hd = match config.density_derivative_bandwidth {
        Some(h) => h,
        None => density_derivative_bandwidth(x).map_err(step1)?,
    };
    let f_c = kde_at(x, c, hf);
    let f1_c = kde_derivative_at(x, c, hd);
    if !(f_c > 0.0) {
        return Err(step1(Error::DegenerateSample(
            "estimated density at the cutoff is zero".into(),
        )));
    }

    let mut m4 = Sides::new(0.0, 0.0);
    let mut s2 = Sides::new(0.0, 0.0);
    let mut windows = Sides::from_fn(|_| PilotWindows {
        h2: 0.0,
        h3: 0.0,
        capped: false,
        widened: false,
    });
    let n_side = Sides::from_fn(|s| sample.side_count(s));
    for side in Side::BOTH {
        let (m4s, s2s) = quartic_pilot(sample, side).map_err(|e| e.at_pilot_step(2, Some(side)))?;
        *m4.get_mut(side) = m4s;
        *s2.get_mut(side) = s2s;
        let dist = sample.side_distances(side);
        let w = windows.get_mut(side);
        let h2 = pilot_bandwidth(2, s2s, f_c, m4s, n_side.at(side), side).ok();
        let h3 = pilot_bandwidth(3, s2s, f_c, m4s, n_side.at(side), side).ok();
        w.h2 = adjust_window(&dist, h2, side, w);
        w.h3 = adjust_window(&dist, h3, side, w);
    }

    let mut m2 = Sides::new(0.0, 0.0);
    let mut m3 = Sides::new(0.0, 0.0);
    let mut sigma2 = Sides::new(0.0, 0.0);
    for side in Side::BOTH {
        let w = windows.at(side);
        let (a, b, s) = curvature_and_variance(sample, side, w.h2, w.h3)
            .map_err(|e| e.at_pilot_step(3, Some(side)))?;
        *m2.get_mut(side) = a;
        *m3.get_mut(side) = b;
        *sigma2.get_mut(side) = s;
    }

    let b2 = Sides::from_fn(|s| second_order_bias_coeff(s, m2.at(s), m3.at(s), f_c, f1_c, &k));
    Ok(PilotEstimates {
        f_c,
        f1_c,
        m2,
        m3,
        sigma2,
        b2,
        n_side,
        m4,
        s2,
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tri() -> KernelConstants {
        KernelKind::Triangular.constants().unwrap()
    }

    #[test]
    fn pilot_bandwidth_constants() {
        assert_abs_diff_eq!(pilot_bandwidth(2, 1.0, 1.0, 1.0, 1, Side::Right).unwrap(), 5.2088);
        assert_abs_diff_eq!(pilot_bandwidth(3, 1.0, 1.0, 1.0, 1, Side::Right).unwrap(), 4.8227);
        let a = pilot_bandwidth(2, 0.3, 0.7, 2.0, 100, Side::Left).unwrap();
        let b = pilot_bandwidth(2, 0.3, 0.7, 2.0, 51_200, Side::Left).unwrap();
        assert_abs_diff_eq!(a / b, 2.0, epsilon = 1e-12);
        assert_eq!(
            pilot_bandwidth(3, 1.0, 1.0, 0.0, 10, Side::Left),
            Err(Error::ZeroFourthDerivative { side: Side::Left })
        );
    }

    #[test]
    fn bias_coefficient_identities() {
        let k = tri();
        assert_eq!(second_order_bias_coeff(Side::Right, 3.0, 0.0, 1.0, 0.0, &k), 0.0);
        assert_eq!(second_order_bias_coeff(Side::Left, 3.0, 0.0, 1.0, 0.0, &k), 0.0);
        let r = second_order_bias_coeff(Side::Right, 1.3, -2.0, 0.6, 0.4, &k);
        let l = second_order_bias_coeff(Side::Left, 1.3, -2.0, 0.6, 0.4, &k);
        assert_eq!(r, -l);
        let mut eq = k;
        eq.xi2 = eq.xi1;
        assert_abs_diff_eq!(
            second_order_bias_coeff(Side::Right, 1.3, -2.0, 0.6, 0.4, &eq),
            eq.xi1 * -2.0 / 6.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn quartic_reproduction() {
        let x: Vec<f64> = (0..100).map(|i| -1.0 + i as f64 * 0.02 + 0.001).collect();
        let y: Vec<f64> = x.iter().map(|x| 1.0 - x + 0.5 * x * x + 2.5 * x.powi(4)).collect();
        let s = RegressionSample::new(x.clone(), y, 0.0).unwrap();
        let (m4, s2) = quartic_pilot(&s, Side::Left).unwrap();
        assert_abs_diff_eq!(m4, 60.0, epsilon = 1e-7);
        assert!(s2 < 1e-20);
        let y: Vec<f64> = x.iter().map(|x| 1.0 - x).collect();
        let s = RegressionSample::new(x, y, 0.0).unwrap();
        let (m4, _) = quartic_pilot(&s, Side::Right).unwrap();
        assert_abs_diff_eq!(m4, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn cubic_curvature_recovery() {
        let x: Vec<f64> = (0..200).map(|i| -1.0 + i as f64 * 0.01 + 0.0005).collect();
        let y: Vec<f64> = x.iter().map(|x| 0.2 + x - 1.5 * x * x + 0.7 * x.powi(3)).collect();
        let s = RegressionSample::new(x, y, 0.0).unwrap();
        let (m2, m3, s2) = curvature_and_variance(&s, Side::Right, 0.4, 0.6).unwrap();
        assert_abs_diff_eq!(m2, -3.0, epsilon = 1e-8);
        assert_abs_diff_eq!(m3, 4.2, epsilon = 1e-7);
        assert!(s2 < 1e-20);
    }

    #[test]
    fn density_far_from_data_is_zero() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        assert_eq!(density_at_cutoff(&x, 100.0).unwrap(), 0.0);
        assert!(matches!(density_at_cutoff(&[1.0, 1.0, 1.0], 1.0), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn density_derivative_is_antisymmetric() {
        let x: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 / 101.0).powi(2) - 0.3).collect();
        let mx: Vec<f64> = x.iter().map(|v| -v).collect();
        let a = density_derivative_at_cutoff(&x, 0.1).unwrap();
        let b = density_derivative_at_cutoff(&mx, -0.1).unwrap();
        assert_eq!(a, -b);
    }

    #[test]
    fn narrow_window_is_widened() {
        let dist = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let mut w = PilotWindows { h2: 0.0, h3: 0.0, capped: false, widened: false };
        assert_eq!(adjust_window(&dist, Some(0.25), Side::Right, &mut w), 0.5);
        assert!(w.widened && !w.capped);
        let mut w = PilotWindows { h2: 0.0, h3: 0.0, capped: false, widened: false };
        assert_eq!(adjust_window(&dist, Some(9.0), Side::Right, &mut w), 0.6);
        assert!(w.capped);
    }
}
