//! One-sided local polynomial regression at the cutoff.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bandwidth::BandwidthPair;
use crate::error::{Error, Result};
use crate::kernels::KernelKind;

/// Condition number of the scaled weighted design beyond which a fit is
/// reported as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `x >= c`, treated, `j = 1`.
    Right,
    /// `x < c`, control, `j = 0`.
    Left,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Right, Side::Left];

    #[inline]
    pub fn contains(self, x: f64, cutoff: f64) -> bool {
        match self {
            Side::Right => x >= cutoff,
            Side::Left => x < cutoff,
        }
    }

    /// `(-1)^{j+1}`: +1 on the right, -1 on the left.
    pub fn sign(self) -> f64 {
        match self {
            Side::Right => 1.0,
            Side::Left => -1.0,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Right => "right",
            Side::Left => "left",
        })
    }
}

/// A value per side of the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sides<T> {
    pub right: T,
    pub left: T,
}

impl<T> Sides<T> {
    pub fn new(right: T, left: T) -> Self {
        Sides { right, left }
    }

    pub fn get(&self, side: Side) -> &T {
        match side {
            Side::Right => &self.right,
            Side::Left => &self.left,
        }
    }

    pub fn get_mut(&mut self, side: Side) -> &mut T {
        match side {
            Side::Right => &mut self.right,
            Side::Left => &mut self.left,
        }
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> Sides<U> {
        Sides {
            right: f(self.right),
            left: f(self.left),
        }
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(Side) -> std::result::Result<T, E>) -> std::result::Result<Self, E> {
        Ok(Sides {
            right: f(Side::Right)?,
            left: f(Side::Left)?,
        })
    }

    pub fn from_fn(mut f: impl FnMut(Side) -> T) -> Self {
        Sides {
            right: f(Side::Right),
            left: f(Side::Left),
        }
    }
}

impl<T: Copy> Sides<T> {
    pub fn at(&self, side: Side) -> T {
        *self.get(side)
    }
}

/// Paired `(x, y)` observations and the cutoff `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSample {
    x: Vec<f64>,
    y: Vec<f64>,
    cutoff: f64,
}

impl RegressionSample {
    pub fn new(x: Vec<f64>, y: Vec<f64>, cutoff: f64) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidInput(format!(
                "x has {} values but y has {}",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::InvalidInput("sample is empty".into()));
        }
        if !cutoff.is_finite() {
            return Err(Error::InvalidInput(format!("cutoff {cutoff} is not finite")));
        }
        if let Some(i) = x.iter().zip(&y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidInput(format!("observation {i} is not finite")));
        }
        Ok(RegressionSample { x, y, cutoff })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Observations on one side as `(x - c, y)` pairs, in sample order.
    pub fn side_points(&self, side: Side) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = self.cutoff;
        self.x
            .iter()
            .zip(&self.y)
            .filter(move |(x, _)| side.contains(**x, c))
            .map(move |(x, y)| (x - c, *y))
    }

    pub fn side_count(&self, side: Side) -> usize {
        let c = self.cutoff;
        self.x.iter().filter(|x| side.contains(**x, c)).count()
    }

    /// Largest `|x - c|` on the side, or 0 when the side is empty.
    pub fn side_range(&self, side: Side) -> f64 {
        self.side_points(side).map(|(d, _)| d.abs()).fold(0.0, f64::max)
    }

    /// Number of side observations with `|x - c| <= h`.
    pub fn window_count(&self, side: Side, h: f64) -> usize {
        self.side_points(side).filter(|(d, _)| d.abs() <= h).count()
    }

    /// Sorted `|x - c|` on one side.
    pub fn side_distances(&self, side: Side) -> Vec<f64> {
        let mut d: Vec<f64> = self.side_points(side).map(|(d, _)| d.abs()).collect();
        d.sort_by(f64::total_cmp);
        d
    }

    /// Copy with `y` multiplied by `a`.
    pub fn scale_y(&self, a: f64) -> Self {
        RegressionSample {
            x: self.x.clone(),
            y: self.y.iter().map(|y| a * y).collect(),
            cutoff: self.cutoff,
        }
    }
}

/// Result of a one-sided weighted polynomial fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub side: Side,
    pub order: usize,
    pub bandwidth: f64,
    /// Intercept first, then the coefficients of `(x - c)^k`.
    pub coeffs: Vec<f64>,
    pub n_effective: usize,
    /// Unweighted `Σ e^2 / (n_effective - order - 1)` over the window; `None`
    /// when the fit has no residual degrees of freedom.
    pub residual_variance: Option<f64>,
}

impl LocalFit {
    pub fn intercept(&self) -> f64 {
        self.coeffs[0]
    }

    /// `k! * coeffs[k]`.
    pub fn derivative(&self, k: usize) -> f64 {
        let fact: f64 = (1..=k).map(|i| i as f64).product();
        fact * self.coeffs[k]
    }
}

/// How observations are selected and weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Window {
    /// Weight `K((x - c)/h)`; points with zero weight are dropped.
    Kernel(KernelKind, f64),
    /// Unit weight on `|x - c| <= h`.
    Inclusive(f64),
    /// Unit weight on every side observation.
    All,
}

/// Weighted least squares of `y` on `1, (x-c), ..., (x-c)^order`.
pub fn fit_one_sided(
    sample: &RegressionSample,
    side: Side,
    h: f64,
    order: usize,
    kernel: KernelKind,
) -> Result<LocalFit> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidInput(format!("bandwidth {h} must be positive")));
    }
    if order < 1 {
        return Err(Error::InvalidInput("polynomial order must be at least 1".into()));
    }
    if kernel == KernelKind::JonesDerivative {
        return Err(Error::UnsupportedKernel(kernel.name()));
    }
    fit_window(sample, side, order, Window::Kernel(kernel, h))
}

pub(crate) fn fit_window(
    sample: &RegressionSample,
    side: Side,
    order: usize,
    window: Window,
) -> Result<LocalFit> {
    let p = order + 1;
    let mut pts: Vec<(f64, f64, f64)> = Vec::new();
    for (d, y) in sample.side_points(side) {
        let w = match window {
            Window::Kernel(kind, h) => kind.eval(d / h),
            Window::Inclusive(h) => {
                if d.abs() <= h {
                    1.0
                } else {
                    0.0
                }
            }
            Window::All => 1.0,
        };
        if w > 0.0 {
            pts.push((d, y, w));
        }
    }
    let n_eff = pts.len();
    if n_eff < p {
        return Err(Error::InsufficientData {
            side,
            needed: p,
            found: n_eff,
        });
    }
    let mut xs: Vec<f64> = pts.iter().map(|t| t.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < p {
        return Err(Error::SingularDesign {
            side,
            condition: f64::INFINITY,
        });
    }

    // Columns are powers of (x - c)/s, s the window scale, then unscaled.
    let scale = match window {
        Window::Kernel(_, h) | Window::Inclusive(h) => h,
        Window::All => pts.iter().map(|t| t.0.abs()).fold(0.0, f64::max),
    };
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let a = DMatrix::from_fn(n_eff, p, |i, k| {
        let (d, _, w) = pts[i];
        w.sqrt() * (d / scale).powi(k as i32)
    });
    let b = DVector::from_iterator(n_eff, pts.iter().map(|&(_, y, w)| w.sqrt() * y));

    let qr = a.qr();
    let r = qr.r();
    let sv = r.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularDesign { side, condition });
    }
    let qtb = qr.q().transpose() * &b;
    let beta = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::SingularDesign { side, condition })?;

    let coeffs: Vec<f64> = beta
        .iter()
        .enumerate()
        .map(|(k, bk)| bk / scale.powi(k as i32))
        .collect();

    let residual_variance = if n_eff > p {
        let ss: f64 = pts
            .iter()
            .map(|&(d, y, _)| {
                let e = y - horner(&coeffs, d);
                e * e
            })
            .sum();
        Some(ss / (n_eff - p) as f64)
    } else {
        None
    };

    Ok(LocalFit {
        side,
        order,
        bandwidth: match window {
            Window::Kernel(_, h) | Window::Inclusive(h) => h,
            Window::All => f64::INFINITY,
        },
        coeffs,
        n_effective: n_eff,
        residual_variance,
    })
}

pub(crate) fn horner(coeffs: &[f64], d: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * d + c)
}

/// One-sided limits at the cutoff and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub m1_hat: f64,
    pub m0_hat: f64,
    pub tau_hat: f64,
    pub n_effective: Sides<usize>,
}

/// Local linear intercepts at `h1` (right) and `h0` (left).
pub fn rd_point_estimate(
    sample: &RegressionSample,
    h: &BandwidthPair,
    kernel: KernelKind,
) -> Result<PointEstimate> {
    let right = fit_one_sided(sample, Side::Right, h.h1, 1, kernel)?;
    let left = fit_one_sided(sample, Side::Left, h.h0, 1, kernel)?;
    let m1_hat = right.intercept();
    let m0_hat = left.intercept();
    Ok(PointEstimate {
        m1_hat,
        m0_hat,
        tau_hat: m1_hat - m0_hat,
        n_effective: Sides::new(right.n_effective, left.n_effective),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandwidth::BandwidthPair;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid_sample(c: f64, f: impl Fn(f64) -> f64) -> RegressionSample {
        let x: Vec<f64> = (0..201).map(|i| c - 1.0 + i as f64 * 0.01).collect();
        let y = x.iter().map(|&x| f(x)).collect();
        RegressionSample::new(x, y, c).unwrap()
    }

    #[test]
    fn rejects_bad_samples() {
        assert!(RegressionSample::new(vec![1.0], vec![], 0.0).is_err());
        assert!(RegressionSample::new(vec![], vec![], 0.0).is_err());
        assert!(RegressionSample::new(vec![f64::NAN], vec![1.0], 0.0).is_err());
    }

    #[test]
    fn linear_reproduction() {
        let s = grid_sample(0.3, |x| 2.0 + 3.0 * (x - 0.3));
        for kind in KernelKind::WEIGHT_KERNELS {
            let fit = fit_one_sided(&s, Side::Right, 0.25, 1, kind).unwrap();
            assert_abs_diff_eq!(fit.coeffs[0], 2.0, epsilon = 1e-10);
            assert_abs_diff_eq!(fit.coeffs[1], 3.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn cubic_reproduction_uniform() {
        let s = grid_sample(0.0, |x| x.powi(3));
        let fit = fit_one_sided(&s, Side::Right, 0.5, 3, KernelKind::Uniform).unwrap();
        for (got, want) in fit.coeffs.iter().zip([0.0, 0.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(fit.derivative(3), 6.0, epsilon = 1e-8);
        assert!(fit.residual_variance.unwrap() < 1e-20);
    }

    #[test]
    fn point_at_cutoff_is_right_side() {
        let s = RegressionSample::new(vec![-0.5, 0.0, 0.5], vec![0.0, 1.0, 1.0], 0.0).unwrap();
        assert_eq!(s.side_count(Side::Right), 2);
        assert_eq!(s.side_count(Side::Left), 1);
    }

    #[test]
    fn insufficient_and_singular() {
        let s = RegressionSample::new(
            vec![-0.2, -0.1, 0.1, 0.1, 0.1, 0.9],
            vec![0.0; 6],
            0.0,
        )
        .unwrap();
        assert!(matches!(
            fit_one_sided(&s, Side::Right, 0.5, 3, KernelKind::Triangular),
            Err(Error::InsufficientData { side: Side::Right, needed: 4, found: 3 })
        ));
        assert!(matches!(
            fit_one_sided(&s, Side::Right, 0.5, 1, KernelKind::Triangular),
            Err(Error::SingularDesign { side: Side::Right, .. })
        ));
    }

    #[test]
    fn constant_and_step_estimates() {
        let s = grid_sample(0.0, |_| 7.0);
        let h = BandwidthPair::manual(0.3, 0.4);
        let e = rd_point_estimate(&s, &h, KernelKind::Triangular).unwrap();
        assert_abs_diff_eq!(e.m1_hat, 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.m0_hat, 7.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.tau_hat, 0.0, epsilon = 1e-12);

        let s = grid_sample(0.0, |x| if x >= 0.0 { 1.0 } else { 0.0 });
        let e = rd_point_estimate(&s, &h, KernelKind::Triangular).unwrap();
        assert_abs_diff_eq!(e.tau_hat, 1.0, epsilon = 1e-12);
    }

    fn poly_case() -> impl Strategy<Value = (Vec<f64>, f64, f64, usize, usize, u64)> {
        (
            prop::collection::vec(-3.0f64..3.0, 4),
            -2.0f64..2.0,
            0.05f64..2.0,
            prop_oneof![Just(1usize), Just(3usize)],
            0usize..3,
            any::<u64>(),
        )
    }

    proptest! {
        #[test]
        fn polynomial_reproduction((beta, c, h, order, kidx, seed) in poly_case()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let kind = KernelKind::WEIGHT_KERNELS[kidx];
            let coef: Vec<f64> = beta[..=order].to_vec();
            let x: Vec<f64> = (0..60).map(|_| c + rng.random_range(-h..h)).collect();
            let y: Vec<f64> = x.iter().map(|&x| horner(&coef, x - c)).collect();
            let s = RegressionSample::new(x, y, c).unwrap();
            for side in Side::BOTH {
                if let Ok(fit) = fit_one_sided(&s, side, h, order, kind) {
                    for k in 0..=order {
                        let tol = 1e-9 * (1.0 + coef[k].abs()) / h.min(1.0).powi(k as i32);
                        prop_assert!((fit.coeffs[k] - coef[k]).abs() < tol,
                            "k={} got {} want {}", k, fit.coeffs[k], coef[k]);
                    }
                }
            }
        }

        #[test]
        fn weight_locality(seed in any::<u64>(), h in 0.1f64..0.8) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|x| x.sin() + rng.random_range(-0.1..0.1)).collect();
            let full = RegressionSample::new(x.clone(), y.clone(), 0.0).unwrap();
            let (xs, ys): (Vec<f64>, Vec<f64>) = x.iter().zip(&y).filter(|(x, _)| x.abs() < h).map(|(a, b)| (*a, *b)).unzip();
            let trimmed = RegressionSample::new(xs, ys, 0.0).unwrap();
            for side in Side::BOTH {
                let a = fit_one_sided(&full, side, h, 1, KernelKind::Triangular);
                let b = fit_one_sided(&trimmed, side, h, 1, KernelKind::Triangular);
                match (a, b) {
                    (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
                    (Err(a), Err(b)) => prop_assert_eq!(a, b),
                    _ => prop_assert!(false),
                }
            }
        }

        #[test]
        fn scale_and_shift_equivariance(seed in any::<u64>(), a in 0.1f64..10.0, shift in -5.0f64..5.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..80).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|x| x.exp() + rng.random_range(-0.1..0.1)).collect();
            let base = RegressionSample::new(x.clone(), y.clone(), 0.0).unwrap();
            let scaled = base.scale_y(a);
            let shifted = RegressionSample::new(x.iter().map(|x| x + shift).collect(), y, shift).unwrap();
            let f0 = fit_one_sided(&base, Side::Right, 0.6, 1, KernelKind::Epanechnikov).unwrap();
            let f1 = fit_one_sided(&scaled, Side::Right, 0.6, 1, KernelKind::Epanechnikov).unwrap();
            let f2 = fit_one_sided(&shifted, Side::Right, 0.6, 1, KernelKind::Epanechnikov).unwrap();
            for k in 0..2 {
                prop_assert!((f1.coeffs[k] - a * f0.coeffs[k]).abs() < 1e-9 * a.max(1.0) * (1.0 + f0.coeffs[k].abs()));
                prop_assert!((f2.coeffs[k] - f0.coeffs[k]).abs() < 1e-7 * (1.0 + f0.coeffs[k].abs()));
            }
        }
    }
}
