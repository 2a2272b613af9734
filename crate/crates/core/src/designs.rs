//! Simulation designs: polynomial conditional means on each side of the
//! cutoff, a scaled Beta assignment variable and homoskedastic Normal noise.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::bandwidth::{SideMass, TrueQuantities};
use crate::error::{Error, Result};
use crate::kernels::KernelKind;
use crate::lpr::{horner, RegressionSample, Side, Sides};
use crate::pilot::second_order_bias_coeff;

/// `X = lo + (hi - lo) Z` with `Z ~ Beta(alpha, beta)`, integer shapes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledBeta {
    pub alpha: u32,
    pub beta: u32,
    pub lo: f64,
    pub hi: f64,
}

impl Default for ScaledBeta {
    fn default() -> Self {
        ScaledBeta {
            alpha: 2,
            beta: 4,
            lo: -1.0,
            hi: 1.0,
        }
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl ScaledBeta {
    fn validate(&self) -> Result<()> {
        if self.alpha < 1 || self.beta < 1 || !(self.hi > self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::ConfigInvalid(format!(
                "assignment law needs integer shapes >= 1 and lo < hi, got {self:?}"
            )));
        }
        Ok(())
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// `1 / B(alpha, beta)` for integer shapes.
    fn norm(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        (a + b - 1) as f64 * binomial(a + b - 2, a - 1)
    }

    pub fn density(&self, x: f64) -> f64 {
        let z = (x - self.lo) / self.width();
        if !(0.0..=1.0).contains(&z) {
            return 0.0;
        }
        let (a, b) = (self.alpha as i32, self.beta as i32);
        self.norm() * z.powi(a - 1) * (1.0 - z).powi(b - 1) / self.width()
    }

    pub fn density_derivative(&self, x: f64) -> f64 {
        let z = (x - self.lo) / self.width();
        if !(0.0..=1.0).contains(&z) {
            return 0.0;
        }
        let (a, b) = (self.alpha as i32, self.beta as i32);
        let t1 = if a > 1 {
            (a - 1) as f64 * z.powi(a - 2) * (1.0 - z).powi(b - 1)
        } else {
            0.0
        };
        let t2 = if b > 1 {
            (b - 1) as f64 * z.powi(a - 1) * (1.0 - z).powi(b - 2)
        } else {
            0.0
        };
        self.norm() * (t1 - t2) / (self.width() * self.width())
    }

    /// Exact CDF: `I_z(a, b) = Σ_{j=a}^{a+b-1} C(a+b-1, j) z^j (1-z)^{a+b-1-j}`.
    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.lo) / self.width();
        if z <= 0.0 {
            return 0.0;
        }
        if z >= 1.0 {
            return 1.0;
        }
        let m = self.alpha + self.beta - 1;
        (self.alpha..=m)
            .map(|j| binomial(m, j) * z.powi(j as i32) * (1.0 - z).powi((m - j) as i32))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.lo + self.width() * self.alpha as f64 / (self.alpha + self.beta) as f64
    }
}

/// A sharp RD data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    #[serde(default)]
    pub id: Option<u8>,
    /// Polynomial coefficients of `m1` in `x`, constant first.
    pub m1_coeffs: Vec<f64>,
    pub m0_coeffs: Vec<f64>,
    #[serde(default)]
    pub cutoff: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default)]
    pub x_law: ScaledBeta,
}

fn default_noise_sd() -> f64 {
    NOISE_SD
}

/// Error standard deviation shared by the built-in designs.
pub const NOISE_SD: f64 = 0.1295;

const BUILTIN: [([f64; 6], [f64; 6]); 4] = [
    (
        [0.52, 0.84, -3.00, 7.99, -9.01, 3.56],
        [0.48, 1.27, 7.18, 20.21, 21.54, 7.33],
    ),
    (
        [0.26, 18.49, -54.8, 74.3, -45.02, 9.83],
        [3.70, 2.99, 3.28, 1.45, 0.22, 0.03],
    ),
    (
        [0.52, 0.84, -3.0, 7.99, -9.01, 3.56],
        [0.42, 0.84, -3.0, 7.99, -9.01, 3.56],
    ),
    (
        [0.09, 5.76, -42.56, 120.90, -139.71, 55.59],
        [0.03, -2.26, -13.14, -30.89, -31.98, -12.1],
    ),
];

/// `k`-th derivative of `Σ c_i x^i` at `x`.
fn poly_derivative(coeffs: &[f64], k: usize, x: f64) -> f64 {
    let d: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .skip(k)
        .map(|(i, c)| c * ((i - k + 1)..=i).map(|j| j as f64).product::<f64>())
        .collect();
    horner(&d, x)
}

impl Design {
    pub fn builtin(id: u8) -> Result<Design> {
        let (m1, m0) = BUILTIN
            .get((id as usize).wrapping_sub(1))
            .ok_or_else(|| Error::ConfigInvalid(format!("design id {id} is not in 1..=4")))?;
        Ok(Design {
            id: Some(id),
            m1_coeffs: m1.to_vec(),
            m0_coeffs: m0.to_vec(),
            cutoff: 0.0,
            noise_sd: NOISE_SD,
            x_law: ScaledBeta::default(),
        })
    }

    /// Reads a design from a JSON file; missing fields take the built-in
    /// defaults (cutoff 0, noise SD 0.1295, `2 Beta(2, 4) - 1`).
    pub fn from_json_file(path: &Path) -> Result<Design> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let d: Design = serde_json::from_str(&text)
            .map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.x_law.validate()?;
        if self.m1_coeffs.is_empty() || self.m0_coeffs.is_empty() {
            return Err(Error::ConfigInvalid("mean polynomials need at least one coefficient".into()));
        }
        if self.m1_coeffs.iter().chain(&self.m0_coeffs).any(|c| !c.is_finite()) {
            return Err(Error::ConfigInvalid("mean coefficients must be finite".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::ConfigInvalid(format!("noise SD {} is invalid", self.noise_sd)));
        }
        if !self.cutoff.is_finite() || !(self.x_law.density(self.cutoff) > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "cutoff {} must lie where the assignment density is positive",
                self.cutoff
            )));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self.id {
            Some(id) => format!("design {id}"),
            None => "custom design".into(),
        }
    }

    pub fn coeffs(&self, side: Side) -> &[f64] {
        match side {
            Side::Right => &self.m1_coeffs,
            Side::Left => &self.m0_coeffs,
        }
    }

    /// `m1(c) - m0(c)`.
    pub fn tau(&self) -> f64 {
        self.mean_limit(Side::Right) - self.mean_limit(Side::Left)
    }

    /// One-sided limit of the conditional mean at the cutoff.
    pub fn mean_limit(&self, side: Side) -> f64 {
        horner(self.coeffs(side), self.cutoff)
    }

    /// Draws `n` observations from the replication-0 stream of `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> RegressionSample {
        self.sample_rep(n, seed, 0)
    }

    /// Draws `n` observations from substream `rep` of `seed`.
    pub fn sample_rep(&self, n: usize, seed: u64, rep: u64) -> RegressionSample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep);
        let ga = Gamma::new(self.x_law.alpha as f64, 1.0).expect("validated shape");
        let gb = Gamma::new(self.x_law.beta as f64, 1.0).expect("validated shape");
        let noise = Normal::new(0.0, self.noise_sd).expect("validated noise SD");
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let a = ga.sample(&mut rng);
            let b = gb.sample(&mut rng);
            let xi = self.x_law.lo + self.x_law.width() * a / (a + b);
            let e = noise.sample(&mut rng);
            x.push(xi);
            y.push(eval_mean(self, xi) + e);
        }
        RegressionSample::new(x, y, self.cutoff).expect("finite draws")
    }
}

/// `m1(x)` for `x >= c`, `m0(x)` otherwise.
pub fn eval_mean(design: &Design, x: f64) -> f64 {
    let side = if Side::Right.contains(x, design.cutoff) {
        Side::Right
    } else {
        Side::Left
    };
    horner(design.coeffs(side), x)
}

/// Exact population quantities at the cutoff.
pub fn design_truth(design: &Design, kernel: KernelKind) -> Result<TrueQuantities> {
    let k = kernel.constants()?;
    let c = design.cutoff;
    let f_c = design.x_law.density(c);
    let f1_c = design.x_law.density_derivative(c);
    let m2 = Sides::from_fn(|s| poly_derivative(design.coeffs(s), 2, c));
    let m3 = Sides::from_fn(|s| poly_derivative(design.coeffs(s), 3, c));
    let b2 = Sides::from_fn(|s| second_order_bias_coeff(s, m2.at(s), m3.at(s), f_c, f1_c, &k));
    let p0 = design.x_law.cdf(c);
    let s2 = design.noise_sd * design.noise_sd;
    Ok(TrueQuantities {
        f_c,
        f1_c,
        m2,
        m3,
        sigma2: Sides::new(s2, s2),
        b2,
        p1: 1.0 - p0,
        p0,
    })
}

/// Expected counts `n P(side)` and `n P(0 <= ±(X - c) <= h)`.
#[derive(Debug, Clone, Copy)]
pub struct PopulationMass<'a> {
    pub design: &'a Design,
    pub n: f64,
}

impl SideMass for PopulationMass<'_> {
    fn side_count(&self, side: Side) -> f64 {
        let p0 = self.design.x_law.cdf(self.design.cutoff);
        self.n
            * match side {
                Side::Right => 1.0 - p0,
                Side::Left => p0,
            }
    }

    fn window_count(&self, side: Side, h: f64) -> f64 {
        let law = &self.design.x_law;
        let c = self.design.cutoff;
        self.n
            * match side {
                Side::Right => law.cdf(c + h) - law.cdf(c),
                Side::Left => law.cdf(c) - law.cdf(c - h),
            }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn density_facts_match_numerical_oracles() {
        let law = ScaledBeta::default();
        let fz = |x: f64| {
            let z = (x + 1.0) / 2.0;
            if (0.0..=1.0).contains(&z) {
                10.0 * z * (1.0 - z).powi(3)
            } else {
                0.0
            }
        };
        assert_abs_diff_eq!(law.density(0.0), 0.625, epsilon = 1e-15);
        assert_abs_diff_eq!(law.density_derivative(0.0), -1.25, epsilon = 1e-14);
        let h = 1e-5;
        assert_abs_diff_eq!(law.density_derivative(0.0), (fz(h) - fz(-h)) / (2.0 * h), epsilon = 1e-9);
        assert_abs_diff_eq!(law.cdf(0.0), 0.8125, epsilon = 1e-15);
        assert_abs_diff_eq!(law.cdf(0.0), simpson(fz, -1.0, 0.0), epsilon = 1e-10);
        assert_abs_diff_eq!(law.cdf(0.37) - law.cdf(-0.2), simpson(fz, -0.2, 0.37), epsilon = 1e-10);
        assert_abs_diff_eq!(simpson(|x| law.density(x), -1.0, 1.0), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(law.mean(), -1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn builtin_truths() {
        let tri = KernelKind::Triangular;
        let t1 = design_truth(&Design::builtin(1).unwrap(), tri).unwrap();
        assert_abs_diff_eq!(t1.m2.right, -6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t1.m2.left, 14.36, epsilon = 1e-12);
        assert!(t1.m2.right * t1.m2.left < 0.0);
        assert_abs_diff_eq!(t1.p1, 0.1875, epsilon = 1e-15);
        assert_abs_diff_eq!(t1.sigma2.right, 0.1295 * 0.1295, epsilon = 1e-15);

        let d3 = Design::builtin(3).unwrap();
        let t3 = design_truth(&d3, tri).unwrap();
        assert_eq!(t3.m2.right, t3.m2.left);
        assert_abs_diff_eq!(t3.m3.right, 47.94, epsilon = 1e-12);
        assert_abs_diff_eq!(d3.tau(), 0.10, epsilon = 1e-15);

        let t4 = design_truth(&Design::builtin(4).unwrap(), tri).unwrap();
        assert_abs_diff_eq!(t4.m2.right, -85.12, epsilon = 1e-12);
        assert_abs_diff_eq!(t4.m2.left, -26.28, epsilon = 1e-12);
        assert!(t4.m2.right * t4.m2.left > 0.0);

        assert!(Design::builtin(0).is_err());
        assert!(Design::builtin(5).is_err());
    }

    #[test]
    fn mean_function_values() {
        assert_eq!(eval_mean(&Design::builtin(1).unwrap(), 0.0), 0.52);
        assert_eq!(eval_mean(&Design::builtin(2).unwrap(), -1e-300), 3.70);
        assert_eq!(eval_mean(&Design::builtin(4).unwrap(), 0.0), 0.09);
    }

    #[test]
    fn poly_derivative_general_point() {
        let c = [1.0, -2.0, 0.5, 3.0];
        // d^2/dx^2 at x = 2: 2*0.5 + 6*3*2 = 37
        assert_abs_diff_eq!(poly_derivative(&c, 2, 2.0), 37.0, epsilon = 1e-12);
        assert_abs_diff_eq!(poly_derivative(&c, 3, 5.0), 18.0, epsilon = 1e-12);
        assert_eq!(poly_derivative(&c, 4, 1.0), 0.0);
    }

    #[test]
    fn sampling_is_deterministic_and_has_right_moments() {
        let d = Design::builtin(1).unwrap();
        assert_eq!(d.sample(300, 11), d.sample(300, 11));
        assert_ne!(d.sample_rep(300, 11, 0), d.sample_rep(300, 11, 1));
        let s = d.sample(200_000, 3);
        let n = s.len() as f64;
        let mean = s.x().iter().sum::<f64>() / n;
        let frac = s.side_count(Side::Right) as f64 / n;
        // Beta(2,4) variance 8/252 scaled by 4; 5 standard errors.
        assert!((mean + 1.0 / 3.0).abs() < 5.0 * (32.0 / 252.0 / n).sqrt());
        assert!((frac - 0.1875).abs() < 5.0 * (0.1875 * 0.8125 / n).sqrt());
    }

    #[test]
    fn population_counts() {
        let d = Design::builtin(2).unwrap();
        let m = PopulationMass { design: &d, n: 1000.0 };
        assert_abs_diff_eq!(m.side_count(Side::Right), 187.5, epsilon = 1e-9);
        assert_abs_diff_eq!(m.window_count(Side::Left, 10.0), 812.5, epsilon = 1e-9);
        assert_abs_diff_eq!(
            m.window_count(Side::Right, 0.1),
            1000.0 * simpson(|x| d.x_law.density(x), 0.0, 0.1),
            epsilon = 1e-7
        );
    }

    #[test]
    fn custom_design_from_json() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        std::fs::write(&p, r#"{"m1_coeffs":[1.0, 2.0], "m0_coeffs":[0.0], "noise_sd": 0.0}"#).unwrap();
        let d = Design::from_json_file(&p).unwrap();
        assert_eq!(d.tau(), 1.0);
        assert_eq!(d.x_law, ScaledBeta::default());
        std::fs::write(&p, r#"{"m1_coeffs":[1.0], "m0_coeffs":[0.0], "cutoff": 5.0}"#).unwrap();
        assert!(Design::from_json_file(&p).is_err());
    }
}
