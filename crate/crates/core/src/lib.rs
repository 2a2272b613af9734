//! Two-sided bandwidth selection for the sharp regression-discontinuity
//! estimator.
//!
//! The crate estimates the jump `tau = m1(c) - m0(c)` in a conditional mean at
//! a known cutoff with one-sided local linear regressions, and chooses the
//! right and left bandwidths `(h1, h0)` jointly by minimizing a modified AMSE
//! that carries both first- and second-order bias terms. Closed-form
//! asymptotically first-order optimal (AFO) bandwidths, independent per-side
//! (IND) bandwidths and a regularized common (IK) bandwidth are provided for
//! comparison, together with a seeded Monte-Carlo harness over four
//! polynomial designs and the theoretical efficiency calculators.
//!
//! ```no_run
//! use rd_bandwidth::{designs::Design, estimator, kernels::KernelKind, Selector};
//!
//! let design = Design::builtin(1).unwrap();
//! let sample = design.sample(500, 7);
//! let est = estimator::estimate_sharp_rd(&sample, Selector::Mmse, KernelKind::Triangular, None)
//!     .unwrap();
//! println!("tau = {:.4}, h = <{:.3}, {:.3}>", est.tau_hat, est.bandwidths.h1, est.bandwidths.h0);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod designs;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod lpr;
pub mod pilot;
pub mod simulate;

pub use bandwidth::{BandwidthPair, Selector, TrueQuantities};
pub use error::{Error, Result};
pub use lpr::{RegressionSample, Side, Sides};
