//! The scalar weight sub-problem: barrier function, reduced 1-D cost, and
//! its closed-form minimizer.
//!
//! For a fixed image pair the full cost reduces (up to a constant) to
//! `alpha C1 + (1 - alpha) C2 - tau log(alpha (1 - alpha))`, strictly
//! convex on (0, 1) with a unique interior minimizer.

use crate::error::{Error, Result};
use crate::grid::{mixed_norm, MixedNormKind, PairField, Volume2DT};
use crate::linops::{apply_bank, as_mixed_norm, convolve, BoundaryPolicy, FilterBank, Kernel};

/// Coefficients of the reduced weight cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightCostCoeffs {
    /// Spatial regularizer value at the current image pair.
    pub c1: f64,
    /// Temporal regularizer value at the current image pair.
    pub c2: f64,
    /// Barrier strength.
    pub tau: f64,
}

impl WeightCostCoeffs {
    pub fn new(c1: f64, c2: f64, tau: f64) -> Result<Self> {
        if !(c1 >= 0.0) || !(c2 >= 0.0) || !(tau > 0.0) {
            return Err(Error::Param(format!(
                "weight coefficients out of range: c1={c1} c2={c2} tau={tau}"
            )));
        }
        Ok(WeightCostCoeffs { c1, c2, tau })
    }

    /// The decisive difference `C1 - C2`.
    pub fn mu(&self) -> f64 {
        self.c1 - self.c2
    }
}

/// How the barrier strength is chosen per outer iteration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum TauPolicy {
    /// Fixed scalar.
    Constant(f64),
    /// `tau0` scaled by the mean of `exp(-(d_tt * g)^2)` over the previous
    /// estimate: motion suppresses the mean, weakening the barrier less
    /// where the weight should move slowly.
    MotionAdaptive(f64),
}

impl TauPolicy {
    pub fn base(&self) -> f64 {
        match self {
            TauPolicy::Constant(t) | TauPolicy::MotionAdaptive(t) => *t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base() > 0.0 {
            Ok(())
        } else {
            Err(Error::Param("tau must be positive".into()))
        }
    }

    /// Evaluates the policy against the previous restored image.
    pub fn evaluate(&self, previous_g: &Volume2DT, boundary: BoundaryPolicy) -> f64 {
        match self {
            TauPolicy::Constant(t) => *t,
            TauPolicy::MotionAdaptive(t0) => {
                let dtt = convolve(previous_g, &Kernel::second_diff_t(), boundary)
                    .expect("temporal stencil fits any volume with n_frames >= 3");
                let field: Vec<f64> = dtt.values().iter().map(|&d| (-d * d).exp()).collect();
                let mean = crate::grid::pairwise_sum(&field) / field.len() as f64;
                t0 * mean
            }
        }
    }
}

/// Logarithmic barrier `-tau log(alpha (1 - alpha))`: finite on (0, 1),
/// infinite outside and at the endpoints, minimized at 1/2.
pub fn barrier(alpha: f64, tau: f64) -> f64 {
    debug_assert!(tau > 0.0);
    if alpha > 0.0 && alpha < 1.0 {
        -tau * (alpha * (1.0 - alpha)).ln()
    } else {
        f64::INFINITY
    }
}

/// The reduced 1-D weight cost `alpha C1 + (1 - alpha) C2 + barrier`.
pub fn weight_cost(alpha: f64, c: &WeightCostCoeffs) -> f64 {
    alpha * c.c1 + (1.0 - alpha) * c.c2 + barrier(alpha, c.tau)
}

/// Derivative of [`weight_cost`] on (0, 1):
/// `(C1 - C2) - tau / alpha + tau / (1 - alpha)`.
pub fn weight_cost_derivative(alpha: f64, c: &WeightCostCoeffs) -> f64 {
    c.mu() - c.tau / alpha + c.tau / (1.0 - alpha)
}

/// Closed-form global minimizer of the reduced weight cost.
///
/// Evaluates `1/2 (1 - mu / (sqrt(4 tau^2 + mu^2) + 2 tau))`, the
/// rationalized equivalent of the two-branch square-root form; the naive
/// form loses all precision for `|mu| << tau`, this one is exact through
/// `mu = 0` and keeps the output strictly inside (0, 1).
pub fn solve_weight(c: &WeightCostCoeffs) -> f64 {
    let mu = c.mu();
    let s = (4.0 * c.tau * c.tau + mu * mu).sqrt();
    let alpha = 0.5 * (1.0 - mu / (s + 2.0 * c.tau));
    alpha.clamp(1e-15, 1.0 - 1e-15)
}

/// Builds the weight-cost coefficients from the current image pair:
/// `C1 = sqrt(2) lambda sum_k ||A (T_s f)(k)||` over frames and pixels,
/// `C2 = lambda ||T_t f||_{1,2}`.
pub fn compute_coeffs(
    f: &PairField,
    lambda: f64,
    spatial: &FilterBank,
    temporal: &FilterBank,
    tau: f64,
    boundary: BoundaryPolicy,
) -> Result<WeightCostCoeffs> {
    let ts = apply_bank(f, spatial, boundary)?;
    let c1 = std::f64::consts::SQRT_2 * lambda * as_mixed_norm(&ts, 0..10);
    let tt = apply_bank(f, temporal, boundary)?;
    let c2 = lambda * mixed_norm(&tt, MixedNormKind::SumOfEuclid)?;
    WeightCostCoeffs::new(c1, c2, tau)
}
