//! Switching-diffusion models.
//!
//! A model is a pair `(X, α)` where `X ∈ R^r` solves
//! `dX = b(X, α) dt + σ(X, α) dw` with a `d`-dimensional Brownian motion, and
//! the regime `α ∈ {0, .., m0-1}` jumps from `i` to `j` at rate `q_ij(X)`.
//!
//! Regimes are 0-based in the API. Anything user-facing (CSV columns, error
//! messages, config files) uses 1-based labels.
//!
//! Every concrete model is a [`SwitchingModel`] trait object. Optional
//! derivative information is exposed through the [`CoefficientJacobians`] and
//! [`RateGradients`] capability traits.

mod algebra;
mod fn_model;
mod truncate;

pub use algebra::{
    apply_generator, build_partition, check_jacobians, check_rate_gradients, coupled_rates,
    coupled_rates_into, mark_target, rho, validate_rate_matrix, CoupledMove, DerivativeCheck,
    MarkPartition, RateMatrix, ValidationReport, Violation, DEFAULT_RATE_TOL,
};
pub use fn_model::{FnModel, FnModelBuilder};
pub use truncate::{cutoff, truncate_model, Truncated};

use crate::error::{Error, Result};

/// The finite regime set `{1, .., m0}` (stored as its size).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegimeSpace {
    m0: usize,
}

impl RegimeSpace {
    pub fn new(m0: usize) -> Result<Self> {
        if m0 == 0 {
            return Err(Error::InvalidArgument("regime space needs m0 >= 1".into()));
        }
        Ok(Self { m0 })
    }

    pub fn size(&self) -> usize {
        self.m0
    }

    pub fn contains(&self, regime: usize) -> bool {
        regime < self.m0
    }

    pub fn check(&self, regime: usize) -> Result<()> {
        if self.contains(regime) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "regime {} outside 1..={}",
                regime + 1,
                self.m0
            )))
        }
    }
}

/// A point `(x, i)` of the hybrid state space.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    pub x: Vec<f64>,
    pub regime: usize,
}

impl HybridState {
    pub fn new(x: Vec<f64>, regime: usize, regimes: RegimeSpace) -> Result<Self> {
        regimes.check(regime)?;
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("state coordinate {} is not finite", k + 1)));
        }
        Ok(Self { x, regime })
    }
}

/// A switching diffusion: drift, diffusion and state-dependent rate matrix.
///
/// `diffusion` writes the `r × d` matrix `σ(x, i)` row-major. `rate` is only
/// queried for `from != to` and must stay strictly below `rate_bound`.
pub trait SwitchingModel: Send + Sync {
    fn name(&self) -> &str;

    /// `r`, the dimension of the continuous state.
    fn state_dim(&self) -> usize;

    /// `d`, the dimension of the driving Brownian motion.
    fn noise_dim(&self) -> usize;

    fn regimes(&self) -> RegimeSpace;

    /// The uniform bound `M` with `|q_ij(x)| < M` for all `x` and `i != j`.
    fn rate_bound(&self) -> f64;

    fn drift(&self, x: &[f64], regime: usize, out: &mut [f64]);

    fn diffusion(&self, x: &[f64], regime: usize, out: &mut [f64]);

    fn rate(&self, x: &[f64], from: usize, to: usize) -> f64;

    /// The full generator `Q(x)`. The default fills the diagonal so that rows
    /// sum to zero; models built from user-supplied tables override this.
    fn rate_matrix(&self, x: &[f64]) -> RateMatrix {
        let m0 = self.regimes().size();
        let mut q = RateMatrix::zeros(m0);
        for i in 0..m0 {
            let mut total = 0.0;
            for j in (0..m0).filter(|&j| j != i) {
                let v = self.rate(x, i, j);
                q.set(i, j, v);
                total += v;
            }
            q.set(i, i, -total);
        }
        q
    }

    /// `q_i(x) = Σ_{j≠i} q_ij(x)`.
    fn total_rate(&self, x: &[f64], regime: usize) -> f64 {
        (0..self.regimes().size())
            .filter(|&j| j != regime)
            .map(|j| self.rate(x, regime, j))
            .sum()
    }

    /// User-declared Hölder exponent of `x ↦ Q(x)`, if any.
    fn holder_exponent(&self) -> Option<f64> {
        None
    }

    fn jacobians(&self) -> Option<&dyn CoefficientJacobians> {
        None
    }

    fn rate_gradients(&self) -> Option<&dyn RateGradients> {
        None
    }
}

/// Analytic first derivatives of the coefficients in `x`.
pub trait CoefficientJacobians {
    /// `b_x(x, i)`, an `r × r` matrix, row-major: `out[a * r + b] = ∂b_a/∂x_b`.
    fn drift_jac(&self, x: &[f64], regime: usize, out: &mut [f64]);

    /// `σ_x(x, i)`, an `r × r × d` array: `out[(a * r + b) * d + c] = ∂σ_ac/∂x_b`.
    fn diffusion_jac(&self, x: &[f64], regime: usize, out: &mut [f64]);
}

/// Analytic gradients `∇q_ij(x)` of the off-diagonal rates.
pub trait RateGradients {
    fn rate_grad(&self, x: &[f64], from: usize, to: usize, out: &mut [f64]);
}

pub(crate) fn require_jacobians(model: &dyn SwitchingModel) -> Result<&dyn CoefficientJacobians> {
    model.jacobians().ok_or_else(|| Error::MissingCapability {
        model: model.name().to_string(),
        what: "coefficient Jacobians",
    })
}

pub(crate) fn require_rate_gradients(model: &dyn SwitchingModel) -> Result<&dyn RateGradients> {
    model.rate_gradients().ok_or_else(|| Error::MissingCapability {
        model: model.name().to_string(),
        what: "rate gradients",
    })
}
