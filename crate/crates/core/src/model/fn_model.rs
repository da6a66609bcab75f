use super::{CoefficientJacobians, RateGradients, RegimeSpace, SwitchingModel};
use crate::error::{Error, Result};

type VecFn = Box<dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync>;
type RateFn = Box<dyn Fn(&[f64], usize, usize) -> f64 + Send + Sync>;
type RateGradFn = Box<dyn Fn(&[f64], usize, usize, &mut [f64]) + Send + Sync>;

/// A model defined by closures. Useful for tests and ad-hoc experiments; the
/// built-in named models live in [`crate::models`].
pub struct FnModel {
    name: String,
    r: usize,
    d: usize,
    regimes: RegimeSpace,
    bound: f64,
    holder: Option<f64>,
    drift: VecFn,
    diffusion: VecFn,
    rate: RateFn,
    drift_jac: Option<VecFn>,
    diffusion_jac: Option<VecFn>,
    rate_grad: Option<RateGradFn>,
}

impl FnModel {
    pub fn builder(r: usize, d: usize, m0: usize) -> FnModelBuilder {
        FnModelBuilder {
            name: "closure-model".into(),
            r,
            d,
            m0,
            bound: 1.0,
            holder: None,
            drift: None,
            diffusion: None,
            rate: None,
            drift_jac: None,
            diffusion_jac: None,
            rate_grad: None,
        }
    }
}

pub struct FnModelBuilder {
    name: String,
    r: usize,
    d: usize,
    m0: usize,
    bound: f64,
    holder: Option<f64>,
    drift: Option<VecFn>,
    diffusion: Option<VecFn>,
    rate: Option<RateFn>,
    drift_jac: Option<VecFn>,
    diffusion_jac: Option<VecFn>,
    rate_grad: Option<RateGradFn>,
}

impl FnModelBuilder {
    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn rate_bound(mut self, bound: f64) -> Self {
        self.bound = bound;
        self
    }

    pub fn holder_exponent(mut self, lambda: f64) -> Self {
        self.holder = Some(lambda);
        self
    }

    pub fn drift(mut self, f: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift = Some(Box::new(f));
        self
    }

    pub fn diffusion(mut self, f: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.diffusion = Some(Box::new(f));
        self
    }

    pub fn rates(mut self, f: impl Fn(&[f64], usize, usize) -> f64 + Send + Sync + 'static) -> Self {
        self.rate = Some(Box::new(f));
        self
    }

    pub fn drift_jac(mut self, f: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static) -> Self {
        self.drift_jac = Some(Box::new(f));
        self
    }

    pub fn diffusion_jac(
        mut self,
        f: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.diffusion_jac = Some(Box::new(f));
        self
    }

    pub fn rate_grad(
        mut self,
        f: impl Fn(&[f64], usize, usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.rate_grad = Some(Box::new(f));
        self
    }

    /// Missing drift, diffusion or rates default to zero.
    pub fn build(self) -> Result<FnModel> {
        if self.r == 0 || self.d == 0 {
            return Err(Error::InvalidArgument("state and noise dimensions must be >= 1".into()));
        }
        if !(self.bound > 0.0) {
            return Err(Error::InvalidArgument(format!("rate bound {} must be > 0", self.bound)));
        }
        if self.drift_jac.is_some() != self.diffusion_jac.is_some() {
            return Err(Error::InvalidArgument(
                "drift and diffusion Jacobians must be supplied together".into(),
            ));
        }
        Ok(FnModel {
            name: self.name,
            r: self.r,
            d: self.d,
            regimes: RegimeSpace::new(self.m0)?,
            bound: self.bound,
            holder: self.holder,
            drift: self.drift.unwrap_or_else(|| Box::new(|_, _, out| out.fill(0.0))),
            diffusion: self.diffusion.unwrap_or_else(|| Box::new(|_, _, out| out.fill(0.0))),
            rate: self.rate.unwrap_or_else(|| Box::new(|_, _, _| 0.0)),
            drift_jac: self.drift_jac,
            diffusion_jac: self.diffusion_jac,
            rate_grad: self.rate_grad,
        })
    }
}

impl SwitchingModel for FnModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn state_dim(&self) -> usize {
        self.r
    }
    fn noise_dim(&self) -> usize {
        self.d
    }
    fn regimes(&self) -> RegimeSpace {
        self.regimes
    }
    fn rate_bound(&self) -> f64 {
        self.bound
    }
    fn drift(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        (self.drift)(x, regime, out)
    }
    fn diffusion(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        (self.diffusion)(x, regime, out)
    }
    fn rate(&self, x: &[f64], from: usize, to: usize) -> f64 {
        (self.rate)(x, from, to)
    }
    fn holder_exponent(&self) -> Option<f64> {
        self.holder
    }
    fn jacobians(&self) -> Option<&dyn CoefficientJacobians> {
        self.drift_jac.as_ref().map(|_| self as &dyn CoefficientJacobians)
    }
    fn rate_gradients(&self) -> Option<&dyn RateGradients> {
        self.rate_grad.as_ref().map(|_| self as &dyn RateGradients)
    }
}

impl CoefficientJacobians for FnModel {
    fn drift_jac(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        if let Some(f) = &self.drift_jac {
            f(x, regime, out)
        }
    }
    fn diffusion_jac(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        if let Some(f) = &self.diffusion_jac {
            f(x, regime, out)
        }
    }
}

impl RateGradients for FnModel {
    fn rate_grad(&self, x: &[f64], from: usize, to: usize, out: &mut [f64]) {
        if let Some(f) = &self.rate_grad {
            f(x, from, to, out)
        }
    }
}
