use std::sync::Arc;

use super::{CoefficientJacobians, RateGradients, RegimeSpace, SwitchingModel};
use crate::error::{Error, Result};

/// The cutoff `ψ(x)` and its radial derivative `dψ/d|x|`.
///
/// `ψ = 1` for `|x| ≤ radius`, `ψ = 0` for `|x| ≥ radius + width`, and the
/// quintic smoothstep in between, which makes `ψ` C² and monotone in `|x|`.
pub fn cutoff(norm: f64, radius: f64, width: f64) -> (f64, f64) {
    if norm <= radius {
        return (1.0, 0.0);
    }
    if norm >= radius + width {
        return (0.0, 0.0);
    }
    let s = (norm - radius) / width;
    let step = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    let dstep = 30.0 * s * s * (1.0 - s) * (1.0 - s);
    (1.0 - step, -dstep / width)
}

/// A model whose drift and diffusion are multiplied by [`cutoff`]; rates are
/// passed through unchanged.
pub struct Truncated {
    inner: Arc<dyn SwitchingModel>,
    radius: f64,
    width: f64,
    name: String,
}

pub fn truncate_model(inner: Arc<dyn SwitchingModel>, radius: f64, width: f64) -> Result<Truncated> {
    if !(radius > 0.0) || !(width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "truncation radius {radius} and width {width} must be positive"
        )));
    }
    let name = format!("{}~truncated(H={radius},w={width})", inner.name());
    Ok(Truncated {
        inner,
        radius,
        width,
        name,
    })
}

impl Truncated {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    fn psi(&self, x: &[f64]) -> f64 {
        cutoff(norm(x), self.radius, self.width).0
    }

    fn psi_grad(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let n = norm(x);
        let (psi, dpsi) = cutoff(n, self.radius, self.width);
        for (o, v) in out.iter_mut().zip(x) {
            *o = if dpsi == 0.0 { 0.0 } else { dpsi * v / n };
        }
        psi
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

impl SwitchingModel for Truncated {
    fn name(&self) -> &str {
        &self.name
    }
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }
    fn noise_dim(&self) -> usize {
        self.inner.noise_dim()
    }
    fn regimes(&self) -> RegimeSpace {
        self.inner.regimes()
    }
    fn rate_bound(&self) -> f64 {
        self.inner.rate_bound()
    }
    fn drift(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        let psi = self.psi(x);
        if psi == 0.0 {
            out.fill(0.0);
            return;
        }
        self.inner.drift(x, regime, out);
        out.iter_mut().for_each(|v| *v *= psi);
    }
    fn diffusion(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        let psi = self.psi(x);
        if psi == 0.0 {
            out.fill(0.0);
            return;
        }
        self.inner.diffusion(x, regime, out);
        out.iter_mut().for_each(|v| *v *= psi);
    }
    fn rate(&self, x: &[f64], from: usize, to: usize) -> f64 {
        self.inner.rate(x, from, to)
    }
    fn holder_exponent(&self) -> Option<f64> {
        self.inner.holder_exponent()
    }
    fn jacobians(&self) -> Option<&dyn CoefficientJacobians> {
        self.inner.jacobians().map(|_| self as &dyn CoefficientJacobians)
    }
    fn rate_gradients(&self) -> Option<&dyn RateGradients> {
        self.inner.rate_gradients()
    }
}

impl CoefficientJacobians for Truncated {
    fn drift_jac(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        let r = x.len();
        let inner = self.inner.jacobians().expect("checked in jacobians()");
        let mut grad = vec![0.0; r];
        let psi = self.psi_grad(x, &mut grad);
        let mut b = vec![0.0; r];
        self.inner.drift(x, regime, &mut b);
        inner.drift_jac(x, regime, out);
        for a in 0..r {
            for c in 0..r {
                out[a * r + c] = psi * out[a * r + c] + b[a] * grad[c];
            }
        }
    }

    fn diffusion_jac(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        let r = x.len();
        let d = self.inner.noise_dim();
        let inner = self.inner.jacobians().expect("checked in jacobians()");
        let mut grad = vec![0.0; r];
        let psi = self.psi_grad(x, &mut grad);
        let mut s = vec![0.0; r * d];
        self.inner.diffusion(x, regime, &mut s);
        inner.diffusion_jac(x, regime, out);
        for a in 0..r {
            for b in 0..r {
                for c in 0..d {
                    let k = (a * r + b) * d + c;
                    out[k] = psi * out[k] + s[a * d + c] * grad[b];
                }
            }
        }
    }
}
