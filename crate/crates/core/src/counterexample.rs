//! A two-regime model whose difference quotients in the initial state do not
//! converge in `L¹`.
//!
//! Regime 1 is frozen, regime 2 drifts with unit speed, `q_12(x) = f(x)` with
//! `f(x) = x` near the starting points, and regime 2 is absorbing. From
//! `x ∈ [1, 2)` the switch time is exponential with rate `x`. Three
//! independent clocks `Y_0 ~ Exp(1)`, `Y_1, Y_2 ~ Exp(1/n)` realize the nested
//! mark intervals, so the switch times of the paths started at `1`, `1 + 1/n`
//! and `1 + 2/n` are `τ¹ = Y_0`, `τ^{1+1/n} = Y_0 ∧ Y_1` and
//! `τ^{1+2/n} = Y_0 ∧ Y_1 ∧ Y_2`.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};
use crate::mc::{mc_estimate, McEstimate};
use crate::model::FnModel;
use crate::noise::NoiseStream;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CxDraw {
    pub y0: f64,
    pub y1: f64,
    pub y2: f64,
}

impl CxDraw {
    /// `τ¹`
    pub fn tau_base(&self) -> f64 {
        self.y0
    }

    /// `τ^{1+1/n}`
    pub fn tau_one(&self) -> f64 {
        self.y0.min(self.y1)
    }

    /// `τ^{1+2/n}`
    pub fn tau_two(&self) -> f64 {
        self.y0.min(self.y1).min(self.y2)
    }
}

fn check_n(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    Ok(n as f64)
}

fn check_horizon(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon {t} must be positive")));
    }
    Ok(())
}

pub fn cx_sample(n: u32, stream: &mut NoiseStream) -> Result<CxDraw> {
    let nf = check_n(n)?;
    Ok(CxDraw {
        y0: stream.exponential(1.0),
        y1: stream.exponential(1.0 / nf),
        y2: stream.exponential(1.0 / nf),
    })
}

/// `X^{1+x,1}(T) = 1 + x + T - T ∧ τ^{1+x}`.
pub fn cx_terminal_state(offset: f64, tau: f64, horizon: f64) -> f64 {
    1.0 + offset + horizon - horizon.min(tau)
}

/// `(Z^{1+1/n}, Z^{1+2/n})` with `Z^{1+x} = 1 + (T ∧ τ¹ - T ∧ τ^{1+x}) / x`.
pub fn cx_quotients(draw: &CxDraw, n: u32, horizon: f64) -> Result<(f64, f64)> {
    let nf = check_n(n)?;
    check_horizon(horizon)?;
    let base = horizon.min(draw.tau_base());
    let z1 = 1.0 + (base - horizon.min(draw.tau_one())) * nf;
    let z2 = 1.0 + (base - horizon.min(draw.tau_two())) * nf / 2.0;
    Ok((z1, z2))
}

/// Monte Carlo estimate of `E|Z^{1+2/n} - Z^{1+1/n}|` from the exact sampler.
pub fn cx_gap_estimate(n: u32, horizon: f64, n_paths: usize, seed: u64) -> Result<McEstimate> {
    check_n(n)?;
    check_horizon(horizon)?;
    mc_estimate(n_paths, seed, |s| {
        let draw = cx_sample(n, s)?;
        let (z1, z2) = cx_quotients(&draw, n, horizon)?;
        Ok((z2 - z1).abs())
    })
}

/// `(T/6)(1 - e^{-(1+2/n)T/3})(e^{-2T/3} - e^{-T})`.
pub fn cx_lower_bound(n: u32, horizon: f64) -> Result<f64> {
    let nf = check_n(n)?;
    check_horizon(horizon)?;
    let t = horizon;
    Ok(t / 6.0 * (1.0 - (-(1.0 + 2.0 / nf) * t / 3.0).exp()) * ((-2.0 * t / 3.0).exp() - (-t).exp()))
}

/// `lim_{n→∞}` of [`cx_lower_bound`].
pub fn cx_lower_bound_limit(horizon: f64) -> Result<f64> {
    check_horizon(horizon)?;
    let t = horizon;
    Ok(t / 6.0 * (1.0 - (-t / 3.0).exp()) * ((-2.0 * t / 3.0).exp() - (-t).exp()))
}

/// The law of `T ∧ Y` for `Y ~ Exp(rate)`: density on `[0, T)` and an atom
/// at `T`.
#[derive(Clone, Copy)]
struct Capped {
    rate: f64,
    horizon: f64,
}

impl Capped {
    fn density(&self, u: f64) -> f64 {
        self.rate * (-self.rate * u).exp()
    }

    fn atom(&self) -> f64 {
        (-self.rate * self.horizon).exp()
    }

    /// `∫ g dμ`, splitting the continuous part at `breaks`.
    fn integrate(&self, rule: &GaussLegendre, breaks: &[f64], g: impl Fn(f64) -> f64) -> f64 {
        let mut cuts: Vec<f64> = breaks
            .iter()
            .copied()
            .filter(|&b| b > 0.0 && b < self.horizon)
            .collect();
        cuts.push(0.0);
        cuts.push(self.horizon);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let cont: f64 = cuts
            .windows(2)
            .map(|w| rule.integrate(w[0], w[1], |u| g(u) * self.density(u)))
            .sum();
        cont + self.atom() * g(self.horizon)
    }
}

fn gap_by_quadrature(nf: f64, horizon: f64, nodes: usize) -> f64 {
    let rule = GaussLegendre::new(NonZeroUsize::new(nodes).expect("nodes > 0"));
    let c0 = Capped { rate: 1.0, horizon };
    let c1 = Capped {
        rate: 1.0 / nf,
        horizon,
    };
    // u_k = T ∧ y_k; the gap is n |min(u0, u1) - u0/2 - min(u0, u1, u2)/2|.
    let gap = |u0: f64, u1: f64, u2: f64| {
        let m1 = u0.min(u1);
        let m2 = m1.min(u2);
        nf * (m1 - 0.5 * u0 - 0.5 * m2).abs()
    };
    c0.integrate(&rule, &[], |u0| {
        c1.integrate(&rule, &[u0], |u2| {
            c1.integrate(&rule, &[u0, u2, 0.5 * (u0 + u2)], |u1| gap(u0, u1, u2))
        })
    })
}

/// `E|Z^{1+2/n} - Z^{1+1/n}|` by iterated Gauss–Legendre quadrature over the
/// exact law of the capped clocks. The integrand is piecewise linear between
/// the listed breakpoints, so each panel is smooth.
///
/// Fails with [`Error::Quadrature`] when going from 20 to 40 nodes per panel
/// moves the result by more than `1e-4` relative.
pub fn cx_gap_oracle(n: u32, horizon: f64) -> Result<f64> {
    let nf = check_n(n)?;
    check_horizon(horizon)?;
    let coarse = gap_by_quadrature(nf, horizon, 20);
    let fine = gap_by_quadrature(nf, horizon, 40);
    let rel = (fine - coarse).abs() / fine.abs().max(f64::MIN_POSITIVE);
    if rel > 1e-4 {
        return Err(Error::Quadrature(rel));
    }
    Ok(fine)
}

/// C² bump with compact support `[0.5, 2.5]`, equal to `x` on `[1, 2]`.
pub fn cx_rate(x: f64) -> f64 {
    cx_rate_and_slope(x).0
}

fn cx_rate_and_slope(x: f64) -> (f64, f64) {
    if x <= 0.5 || x >= 2.5 {
        (0.0, 0.0)
    } else if x < 1.0 {
        let s = (x - 0.5) / 0.5;
        let g = s * s * s * (8.0 - 11.5 * s + 4.5 * s * s);
        let dg = s * s * (24.0 - 46.0 * s + 22.5 * s * s);
        (g, dg / 0.5)
    } else if x <= 2.0 {
        (x, 1.0)
    } else {
        let s = (2.5 - x) / 0.5;
        let g = s * s * s * (22.0 - 33.5 * s + 13.5 * s * s);
        let dg = s * s * (66.0 - 134.0 * s + 67.5 * s * s);
        (g, -dg / 0.5)
    }
}

/// The counterexample as a generic model, for cross-checking the grid engine:
/// `b(·, 1) = 0`, `b(·, 2) = 1`, `σ = 0`, `q_12 = f`, `q_21 = 0`, `M = 3`.
pub fn cx_as_model() -> Result<FnModel> {
    FnModel::builder(1, 1, 2)
        .name("counterexample")
        .rate_bound(3.0)
        .holder_exponent(1.0)
        .drift(|_, i, out| out[0] = if i == 0 { 0.0 } else { 1.0 })
        .rates(|x, from, _| if from == 0 { cx_rate(x[0]) } else { 0.0 })
        .drift_jac(|_, _, out| out[0] = 0.0)
        .diffusion_jac(|_, _, out| out[0] = 0.0)
        .rate_grad(|x, from, _, out| out[0] = if from == 0 { cx_rate_and_slope(x[0]).1 } else { 0.0 })
        .build()
}

/// `(Δ/(1+Δ))(1 - e^{-(1+Δ)T})`: probability that the paths from `1` and
/// `1 + Δ` switch apart before `T`.
pub fn cx_decoupling_probability(delta: f64, horizon: f64) -> f64 {
    delta / (1.0 + delta) * (1.0 - (-(1.0 + delta) * horizon).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_rate_gradients, SwitchingModel};

    #[test]
    fn bump_is_c2_and_positive_inside() {
        for &x in &[0.5, 1.0, 2.0, 2.5] {
            let h = 1e-6;
            let (f, df) = cx_rate_and_slope(x);
            let (fl, dfl) = cx_rate_and_slope(x - h);
            let (fr, dfr) = cx_rate_and_slope(x + h);
            assert!((fl - f).abs() < 1e-5 && (fr - f).abs() < 1e-5, "value jump at {x}");
            assert!((dfl - df).abs() < 1e-4 && (dfr - df).abs() < 1e-4, "slope jump at {x}");
            let curv_l = (f - 2.0 * fl + cx_rate(x - 2.0 * h)) / (h * h);
            let curv_r = (cx_rate(x + 2.0 * h) - 2.0 * fr + f) / (h * h);
            assert!((curv_l - curv_r).abs() < 1e-2, "curvature jump at {x}");
        }
        for k in 1..200 {
            let x = 0.5 + 2.0 * k as f64 / 200.0;
            let f = cx_rate(x);
            assert!(f > 0.0 && f < 3.0, "{x} -> {f}");
        }
        assert_eq!(cx_rate(1.37), 1.37);
    }

    #[test]
    fn model_rate_gradient_matches() {
        let m = cx_as_model().unwrap();
        for &x in &[0.7, 1.3, 2.2] {
            assert!(check_rate_gradients(&m, &[x]).unwrap().ok);
        }
        assert_eq!(m.rate(&[1.5], 1, 0), 0.0);
    }

    #[test]
    fn lower_bound_values() {
        let lb = cx_lower_bound(10, 1.0).unwrap();
        assert!((lb - 7.997e-3).abs() < 5e-7, "{lb}");
        let lim = cx_lower_bound_limit(1.0).unwrap();
        assert!((lim - 6.876e-3).abs() < 5e-7, "{lim}");
        assert!(cx_lower_bound(10, 1e-9).unwrap() < 1e-18);
    }

    #[test]
    fn quotients_on_special_draws() {
        let common = CxDraw { y0: 0.2, y1: 0.5, y2: 0.9 };
        assert_eq!(cx_quotients(&common, 10, 1.0).unwrap(), (1.0, 1.0));
        let late = CxDraw { y0: 2.0, y1: 3.0, y2: 1.5 };
        assert_eq!(cx_quotients(&late, 10, 1.0).unwrap(), (1.0, 1.0));
        let n = 10;
        let d = CxDraw { y0: 0.8, y1: 0.1, y2: 0.4 };
        let (z1, z2) = cx_quotients(&d, n, 1.0).unwrap();
        let want = n as f64 / 2.0 * (d.y0 - d.y1);
        assert!(((z2 - z1).abs() - want).abs() < 1e-12);
        assert!(want >= n as f64 / 6.0);
    }

    #[test]
    fn oracle_dominates_bound_and_is_finite() {
        for &(n, t) in &[(10, 1.0), (50, 1.0), (10, 2.0), (3, 0.5)] {
            let o = cx_gap_oracle(n, t).unwrap();
            assert!(o >= cx_lower_bound(n, t).unwrap(), "({n}, {t}) -> {o}");
            assert!(o <= 2.0 + n as f64 * t);
        }
    }
}
