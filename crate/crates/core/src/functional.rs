//! `u(T, x, i) = E φ(X(T), α(T))` and its gradient in `x` by a change of
//! measure to the auxiliary chain `χ` with `q̂_ij = 1` for `i != j`.
//!
//! Under `χ` the continuous component `Z` solves the SDE with regime `χ(t)`,
//! and `u = E[φ(Z(T), χ(T)) W]` with
//! `W = e^{(m0-1)T} exp(-∫ q_χ(Z) ds) Π_k q_{i_k i_{k+1}}(Z(θ_{k+1}))`.
//! Since `χ` does not depend on `x`, differentiating inside the expectation
//! gives the pathwise estimator [`zeta_hat`].

use statrs::distribution::{DiscreteCDF, Poisson};

use crate::error::{Error, Result};
use crate::mc::{mc_estimate, mc_estimate_many, McEstimate};
use crate::model::{require_jacobians, require_rate_gradients, SwitchingModel};
use crate::noise::NoiseStream;
use crate::observable::Observable;
use crate::paths::{simulate_aux_chain, simulate_driven, simulate_path, simulate_tangent, ChainPath, PathSample, TangentPath, TimeGrid};

/// Tail mass below which the jump-count series is truncated.
pub const SERIES_TAIL: f64 = 1e-6;

/// A path of `Z` under the auxiliary chain with its likelihood weight.
#[derive(Debug, Clone)]
pub struct WeightedPath {
    pub zpath: PathSample,
    pub chain: ChainPath,
    pub weight: f64,
    /// `η`, present when the model has coefficient Jacobians and it was
    /// requested.
    pub eta: Option<TangentPath>,
}

/// Draws the chain, then drives `Z` on the union of `grid` and the chain's
/// jump times, both from `stream`.
pub fn simulate_weighted_path(
    model: &dyn SwitchingModel,
    x: &[f64],
    i: usize,
    grid: &TimeGrid,
    stream: &mut NoiseStream,
    with_tangent: bool,
) -> Result<WeightedPath> {
    let chain = simulate_aux_chain(model.regimes(), i, grid.horizon(), stream)?;
    let zpath = simulate_driven(model, x, &chain, grid, stream)?;
    let weight = path_weight(model, &zpath, &chain, grid.horizon())?;
    let eta = if with_tangent {
        Some(simulate_tangent(model, &zpath)?)
    } else {
        None
    };
    Ok(WeightedPath {
        zpath,
        chain,
        weight,
        eta,
    })
}

fn trapezoid(path: &PathSample, mut g: impl FnMut(usize, usize) -> f64) -> f64 {
    (0..path.len() - 1)
        .map(|k| {
            let i = path.regime(k);
            0.5 * (path.time(k + 1) - path.time(k)) * (g(k, i) + g(k + 1, i))
        })
        .sum()
}

/// The product weight, with the time integral by the trapezoid rule on the
/// path's (union) grid. A forbidden transition gives weight 0.
pub fn path_weight(model: &dyn SwitchingModel, zpath: &PathSample, chain: &ChainPath, horizon: f64) -> Result<f64> {
    if zpath.switches().len() != chain.n_jumps() {
        return Err(Error::InvalidArgument(format!(
            "path records {} switches but the chain has {} jumps",
            zpath.switches().len(),
            chain.n_jumps()
        )));
    }
    let m0 = model.regimes().size();
    let mut product = 1.0;
    for ev in zpath.switches() {
        product *= model.rate(zpath.state(ev.node), ev.from, ev.to);
        if product == 0.0 {
            return Ok(0.0);
        }
    }
    let integral = trapezoid(zpath, |k, i| model.total_rate(zpath.state(k), i));
    Ok(((m0 - 1) as f64 * horizon - integral).exp() * product)
}

/// Change-of-measure estimate of `E φ(X(T), α(T))`.
pub fn functional_value_cm(
    model: &dyn SwitchingModel,
    phi: &dyn Observable,
    x: &[f64],
    i: usize,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    mc_estimate(n_paths, seed, |s| {
        let wp = simulate_weighted_path(model, x, i, grid, s, false)?;
        Ok(terminal_value(phi, &wp.zpath) * wp.weight)
    })
}

/// Direct Monte Carlo estimate of `E φ(X(T), α(T))`.
pub fn functional_value_direct(
    model: &dyn SwitchingModel,
    phi: &dyn Observable,
    x: &[f64],
    i: usize,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    mc_estimate(n_paths, seed, |s| {
        let p = simulate_path(model, x, i, grid, s)?;
        Ok(terminal_value(phi, &p))
    })
}

fn terminal_value(phi: &dyn Observable, p: &PathSample) -> f64 {
    phi.value(p.terminal_state(), p.terminal_regime())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `∂u/∂x · e` on one weighted path:
/// `φ_x η(T) W + φ Σ_j W_{-j} ∇q_{i_j i_{j+1}}(Z(θ_{j+1})) η(θ_{j+1})
///  - φ W ∫ ∇q_χ(Z) η ds`,
/// where `W_{-j}` is `W` with the `j`-th transition rate replaced by its
/// gradient term. Requires `wp.eta`.
pub fn zeta_hat(model: &dyn SwitchingModel, phi: &dyn Observable, phi_dir: &[f64], wp: &WeightedPath) -> Result<f64> {
    let grads = require_rate_gradients(model)?;
    let eta = wp.eta.as_ref().ok_or_else(|| Error::MissingCapability {
        model: model.name().to_string(),
        what: "a tangent path on the weighted path",
    })?;
    let z = &wp.zpath;
    let r = model.state_dim();
    let m0 = model.regimes().size();
    let horizon = z.time(z.len() - 1);
    let last = z.len() - 1;
    let (zt, it) = (z.terminal_state(), z.terminal_regime());
    let eta_t = eta.apply(last, phi_dir);
    let mut gphi = vec![0.0; r];
    phi.gradient(zt, it, &mut gphi);
    let phi_t = phi.value(zt, it);

    let integral = trapezoid(z, |k, i| model.total_rate(z.state(k), i));
    let scale = ((m0 - 1) as f64 * horizon - integral).exp();
    let rates: Vec<f64> = z.switches().iter().map(|ev| model.rate(z.state(ev.node), ev.from, ev.to)).collect();
    let weight = scale * rates.iter().product::<f64>();

    let mut g = vec![0.0; r];
    let mut jumps = 0.0;
    for (j, ev) in z.switches().iter().enumerate() {
        grads.rate_grad(z.state(ev.node), ev.from, ev.to, &mut g);
        let others: f64 = rates.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, q)| q).product();
        jumps += scale * others * dot(&g, &eta.apply(ev.node, phi_dir));
    }

    let mut total_grad = vec![0.0; r];
    let mut grad_term = |k: usize, i: usize| {
        total_grad.fill(0.0);
        for to in (0..m0).filter(|&to| to != i) {
            grads.rate_grad(z.state(k), i, to, &mut g);
            total_grad.iter_mut().zip(&g).for_each(|(t, v)| *t += v);
        }
        dot(&total_grad, &eta.apply(k, phi_dir))
    };
    let holding = trapezoid(z, &mut grad_term);

    Ok(dot(&gphi, &eta_t) * weight + phi_t * jumps - phi_t * weight * holding)
}

/// Smallest `n` with `P(N > n) < SERIES_TAIL` for `N ~ Poisson(mean)`.
pub fn n_max(mean: f64) -> usize {
    let Ok(law) = Poisson::new(mean) else {
        return 0;
    };
    let mut n = 0;
    while law.sf(n) >= SERIES_TAIL {
        n += 1;
    }
    n as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub value: McEstimate,
    /// One estimate per requested direction.
    pub gradient: Vec<McEstimate>,
    pub n_max: usize,
    /// Fraction of paths with more than `n_max` jumps; their gradient terms
    /// are dropped.
    pub truncated_mass: f64,
}

impl GradientEstimate {
    /// `component,value,stderr,n,n_max,truncated_mass`
    pub fn csv_rows(&self) -> Vec<String> {
        use crate::mc::fmt_f64;
        let row = |name: String, e: &McEstimate| {
            format!(
                "{name},{},{},{},{},{}",
                fmt_f64(e.mean),
                fmt_f64(e.stderr),
                e.n,
                self.n_max,
                fmt_f64(self.truncated_mass)
            )
        };
        let mut out = vec![row("value".into(), &self.value)];
        for (k, g) in self.gradient.iter().enumerate() {
            out.push(row(format!("gradient_{}", k + 1), g));
        }
        out
    }
}

/// Value and directional derivatives of `u` from the same weighted paths.
pub fn functional_gradient(
    model: &dyn SwitchingModel,
    phi: &dyn Observable,
    x: &[f64],
    i: usize,
    grid: &TimeGrid,
    directions: &[Vec<f64>],
    n_paths: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    require_jacobians(model)?;
    require_rate_gradients(model)?;
    if let Some(e) = directions.iter().find(|e| e.len() != model.state_dim()) {
        return Err(Error::Dimension(format!("direction of length {} for r = {}", e.len(), model.state_dim())));
    }
    let m0 = model.regimes().size();
    let cap = n_max((m0 - 1) as f64 * grid.horizon());
    let k = directions.len();
    let est = mc_estimate_many(n_paths, seed, k + 2, |s| {
        let wp = simulate_weighted_path(model, x, i, grid, s, true)?;
        let mut row = Vec::with_capacity(k + 2);
        row.push(terminal_value(phi, &wp.zpath) * wp.weight);
        let truncated = wp.chain.n_jumps() > cap;
        for e in directions {
            row.push(if truncated { 0.0 } else { zeta_hat(model, phi, e, &wp)? });
        }
        row.push(if truncated { 1.0 } else { 0.0 });
        Ok(row)
    })?;
    Ok(GradientEstimate {
        value: est[0],
        gradient: est[1..=k].to_vec(),
        n_max: cap,
        truncated_mass: est[k + 1].mean,
    })
}

/// `(û(x + h e) - û(x - h e)) / 2h` from direct simulation under common
/// random numbers.
#[allow(clippy::too_many_arguments)]
pub fn fd_gradient_oracle(
    model: &dyn SwitchingModel,
    phi: &dyn Observable,
    x: &[f64],
    i: usize,
    grid: &TimeGrid,
    h: f64,
    e: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
    }
    let xp: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + h * b).collect();
    let xm: Vec<f64> = x.iter().zip(e).map(|(a, b)| a - h * b).collect();
    mc_estimate(n_paths, seed, |s| {
        let mut s2 = s.clone();
        let up = terminal_value(phi, &simulate_path(model, &xp, i, grid, s)?);
        let down = terminal_value(phi, &simulate_path(model, &xm, i, grid, &mut s2)?);
        Ok((up - down) / (2.0 * h))
    })
}

/// Central difference of the change-of-measure estimator under common
/// random numbers (same chain and Brownian increments at `x ± h e`).
#[allow(clippy::too_many_arguments)]
pub fn fd_gradient_cm(
    model: &dyn SwitchingModel,
    phi: &dyn Observable,
    x: &[f64],
    i: usize,
    grid: &TimeGrid,
    h: f64,
    e: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h = {h} must be positive")));
    }
    let xp: Vec<f64> = x.iter().zip(e).map(|(a, b)| a + h * b).collect();
    let xm: Vec<f64> = x.iter().zip(e).map(|(a, b)| a - h * b).collect();
    mc_estimate(n_paths, seed, |s| {
        let mut s2 = s.clone();
        let up = simulate_weighted_path(model, &xp, i, grid, s, false)?;
        let down = simulate_weighted_path(model, &xm, i, grid, &mut s2, false)?;
        let fu = terminal_value(phi, &up.zpath) * up.weight;
        let fd = terminal_value(phi, &down.zpath) * down.weight;
        Ok((fu - fd) / (2.0 * h))
    })
}
