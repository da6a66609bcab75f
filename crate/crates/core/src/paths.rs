//! Trajectory generation.
//!
//! The continuous component advances by Euler–Maruyama. Regime switching is
//! sampled by thinning a Poisson random measure: in each step a Poisson number
//! of marks is drawn over the mark band, and the first mark that falls into an
//! interval of the mark partition (evaluated at the step-start state) fires.
//! At most one regime change is accepted per step.
//!
//! Per-step noise layout: `d` Gaussians, then the Poisson mark count, then one
//! uniform per mark. Every mark is drawn even after a switch has fired, so two
//! runs from different initial states stay aligned on the same stream.

use std::io::{self, Write};

use rand_distr::Poisson;

use crate::error::{Error, Result};
use crate::mc::fmt_f64;
use crate::model::{
    coupled_rates_into, mark_target, require_jacobians, CoupledMove, RegimeSpace, SwitchingModel,
};
use crate::noise::NoiseStream;

/// States whose Euclidean norm exceeds this abort the path.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// Uniform discretization of `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon {horizon} must be positive")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    /// Grid with step as close as possible to `dt` that still ends at `horizon`.
    pub fn with_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
        }
        Self::new(horizon, ((horizon / dt).round() as usize).max(1))
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

/// A regime change; the new regime holds from node `node` onwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchEvent {
    pub node: usize,
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

/// A discretized trajectory of `(X, α)`.
///
/// `regime(k)` is the regime in force on `[t_k, t_{k+1})`. The Brownian
/// increments that drove the path are kept so tangent processes can replay
/// them.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    r: usize,
    d: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    regimes: Vec<usize>,
    switches: Vec<SwitchEvent>,
    increments: Vec<f64>,
}

impl PathSample {
    fn start(r: usize, d: usize, n_nodes: usize, x0: &[f64], i0: usize) -> Self {
        let mut states = Vec::with_capacity(n_nodes * r);
        states.extend_from_slice(x0);
        let mut regimes = Vec::with_capacity(n_nodes);
        regimes.push(i0);
        Self {
            r,
            d,
            times: Vec::with_capacity(n_nodes),
            states,
            regimes,
            switches: Vec::new(),
            increments: Vec::with_capacity(n_nodes.saturating_sub(1) * d),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.r
    }

    pub fn noise_dim(&self) -> usize {
        self.d
    }

    /// Number of grid nodes (steps + 1).
    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.r..(k + 1) * self.r]
    }

    pub fn regime(&self, k: usize) -> usize {
        self.regimes[k]
    }

    pub fn regimes(&self) -> &[usize] {
        &self.regimes
    }

    pub fn terminal_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn terminal_regime(&self) -> usize {
        self.regimes[self.len() - 1]
    }

    pub fn switches(&self) -> &[SwitchEvent] {
        &self.switches
    }

    /// Brownian increment of step `k` (length `d`).
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.d..(k + 1) * self.d]
    }

    pub(crate) fn map_states(&mut self, f: impl Fn(f64) -> f64) {
        self.states.iter_mut().for_each(|v| *v = f(*v));
    }

    /// CSV with header `t,x_1..x_r,alpha`, regimes 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let cols: Vec<String> = (1..=self.r).map(|c| format!("x_{c}")).collect();
        writeln!(w, "t,{},alpha", cols.join(","))?;
        for k in 0..self.len() {
            writeln!(w, "{},{},{}", fmt_f64(self.time(k)), join(self.state(k)), self.regime(k) + 1)?;
        }
        Ok(())
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

/// Scratch buffers for one Euler step.
struct Stepper {
    r: usize,
    d: usize,
    drift: Vec<f64>,
    sigma: Vec<f64>,
}

impl Stepper {
    fn new(model: &dyn SwitchingModel) -> Self {
        let (r, d) = (model.state_dim(), model.noise_dim());
        Self {
            r,
            d,
            drift: vec![0.0; r],
            sigma: vec![0.0; r * d],
        }
    }

    /// `out = x + b(x, i) h + σ(x, i) dw`.
    fn euler(
        &mut self,
        model: &dyn SwitchingModel,
        x: &[f64],
        regime: usize,
        h: f64,
        dw: &[f64],
        out: &mut [f64],
    ) {
        model.drift(x, regime, &mut self.drift);
        model.diffusion(x, regime, &mut self.sigma);
        for a in 0..self.r {
            let noise: f64 = (0..self.d).map(|c| self.sigma[a * self.d + c] * dw[c]).sum();
            out[a] = x[a] + self.drift[a] * h + noise;
        }
    }
}

fn check_finite(x: &[f64], step: usize) -> Result<()> {
    let n2: f64 = x.iter().map(|v| v * v).sum();
    if !n2.is_finite() || n2.sqrt() > DIVERGENCE_NORM {
        return Err(Error::Divergence { step });
    }
    Ok(())
}

fn check_start(model: &dyn SwitchingModel, x0: &[f64], i0: usize) -> Result<()> {
    if x0.len() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "initial state has {} coordinates, model `{}` has r = {}",
            x0.len(),
            model.name(),
            model.state_dim()
        )));
    }
    model.regimes().check(i0)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("initial state is not finite".into()));
    }
    Ok(())
}

fn mark_law(intensity: f64) -> Result<Option<Poisson<f64>>> {
    if intensity <= 0.0 {
        return Ok(None);
    }
    Poisson::new(intensity)
        .map(Some)
        .map_err(|e| Error::InvalidArgument(format!("mark intensity {intensity}: {e}")))
}

fn draw_increments(stream: &mut NoiseStream, sqrt_h: f64, dw: &mut [f64]) {
    for v in dw.iter_mut() {
        *v = sqrt_h * stream.gaussian();
    }
}

/// One path of the switching diffusion from `(x0, i0)`.
pub fn simulate_path(
    model: &dyn SwitchingModel,
    x0: &[f64],
    i0: usize,
    grid: &TimeGrid,
    stream: &mut NoiseStream,
) -> Result<PathSample> {
    check_start(model, x0, i0)?;
    let (r, d) = (model.state_dim(), model.noise_dim());
    let m0 = model.regimes().size();
    let n = grid.n_steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let band = (m0 * m0) as f64 * model.rate_bound();
    let law = if m0 > 1 { mark_law(band * dt)? } else { None };

    let mut path = PathSample::start(r, d, n + 1, x0, i0);
    path.times = grid.times();
    let mut stepper = Stepper::new(model);
    let mut dw = vec![0.0; d];
    let mut x = x0.to_vec();
    let mut next = vec![0.0; r];
    let mut regime = i0;

    for k in 0..n {
        draw_increments(stream, sqrt_dt, &mut dw);
        stepper.euler(model, &x, regime, dt, &dw, &mut next);
        check_finite(&next, k)?;

        let mut target = None;
        if let Some(law) = &law {
            for _ in 0..stream.poisson(law) {
                let z = stream.uniform() * band;
                if target.is_none() {
                    target = mark_target(model, &x, regime, z)?;
                }
            }
        }

        path.increments.extend_from_slice(&dw);
        path.states.extend_from_slice(&next);
        if let Some(j) = target {
            path.switches.push(SwitchEvent {
                node: k + 1,
                time: grid.time(k + 1),
                from: regime,
                to: j,
            });
            regime = j;
        }
        path.regimes.push(regime);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(path)
}

/// A pair of paths under the basic coupling, driven by the same Brownian
/// increments, started at `(x, i0)` and `(x̃, i0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPathSample {
    first: PathSample,
    second: PathSample,
    tau_node: Option<usize>,
}

impl CoupledPathSample {
    pub fn first(&self) -> &PathSample {
        &self.first
    }

    pub fn second(&self) -> &PathSample {
        &self.second
    }

    /// First node at which the regimes differ.
    pub fn tau_node(&self) -> Option<usize> {
        self.tau_node
    }

    /// Decoupling time `τ^Δ`, if it happened on the grid.
    pub fn tau_delta(&self) -> Option<f64> {
        self.tau_node.map(|k| self.first.time(k))
    }

    pub fn decoupled_by(&self, t: f64) -> bool {
        self.tau_delta().is_some_and(|tau| tau <= t)
    }

    /// CSV with header `t,x_1..,alpha,x̃_1..,alpha2,decoupled`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let r = self.first.r;
        let a: Vec<String> = (1..=r).map(|c| format!("x_{c}")).collect();
        let b: Vec<String> = (1..=r).map(|c| format!("x̃_{c}")).collect();
        writeln!(w, "t,{},alpha,{},alpha2,decoupled", a.join(","), b.join(","))?;
        for k in 0..self.first.len() {
            let dec = self.tau_node.is_some_and(|tau| k >= tau);
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_f64(self.first.time(k)),
                join(self.first.state(k)),
                self.first.regime(k) + 1,
                join(self.second.state(k)),
                self.second.regime(k) + 1,
                u8::from(dec)
            )?;
        }
        Ok(())
    }
}

fn pick_move(moves: &[CoupledMove], z: f64) -> Option<(usize, usize)> {
    let mut acc = 0.0;
    for m in moves {
        acc += m.rate;
        if z < acc {
            return Some(m.targets);
        }
    }
    None
}

/// Coupled simulation. Joint regime moves come from
/// [`crate::model::coupled_rates`] at the step-start states, thinned against
/// the bound `3 m0² M`.
pub fn simulate_coupled(
    model: &dyn SwitchingModel,
    x0: &[f64],
    xt0: &[f64],
    i0: usize,
    grid: &TimeGrid,
    stream: &mut NoiseStream,
) -> Result<CoupledPathSample> {
    check_start(model, x0, i0)?;
    check_start(model, xt0, i0)?;
    let (r, d) = (model.state_dim(), model.noise_dim());
    let m0 = model.regimes().size();
    let n = grid.n_steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let band = 3.0 * (m0 * m0) as f64 * model.rate_bound();
    let law = if m0 > 1 { mark_law(band * dt)? } else { None };

    let mut first = PathSample::start(r, d, n + 1, x0, i0);
    let mut second = PathSample::start(r, d, n + 1, xt0, i0);
    first.times = grid.times();
    second.times = first.times.clone();
    let mut stepper = Stepper::new(model);
    let mut dw = vec![0.0; d];
    let (mut x, mut xt) = (x0.to_vec(), xt0.to_vec());
    let (mut nx, mut nxt) = (vec![0.0; r], vec![0.0; r]);
    let (mut k_reg, mut l_reg) = (i0, i0);
    let mut tau_node = None;
    let mut moves = Vec::with_capacity(3 * m0);

    for k in 0..n {
        draw_increments(stream, sqrt_dt, &mut dw);
        stepper.euler(model, &x, k_reg, dt, &dw, &mut nx);
        stepper.euler(model, &xt, l_reg, dt, &dw, &mut nxt);
        check_finite(&nx, k)?;
        check_finite(&nxt, k)?;

        let mut target = None;
        if let Some(law) = &law {
            let count = stream.poisson(law);
            if count > 0 {
                coupled_rates_into(model, &x, &xt, k_reg, l_reg, &mut moves);
                let total: f64 = moves.iter().map(|m| m.rate).sum();
                if total >= band {
                    return Err(Error::RateBound {
                        from: k_reg + 1,
                        to: l_reg + 1,
                        rate: total,
                        bound: band,
                    });
                }
            }
            for _ in 0..count {
                let z = stream.uniform() * band;
                if target.is_none() {
                    target = pick_move(&moves, z);
                }
            }
        }

        for (p, st) in [(&mut first, &nx), (&mut second, &nxt)] {
            p.increments.extend_from_slice(&dw);
            p.states.extend_from_slice(st);
        }
        if let Some((j, jt)) = target {
            if j != k_reg {
                first.switches.push(SwitchEvent {
                    node: k + 1,
                    time: grid.time(k + 1),
                    from: k_reg,
                    to: j,
                });
            }
            if jt != l_reg {
                second.switches.push(SwitchEvent {
                    node: k + 1,
                    time: grid.time(k + 1),
                    from: l_reg,
                    to: jt,
                });
            }
            k_reg = j;
            l_reg = jt;
            if tau_node.is_none() && j != jt {
                tau_node = Some(k + 1);
            }
        }
        first.regimes.push(k_reg);
        second.regimes.push(l_reg);
        std::mem::swap(&mut x, &mut nx);
        std::mem::swap(&mut xt, &mut nxt);
    }
    Ok(CoupledPathSample {
        first,
        second,
        tau_node,
    })
}

/// First-variation process `ξ` along a path: `r × r` matrices, row-major,
/// one per node, with `ξ_0 = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentPath {
    r: usize,
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TangentPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, k: usize) -> &[f64] {
        let rr = self.r * self.r;
        &self.values[k * rr..(k + 1) * rr]
    }

    pub fn terminal(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    /// `ξ_k e`, the tangent in direction `e`.
    pub fn apply(&self, k: usize, e: &[f64]) -> Vec<f64> {
        let m = self.value(k);
        (0..self.r)
            .map(|a| (0..self.r).map(|b| m[a * self.r + b] * e[b]).sum())
            .collect()
    }
}

/// Replays the increments of `base` through the linearized equation
/// `ξ_{k+1} = ξ_k + b_x ξ_k h_k + Σ_c σ_x^{(c)} ξ_k Δw_k^{(c)}`.
pub fn simulate_tangent(model: &dyn SwitchingModel, base: &PathSample) -> Result<TangentPath> {
    let jac = require_jacobians(model)?;
    let (r, d) = (model.state_dim(), model.noise_dim());
    if base.r != r || base.d != d {
        return Err(Error::Dimension("base path does not match the model".into()));
    }
    let rr = r * r;
    let n = base.len();
    let mut values = Vec::with_capacity(n * rr);
    let mut xi = vec![0.0; rr];
    for a in 0..r {
        xi[a * r + a] = 1.0;
    }
    values.extend_from_slice(&xi);
    let mut bx = vec![0.0; rr];
    let mut sx = vec![0.0; rr * d];
    let mut next = vec![0.0; rr];
    for k in 0..n - 1 {
        let h = base.time(k + 1) - base.time(k);
        let x = base.state(k);
        let i = base.regime(k);
        let dw = base.increment(k);
        jac.drift_jac(x, i, &mut bx);
        jac.diffusion_jac(x, i, &mut sx);
        for a in 0..r {
            for col in 0..r {
                let mut drift = 0.0;
                let mut noise = 0.0;
                for b in 0..r {
                    let xi_b = xi[b * r + col];
                    drift += bx[a * r + b] * xi_b;
                    let s: f64 = (0..d).map(|c| sx[(a * r + b) * d + c] * dw[c]).sum();
                    noise += s * xi_b;
                }
                next[a * r + col] = xi[a * r + col] + drift * h + noise;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
        std::mem::swap(&mut xi, &mut next);
        values.extend_from_slice(&xi);
    }
    Ok(TangentPath {
        r,
        times: base.times.clone(),
        values,
    })
}

/// Path of the auxiliary chain with `q̂_ij = 1` for `i != j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    horizon: f64,
    jump_times: Vec<f64>,
    regimes: Vec<usize>,
}

impl ChainPath {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `θ_1 < θ_2 < …`, all `< T`.
    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    /// `i_0, i_1, …, i_n`.
    pub fn regimes(&self) -> &[usize] {
        &self.regimes
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    pub fn terminal_regime(&self) -> usize {
        *self.regimes.last().expect("chain has an initial regime")
    }

    /// `χ(t)`, right-continuous.
    pub fn regime_at(&self, t: f64) -> usize {
        let n = self.jump_times.partition_point(|&th| th <= t);
        self.regimes[n]
    }
}

/// Exact simulation: holding times `Exp(m0 - 1)`, next regime uniform over
/// the other `m0 - 1`.
pub fn simulate_aux_chain(
    regimes: RegimeSpace,
    i0: usize,
    horizon: f64,
    stream: &mut NoiseStream,
) -> Result<ChainPath> {
    regimes.check(i0)?;
    let m0 = regimes.size();
    let mut path = ChainPath {
        horizon,
        jump_times: Vec::new(),
        regimes: vec![i0],
    };
    if m0 == 1 {
        return Ok(path);
    }
    let rate = (m0 - 1) as f64;
    let mut t = 0.0;
    let mut current = i0;
    loop {
        t += stream.exponential(rate);
        if t >= horizon {
            break;
        }
        let pick = stream.below(m0 - 1);
        current = if pick >= current { pick + 1 } else { pick };
        path.jump_times.push(t);
        path.regimes.push(current);
    }
    Ok(path)
}

/// Euler path driven by a given chain instead of the model's own switching,
/// on the union of `grid` and the chain's jump times. The jump nodes are
/// recorded as switch events.
pub fn simulate_driven(
    model: &dyn SwitchingModel,
    x0: &[f64],
    chain: &ChainPath,
    grid: &TimeGrid,
    stream: &mut NoiseStream,
) -> Result<PathSample> {
    check_start(model, x0, chain.regimes[0])?;
    if chain.horizon != grid.horizon() {
        return Err(Error::InvalidArgument(format!(
            "chain horizon {} differs from grid horizon {}",
            chain.horizon,
            grid.horizon()
        )));
    }
    let (r, d) = (model.state_dim(), model.noise_dim());
    let mut times = grid.times();
    times.extend_from_slice(&chain.jump_times);
    times.sort_by(f64::total_cmp);
    times.dedup();

    let n = times.len();
    let mut path = PathSample::start(r, d, n, x0, chain.regimes[0]);
    let mut stepper = Stepper::new(model);
    let mut dw = vec![0.0; d];
    let mut x = x0.to_vec();
    let mut next = vec![0.0; r];
    let mut regime = chain.regimes[0];
    let mut jump = 0;
    for k in 0..n - 1 {
        let h = times[k + 1] - times[k];
        draw_increments(stream, h.sqrt(), &mut dw);
        stepper.euler(model, &x, regime, h, &dw, &mut next);
        check_finite(&next, k)?;
        path.increments.extend_from_slice(&dw);
        path.states.extend_from_slice(&next);
        if jump < chain.n_jumps() && chain.jump_times[jump] == times[k + 1] {
            let to = chain.regimes[jump + 1];
            path.switches.push(SwitchEvent {
                node: k + 1,
                time: times[k + 1],
                from: regime,
                to,
            });
            regime = to;
            jump += 1;
        }
        path.regimes.push(regime);
        std::mem::swap(&mut x, &mut next);
    }
    path.times = times;
    Ok(path)
}
