//! Competitive Lotka–Volterra dynamics with regime switching,
//! `dx_i = x_i (b_i(α) - Σ_j a_ij(α) x_j) dt + σ_i(α) x_i dw_i`,
//! simulated in log coordinates so every state stays in the open orthant.

use crate::error::{Error, Result};
use crate::mc::{fmt_f64, loglog_fit, mc_estimate, mc_estimate_many, McEstimate};
use crate::model::{
    validate_rate_matrix, CoefficientJacobians, RateGradients, RateMatrix, RegimeSpace, SwitchingModel,
    DEFAULT_RATE_TOL,
};
use crate::models::InterpolatedRates;
use crate::noise::NoiseStream;
use crate::paths::{simulate_coupled, simulate_path, PathSample, TimeGrid};
use crate::sensitivity::StudyReport;

/// Rate families for `Q(x)`, all functions of `|x| = Σ_i x_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum LvRates {
    Constant(RateMatrix),
    /// `q_ij = low_ij + (high_ij - low_ij) / (1 + e^{-steepness (|x| - midpoint)})`.
    Logistic {
        low: RateMatrix,
        high: RateMatrix,
        midpoint: f64,
        steepness: f64,
    },
    Table(InterpolatedRates),
}

impl LvRates {
    fn size(&self) -> usize {
        match self {
            LvRates::Constant(q) => q.size(),
            LvRates::Logistic { low, .. } => low.size(),
            LvRates::Table(t) => t.size(),
        }
    }

    /// `(q_ij(s), dq_ij/ds)` at `s = |x|`.
    fn eval(&self, s: f64, i: usize, j: usize) -> (f64, f64) {
        match self {
            LvRates::Constant(q) => (q.get(i, j), 0.0),
            LvRates::Logistic {
                low,
                high,
                midpoint,
                steepness,
            } => {
                let l = 1.0 / (1.0 + (-steepness * (s - midpoint)).exp());
                let span = high.get(i, j) - low.get(i, j);
                (low.get(i, j) + span * l, span * steepness * l * (1.0 - l))
            }
            LvRates::Table(t) => (t.eval(s, i, j), t.slope(s, i, j)),
        }
    }

    fn max_rate(&self) -> f64 {
        let off = |q: &RateMatrix| {
            let n = q.size();
            (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| q.get(i, j))
                .fold(0.0, f64::max)
        };
        match self {
            LvRates::Constant(q) => off(q),
            LvRates::Logistic { low, high, .. } => off(low).max(off(high)),
            LvRates::Table(t) => t.max_off_diagonal(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LvSpec {
    r: usize,
    m0: usize,
    b: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    rates: LvRates,
    bound: f64,
}

fn check_rows(name: &str, rows: &[Vec<f64>], m0: usize, width: usize) -> Result<()> {
    if rows.len() != m0 || rows.iter().any(|row| row.len() != width) {
        return Err(Error::Dimension(format!("`{name}` must be {m0} rows of {width} entries")));
    }
    Ok(())
}

impl LvSpec {
    /// `a` holds one row-major `r × r` interaction matrix per regime. The
    /// rate bound defaults to one more than the largest rate.
    pub fn new(
        r: usize,
        m0: usize,
        b: Vec<Vec<f64>>,
        a: Vec<Vec<f64>>,
        sigma: Vec<Vec<f64>>,
        rates: LvRates,
        bound: Option<f64>,
    ) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidArgument("r must be >= 1".into()));
        }
        RegimeSpace::new(m0)?;
        check_rows("b", &b, m0, r)?;
        check_rows("A", &a, m0, r * r)?;
        check_rows("sigma", &sigma, m0, r)?;
        for (k, ak) in a.iter().enumerate() {
            for i in 0..r {
                for j in 0..r {
                    let v = ak[i * r + j];
                    if (i == j && !(v > 0.0)) || v < 0.0 {
                        return Err(Error::Domain(format!(
                            "regime {}: a[{}][{}] = {v} violates a_ii > 0, a_ij >= 0",
                            k + 1,
                            i + 1,
                            j + 1
                        )));
                    }
                }
            }
        }
        if rates.size() != m0 {
            return Err(Error::Dimension(format!("rate matrices are {0}×{0}, m0 = {m0}", rates.size())));
        }
        let check = |q: &RateMatrix| -> Result<()> {
            let report = validate_rate_matrix(&q.rows(), DEFAULT_RATE_TOL)?;
            match report.violations.first() {
                Some(v) => Err(Error::Domain(format!("rate matrix: {v}"))),
                None => Ok(()),
            }
        };
        match &rates {
            LvRates::Constant(q) => check(q)?,
            LvRates::Logistic { low, high, steepness, .. } => {
                check(low)?;
                check(high)?;
                if !steepness.is_finite() {
                    return Err(Error::InvalidArgument("steepness must be finite".into()));
                }
            }
            LvRates::Table(_) => {}
        }
        let bound = bound.unwrap_or(rates.max_rate() + 1.0);
        if !(bound > rates.max_rate()) {
            return Err(Error::InvalidArgument(format!(
                "rate bound {bound} must exceed the largest rate {}",
                rates.max_rate()
            )));
        }
        Ok(Self {
            r,
            m0,
            b,
            a,
            sigma,
            rates,
            bound,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn m0(&self) -> usize {
        self.m0
    }
}

/// The log-coordinate model `y = log x`:
/// `b_i(y, k) = b_i(k) - σ_i(k)²/2 - Σ_j a_ij(k) e^{y_j}`, diagonal
/// diffusion `σ_i(k)`, rates `Q(e^y)`.
pub struct LvModel {
    spec: LvSpec,
    regimes: RegimeSpace,
}

pub fn lv_as_model(spec: &LvSpec) -> Result<LvModel> {
    Ok(LvModel {
        spec: spec.clone(),
        regimes: RegimeSpace::new(spec.m0)?,
    })
}

impl LvModel {
    pub fn spec(&self) -> &LvSpec {
        &self.spec
    }

    fn size(y: &[f64]) -> f64 {
        y.iter().map(|v| v.exp()).sum()
    }
}

impl SwitchingModel for LvModel {
    fn name(&self) -> &str {
        "lotka"
    }
    fn state_dim(&self) -> usize {
        self.spec.r
    }
    fn noise_dim(&self) -> usize {
        self.spec.r
    }
    fn regimes(&self) -> RegimeSpace {
        self.regimes
    }
    fn rate_bound(&self) -> f64 {
        self.spec.bound
    }
    fn drift(&self, y: &[f64], k: usize, out: &mut [f64]) {
        let r = self.spec.r;
        let a = &self.spec.a[k];
        for i in 0..r {
            let s = self.spec.sigma[k][i];
            let competition: f64 = (0..r).map(|j| a[i * r + j] * y[j].exp()).sum();
            out[i] = self.spec.b[k][i] - 0.5 * s * s - competition;
        }
    }
    fn diffusion(&self, _: &[f64], k: usize, out: &mut [f64]) {
        let r = self.spec.r;
        out.fill(0.0);
        for i in 0..r {
            out[i * r + i] = self.spec.sigma[k][i];
        }
    }
    fn rate(&self, y: &[f64], from: usize, to: usize) -> f64 {
        self.spec.rates.eval(Self::size(y), from, to).0
    }
    fn rate_matrix(&self, y: &[f64]) -> RateMatrix {
        let m0 = self.spec.m0;
        let s = Self::size(y);
        let mut q = RateMatrix::zeros(m0);
        for i in 0..m0 {
            for j in 0..m0 {
                q.set(i, j, self.spec.rates.eval(s, i, j).0);
            }
        }
        q
    }
    fn holder_exponent(&self) -> Option<f64> {
        Some(1.0)
    }
    fn jacobians(&self) -> Option<&dyn CoefficientJacobians> {
        Some(self)
    }
    fn rate_gradients(&self) -> Option<&dyn RateGradients> {
        Some(self)
    }
}

impl CoefficientJacobians for LvModel {
    fn drift_jac(&self, y: &[f64], k: usize, out: &mut [f64]) {
        let r = self.spec.r;
        let a = &self.spec.a[k];
        for i in 0..r {
            for j in 0..r {
                out[i * r + j] = -a[i * r + j] * y[j].exp();
            }
        }
    }
    fn diffusion_jac(&self, _: &[f64], _: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
}

impl RateGradients for LvModel {
    fn rate_grad(&self, y: &[f64], from: usize, to: usize, out: &mut [f64]) {
        let slope = self.spec.rates.eval(Self::size(y), from, to).1;
        for (o, v) in out.iter_mut().zip(y) {
            *o = slope * v.exp();
        }
    }
}

fn log_start(x0: &[f64]) -> Result<Vec<f64>> {
    if let Some(v) = x0.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("initial state must lie in the open positive orthant, got {v}")));
    }
    Ok(x0.iter().map(|v| v.ln()).collect())
}

fn exp_path(mut path: PathSample) -> Result<PathSample> {
    path.map_states(f64::exp);
    for k in 0..path.len() {
        if path.state(k).iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Divergence { step: k.saturating_sub(1) });
        }
    }
    Ok(path)
}

/// One path in original coordinates. A log coordinate that underflows or
/// overflows under `exp` is reported as a divergence.
pub fn lv_simulate(model: &LvModel, x0: &[f64], i0: usize, grid: &TimeGrid, stream: &mut NoiseStream) -> Result<PathSample> {
    let y0 = log_start(x0)?;
    exp_path(simulate_path(model, &y0, i0, grid, stream)?)
}

/// `Ê |X(t)|^m` (ℓ¹ norm) at checkpoints spread evenly over `(0, 2T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub times: Vec<f64>,
    pub estimates: Vec<McEstimate>,
    pub scale: f64,
    /// `sup_{t ≤ T} Ê|X(t)|^m / (1 + |x0|^m)`.
    pub constant_first: f64,
    /// The same ratio over `(T, 2T]`.
    pub constant_second: f64,
    /// No aborts, every estimate finite, and the second-half constant within
    /// 20% of the first-half one.
    pub bounded: bool,
}

impl MomentTable {
    pub fn sup(&self) -> f64 {
        self.estimates.iter().map(|e| e.mean).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn lv_moment_check(
    model: &LvModel,
    x0: &[f64],
    i0: usize,
    m: f64,
    horizon: f64,
    dt: f64,
    checkpoints: usize,
    n_paths: usize,
    seed: u64,
) -> Result<MomentTable> {
    if !(m > 0.0) {
        return Err(Error::InvalidArgument(format!("moment order {m} must be positive")));
    }
    if checkpoints < 2 {
        return Err(Error::InvalidArgument("need at least two checkpoints".into()));
    }
    let grid = TimeGrid::with_step(2.0 * horizon, dt)?;
    let nodes: Vec<usize> = (1..=checkpoints)
        .map(|c| ((c as f64 / checkpoints as f64) * grid.n_steps() as f64).round() as usize)
        .collect();
    let estimates = mc_estimate_many(n_paths, seed, nodes.len(), |s| {
        let p = lv_simulate(model, x0, i0, &grid, s)?;
        Ok(nodes.iter().map(|&k| p.state(k).iter().sum::<f64>().powf(m)).collect())
    })?;
    let times: Vec<f64> = nodes.iter().map(|&k| grid.time(k)).collect();
    let scale = 1.0 + x0.iter().sum::<f64>().powf(m);
    let sup_over = |keep: &dyn Fn(f64) -> bool| {
        times
            .iter()
            .zip(&estimates)
            .filter(|(t, _)| keep(**t))
            .map(|(_, e)| e.mean / scale)
            .fold(0.0, f64::max)
    };
    let first = sup_over(&|t| t <= horizon + 1e-12);
    let second = sup_over(&|t| t > horizon + 1e-12);
    let bounded = estimates.iter().all(|e| e.aborted == 0 && e.mean.is_finite()) && second <= 1.2 * first;
    Ok(MomentTable {
        times,
        estimates,
        scale,
        constant_first: first,
        constant_second: second,
        bounded,
    })
}

/// `E sup_{t ≤ T ∧ τ} |X(t) - Y(t)|²` for coupled paths from `x0` and `y0`,
/// where `τ` is the first time the regimes differ.
pub fn lv_coupled_distance(
    model: &LvModel,
    x0: &[f64],
    y0: &[f64],
    i0: usize,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    let (lx, ly) = (log_start(x0)?, log_start(y0)?);
    mc_estimate(n_paths, seed, |s| {
        let cp = simulate_coupled(model, &lx, &ly, i0, grid, s)?;
        let stop = cp.tau_node().unwrap_or(cp.first().len() - 1);
        let mut worst: f64 = 0.0;
        for k in 0..=stop {
            let d: f64 = cp
                .first()
                .state(k)
                .iter()
                .zip(cp.second().state(k))
                .map(|(a, b)| (a.exp() - b.exp()).powi(2))
                .sum();
            worst = worst.max(d);
        }
        Ok(worst)
    })
}

/// [`lv_coupled_distance`] at `y0 = x0 + δ e` for each `δ`, with the
/// log-log fit over `δ`. `radius` is the declared bound on `|x0|, |y0|`.
#[allow(clippy::too_many_arguments)]
pub fn lv_distance_study(
    model: &LvModel,
    x0: &[f64],
    direction: &[f64],
    offsets: &[f64],
    radius: f64,
    i0: usize,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<StudyReport> {
    let offs: Vec<String> = offsets.iter().map(|d| fmt_f64(*d)).collect();
    let mut report = StudyReport {
        study: "lotka-coupled".into(),
        model: model.name().into(),
        config: format!(
            "T={},n_steps={},n_paths={},offsets={},R={},seed={}",
            fmt_f64(grid.horizon()),
            grid.n_steps(),
            n_paths,
            offs.join(";"),
            fmt_f64(radius),
            seed
        ),
        rows: Vec::new(),
        fit: None,
        notes: Vec::new(),
    };
    for &delta in offsets {
        let y0: Vec<f64> = x0.iter().zip(direction).map(|(a, b)| a + delta * b).collect();
        for p in [x0, &y0[..]] {
            if p.iter().sum::<f64>() > radius {
                return Err(Error::Domain(format!("starting point {p:?} has norm above R = {radius}")));
            }
        }
        let dist = y0.iter().zip(x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let est = lv_coupled_distance(model, x0, &y0, i0, grid, n_paths, seed)?;
        report.rows.push((dist, est));
    }
    let pairs: Vec<(f64, f64)> = report.rows.iter().map(|(d, e)| (*d, e.mean)).collect();
    match loglog_fit(&pairs) {
        Ok(fit) => report.fit = Some(fit),
        Err(e) => report.notes.push(format!("fit skipped: {e}")),
    }
    Ok(report)
}

/// Fraction of grid steps spent in `regime`, averaged over paths.
pub fn lv_occupation(
    model: &LvModel,
    x0: &[f64],
    i0: usize,
    regime: usize,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    mc_estimate(n_paths, seed, |s| {
        let p = lv_simulate(model, x0, i0, grid, s)?;
        let n = p.len() - 1;
        Ok((0..n).filter(|&k| p.regime(k) == regime).count() as f64 / n as f64)
    })
}
