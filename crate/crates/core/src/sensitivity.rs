//! Monte Carlo studies of continuous dependence on the initial state:
//! difference quotients against the tangent process, decoupling
//! probabilities, sup-distances of coupled paths, Dynkin residuals and Feller
//! gaps.

use std::io::{self, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mc::{fmt_f64, loglog_fit, mc_estimate, mc_estimate_many, McEstimate, PowerLawFit};
use crate::model::{apply_generator, require_jacobians, truncate_model, HybridState, SwitchingModel};
use crate::observable::Observable;
use crate::paths::{simulate_coupled, simulate_path, simulate_tangent, TimeGrid};

/// Minimum number of observed decouplings for a `Δ` to enter the exponent fit.
pub const MIN_DECOUPLING_EVENTS: f64 = 25.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    /// Strictly decreasing, positive.
    pub deltas: Vec<f64>,
    /// Moment order of the `L^p` study.
    pub p: f64,
    /// Unit perturbation direction; the first basis vector when `None`.
    pub direction: Option<Vec<f64>>,
    pub seed: u64,
}

impl StudyConfig {
    pub fn validate(&self, r: usize) -> Result<Vec<f64>> {
        TimeGrid::new(self.horizon, self.n_steps)?;
        if self.n_paths < 100 {
            return Err(Error::InvalidArgument(format!("n_paths = {} must be >= 100", self.n_paths)));
        }
        if self.deltas.is_empty() || self.deltas.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidArgument("deltas must be nonempty and positive".into()));
        }
        if self.deltas.windows(2).any(|w| !(w[0] > w[1])) {
            return Err(Error::InvalidArgument("deltas must be strictly decreasing".into()));
        }
        if !(self.p > 0.0) {
            return Err(Error::InvalidArgument(format!("p = {} must be positive", self.p)));
        }
        match &self.direction {
            None => {
                let mut e = vec![0.0; r];
                e[0] = 1.0;
                Ok(e)
            }
            Some(e) => {
                if e.len() != r {
                    return Err(Error::Dimension(format!("direction has {} entries, r = {r}", e.len())));
                }
                let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!("direction has norm {norm}, expected 1")));
                }
                Ok(e.clone())
            }
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.n_steps)
    }

    /// One-line `key=value` echo, enough to rerun the study.
    pub fn echo(&self) -> String {
        let deltas: Vec<String> = self.deltas.iter().map(|d| fmt_f64(*d)).collect();
        let dir = self.direction.as_ref().map_or("e1".to_string(), |e| {
            e.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";")
        });
        format!(
            "T={},n_steps={},n_paths={},deltas={},p={},direction={},seed={}",
            fmt_f64(self.horizon),
            self.n_steps,
            self.n_paths,
            deltas.join(";"),
            fmt_f64(self.p),
            dir,
            self.seed
        )
    }
}

/// Per-`Δ` estimates with an optional power-law fit.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub study: String,
    pub model: String,
    pub config: String,
    pub rows: Vec<(f64, McEstimate)>,
    pub fit: Option<PowerLawFit>,
    pub notes: Vec<String>,
}

impl StudyReport {
    fn new(study: &str, model: &str, config: String) -> Self {
        Self {
            study: study.into(),
            model: model.into(),
            config,
            rows: Vec::new(),
            fit: None,
            notes: Vec::new(),
        }
    }

    pub fn means(&self) -> Vec<f64> {
        self.rows.iter().map(|(_, e)| e.mean).collect()
    }

    pub fn aborted(&self) -> usize {
        self.rows.iter().map(|(_, e)| e.aborted).sum()
    }

    pub fn attempted(&self) -> usize {
        self.rows.iter().map(|(_, e)| e.n).sum()
    }

    /// Notes as comments, `delta,n,mean,stderr,aborted` rows, then the fit
    /// as `# slope=…,intercept=…,r2=…`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# study={},model={}", self.study, self.model)?;
        writeln!(w, "# {}", self.config)?;
        for note in &self.notes {
            writeln!(w, "# note: {note}")?;
        }
        writeln!(w, "delta,n,mean,stderr,aborted")?;
        for (delta, est) in &self.rows {
            writeln!(w, "{}", est.csv_row(&fmt_f64(*delta)))?;
        }
        if let Some(fit) = &self.fit {
            writeln!(w, "{}", fit.csv_comment())?;
        }
        Ok(())
    }

    fn fit_positive(&mut self) {
        let pairs: Vec<(f64, f64)> = self.rows.iter().filter(|(_, e)| e.mean > 0.0).map(|(d, e)| (*d, e.mean)).collect();
        if pairs.len() < self.rows.len() {
            self.notes.push(format!("{} zero-valued rows left out of the fit", self.rows.len() - pairs.len()));
        }
        match loglog_fit(&pairs) {
            Ok(fit) => self.fit = Some(fit),
            Err(e) => self.notes.push(format!("fit skipped: {e}")),
        }
    }
}

fn shifted(x: &[f64], e: &[f64], delta: f64) -> Vec<f64> {
    x.iter().zip(e).map(|(a, b)| a + delta * b).collect()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// `E|Z^Δ(T) - ξ(T) e|^p` per `Δ`, with `Z^Δ = (X̃(T) - X(T)) / Δ` from
/// coupled paths started at `x` and `x + Δ e`.
pub fn lp_error_study(model: &dyn SwitchingModel, x: &[f64], i: usize, cfg: &StudyConfig) -> Result<StudyReport> {
    let e = cfg.validate(model.state_dim())?;
    require_jacobians(model)?;
    let grid = cfg.grid()?;
    let mut report = StudyReport::new("lp-error", model.name(), cfg.echo());
    if let Some(lambda) = model.holder_exponent() {
        if cfg.p >= lambda {
            report
                .notes
                .push(format!("p = {} is not below the declared exponent {lambda}; convergence is not expected", cfg.p));
        }
    }
    for &delta in &cfg.deltas {
        let xt = shifted(x, &e, delta);
        let est = mc_estimate(cfg.n_paths, cfg.seed, |s| {
            let cp = simulate_coupled(model, x, &xt, i, &grid, s)?;
            let xi = simulate_tangent(model, cp.first())?;
            let last = cp.first().len() - 1;
            let tangent = xi.apply(last, &e);
            let a = cp.first().terminal_state();
            let b = cp.second().terminal_state();
            let err: f64 = (0..a.len())
                .map(|k| ((b[k] - a[k]) / delta - tangent[k]).powi(2))
                .sum::<f64>()
                .sqrt();
            Ok(err.powf(cfg.p))
        })?;
        report.rows.push((delta, est));
    }
    report.fit_positive();
    Ok(report)
}

/// Empirical `P(τ^Δ ≤ T)` per `Δ` with binomial standard errors, and the
/// exponent fit over the `Δ` values with at least
/// [`MIN_DECOUPLING_EVENTS`] observed decouplings.
pub fn decoupling_probability_study(
    model: &dyn SwitchingModel,
    x: &[f64],
    i: usize,
    cfg: &StudyConfig,
) -> Result<StudyReport> {
    let e = cfg.validate(model.state_dim())?;
    let grid = cfg.grid()?;
    let mut report = StudyReport::new("decoupling", model.name(), cfg.echo());
    let mut pairs = Vec::new();
    let mut excluded = Vec::new();
    for &delta in &cfg.deltas {
        let xt = shifted(x, &e, delta);
        let mut est = mc_estimate(cfg.n_paths, cfg.seed, |s| {
            let cp = simulate_coupled(model, x, &xt, i, &grid, s)?;
            Ok(if cp.tau_node().is_some() { 1.0 } else { 0.0 })
        })?;
        let kept = est.kept() as f64;
        est.stderr = (est.mean * (1.0 - est.mean) / kept).sqrt();
        let events = (est.mean * kept).round();
        if events >= MIN_DECOUPLING_EVENTS {
            pairs.push((delta, est.mean));
        } else {
            excluded.push(format!("{}({events} events)", fmt_f64(delta)));
        }
        report.rows.push((delta, est));
    }
    if report.rows.iter().all(|(_, e)| e.mean == 0.0) {
        report.notes.push("Markovian: no decoupling".into());
        return Ok(report);
    }
    report.notes.push(format!("fit uses deltas with >= {MIN_DECOUPLING_EVENTS} decoupling events"));
    if !excluded.is_empty() {
        report.notes.push(format!("excluded from fit: {}", excluded.join(" ")));
    }
    match loglog_fit(&pairs) {
        Ok(fit) => report.fit = Some(fit),
        Err(e) => report.notes.push(format!("fit skipped: {e}")),
    }
    Ok(report)
}

/// `E sup_k |X̃_k - X_k|` per `Δ` over the full horizon.
pub fn sup_distance_study(model: &dyn SwitchingModel, x: &[f64], i: usize, cfg: &StudyConfig) -> Result<StudyReport> {
    let e = cfg.validate(model.state_dim())?;
    let grid = cfg.grid()?;
    let mut report = StudyReport::new("sup-distance", model.name(), cfg.echo());
    for &delta in &cfg.deltas {
        let xt = shifted(x, &e, delta);
        let est = mc_estimate(cfg.n_paths, cfg.seed, |s| {
            let cp = simulate_coupled(model, x, &xt, i, &grid, s)?;
            let (a, b) = (cp.first(), cp.second());
            Ok((0..a.len()).map(|k| distance(a.state(k), b.state(k))).fold(0.0, f64::max))
        })?;
        report.rows.push((delta, est));
    }
    report.fit_positive();
    Ok(report)
}

/// One `dt` of a Dynkin check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynkinRow {
    pub dt: f64,
    /// `Ê f(X_T, α_T)`.
    pub terminal: McEstimate,
    /// Per-path `f(X_T, α_T) - f(x, i) - Σ_k (Lf)(X_k, α_k) dt`; the residual
    /// is the absolute value of its mean.
    pub defect: McEstimate,
}

impl DynkinRow {
    pub fn residual(&self) -> f64 {
        self.defect.mean.abs()
    }
}

/// Dynkin's formula on the Euler scheme, with the time integral of `Lf` by
/// the left-point rule on the simulation grid.
pub fn dynkin_residual(
    model: &dyn SwitchingModel,
    f: &dyn Observable,
    x: &[f64],
    i: usize,
    horizon: f64,
    dts: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<DynkinRow>> {
    let f0 = f.value(x, i);
    let regimes = model.regimes();
    dts.iter()
        .map(|&dt| {
            let grid = TimeGrid::with_step(horizon, dt)?;
            let h = grid.dt();
            let est = mc_estimate_many(n_paths, seed, 2, |s| {
                let path = simulate_path(model, x, i, &grid, s)?;
                let mut integral = 0.0;
                for k in 0..path.len() - 1 {
                    let state = HybridState::new(path.state(k).to_vec(), path.regime(k), regimes)?;
                    integral += apply_generator(model, f, &state) * h;
                }
                let ft = f.value(path.terminal_state(), path.terminal_regime());
                Ok(vec![ft, ft - f0 - integral])
            })?;
            Ok(DynkinRow {
                dt: h,
                terminal: est[0],
                defect: est[1],
            })
        })
        .collect()
}

/// Gap at one perturbed starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct FellerRow {
    pub x_n: Vec<f64>,
    pub distance: f64,
    pub estimate: McEstimate,
    /// `|Ê f(·)^{x_n} - Ê f(·)^{x}|` under common random numbers.
    pub gap: f64,
    /// `√(se_x² + se_{x_n}²)`.
    pub combined_stderr: f64,
    /// Per-path difference; its stderr reflects the common random numbers.
    pub paired: McEstimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FellerTable {
    pub base: McEstimate,
    pub rows: Vec<FellerRow>,
}

impl FellerTable {
    /// Gaps at the two starting points nearest `x` are within three combined
    /// standard errors.
    pub fn nearest_gaps_within_noise(&self) -> bool {
        let mut idx: Vec<usize> = (0..self.rows.len()).collect();
        idx.sort_by(|&a, &b| self.rows[a].distance.total_cmp(&self.rows[b].distance));
        idx.iter()
            .take(2)
            .all(|&k| self.rows[k].gap <= 3.0 * self.rows[k].combined_stderr)
    }
}

fn bounded_value(f: &dyn Observable, x: &[f64], i: usize) -> Result<f64> {
    let v = f.value(x, i);
    if !(v.abs() <= 1.0) {
        return Err(Error::Domain(format!("test function value {v} exceeds 1 in absolute value")));
    }
    Ok(v)
}

pub fn feller_gap(
    model: &dyn SwitchingModel,
    f: &dyn Observable,
    x: &[f64],
    i: usize,
    xs: &[Vec<f64>],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<FellerTable> {
    let terminal = |start: &[f64], s: &mut crate::noise::NoiseStream| -> Result<f64> {
        let p = simulate_path(model, start, i, grid, s)?;
        bounded_value(f, p.terminal_state(), p.terminal_regime())
    };
    let base = mc_estimate(n_paths, seed, |s| terminal(x, s))?;
    let rows = xs
        .iter()
        .map(|xn| {
            let est = mc_estimate_many(n_paths, seed, 2, |s| {
                let mut s2 = s.clone();
                let a = terminal(x, s)?;
                let b = terminal(xn, &mut s2)?;
                Ok(vec![b, b - a])
            })?;
            Ok(FellerRow {
                x_n: xn.clone(),
                distance: distance(xn, x),
                estimate: est[0],
                gap: (est[0].mean - base.mean).abs(),
                combined_stderr: est[0].combined_stderr(&base),
                paired: est[1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FellerTable { base, rows })
}

/// `P(max_k |X_k| ≥ H)` on the grid.
pub fn escape_probability(
    model: &dyn SwitchingModel,
    x: &[f64],
    i: usize,
    radius: f64,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    mc_estimate(n_paths, seed, |s| {
        let p = simulate_path(model, x, i, grid, s)?;
        let escaped = (0..p.len()).any(|k| p.state(k).iter().map(|v| v * v).sum::<f64>().sqrt() >= radius);
        Ok(if escaped { 1.0 } else { 0.0 })
    })
}

/// Raw against truncated gap at one starting point.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationRow {
    pub x_n: Vec<f64>,
    pub raw_gap: f64,
    pub truncated_gap: f64,
    /// `3 √(se_raw² + se_trunc²) + 2 (p_esc(x) + p_esc(x_n))`.
    pub allowance: f64,
}

impl TruncationRow {
    pub fn agrees(&self) -> bool {
        (self.raw_gap - self.truncated_gap).abs() <= self.allowance
    }
}

/// Feller gaps of `model` and of its truncation at radius `H`, compared
/// against the Monte Carlo error plus the probability of leaving the ball
/// where the two models coincide.
#[allow(clippy::too_many_arguments)]
pub fn feller_truncation_check(
    model: Arc<dyn SwitchingModel>,
    radius: f64,
    width: f64,
    f: &dyn Observable,
    x: &[f64],
    i: usize,
    xs: &[Vec<f64>],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<TruncationRow>> {
    let truncated = truncate_model(Arc::clone(&model), radius, width)?;
    let raw = feller_gap(model.as_ref(), f, x, i, xs, grid, n_paths, seed)?;
    let cut = feller_gap(&truncated, f, x, i, xs, grid, n_paths, seed)?;
    let esc_x = escape_probability(model.as_ref(), x, i, radius, grid, n_paths, seed)?.mean;
    raw.rows
        .iter()
        .zip(&cut.rows)
        .map(|(a, b)| {
            let esc_n = escape_probability(model.as_ref(), &a.x_n, i, radius, grid, n_paths, seed)?.mean;
            Ok(TruncationRow {
                x_n: a.x_n.clone(),
                raw_gap: a.gap,
                truncated_gap: b.gap,
                allowance: 3.0 * a.combined_stderr.hypot(b.combined_stderr) + 2.0 * (esc_x + esc_n),
            })
        })
        .collect()
}
