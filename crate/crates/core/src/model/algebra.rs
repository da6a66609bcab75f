use std::fmt;

use super::{require_jacobians, require_rate_gradients, HybridState, SwitchingModel};
use crate::error::{Error, Result};
use crate::observable::Observable;

/// Default tolerance when validating user-supplied rate matrices.
pub const DEFAULT_RATE_TOL: f64 = 1e-10;

/// A dense square rate matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    n: usize,
    data: Vec<f64>,
}

impl RateMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Dimension(format!(
                "rate matrix has {n} rows but row {} has {} entries",
                i + 1,
                row.len()
            )));
        }
        Ok(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeOffDiagonal { row: usize, col: usize, value: f64 },
    RowSum { row: usize, sum: f64 },
    NonFinite { row: usize, col: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeOffDiagonal { row, col, value } => {
                write!(f, "q[{}][{}] = {value} is negative", row + 1, col + 1)
            }
            Violation::RowSum { row, sum } => write!(f, "row {} sums to {sum}", row + 1),
            Violation::NonFinite { row, col } => {
                write!(f, "q[{}][{}] is not finite", row + 1, col + 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that `q` is a conservative generator: nonnegative off-diagonal
/// entries and zero row sums, both up to `tol`.
pub fn validate_rate_matrix(q: &[Vec<f64>], tol: f64) -> Result<ValidationReport> {
    let m = RateMatrix::from_rows(q)?;
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be >= 0")));
    }
    let mut report = ValidationReport::default();
    for i in 0..m.size() {
        let mut sum = 0.0;
        let mut finite = true;
        for j in 0..m.size() {
            let v = m.get(i, j);
            if !v.is_finite() {
                report.violations.push(Violation::NonFinite { row: i, col: j });
                finite = false;
                continue;
            }
            if i != j && v < -tol {
                report
                    .violations
                    .push(Violation::NegativeOffDiagonal { row: i, col: j, value: v });
            }
            sum += v;
        }
        if finite && sum.abs() > tol {
            report.violations.push(Violation::RowSum { row: i, sum });
        }
    }
    Ok(report)
}

/// The intervals `Δ_ij(x) = [((i-1)m0 + j)M, ((i-1)m0 + j)M + q_ij(x))` used to
/// turn Poisson marks into regime jumps (labels 1-based in the formula).
#[derive(Debug, Clone, PartialEq)]
pub struct MarkPartition {
    m0: usize,
    bound: f64,
    x: Vec<f64>,
    // intervals[i * m0 + j] = [lo, hi); unused on the diagonal
    intervals: Vec<(f64, f64)>,
}

impl MarkPartition {
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `Δ_ij(x)` as `[lo, hi)`, or `None` when `i == j`.
    pub fn interval(&self, from: usize, to: usize) -> Option<(f64, f64)> {
        (from != to).then(|| self.intervals[from * self.m0 + to])
    }

    /// `h(x, i, z) = Σ_j (j - i) 1{z ∈ Δ_ij(x)}`.
    pub fn eval_h(&self, regime: usize, z: f64) -> i64 {
        (0..self.m0)
            .filter(|&j| j != regime)
            .find(|&j| {
                let (lo, hi) = self.intervals[regime * self.m0 + j];
                z >= lo && z < hi
            })
            .map_or(0, |j| j as i64 - regime as i64)
    }
}

fn checked_rate(model: &dyn SwitchingModel, x: &[f64], from: usize, to: usize) -> Result<f64> {
    let q = model.rate(x, from, to);
    let bound = model.rate_bound();
    if q >= bound || q.is_nan() {
        return Err(Error::RateBound {
            from: from + 1,
            to: to + 1,
            rate: q,
            bound,
        });
    }
    if q < 0.0 {
        return Err(Error::Domain(format!(
            "off-diagonal rate q[{}][{}] = {q} is negative",
            from + 1,
            to + 1
        )));
    }
    Ok(q)
}

pub fn build_partition(model: &dyn SwitchingModel, x: &[f64]) -> Result<MarkPartition> {
    let m0 = model.regimes().size();
    let bound = model.rate_bound();
    let mut intervals = vec![(0.0, 0.0); m0 * m0];
    for i in 0..m0 {
        for j in (0..m0).filter(|&j| j != i) {
            let q = checked_rate(model, x, i, j)?;
            let lo = ((i * m0 + j + 1) as f64) * bound;
            intervals[i * m0 + j] = (lo, lo + q);
        }
    }
    Ok(MarkPartition {
        m0,
        bound,
        x: x.to_vec(),
        intervals,
    })
}

/// Row-local evaluation of the mark partition: returns the regime a mark at
/// `z` sends `regime` to, evaluating only the one rate the mark can hit.
/// Agrees with `build_partition(model, x)?.eval_h(regime, z)`.
pub fn mark_target(
    model: &dyn SwitchingModel,
    x: &[f64],
    regime: usize,
    z: f64,
) -> Result<Option<usize>> {
    let m0 = model.regimes().size();
    let bound = model.rate_bound();
    if z < bound {
        return Ok(None);
    }
    let slot = (z / bound).floor();
    if slot > (m0 * m0) as f64 {
        return Ok(None);
    }
    let slot = slot as usize - 1;
    let (row, col) = (slot / m0, slot % m0);
    if row != regime || col == regime {
        return Ok(None);
    }
    let lo = ((slot + 1) as f64) * bound;
    let q = checked_rate(model, x, row, col)?;
    Ok((z >= lo && z < lo + q).then_some(col))
}

/// `ρ(x, x̃, k) = Σ_{j≠k} |q_kj(x) - q_kj(x̃)|`.
pub fn rho(model: &dyn SwitchingModel, x: &[f64], xt: &[f64], k: usize) -> f64 {
    (0..model.regimes().size())
        .filter(|&j| j != k)
        .map(|j| (model.rate(x, k, j) - model.rate(xt, k, j)).abs())
        .sum()
}

/// One move `(k, l) → targets` of the basic coupling, with its rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledMove {
    pub targets: (usize, usize),
    pub rate: f64,
}

/// Basic-coupling moves out of `(k, l)` at continuous states `(x, x̃)`.
///
/// For `k == l` and each `j != k`: `(j, k)` at `[q_kj(x) - q_kj(x̃)]⁺`,
/// `(k, j)` at `[q_kj(x̃) - q_kj(x)]⁺` and `(j, j)` at the minimum.
/// For `k != l` the same three families run over `j ∉ {k, l}`, and the two
/// coalescing moves `(l, l)` at `q_kl(x)` and `(k, k)` at `q_lk(x̃)` carry the
/// jumps onto the other component's regime. Zero-rate moves are omitted.
pub fn coupled_rates(
    model: &dyn SwitchingModel,
    x: &[f64],
    xt: &[f64],
    k: usize,
    l: usize,
) -> Vec<CoupledMove> {
    let mut out = Vec::new();
    coupled_rates_into(model, x, xt, k, l, &mut out);
    out
}

pub fn coupled_rates_into(
    model: &dyn SwitchingModel,
    x: &[f64],
    xt: &[f64],
    k: usize,
    l: usize,
    out: &mut Vec<CoupledMove>,
) {
    out.clear();
    let mut push = |targets: (usize, usize), rate: f64| {
        if rate > 0.0 {
            out.push(CoupledMove { targets, rate });
        }
    };
    for j in (0..model.regimes().size()).filter(|&j| j != k && j != l) {
        let a = model.rate(x, k, j);
        let b = model.rate(xt, l, j);
        push((j, l), (a - b).max(0.0));
        push((k, j), (b - a).max(0.0));
        push((j, j), a.min(b));
    }
    if k != l {
        push((l, l), model.rate(x, k, l));
        push((k, k), model.rate(xt, l, k));
    }
}

/// `(L f)(x, i) = ∇f' b + ½ tr(∇²f σσ') + Σ_j q_ij(x) f(x, j)`.
///
/// The switching term is evaluated as `Σ_{j≠i} q_ij (f(x, j) - f(x, i))`, which
/// equals the matrix form for conservative `Q` and is exactly zero on
/// regime-independent `f`.
pub fn apply_generator(model: &dyn SwitchingModel, f: &dyn Observable, s: &HybridState) -> f64 {
    let r = model.state_dim();
    let d = model.noise_dim();
    let x = &s.x;
    let i = s.regime;

    let mut b = vec![0.0; r];
    let mut sigma = vec![0.0; r * d];
    let mut grad = vec![0.0; r];
    let mut hess = vec![0.0; r * r];
    model.drift(x, i, &mut b);
    model.diffusion(x, i, &mut sigma);
    f.gradient(x, i, &mut grad);
    f.hessian(x, i, &mut hess);

    let first: f64 = grad.iter().zip(&b).map(|(g, b)| g * b).sum();
    let mut second = 0.0;
    for p in 0..r {
        for q in 0..r {
            let a_pq: f64 = (0..d).map(|c| sigma[p * d + c] * sigma[q * d + c]).sum();
            second += hess[p * r + q] * a_pq;
        }
    }
    let fi = f.value(x, i);
    let switching: f64 = (0..model.regimes().size())
        .filter(|&j| j != i)
        .map(|j| model.rate(x, i, j) * (f.value(x, j) - fi))
        .sum();
    first + 0.5 * second + switching
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    /// Largest `|analytic - finite difference| / (1 + |value|)` seen.
    pub max_scaled_error: f64,
    pub ok: bool,
}

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;

/// Compares `drift_jac` and `diffusion_jac` against central differences at
/// `(x, i)`; passes when every entry is within `1e-6 · (1 + |value|)`.
pub fn check_jacobians(model: &dyn SwitchingModel, x: &[f64], regime: usize) -> Result<DerivativeCheck> {
    let jac = require_jacobians(model)?;
    let r = model.state_dim();
    let d = model.noise_dim();
    let mut bj = vec![0.0; r * r];
    let mut sj = vec![0.0; r * r * d];
    jac.drift_jac(x, regime, &mut bj);
    jac.diffusion_jac(x, regime, &mut sj);

    let mut b = vec![0.0; r];
    let mut s = vec![0.0; r * d];
    model.drift(x, regime, &mut b);
    model.diffusion(x, regime, &mut s);

    let mut worst: f64 = 0.0;
    let (mut bp, mut bm) = (vec![0.0; r], vec![0.0; r]);
    let (mut sp, mut sm) = (vec![0.0; r * d], vec![0.0; r * d]);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for col in 0..r {
        xp[col] = x[col] + FD_STEP;
        xm[col] = x[col] - FD_STEP;
        model.drift(&xp, regime, &mut bp);
        model.drift(&xm, regime, &mut bm);
        model.diffusion(&xp, regime, &mut sp);
        model.diffusion(&xm, regime, &mut sm);
        for a in 0..r {
            let fd = (bp[a] - bm[a]) / (2.0 * FD_STEP);
            worst = worst.max((bj[a * r + col] - fd).abs() / (1.0 + b[a].abs()));
            for c in 0..d {
                let fd = (sp[a * d + c] - sm[a * d + c]) / (2.0 * FD_STEP);
                let an = sj[(a * r + col) * d + c];
                worst = worst.max((an - fd).abs() / (1.0 + s[a * d + c].abs()));
            }
        }
        xp[col] = x[col];
        xm[col] = x[col];
    }
    Ok(DerivativeCheck {
        max_scaled_error: worst,
        ok: worst <= FD_TOL,
    })
}

/// Same check for the rate gradients `∇q_ij`.
pub fn check_rate_gradients(model: &dyn SwitchingModel, x: &[f64]) -> Result<DerivativeCheck> {
    let grads = require_rate_gradients(model)?;
    let r = model.state_dim();
    let m0 = model.regimes().size();
    let mut g = vec![0.0; r];
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for i in 0..m0 {
        for j in (0..m0).filter(|&j| j != i) {
            grads.rate_grad(x, i, j, &mut g);
            let q = model.rate(x, i, j);
            for col in 0..r {
                xp[col] = x[col] + FD_STEP;
                xm[col] = x[col] - FD_STEP;
                let fd = (model.rate(&xp, i, j) - model.rate(&xm, i, j)) / (2.0 * FD_STEP);
                worst = worst.max((g[col] - fd).abs() / (1.0 + q.abs()));
                xp[col] = x[col];
                xm[col] = x[col];
            }
        }
    }
    Ok(DerivativeCheck {
        max_scaled_error: worst,
        ok: worst <= FD_TOL,
    })
}
