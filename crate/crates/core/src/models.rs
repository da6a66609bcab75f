//! Built-in models and the name-based model registry.
//!
//! Each factory reads its parameters from a [`ModelParams`] map, falls back to
//! documented defaults, and rejects keys it does not know.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::counterexample::cx_as_model;
use crate::error::{Error, Result};
use crate::lotka::{lv_as_model, LvRates, LvSpec};
use crate::model::{validate_rate_matrix, FnModel, RateMatrix, SwitchingModel, DEFAULT_RATE_TOL};

/// A parameter value: a number, a string, or a (nested) array.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Num(f64),
    Str(String),
    Array(Vec<ParamValue>),
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Num(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Str(v.to_string())
    }
}

impl<T: Into<ParamValue>> From<Vec<T>> for ParamValue {
    fn from(v: Vec<T>) -> Self {
        ParamValue::Array(v.into_iter().map(Into::into).collect())
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Num(v) => write!(f, "{v}"),
            ParamValue::Str(s) => write!(f, "{s:?}"),
            ParamValue::Array(items) => {
                write!(f, "[")?;
                for (k, item) in items.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{item}")?;
                }
                write!(f, "]")
            }
        }
    }
}

fn shape_err(key: &str, want: &str) -> Error {
    Error::InvalidArgument(format!("model parameter `{key}` must be {want}"))
}

impl ParamValue {
    fn as_num(&self, key: &str) -> Result<f64> {
        match self {
            ParamValue::Num(v) => Ok(*v),
            _ => Err(shape_err(key, "a number")),
        }
    }

    fn as_vec(&self, key: &str) -> Result<Vec<f64>> {
        match self {
            ParamValue::Array(items) => items.iter().map(|v| v.as_num(key)).collect(),
            _ => Err(shape_err(key, "an array of numbers")),
        }
    }

    fn as_matrix(&self, key: &str) -> Result<Vec<Vec<f64>>> {
        match self {
            ParamValue::Array(items) => items.iter().map(|v| v.as_vec(key)).collect(),
            _ => Err(shape_err(key, "an array of arrays")),
        }
    }

    fn as_tensor(&self, key: &str) -> Result<Vec<Vec<Vec<f64>>>> {
        match self {
            ParamValue::Array(items) => items.iter().map(|v| v.as_matrix(key)).collect(),
            _ => Err(shape_err(key, "an array of matrices")),
        }
    }
}

/// Named parameters handed to a model factory. Reading a key consumes it;
/// [`ModelParams::finish`] fails on anything left over.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelParams {
    values: BTreeMap<String, ParamValue>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &str, value: impl Into<ParamValue>) -> Self {
        self.values.insert(key.to_string(), value.into());
        self
    }

    pub fn insert(&mut self, key: &str, value: ParamValue) {
        self.values.insert(key.to_string(), value);
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamValue)> {
        self.values.iter()
    }

    pub fn num(&mut self, key: &str, default: f64) -> Result<f64> {
        self.values.remove(key).map_or(Ok(default), |v| v.as_num(key))
    }

    pub fn int(&mut self, key: &str, default: usize) -> Result<usize> {
        let v = self.num(key, default as f64)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(shape_err(key, "a nonnegative integer"));
        }
        Ok(v as usize)
    }

    pub fn text(&mut self, key: &str, default: &str) -> Result<String> {
        match self.values.remove(key) {
            None => Ok(default.to_string()),
            Some(ParamValue::Str(s)) => Ok(s),
            Some(_) => Err(shape_err(key, "a string")),
        }
    }

    pub fn vec(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        self.values.remove(key).map_or(Ok(default.to_vec()), |v| v.as_vec(key))
    }

    pub fn matrix(&mut self, key: &str, default: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
        self.values.remove(key).map_or(Ok(default), |v| v.as_matrix(key))
    }

    pub fn tensor(&mut self, key: &str, default: Vec<Vec<Vec<f64>>>) -> Result<Vec<Vec<Vec<f64>>>> {
        self.values.remove(key).map_or(Ok(default), |v| v.as_tensor(key))
    }

    /// Errors on the first unread key.
    pub fn finish(self) -> Result<()> {
        match self.values.into_keys().next() {
            None => Ok(()),
            Some(key) => Err(Error::Unknown {
                kind: "model parameter",
                name: key,
            }),
        }
    }
}

fn per_regime(key: &str, v: Vec<f64>, m0: usize) -> Result<Vec<f64>> {
    if v.len() != m0 {
        return Err(Error::Dimension(format!(
            "`{key}` has {} entries, expected one per regime ({m0})",
            v.len()
        )));
    }
    Ok(v)
}

/// Rate matrices at increasing knots, interpolated linearly in a scalar
/// coordinate and held constant beyond the end knots.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedRates {
    knots: Vec<f64>,
    mats: Vec<RateMatrix>,
}

impl InterpolatedRates {
    /// Every matrix must be a valid conservative generator at tolerance
    /// [`DEFAULT_RATE_TOL`]; the error names the knot and the violation.
    pub fn new(knots: Vec<f64>, mats: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if knots.is_empty() || knots.len() != mats.len() {
            return Err(Error::Dimension(format!(
                "{} knots but {} rate matrices",
                knots.len(),
                mats.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("rate-table knots must be strictly increasing".into()));
        }
        let mut out = Vec::with_capacity(mats.len());
        for (k, m) in mats.iter().enumerate() {
            let report = validate_rate_matrix(m, DEFAULT_RATE_TOL)?;
            if let Some(v) = report.violations.first() {
                return Err(Error::Domain(format!("rate table at knot {} (x = {}): {v}", k + 1, knots[k])));
            }
            out.push(RateMatrix::from_rows(m)?);
        }
        let n = out[0].size();
        if out.iter().any(|m| m.size() != n) {
            return Err(Error::Dimension("rate matrices differ in size".into()));
        }
        Ok(Self { knots, mats: out })
    }

    pub fn size(&self) -> usize {
        self.mats[0].size()
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let n = self.size();
        let mut best: f64 = 0.0;
        for m in &self.mats {
            for i in 0..n {
                for j in (0..n).filter(|&j| j != i) {
                    best = best.max(m.get(i, j));
                }
            }
        }
        best
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.knots.len();
        if n == 1 || s <= self.knots[0] {
            return (0, 0.0);
        }
        if s >= self.knots[n - 1] {
            return (n - 2, 1.0);
        }
        let k = self.knots.partition_point(|&t| t <= s) - 1;
        (k, (s - self.knots[k]) / (self.knots[k + 1] - self.knots[k]))
    }

    pub fn eval(&self, s: f64, i: usize, j: usize) -> f64 {
        let (k, w) = self.locate(s);
        if self.knots.len() == 1 {
            return self.mats[0].get(i, j);
        }
        (1.0 - w) * self.mats[k].get(i, j) + w * self.mats[k + 1].get(i, j)
    }

    /// `d/ds` of [`InterpolatedRates::eval`]; zero outside the knot range,
    /// right-sided at interior knots.
    pub fn slope(&self, s: f64, i: usize, j: usize) -> f64 {
        let n = self.knots.len();
        if n == 1 || s < self.knots[0] || s >= self.knots[n - 1] {
            return 0.0;
        }
        let (k, _) = self.locate(s);
        (self.mats[k + 1].get(i, j) - self.mats[k].get(i, j)) / (self.knots[k + 1] - self.knots[k])
    }
}

pub type ModelFactory = Box<dyn Fn(ModelParams) -> Result<Arc<dyn SwitchingModel>> + Send + Sync>;

struct Entry {
    summary: &'static str,
    factory: ModelFactory,
}

/// Models selectable by name.
pub struct ModelRegistry {
    entries: BTreeMap<String, Entry>,
}

impl ModelRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = Self::empty();
        reg.register(
            "markovian-linear",
            "1-D, two regimes, constant rates; b = a_i x + c_i sin x, σ = s_i x",
            Box::new(|p| Ok(Arc::new(markovian_linear(p)?))),
        );
        reg.register(
            "smooth-rate",
            "1-D mean-reverting model with smooth Lipschitz state-dependent rates",
            Box::new(|p| Ok(Arc::new(smooth_rate(p)?))),
        );
        reg.register(
            "holder-rate",
            "rate q_12 Hölder-λ at x*, regime 1 frozen, regime 2 drifting",
            Box::new(|p| Ok(Arc::new(holder_rate(p)?))),
        );
        reg.register(
            "counterexample",
            "two-regime pure-drift model with q_12 = f(x), f(x) = x on [1, 2]",
            Box::new(|p| {
                p.finish()?;
                Ok(Arc::new(cx_as_model()?))
            }),
        );
        reg.register(
            "local-lipschitz",
            "1-D cubic drift x - x³ / -x - x³ with smooth rates",
            Box::new(|p| Ok(Arc::new(local_lipschitz(p)?))),
        );
        reg.register(
            "geometric",
            "single-regime geometric Brownian motion b = a x, σ = s x",
            Box::new(|p| Ok(Arc::new(geometric(p)?))),
        );
        reg.register(
            "user-table",
            "1-D affine coefficients with tabulated rate matrices",
            Box::new(|p| Ok(Arc::new(user_table(p)?))),
        );
        reg.register(
            "lotka",
            "competitive Lotka–Volterra system in log coordinates",
            Box::new(|p| Ok(Arc::new(lv_as_model(&lotka_spec(p)?)?))),
        );
        reg
    }

    pub fn register(&mut self, name: &str, summary: &'static str, factory: ModelFactory) {
        self.entries.insert(name.to_string(), Entry { summary, factory });
    }

    pub fn create(&self, name: &str, params: ModelParams) -> Result<Arc<dyn SwitchingModel>> {
        let entry = self.entries.get(name).ok_or_else(|| Error::Unknown {
            kind: "model",
            name: name.to_string(),
        })?;
        (entry.factory)(params)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn summary(&self, name: &str) -> Option<&'static str> {
        self.entries.get(name).map(|e| e.summary)
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

/// `b(x, i) = a_i x + c_i sin x`, `σ(x, i) = s_i x`, constant `q_12`, `q_21`.
pub fn markovian_linear(mut p: ModelParams) -> Result<FnModel> {
    let a = per_regime("a", p.vec("a", &[-0.5, 0.3])?, 2)?;
    let c = per_regime("c", p.vec("c", &[0.4, -0.2])?, 2)?;
    let s = per_regime("s", p.vec("s", &[0.3, 0.5])?, 2)?;
    let q12 = p.num("q12", 1.0)?;
    let q21 = p.num("q21", 0.7)?;
    p.finish()?;
    let (a2, c2, s2) = (a.clone(), c.clone(), s.clone());
    FnModel::builder(1, 1, 2)
        .name("markovian-linear")
        .rate_bound(q12.max(q21) + 1.0)
        .drift(move |x, i, out| out[0] = a[i] * x[0] + c[i] * x[0].sin())
        .diffusion(move |x, i, out| out[0] = s[i] * x[0])
        .rates(move |_, from, _| if from == 0 { q12 } else { q21 })
        .drift_jac(move |x, i, out| out[0] = a2[i] + c2[i] * x[0].cos())
        .diffusion_jac(move |_, i, out| out[0] = s2[i])
        .rate_grad(|_, _, _, out| out[0] = 0.0)
        .build()
}

/// `b(x, i) = θ_i - κ_i x`, constant `σ_i`,
/// `q_12(x) = 0.8 + 0.5 tanh x`, `q_21(x) = 0.6 + 0.3 sin x`.
pub fn smooth_rate(mut p: ModelParams) -> Result<FnModel> {
    let theta = per_regime("theta", p.vec("theta", &[1.0, -0.5])?, 2)?;
    let kappa = per_regime("kappa", p.vec("kappa", &[1.0, 0.8])?, 2)?;
    let sigma = per_regime("sigma", p.vec("sigma", &[0.4, 0.6])?, 2)?;
    p.finish()?;
    let k2 = kappa.clone();
    FnModel::builder(1, 1, 2)
        .name("smooth-rate")
        .rate_bound(2.0)
        .holder_exponent(1.0)
        .drift(move |x, i, out| out[0] = theta[i] - kappa[i] * x[0])
        .diffusion(move |_, i, out| out[0] = sigma[i])
        .rates(|x, from, _| {
            if from == 0 {
                0.8 + 0.5 * x[0].tanh()
            } else {
                0.6 + 0.3 * x[0].sin()
            }
        })
        .drift_jac(move |_, i, out| out[0] = -k2[i])
        .diffusion_jac(|_, _, out| out[0] = 0.0)
        .rate_grad(|x, from, _, out| {
            out[0] = if from == 0 {
                0.5 / x[0].cosh().powi(2)
            } else {
                0.3 * x[0].cos()
            }
        })
        .build()
}

/// Regime 1 is frozen (`b = σ = 0`), regime 2 drifts with `b = 1`,
/// `σ = sigma`. `q_12(x) = c (|x - x*|^λ ∧ 1) + ε`, `q_21 = 1`.
pub fn holder_rate(mut p: ModelParams) -> Result<FnModel> {
    let lambda = p.num("lambda", 0.5)?;
    let c = p.num("c", 1.0)?;
    let eps = p.num("eps", 0.1)?;
    let center = p.num("center", 0.0)?;
    let sigma = p.num("sigma", 0.3)?;
    p.finish()?;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must lie in (0, 1]")));
    }
    if c < 0.0 || eps < 0.0 {
        return Err(Error::InvalidArgument("c and eps must be nonnegative".into()));
    }
    FnModel::builder(1, 1, 2)
        .name("holder-rate")
        .rate_bound((c + eps).max(1.0) + 1.0)
        .holder_exponent(lambda)
        .drift(|_, i, out| out[0] = if i == 0 { 0.0 } else { 1.0 })
        .diffusion(move |_, i, out| out[0] = if i == 0 { 0.0 } else { sigma })
        .rates(move |x, from, _| {
            if from == 0 {
                c * (x[0] - center).abs().powf(lambda).min(1.0) + eps
            } else {
                1.0
            }
        })
        .drift_jac(|_, _, out| out[0] = 0.0)
        .diffusion_jac(|_, _, out| out[0] = 0.0)
        .build()
}

/// `b(x, 1) = x - x³`, `b(x, 2) = -x - x³`, constant `σ_i`,
/// `q_12(x) = 1 + 0.5 tanh x`, `q_21(x) = 0.8 + 0.4 sin x`.
pub fn local_lipschitz(mut p: ModelParams) -> Result<FnModel> {
    let sigma = per_regime("sigma", p.vec("sigma", &[0.5, 0.3])?, 2)?;
    p.finish()?;
    let lin = [1.0, -1.0];
    FnModel::builder(1, 1, 2)
        .name("local-lipschitz")
        .rate_bound(2.0)
        .holder_exponent(1.0)
        .drift(move |x, i, out| out[0] = lin[i] * x[0] - x[0].powi(3))
        .diffusion(move |_, i, out| out[0] = sigma[i])
        .rates(|x, from, _| {
            if from == 0 {
                1.0 + 0.5 * x[0].tanh()
            } else {
                0.8 + 0.4 * x[0].sin()
            }
        })
        .drift_jac(move |x, i, out| out[0] = lin[i] - 3.0 * x[0] * x[0])
        .diffusion_jac(|_, _, out| out[0] = 0.0)
        .rate_grad(|x, from, _, out| {
            out[0] = if from == 0 {
                0.5 / x[0].cosh().powi(2)
            } else {
                0.4 * x[0].cos()
            }
        })
        .build()
}

/// `b = a x`, `σ = s x`, one regime.
pub fn geometric(mut p: ModelParams) -> Result<FnModel> {
    let a = p.num("a", 0.05)?;
    let s = p.num("s", 0.2)?;
    p.finish()?;
    FnModel::builder(1, 1, 1)
        .name("geometric")
        .drift(move |x, _, out| out[0] = a * x[0])
        .diffusion(move |x, _, out| out[0] = s * x[0])
        .drift_jac(move |_, _, out| out[0] = a)
        .diffusion_jac(move |_, _, out| out[0] = s)
        .rate_grad(|_, _, _, out| out[0] = 0.0)
        .build()
}

/// 1-D model with `b(x, i) = b0_i + b1_i x`, `σ(x, i) = s0_i + s1_i x` and
/// `Q(x)` interpolated from full generator matrices given at `knots`.
pub fn user_table(mut p: ModelParams) -> Result<FnModel> {
    let knots = p.vec("knots", &[0.0, 2.0])?;
    let q = p.tensor(
        "q",
        vec![
            vec![vec![-0.5, 0.5], vec![0.3, -0.3]],
            vec![vec![-1.0, 1.0], vec![0.6, -0.6]],
        ],
    )?;
    let table = InterpolatedRates::new(knots, q)?;
    let m0 = table.size();
    let b0 = per_regime("b0", p.vec("b0", &vec![0.0; m0])?, m0)?;
    let b1 = per_regime("b1", p.vec("b1", &vec![-1.0; m0])?, m0)?;
    let s0 = per_regime("s0", p.vec("s0", &vec![0.5; m0])?, m0)?;
    let s1 = per_regime("s1", p.vec("s1", &vec![0.0; m0])?, m0)?;
    let bound = p.num("rate_bound", table.max_off_diagonal() + 1.0)?;
    p.finish()?;
    let (b1j, s1j) = (b1.clone(), s1.clone());
    let table = Arc::new(table);
    let t2 = Arc::clone(&table);
    FnModel::builder(1, 1, m0)
        .name("user-table")
        .rate_bound(bound)
        .holder_exponent(1.0)
        .drift(move |x, i, out| out[0] = b0[i] + b1[i] * x[0])
        .diffusion(move |x, i, out| out[0] = s0[i] + s1[i] * x[0])
        .rates(move |x, from, to| table.eval(x[0], from, to))
        .drift_jac(move |_, i, out| out[0] = b1j[i])
        .diffusion_jac(move |_, i, out| out[0] = s1j[i])
        .rate_grad(move |x, from, to, out| out[0] = t2.slope(x[0], from, to))
        .build()
}

/// Reads an [`LvSpec`]. Keys: `r`, `m0`, `b` (m0 × r), `A` (m0 × r², row
/// major), `sigma` (m0 × r), `rates` (`constant` | `logistic` | `table`) with
/// `q` / `q_low`, `q_high`, `midpoint`, `steepness` / `knots`, `q`, and
/// optional `rate_bound`.
pub fn lotka_spec(mut p: ModelParams) -> Result<LvSpec> {
    let r = p.int("r", 2)?;
    let m0 = p.int("m0", 2)?;
    let default_two = r == 2 && m0 == 2;
    let pick = |two: Vec<Vec<f64>>, fill: f64| if default_two { two } else { vec![vec![fill; r]; m0] };
    let b = p.matrix("b", pick(vec![vec![1.0, 0.8], vec![0.6, 1.2]], 1.0))?;
    let default_a = if default_two {
        vec![vec![1.0, 0.3, 0.2, 1.0], vec![1.2, 0.1, 0.4, 0.9]]
    } else {
        let eye: Vec<f64> = (0..r * r).map(|k| if k % (r + 1) == 0 { 1.0 } else { 0.0 }).collect();
        vec![eye; m0]
    };
    let a = p.matrix("A", default_a)?;
    let sigma = p.matrix("sigma", pick(vec![vec![0.3, 0.2], vec![0.2, 0.4]], 0.3))?;
    let family = p.text("rates", "logistic")?;
    let rates = match family.as_str() {
        "constant" => {
            let q = p.matrix("q", two_state(m0, 0.5))?;
            LvRates::Constant(RateMatrix::from_rows(&q)?)
        }
        "logistic" => {
            let low = p.matrix("q_low", two_state(m0, 0.3))?;
            let high = p.matrix("q_high", two_state(m0, 1.2))?;
            LvRates::Logistic {
                low: RateMatrix::from_rows(&low)?,
                high: RateMatrix::from_rows(&high)?,
                midpoint: p.num("midpoint", 1.5)?,
                steepness: p.num("steepness", 2.0)?,
            }
        }
        "table" => {
            let knots = p.vec("knots", &[0.0, 3.0])?;
            let q = p.tensor("q", vec![two_state(m0, 0.3), two_state(m0, 1.2)])?;
            LvRates::Table(InterpolatedRates::new(knots, q)?)
        }
        other => {
            return Err(Error::Unknown {
                kind: "rate family",
                name: other.to_string(),
            })
        }
    };
    let bound = match p.num("rate_bound", f64::NAN)? {
        v if v.is_nan() => None,
        v => Some(v),
    };
    p.finish()?;
    LvSpec::new(r, m0, b, a, sigma, rates, bound)
}

/// Generator with every off-diagonal entry equal to `q`.
fn two_state(m0: usize, q: f64) -> Vec<Vec<f64>> {
    (0..m0)
        .map(|i| {
            (0..m0)
                .map(|j| if i == j { -q * (m0 - 1) as f64 } else { q })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_jacobians, check_rate_gradients};

    #[test]
    fn every_builtin_builds_with_defaults() {
        let reg = ModelRegistry::with_builtins();
        for name in reg.names() {
            let m = reg.create(name, ModelParams::new()).unwrap();
            assert!(m.state_dim() >= 1, "{name}");
            assert!(reg.summary(name).is_some());
        }
    }

    #[test]
    fn unknown_names_and_keys_are_rejected() {
        let reg = ModelRegistry::with_builtins();
        assert!(matches!(reg.create("nope", ModelParams::new()), Err(Error::Unknown { .. })));
        let p = ModelParams::new().set("bogus", 1.0);
        assert!(matches!(reg.create("smooth-rate", p), Err(Error::Unknown { .. })));
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let reg = ModelRegistry::with_builtins();
        for name in ["markovian-linear", "smooth-rate", "local-lipschitz", "geometric", "user-table", "lotka"] {
            let m = reg.create(name, ModelParams::new()).unwrap();
            let r = m.state_dim();
            for &v in &[-0.7, 0.3, 1.1] {
                let x: Vec<f64> = (0..r).map(|k| v + 0.1 * k as f64).collect();
                for i in 0..m.regimes().size() {
                    assert!(check_jacobians(m.as_ref(), &x, i).unwrap().ok, "{name} at {x:?}");
                }
                assert!(check_rate_gradients(m.as_ref(), &x).unwrap().ok, "{name} at {x:?}");
            }
        }
    }

    #[test]
    fn table_rejects_non_conservative_rows() {
        let p = ModelParams::new()
            .set("knots", vec![0.0])
            .set("q", vec![vec![vec![-0.5, 0.4], vec![0.3, -0.3]]]);
        let err = user_table(p).err().unwrap();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn table_interpolates_and_clamps() {
        let t = InterpolatedRates::new(
            vec![0.0, 2.0],
            vec![
                vec![vec![-0.5, 0.5], vec![0.3, -0.3]],
                vec![vec![-1.0, 1.0], vec![0.6, -0.6]],
            ],
        )
        .unwrap();
        assert_eq!(t.eval(1.0, 0, 1), 0.75);
        assert_eq!(t.eval(-3.0, 0, 1), 0.5);
        assert_eq!(t.eval(9.0, 1, 0), 0.6);
        assert_eq!(t.slope(1.0, 0, 1), 0.25);
        assert_eq!(t.slope(9.0, 0, 1), 0.0);
    }

    #[test]
    fn holder_rate_has_the_declared_modulus() {
        let m = holder_rate(ModelParams::new()).unwrap();
        assert_eq!(m.holder_exponent(), Some(0.5));
        let d = 1e-4;
        let jump = m.rate(&[d], 0, 1) - m.rate(&[0.0], 0, 1);
        assert!((jump - d.sqrt()).abs() < 1e-12);
    }
}
