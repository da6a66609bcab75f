//! Test functions `f(x, i)` with analytic derivatives.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A function of the hybrid state with its gradient and Hessian in `x`.
///
/// The Hessian is written row-major as an `r × r` matrix.
pub trait Observable: Sync {
    fn value(&self, x: &[f64], regime: usize) -> f64;
    fn gradient(&self, x: &[f64], regime: usize, out: &mut [f64]);
    fn hessian(&self, x: &[f64], regime: usize, out: &mut [f64]);
}

/// An [`Observable`] assembled from three closures.
pub struct FnObservable<F, G, H> {
    value: F,
    gradient: G,
    hessian: H,
}

impl<F, G, H> FnObservable<F, G, H>
where
    F: Fn(&[f64], usize) -> f64 + Sync,
    G: Fn(&[f64], usize, &mut [f64]) + Sync,
    H: Fn(&[f64], usize, &mut [f64]) + Sync,
{
    pub fn new(value: F, gradient: G, hessian: H) -> Self {
        Self {
            value,
            gradient,
            hessian,
        }
    }
}

impl<F, G, H> Observable for FnObservable<F, G, H>
where
    F: Fn(&[f64], usize) -> f64 + Sync,
    G: Fn(&[f64], usize, &mut [f64]) + Sync,
    H: Fn(&[f64], usize, &mut [f64]) + Sync,
{
    fn value(&self, x: &[f64], regime: usize) -> f64 {
        (self.value)(x, regime)
    }
    fn gradient(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        (self.gradient)(x, regime, out)
    }
    fn hessian(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        (self.hessian)(x, regime, out)
    }
}

/// `f(x, i) = x_1`.
pub struct FirstCoordinate;

impl Observable for FirstCoordinate {
    fn value(&self, x: &[f64], _: usize) -> f64 {
        x[0]
    }
    fn gradient(&self, _: &[f64], _: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[0] = 1.0;
    }
    fn hessian(&self, _: &[f64], _: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `f(x, i) = |x|²` (Euclidean).
pub struct SquaredNorm;

impl Observable for SquaredNorm {
    fn value(&self, x: &[f64], _: usize) -> f64 {
        x.iter().map(|v| v * v).sum()
    }
    fn gradient(&self, x: &[f64], _: usize, out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = 2.0 * v;
        }
    }
    fn hessian(&self, x: &[f64], _: usize, out: &mut [f64]) {
        let r = x.len();
        out.fill(0.0);
        for a in 0..r {
            out[a * r + a] = 2.0;
        }
    }
}

/// `f(x, i) = 1{i = regime}`.
pub struct RegimeIndicator(pub usize);

impl Observable for RegimeIndicator {
    fn value(&self, _: &[f64], regime: usize) -> f64 {
        if regime == self.0 {
            1.0
        } else {
            0.0
        }
    }
    fn gradient(&self, _: &[f64], _: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn hessian(&self, _: &[f64], _: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// `f(x, i) = w_i · tanh(x_1)`, bounded by `max |w_i|`.
pub struct WeightedTanh(pub Vec<f64>);

impl WeightedTanh {
    fn weight(&self, regime: usize) -> f64 {
        self.0.get(regime).copied().unwrap_or(1.0)
    }
}

impl Observable for WeightedTanh {
    fn value(&self, x: &[f64], regime: usize) -> f64 {
        self.weight(regime) * x[0].tanh()
    }
    fn gradient(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        out.fill(0.0);
        let t = x[0].tanh();
        out[0] = self.weight(regime) * (1.0 - t * t);
    }
    fn hessian(&self, x: &[f64], regime: usize, out: &mut [f64]) {
        out.fill(0.0);
        let t = x[0].tanh();
        out[0] = self.weight(regime) * (-2.0 * t * (1.0 - t * t));
    }
}

/// `f(x, i) = clamp(x_1, lo, hi)`; derivatives are taken on the interior.
pub struct Clamp {
    pub lo: f64,
    pub hi: f64,
}

impl Observable for Clamp {
    fn value(&self, x: &[f64], _: usize) -> f64 {
        x[0].clamp(self.lo, self.hi)
    }
    fn gradient(&self, x: &[f64], _: usize, out: &mut [f64]) {
        out.fill(0.0);
        if x[0] > self.lo && x[0] < self.hi {
            out[0] = 1.0;
        }
    }
    fn hessian(&self, _: &[f64], _: usize, out: &mut [f64]) {
        out.fill(0.0);
    }
}

type ObservableFactory = fn() -> Box<dyn Observable>;

/// Named built-in observables, selectable from configuration.
pub struct ObservableRegistry {
    entries: BTreeMap<&'static str, (&'static str, ObservableFactory)>,
}

impl ObservableRegistry {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, description: &'static str, f: ObservableFactory) {
        self.entries.insert(name, (description, f));
    }

    pub fn create(&self, name: &str) -> Result<Box<dyn Observable>> {
        self.entries
            .get(name)
            .map(|(_, f)| f())
            .ok_or_else(|| Error::Unknown {
                kind: "observable",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.entries.iter().map(|(k, (d, _))| (*k, *d))
    }
}

impl Default for ObservableRegistry {
    fn default() -> Self {
        let mut reg = Self::new();
        reg.register("x", "first coordinate", || Box::new(FirstCoordinate));
        reg.register("x2", "squared Euclidean norm", || Box::new(SquaredNorm));
        reg.register("regime2", "indicator of regime 2", || Box::new(RegimeIndicator(1)));
        reg.register("tanh", "tanh of the first coordinate, halved in regime 2", || {
            Box::new(WeightedTanh(vec![1.0, 0.5]))
        });
        reg.register("clamp1", "first coordinate clamped to [-1, 1]", || Box::new(Clamp { lo: -1.0, hi: 1.0 }));
        reg.register("clamp10", "first coordinate clamped to [-10, 10]", || {
            Box::new(Clamp { lo: -10.0, hi: 10.0 })
        });
        reg
    }
}
