#![allow(dead_code)]

use std::sync::Arc;

use switchdiff::model::FnModel;
use switchdiff::NoiseStream;

/// 1-D model with `q_ij(x) = c_ij + a_ij sin(w_ij x)`, `c_ij ≥ |a_ij|`,
/// coefficients drawn from `seed`.
pub fn random_rate_model(m0: usize, seed: u64) -> FnModel {
    let mut s = NoiseStream::new(seed, 0);
    let n = m0 * m0;
    let c: Vec<f64> = (0..n).map(|_| 0.1 + 1.9 * s.uniform()).collect();
    let a: Vec<f64> = (0..n).map(|k| c[k] * (2.0 * s.uniform() - 1.0)).collect();
    let w: Vec<f64> = (0..n).map(|_| 0.5 + 2.0 * s.uniform()).collect();
    let bound = c.iter().zip(&a).map(|(c, a)| c + a.abs()).fold(0.0, f64::max) + 1.0;
    let (a2, w2) = (a.clone(), w.clone());
    FnModel::builder(1, 1, m0)
        .name("random-rates")
        .rate_bound(bound)
        .drift(|x, i, out| out[0] = -x[0] + i as f64)
        .diffusion(|_, i, out| out[0] = 0.3 + 0.1 * i as f64)
        .rates(move |x, i, j| {
            let k = i * m0 + j;
            c[k] + a[k] * (w[k] * x[0]).sin()
        })
        .rate_grad(move |x, i, j, out| {
            let k = i * m0 + j;
            out[0] = a2[k] * w2[k] * (w2[k] * x[0]).cos();
        })
        .build()
        .unwrap()
}

/// 1-D model with constant rates `q_ij = q`, drift `b`, diffusion `s`.
pub fn constant_rate_model(m0: usize, q: f64, b: f64, s: f64) -> FnModel {
    FnModel::builder(1, 1, m0)
        .name("constant-rates")
        .rate_bound(q + 1.0)
        .drift(move |_, _, out| out[0] = b)
        .diffusion(move |_, _, out| out[0] = s)
        .rates(move |_, _, _| q)
        .drift_jac(|_, _, out| out[0] = 0.0)
        .diffusion_jac(|_, _, out| out[0] = 0.0)
        .rate_grad(|_, _, _, out| out[0] = 0.0)
        .build()
        .unwrap()
}

pub fn shared(m: FnModel) -> Arc<dyn switchdiff::SwitchingModel> {
    Arc::new(m)
}

/// Two-sided Kolmogorov–Smirnov distance of `sample` to the CDF `cdf`.
pub fn ks_distance(mut sample: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let f = cdf(v);
            (f - k as f64 / n).abs().max(((k + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
