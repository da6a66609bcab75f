//! Reproducible Monte Carlo aggregation and power-law fitting.
//!
//! Paths are evaluated in parallel (rayon) and reduced sequentially in
//! ascending path index, so results are bit-identical for any thread count.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::NoiseStream;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    /// Paths attempted, including aborted ones.
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation of the kept values over `√kept`.
    pub stderr: f64,
    pub aborted: usize,
}

impl McEstimate {
    /// Aggregates per-path values in order; `None` marks an aborted path.
    pub fn from_samples<I>(samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = Option<f64>>,
    {
        let mut n = 0usize;
        let mut aborted = 0usize;
        let mut kept = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for s in samples {
            n += 1;
            match s {
                Some(v) => {
                    kept += 1;
                    let delta = v - mean;
                    mean += delta / kept as f64;
                    m2 += delta * (v - mean);
                }
                None => aborted += 1,
            }
        }
        if kept == 0 {
            return Err(Error::EstimationFailed(n));
        }
        let stderr = if kept > 1 {
            (m2 / (kept - 1) as f64).sqrt() / (kept as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            n,
            mean,
            stderr,
            aborted,
        })
    }

    pub fn kept(&self) -> usize {
        self.n - self.aborted
    }

    pub fn abort_fraction(&self) -> f64 {
        self.aborted as f64 / self.n as f64
    }

    /// `√(se_a² + se_b²)`, the standard error of a difference of independent
    /// estimates.
    pub fn combined_stderr(&self, other: &McEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }

    /// `label,n,mean,stderr,aborted`
    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{},{},{},{}",
            self.n,
            fmt_f64(self.mean),
            fmt_f64(self.stderr),
            self.aborted
        )
    }
}

/// Shortest round-trip representation; deterministic across runs.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Evaluates `per_path` on streams `(seed, 0..n)` in parallel and returns the
/// results in index order.
pub fn mc_map<T, F>(n: usize, seed: u64, per_path: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut NoiseStream) -> T + Sync + Send,
{
    (0..n as u64)
        .into_par_iter()
        .map(|k| per_path(&mut NoiseStream::new(seed, k)))
        .collect()
}

/// Monte Carlo mean of `per_path` over `n` paths.
///
/// Divergence errors count as aborts; any other error is returned. Fails with
/// [`Error::EstimationFailed`] when every path aborts.
pub fn mc_estimate<F>(n: usize, seed: u64, per_path: F) -> Result<McEstimate>
where
    F: Fn(&mut NoiseStream) -> Result<f64> + Sync + Send,
{
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let values = mc_map(n, seed, per_path);
    McEstimate::from_samples(collect_aborts(values)?)
}

/// Like [`mc_estimate`] for `k` quantities computed on the same paths. A
/// divergence aborts the path for every quantity.
pub fn mc_estimate_many<F>(n: usize, seed: u64, k: usize, per_path: F) -> Result<Vec<McEstimate>>
where
    F: Fn(&mut NoiseStream) -> Result<Vec<f64>> + Sync + Send,
{
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::with_capacity(n); k];
    for v in mc_map(n, seed, per_path) {
        match v {
            Ok(row) => {
                if row.len() != k {
                    return Err(Error::Dimension(format!("path returned {} values, expected {k}", row.len())));
                }
                for (col, x) in columns.iter_mut().zip(row) {
                    col.push(Some(x));
                }
            }
            Err(e) if e.is_divergence() => columns.iter_mut().for_each(|c| c.push(None)),
            Err(e) => return Err(e),
        }
    }
    columns.into_iter().map(McEstimate::from_samples).collect()
}

/// Turns divergence errors into `None`, propagating any other error.
pub fn collect_aborts(values: Vec<Result<f64>>) -> Result<Vec<Option<f64>>> {
    values
        .into_iter()
        .map(|v| match v {
            Ok(x) => Ok(Some(x)),
            Err(e) if e.is_divergence() => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// Least-squares line through `(log Δ, log value)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: Vec<(f64, f64)>,
}

impl PowerLawFit {
    /// `# slope=…,intercept=…,r2=…`
    pub fn csv_comment(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "# slope={},intercept={},r2={}",
            fmt_f64(self.slope),
            fmt_f64(self.intercept),
            fmt_f64(self.r2)
        );
        s
    }
}

pub fn loglog_fit(pairs: &[(f64, f64)]) -> Result<PowerLawFit> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a power-law fit needs at least 2 points, got {}",
            pairs.len()
        )));
    }
    if let Some((d, v)) = pairs.iter().find(|(d, v)| !(*d > 0.0) || !(*v > 0.0)) {
        return Err(Error::Domain(format!("log-log fit needs positive entries, got ({d}, {v})")));
    }
    let points: Vec<(f64, f64)> = pairs.iter().map(|(d, v)| (d.ln(), v.ln())).collect();
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit needs at least two distinct Δ".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(PowerLawFit {
        slope,
        intercept,
        r2,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_estimator() {
        let est = mc_estimate(100, 1, |_| Ok(3.0)).unwrap();
        assert_eq!(est.mean, 3.0);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.n, 100);
        assert_eq!(est.aborted, 0);
    }

    #[test]
    fn gaussian_mean_within_clt_bound() {
        let est = mc_estimate(1_000_000, 11, |s| Ok(s.gaussian())).unwrap();
        assert!(est.mean.abs() <= 3.0 * est.stderr, "{est:?}");
        assert!((est.stderr - 1e-3).abs() < 2e-5);
    }

    #[test]
    fn identical_across_thread_counts() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_estimate(20_000, 5, |s| Ok(s.gaussian().exp())).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }

    #[test]
    fn divergence_counts_as_abort_and_other_errors_propagate() {
        let est = mc_estimate(10, 0, |s| {
            if s.path_index() % 2 == 0 {
                Err(Error::Divergence { step: 3 })
            } else {
                Ok(1.0)
            }
        })
        .unwrap();
        assert_eq!(est.aborted, 5);
        assert_eq!(est.mean, 1.0);

        let all = mc_estimate(4, 0, |_| Err(Error::Divergence { step: 0 }));
        assert_eq!(all, Err(Error::EstimationFailed(4)));

        let other = mc_estimate(4, 0, |_| Err(Error::Domain("x".into())));
        assert!(matches!(other, Err(Error::Domain(_))));
    }

    #[test]
    fn linearity_under_common_random_numbers() {
        let f = mc_estimate(1000, 9, |s| Ok(s.gaussian())).unwrap();
        let g = mc_estimate(1000, 9, |s| Ok(2.0 * s.gaussian())).unwrap();
        let fg = mc_estimate(1000, 9, |s| Ok(3.0 * s.gaussian())).unwrap();
        assert!((f.mean + g.mean - fg.mean).abs() <= 1e-12 * (1.0 + fg.mean.abs()));
    }

    #[test]
    fn doubling_n_shrinks_stderr_by_sqrt2() {
        let a = mc_estimate(50_000, 2, |s| Ok(s.uniform())).unwrap();
        let b = mc_estimate(100_000, 3, |s| Ok(s.uniform())).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn exact_power_laws() {
        let deltas = [1e-1, 1e-2, 1e-3, 1e-4];
        let lin: Vec<_> = deltas.iter().map(|&d| (d, 3.0 * d)).collect();
        let fit = loglog_fit(&lin).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);

        let half: Vec<_> = deltas.iter().map(|&d| (d, 0.7 * d.sqrt())).collect();
        assert!((loglog_fit(&half).unwrap().slope - 0.5).abs() < 1e-12);
    }

    #[test]
    fn noisy_power_law_slope() {
        let mut s = NoiseStream::new(4, 0);
        let pairs: Vec<_> = [1e-1f64, 3e-2, 1e-2, 3e-3, 1e-3]
            .iter()
            .map(|&d| (d, 2.0 * d.sqrt() * (1.0 + 0.05 * s.gaussian().clamp(-3.0, 3.0))))
            .collect();
        let fit = loglog_fit(&pairs).unwrap();
        assert!((0.4..=0.6).contains(&fit.slope), "{fit:?}");
    }

    #[test]
    fn fit_rejects_bad_input() {
        assert!(matches!(loglog_fit(&[(1.0, 1.0)]), Err(Error::InvalidArgument(_))));
        assert!(matches!(loglog_fit(&[(1.0, 1.0), (0.1, 0.0)]), Err(Error::Domain(_))));
        assert!(matches!(loglog_fit(&[(-1.0, 1.0), (0.1, 2.0)]), Err(Error::Domain(_))));
    }
}
