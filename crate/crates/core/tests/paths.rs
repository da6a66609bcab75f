mod common;

use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};
use switchdiff::counterexample::cx_decoupling_probability;
use switchdiff::mc::{mc_estimate, mc_estimate_many, mc_map};
use switchdiff::model::FnModel;
use switchdiff::observable::{Observable, WeightedTanh};
use switchdiff::paths::{simulate_aux_chain, simulate_coupled, simulate_driven, simulate_path, simulate_tangent};
use switchdiff::{Error, ModelParams, ModelRegistry, NoiseStream, RegimeSpace, TimeGrid};

use common::{constant_rate_model, ks_distance, random_rate_model};

fn builtin(name: &str) -> std::sync::Arc<dyn switchdiff::SwitchingModel> {
    ModelRegistry::with_builtins().create(name, ModelParams::new()).unwrap()
}

#[test]
fn time_grid_basics() {
    let g = TimeGrid::new(2.0, 8).unwrap();
    assert_eq!(g.dt(), 0.25);
    assert_eq!(g.times(), vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]);
    assert_eq!(TimeGrid::with_step(1.0, 0.01).unwrap().n_steps(), 100);
    assert!(TimeGrid::new(1.0, 0).is_err());
    assert!(TimeGrid::new(-1.0, 10).is_err());
}

#[test]
fn frozen_dynamics_stay_put() {
    let m = FnModel::builder(2, 1, 3).rate_bound(1.0).build().unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let p = simulate_path(&m, &[0.3, -2.0], 2, &grid, &mut NoiseStream::new(1, 0)).unwrap();
    assert_eq!(p.len(), 51);
    for k in 0..p.len() {
        assert_eq!(p.state(k), &[0.3, -2.0]);
        assert_eq!(p.regime(k), 2);
    }
    assert!(p.switches().is_empty());
}

#[test]
fn constant_drift_is_integrated_exactly() {
    let m = FnModel::builder(1, 1, 1).drift(|_, _, out| out[0] = 1.0).build().unwrap();
    let grid = TimeGrid::new(1.0, 64).unwrap();
    let p = simulate_path(&m, &[0.5], 0, &grid, &mut NoiseStream::new(3, 9)).unwrap();
    assert_eq!(p.terminal_state(), &[1.5]);
}

#[test]
fn first_switch_time_is_exponential() {
    let q = 0.7;
    let m = constant_rate_model(2, q, 0.0, 0.0);
    let grid = TimeGrid::new(5.0, 500).unwrap();
    let n = 100_000;
    let times: Vec<Option<f64>> = mc_map(n, 21, |s| {
        let p = simulate_path(&m, &[0.0], 0, &grid, s).unwrap();
        p.switches().first().map(|e| e.time)
    });
    let observed: Vec<f64> = times.iter().flatten().copied().collect();
    // Censored at T: compare the empirical CDF on [0, T] only.
    let mut sorted = observed.clone();
    sorted.sort_by(f64::total_cmp);
    let cdf = |t: f64| 1.0 - (-q * t).exp();
    let mut ks: f64 = 0.0;
    for (k, &t) in sorted.iter().enumerate() {
        let f = cdf(t);
        ks = ks.max((f - k as f64 / n as f64).abs()).max(((k + 1) as f64 / n as f64 - f).abs());
    }
    let tol = 1.63 / (n as f64).sqrt() + q * grid.dt();
    assert!(ks <= tol, "KS {ks} > {tol}");
}

#[test]
fn noise_layout_shares_gaussians_across_start_points() {
    let m = builtin("smooth-rate");
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let a = simulate_path(m.as_ref(), &[0.5], 0, &grid, &mut NoiseStream::new(4, 11)).unwrap();
    let b = simulate_path(m.as_ref(), &[-0.7], 1, &grid, &mut NoiseStream::new(4, 11)).unwrap();
    for k in 0..grid.n_steps() {
        assert_eq!(a.increment(k), b.increment(k));
    }
    let again = simulate_path(m.as_ref(), &[0.5], 0, &grid, &mut NoiseStream::new(4, 11)).unwrap();
    assert_eq!(a, again);
}

#[test]
fn switches_match_regime_changes() {
    let m = random_rate_model(4, 99);
    let grid = TimeGrid::new(2.0, 200).unwrap();
    for k in 0..50 {
        let p = simulate_path(&m, &[0.1], 1, &grid, &mut NoiseStream::new(5, k)).unwrap();
        let changes: Vec<usize> = (1..p.len()).filter(|&n| p.regime(n) != p.regime(n - 1)).collect();
        let nodes: Vec<usize> = p.switches().iter().map(|e| e.node).collect();
        assert_eq!(changes, nodes);
        for e in p.switches() {
            assert_eq!(p.regime(e.node - 1), e.from);
            assert_eq!(p.regime(e.node), e.to);
            assert_eq!(e.time, grid.time(e.node));
        }
    }
}

#[test]
fn divergence_reports_the_step() {
    let m = FnModel::builder(1, 1, 1)
        .drift(|x, _, out| out[0] = x[0] * x[0])
        .build()
        .unwrap();
    let grid = TimeGrid::new(10.0, 100).unwrap();
    let err = simulate_path(&m, &[5.0], 0, &grid, &mut NoiseStream::new(0, 0)).unwrap_err();
    assert!(matches!(err, Error::Divergence { step } if step > 0 && step < 100));
}

#[test]
fn constant_rates_never_decouple() {
    let m = builtin("markovian-linear");
    let grid = TimeGrid::new(1.0, 100).unwrap();
    for k in 0..200 {
        let cp = simulate_coupled(m.as_ref(), &[1.0], &[1.3], 0, &grid, &mut NoiseStream::new(2, k)).unwrap();
        assert_eq!(cp.tau_node(), None);
        assert_eq!(cp.first().regimes(), cp.second().regimes());
    }
}

#[test]
fn identical_starts_give_identical_paths() {
    let m = random_rate_model(3, 4);
    let grid = TimeGrid::new(1.0, 100).unwrap();
    for k in 0..100 {
        let cp = simulate_coupled(&m, &[0.4], &[0.4], 2, &grid, &mut NoiseStream::new(6, k)).unwrap();
        assert_eq!(cp.first(), cp.second());
        assert_eq!(cp.tau_delta(), None);
    }
}

#[test]
fn regimes_agree_before_decoupling() {
    let m = random_rate_model(4, 12);
    let grid = TimeGrid::new(2.0, 200).unwrap();
    let mut decoupled = 0;
    for k in 0..400 {
        let cp = simulate_coupled(&m, &[0.0], &[0.8], 0, &grid, &mut NoiseStream::new(7, k)).unwrap();
        let first_diff = (0..cp.first().len()).find(|&n| cp.first().regime(n) != cp.second().regime(n));
        assert_eq!(cp.tau_node(), first_diff);
        if let Some(tau) = cp.tau_node() {
            decoupled += 1;
            assert!((0..tau).all(|n| cp.first().regime(n) == cp.second().regime(n)));
            assert!(cp.decoupled_by(grid.time(tau)));
            assert!(!cp.decoupled_by(grid.time(tau - 1)));
        }
        for n in 0..grid.n_steps() {
            assert_eq!(cp.first().increment(n), cp.second().increment(n));
        }
    }
    assert!(decoupled > 20);
}

#[test]
fn counterexample_decoupling_matches_closed_form() {
    let m = builtin("counterexample");
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let delta = 0.1;
    let est = mc_estimate(40_000, 13, |s| {
        let cp = simulate_coupled(m.as_ref(), &[1.0], &[1.0 + delta], 0, &grid, s)?;
        Ok(if cp.decoupled_by(1.0) { 1.0 } else { 0.0 })
    })
    .unwrap();
    let exact = cx_decoupling_probability(delta, 1.0);
    assert!((exact - 0.060648).abs() < 1e-6);
    assert!((est.mean - exact).abs() <= 3.0 * est.stderr + grid.dt() * exact, "{est:?} vs {exact}");
}

#[test]
fn coupled_first_marginal_matches_single_paths() {
    let m = builtin("smooth-rate");
    let f = WeightedTanh(vec![1.0, -0.5]);
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let n = 40_000;
    let single = mc_estimate(n, 31, |s| {
        let p = simulate_path(m.as_ref(), &[0.5], 0, &grid, s)?;
        Ok(f.value(p.terminal_state(), p.terminal_regime()))
    })
    .unwrap();
    let coupled = mc_estimate_many(n, 32, 2, |s| {
        let cp = simulate_coupled(m.as_ref(), &[0.5], &[1.5], 0, &grid, s)?;
        let a = cp.first();
        let b = cp.second();
        Ok(vec![
            f.value(a.terminal_state(), a.terminal_regime()),
            f.value(b.terminal_state(), b.terminal_regime()),
        ])
    })
    .unwrap();
    let other = mc_estimate(n, 33, |s| {
        let p = simulate_path(m.as_ref(), &[1.5], 0, &grid, s)?;
        Ok(f.value(p.terminal_state(), p.terminal_regime()))
    })
    .unwrap();
    let d1 = (coupled[0].mean - single.mean).abs();
    let d2 = (coupled[1].mean - other.mean).abs();
    assert!(d1 <= 3.0 * coupled[0].combined_stderr(&single), "{d1}");
    assert!(d2 <= 3.0 * coupled[1].combined_stderr(&other), "{d2}");
}

#[test]
fn one_step_switch_probability_is_first_order() {
    let q = 2.0;
    let m = constant_rate_model(2, q, 0.0, 0.0);
    let excess = |dt: f64| {
        let grid = TimeGrid::new(dt, 1).unwrap();
        let est = mc_estimate(2_000_000, 41, |s| {
            Ok(simulate_path(&m, &[0.0], 0, &grid, s)?.switches().len() as f64)
        })
        .unwrap();
        let exact = 1.0 - (-q * dt).exp();
        assert!((est.mean - exact).abs() <= 3.0 * est.stderr, "{est:?} vs {exact}");
        est.mean - q * dt
    };
    let coarse = excess(0.1);
    let fine = excess(0.05);
    let ratio = coarse / fine;
    assert!((3.0..=5.0).contains(&ratio), "excess ratio {ratio}");
}

#[test]
fn tangent_examples() {
    let c = -0.8;
    let linear = FnModel::builder(1, 1, 1)
        .drift(move |x, _, out| out[0] = c * x[0])
        .diffusion(|_, _, out| out[0] = 0.4)
        .drift_jac(move |_, _, out| out[0] = c)
        .diffusion_jac(|_, _, out| out[0] = 0.0)
        .build()
        .unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let p = simulate_path(&linear, &[2.0], 0, &grid, &mut NoiseStream::new(1, 1)).unwrap();
    let xi = simulate_tangent(&linear, &p).unwrap();
    for k in 0..xi.len() {
        let expect = (1.0 + c * grid.dt()).powi(k as i32);
        assert!((xi.value(k)[0] - expect).abs() <= 1e-12 * expect);
    }
    assert!((xi.terminal()[0] - c.exp()).abs() < 0.01);

    let flat = FnModel::builder(2, 2, 1)
        .drift(|_, _, out| out.copy_from_slice(&[0.3, -1.0]))
        .diffusion(|_, _, out| out.copy_from_slice(&[1.0, 0.0, 0.5, 0.2]))
        .drift_jac(|_, _, out| out.fill(0.0))
        .diffusion_jac(|_, _, out| out.fill(0.0))
        .build()
        .unwrap();
    let p = simulate_path(&flat, &[0.0, 1.0], 0, &grid, &mut NoiseStream::new(1, 2)).unwrap();
    let xi = simulate_tangent(&flat, &p).unwrap();
    for k in 0..xi.len() {
        assert_eq!(xi.value(k), &[1.0, 0.0, 0.0, 1.0]);
    }

    let no_jac = FnModel::builder(1, 1, 1).build().unwrap();
    let p = simulate_path(&no_jac, &[0.0], 0, &grid, &mut NoiseStream::new(0, 0)).unwrap();
    assert!(matches!(simulate_tangent(&no_jac, &p), Err(Error::MissingCapability { .. })));
}

#[test]
fn geometric_tangent_equals_scaled_state() {
    let m = builtin("geometric");
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let x0 = 1.7;
    for k in 0..1000 {
        let p = simulate_path(m.as_ref(), &[x0], 0, &grid, &mut NoiseStream::new(42, k)).unwrap();
        let xi = simulate_tangent(m.as_ref(), &p).unwrap();
        for n in 0..p.len() {
            let ratio = p.state(n)[0] / x0;
            assert!((xi.value(n)[0] - ratio).abs() <= 1e-12 * (1.0 + ratio.abs()), "path {k} step {n}");
        }
    }
}

#[test]
fn aux_chain_examples() {
    let one = simulate_aux_chain(RegimeSpace::new(1).unwrap(), 0, 5.0, &mut NoiseStream::new(0, 0)).unwrap();
    assert_eq!(one.n_jumps(), 0);
    assert_eq!(one.terminal_regime(), 0);

    let horizon = 1.3;
    let n = 100_000;
    let two = RegimeSpace::new(2).unwrap();
    let jumps = mc_estimate(n, 5, |s| Ok(simulate_aux_chain(two, 0, horizon, s)?.n_jumps() as f64)).unwrap();
    assert!((jumps.mean - horizon).abs() <= 3.0 * (horizon / n as f64).sqrt(), "{jumps:?}");

    let three = RegimeSpace::new(3).unwrap();
    let holding = mc_estimate(n, 6, |s| {
        let c = simulate_aux_chain(three, 1, 50.0, s)?;
        Ok(c.jump_times()[0])
    })
    .unwrap();
    assert!((holding.mean - 0.5).abs() <= 3.0 * holding.stderr, "{holding:?}");

    for k in 0..200 {
        let c = simulate_aux_chain(RegimeSpace::new(4).unwrap(), 3, 3.0, &mut NoiseStream::new(8, k)).unwrap();
        assert_eq!(c.regimes().len(), c.n_jumps() + 1);
        assert!(c.regimes().windows(2).all(|w| w[0] != w[1]));
        assert!(c.jump_times().windows(2).all(|w| w[0] < w[1]));
        assert!(c.jump_times().iter().all(|&t| t > 0.0 && t < 3.0));
        assert_eq!(c.regime_at(0.0), 3);
        assert_eq!(c.regime_at(3.0), c.terminal_regime());
    }
}

#[test]
fn aux_chain_jump_counts_are_poisson() {
    let m0 = 3;
    let horizon = 1.5;
    let n = 100_000;
    let space = RegimeSpace::new(m0).unwrap();
    let counts = mc_map(n, 77, |s| simulate_aux_chain(space, 0, horizon, s).unwrap().n_jumps());
    let law = Poisson::new((m0 - 1) as f64 * horizon).unwrap();
    let top = 8;
    let mut observed = vec![0usize; top + 1];
    for c in counts {
        observed[c.min(top)] += 1;
    }
    let mut stat = 0.0;
    for (k, &o) in observed.iter().enumerate() {
        let p = if k < top { law.pmf(k as u64) } else { 1.0 - (0..top).map(|j| law.pmf(j as u64)).sum::<f64>() };
        let e = p * n as f64;
        stat += (o as f64 - e).powi(2) / e;
    }
    let critical = ChiSquared::new(top as f64).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
}

#[test]
fn driven_paths_follow_the_chain() {
    let m = builtin("smooth-rate");
    let grid = TimeGrid::new(1.0, 20).unwrap();
    for k in 0..100 {
        let mut s = NoiseStream::new(3, k);
        let chain = simulate_aux_chain(m.regimes(), 0, 1.0, &mut s).unwrap();
        let z = simulate_driven(m.as_ref(), &[0.2], &chain, &grid, &mut s).unwrap();
        assert_eq!(z.switches().len(), chain.n_jumps());
        for (e, &t) in z.switches().iter().zip(chain.jump_times()) {
            assert_eq!(e.time, t);
        }
        for n in 0..z.len() - 1 {
            assert_eq!(z.regime(n), chain.regime_at(z.time(n)));
        }
        assert_eq!(*z.times().last().unwrap(), 1.0);
    }
    let chain = simulate_aux_chain(m.regimes(), 0, 2.0, &mut NoiseStream::new(0, 0)).unwrap();
    assert!(simulate_driven(m.as_ref(), &[0.0], &chain, &grid, &mut NoiseStream::new(0, 0)).is_err());
}

#[test]
fn moments_are_stable_under_refinement() {
    let m = builtin("smooth-rate");
    let sup_sq = |n_steps: usize| {
        let grid = TimeGrid::new(1.0, n_steps).unwrap();
        mc_estimate(10_000, 55, |s| {
            let p = simulate_path(m.as_ref(), &[0.5], 0, &grid, s)?;
            Ok((0..p.len()).map(|k| p.state(k)[0].powi(2)).fold(0.0, f64::max))
        })
        .unwrap()
    };
    let coarse = sup_sq(50);
    let fine = sup_sq(100);
    assert!(coarse.mean.is_finite() && fine.mean.is_finite());
    assert!((fine.mean / coarse.mean - 1.0).abs() < 0.1, "{coarse:?} {fine:?}");
}

#[test]
fn csv_dumps() {
    let m = builtin("smooth-rate");
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let p = simulate_path(m.as_ref(), &[0.5], 0, &grid, &mut NoiseStream::new(1, 0)).unwrap();
    let mut buf = Vec::new();
    p.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x_1,alpha");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("0,0.5,1"));

    let cp = simulate_coupled(m.as_ref(), &[0.5], &[0.6], 0, &grid, &mut NoiseStream::new(1, 0)).unwrap();
    let mut buf = Vec::new();
    cp.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x_1,alpha,x̃_1,alpha2,decoupled");
}

#[test]
fn ks_helper_sanity() {
    let sample: Vec<f64> = (0..1000).map(|k| (k as f64 + 0.5) / 1000.0).collect();
    assert!(ks_distance(sample, |u| u) <= 5e-4 + 1e-12);
}
