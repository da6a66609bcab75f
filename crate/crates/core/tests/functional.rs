mod common;

use proptest::prelude::*;
use switchdiff::functional::{
    fd_gradient_cm, fd_gradient_oracle, functional_gradient, functional_value_cm, functional_value_direct, n_max,
    simulate_weighted_path, zeta_hat, SERIES_TAIL,
};
use switchdiff::mc::mc_estimate;
use switchdiff::model::FnModel;
use switchdiff::observable::{FirstCoordinate, FnObservable, Observable, RegimeIndicator, SquaredNorm, WeightedTanh};
use switchdiff::{Error, ModelParams, ModelRegistry, NoiseStream, SwitchingModel, TimeGrid};

use common::{constant_rate_model, random_rate_model};

fn smooth_rate() -> std::sync::Arc<dyn SwitchingModel> {
    ModelRegistry::with_builtins().create("smooth-rate", ModelParams::new()).unwrap()
}

fn unit() -> impl Observable {
    FnObservable::new(|_: &[f64], _| 1.0, |_: &[f64], _, g: &mut [f64]| g.fill(0.0), |_: &[f64], _, h: &mut [f64]| h.fill(0.0))
}

#[test]
fn single_regime_has_unit_weight() {
    let m = constant_rate_model(1, 0.0, 0.3, 0.7);
    let grid = TimeGrid::new(1.0, 50).unwrap();
    for k in 0..20 {
        let wp = simulate_weighted_path(&m, &[0.2], 0, &grid, &mut NoiseStream::new(1, k), false).unwrap();
        assert_eq!(wp.weight, 1.0);
        assert_eq!(wp.chain.n_jumps(), 0);
    }
}

#[test]
fn uniform_unit_rates_give_unit_weight_on_every_path() {
    let m = constant_rate_model(3, 1.0, 0.0, 1.0);
    let grid = TimeGrid::new(2.0, 40).unwrap();
    for k in 0..200 {
        let wp = simulate_weighted_path(&m, &[0.0], 1, &grid, &mut NoiseStream::new(2, k), false).unwrap();
        assert!((wp.weight - 1.0).abs() < 1e-12, "path {k}: {}", wp.weight);
    }
}

#[test]
fn weight_has_unit_mean() {
    let grid = TimeGrid::new(1.0, 50).unwrap();
    for (label, m) in [("smooth", smooth_rate()), ("random", common::shared(random_rate_model(3, 9)))] {
        let est = mc_estimate(40_000, 3, |s| Ok(simulate_weighted_path(m.as_ref(), &[0.5], 0, &grid, s, false)?.weight))
            .unwrap();
        assert!((est.mean - 1.0).abs() <= 3.0 * est.stderr, "{label}: {est:?}");
    }
}

#[test]
fn chain_and_path_switch_together() {
    let m = random_rate_model(3, 4);
    let grid = TimeGrid::new(1.5, 30).unwrap();
    for k in 0..50 {
        let wp = simulate_weighted_path(&m, &[0.1], 2, &grid, &mut NoiseStream::new(3, k), false).unwrap();
        assert_eq!(wp.zpath.switches().len(), wp.chain.n_jumps());
        for (ev, &t) in wp.zpath.switches().iter().zip(wp.chain.jump_times()) {
            assert!((ev.time - t).abs() < 1e-12);
        }
        assert_eq!(wp.zpath.terminal_regime(), wp.chain.terminal_regime());
    }
}

#[test]
fn absorbing_regime_without_switching() {
    let m = constant_rate_model(2, 0.0, 0.1, 0.5);
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let est = functional_value_cm(&m, &RegimeIndicator(0), &[0.0], 0, &grid, 40_000, 5).unwrap();
    assert!((est.mean - 1.0).abs() <= 3.0 * est.stderr, "{est:?}");
    let other = functional_value_cm(&m, &RegimeIndicator(1), &[0.0], 0, &grid, 10_000, 5).unwrap();
    assert_eq!(other.mean, 0.0);
}

#[test]
fn constant_observable_is_the_total_mass() {
    let m = smooth_rate();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let est = functional_value_cm(m.as_ref(), &unit(), &[0.5], 1, &grid, 40_000, 6).unwrap();
    assert!((est.mean - 1.0).abs() <= 3.0 * est.stderr, "{est:?}");
}

#[test]
fn slow_return_rate_matches_the_two_state_law() {
    // Drift 1 in regime 1, frozen in regime 2; leaving regime 1 at rate 1,
    // returning at rate eps. The clamped terminal state is within eps of
    // E min(10, x + T ∧ τ) with τ ~ Exp(1).
    let eps = 1e-3;
    let m = FnModel::builder(1, 1, 2)
        .rate_bound(2.0)
        .drift(|_, i, out| out[0] = if i == 0 { 1.0 } else { 0.0 })
        .rates(move |_, from, _| if from == 0 { 1.0 } else { eps })
        .build()
        .unwrap();
    let clamp10 = switchdiff::observable::Clamp { lo: -10.0, hi: 10.0 };
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let est = functional_value_cm(&m, &clamp10, &[0.0], 0, &grid, 100_000, 7).unwrap();
    let exact = 1.0 - (-1.0f64).exp();
    assert!((est.mean - exact).abs() <= 3.0 * est.stderr + eps + grid.dt(), "{est:?} vs {exact}");
}

#[test]
fn change_of_measure_agrees_with_direct_simulation() {
    let m = smooth_rate();
    let phi = WeightedTanh(vec![1.0, 0.5]);
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let cm = functional_value_cm(m.as_ref(), &phi, &[0.5], 0, &grid, 50_000, 8).unwrap();
    let direct = functional_value_direct(m.as_ref(), &phi, &[0.5], 0, &grid, 50_000, 9).unwrap();
    assert!((cm.mean - direct.mean).abs() <= 3.0 * cm.combined_stderr(&direct), "{cm:?} vs {direct:?}");
}

#[test]
fn pathwise_derivative_of_a_frozen_coordinate() {
    let m = constant_rate_model(1, 0.0, 0.0, 0.0);
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let wp = simulate_weighted_path(&m, &[0.4], 0, &grid, &mut NoiseStream::new(1, 0), true).unwrap();
    assert_eq!(zeta_hat(&m, &FirstCoordinate, &[1.0], &wp).unwrap(), 1.0);
}

#[test]
fn constant_rates_leave_only_the_terminal_term() {
    let m = ModelRegistry::with_builtins().create("markovian-linear", ModelParams::new()).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let phi = WeightedTanh(vec![1.0, -0.5]);
    for k in 0..100 {
        let wp = simulate_weighted_path(m.as_ref(), &[0.8], 0, &grid, &mut NoiseStream::new(4, k), true).unwrap();
        let z = wp.zpath.terminal_state();
        let mut g = [0.0];
        phi.gradient(z, wp.zpath.terminal_regime(), &mut g);
        let eta = wp.eta.as_ref().unwrap().terminal()[0];
        let expected = g[0] * eta * wp.weight;
        let got = zeta_hat(m.as_ref(), &phi, &[1.0], &wp).unwrap();
        assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()), "path {k}: {got} vs {expected}");
    }
}

#[test]
fn zeta_needs_a_tangent() {
    let m = smooth_rate();
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let wp = simulate_weighted_path(m.as_ref(), &[0.0], 0, &grid, &mut NoiseStream::new(1, 0), false).unwrap();
    assert!(matches!(zeta_hat(m.as_ref(), &FirstCoordinate, &[1.0], &wp), Err(Error::MissingCapability { .. })));
}

#[test]
fn gradient_requires_derivatives_and_matching_directions() {
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let bare = random_rate_model(2, 1);
    let err = functional_gradient(&bare, &FirstCoordinate, &[0.0], 0, &grid, &[vec![1.0]], 10, 1).unwrap_err();
    assert!(matches!(err, Error::MissingCapability { .. }), "{err}");
    let m = smooth_rate();
    let err = functional_gradient(m.as_ref(), &FirstCoordinate, &[0.0], 0, &grid, &[vec![1.0, 0.0]], 10, 1).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)), "{err}");
}

#[test]
fn finite_difference_oracle_is_exact_for_linear_dynamics() {
    let a = -0.7;
    let m = FnModel::builder(1, 1, 2)
        .rate_bound(3.0)
        .drift(move |x, _, out| out[0] = a * x[0])
        .diffusion(|_, i, out| out[0] = 0.2 + 0.3 * i as f64)
        .rates(|_, _, _| 1.5)
        .build()
        .unwrap();
    let grid = TimeGrid::new(1.0, 40).unwrap();
    let fd = fd_gradient_oracle(&m, &FirstCoordinate, &[0.3], 0, &grid, 1e-3, &[1.0], 2_000, 2).unwrap();
    let exact = (1.0 + a * grid.dt()).powi(40);
    assert!((fd.mean - exact).abs() < 1e-9, "{fd:?} vs {exact}");
    assert!(fd.stderr < 1e-9);
}

#[test]
fn finite_difference_oracle_on_the_square() {
    let m = constant_rate_model(2, 1.0, 0.0, 1.0);
    let grid = TimeGrid::new(1.0, 20).unwrap();
    let x = 0.6;
    // Under common noise the difference quotient is 2 (x + W(T)) on every path.
    let fd = fd_gradient_oracle(&m, &SquaredNorm, &[x], 0, &grid, 1e-2, &[1.0], 50_000, 3).unwrap();
    let w = functional_value_direct(&m, &FirstCoordinate, &[0.0], 0, &grid, 50_000, 3).unwrap();
    assert!((fd.mean - 2.0 * (x + w.mean)).abs() < 1e-9, "{fd:?} vs {w:?}");
    assert!((fd.stderr - 2.0 * w.stderr).abs() < 1e-9);
    assert!(fd_gradient_oracle(&m, &SquaredNorm, &[x], 0, &grid, 0.0, &[1.0], 10, 3).is_err());
}

#[test]
fn pathwise_gradient_matches_finite_differences_of_the_same_estimator() {
    let m = smooth_rate();
    let phi = WeightedTanh(vec![1.0, 0.5]);
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let g = functional_gradient(m.as_ref(), &phi, &[0.5], 0, &grid, &[vec![1.0]], 50_000, 10).unwrap();
    let fd = fd_gradient_cm(m.as_ref(), &phi, &[0.5], 0, &grid, 1e-3, &[1.0], 50_000, 11).unwrap();
    let diff = (g.gradient[0].mean - fd.mean).abs();
    assert!(diff <= 3.0 * g.gradient[0].combined_stderr(&fd), "{g:?} vs {fd:?}");
    assert!(g.truncated_mass <= 1e-3);
    assert_eq!(g.n_max, n_max(1.0));
}

#[test]
fn gradient_of_a_single_regime_linear_flow() {
    // dX = -k X dt + s dW: d/dx E X(T) = (1 - k dt)^n on the Euler grid.
    let k = 0.5;
    let m = FnModel::builder(1, 1, 1)
        .drift(move |x, _, out| out[0] = -k * x[0])
        .diffusion(|_, _, out| out[0] = 0.4)
        .drift_jac(move |_, _, out| out[0] = -k)
        .diffusion_jac(|_, _, out| out[0] = 0.0)
        .rate_grad(|_, _, _, _| {})
        .build()
        .unwrap();
    let grid = TimeGrid::new(1.0, 25).unwrap();
    let g = functional_gradient(&m, &FirstCoordinate, &[1.0], 0, &grid, &[vec![1.0], vec![2.0]], 500, 1).unwrap();
    let exact = (1.0 - k * grid.dt()).powi(25);
    assert!((g.gradient[0].mean - exact).abs() < 1e-12);
    assert!((g.gradient[1].mean - 2.0 * exact).abs() < 1e-12);
    assert_eq!(g.n_max, 0);
}

#[test]
fn series_cutoff_matches_the_poisson_tail() {
    assert_eq!(n_max(0.0), 0);
    for mean in [0.5, 1.0, 2.0, 5.0, 12.0] {
        let n = n_max(mean);
        let tail = |n: usize| {
            let mut p = (-mean).exp();
            let mut cdf = p;
            for k in 1..=n {
                p *= mean / k as f64;
                cdf += p;
            }
            1.0 - cdf
        };
        assert!(tail(n) < SERIES_TAIL, "mean {mean}: n = {n}");
        assert!(n == 0 || tail(n - 1) >= SERIES_TAIL * (1.0 - 1e-9), "mean {mean}: n = {n}");
    }
}

#[test]
fn gradient_csv_rows() {
    let m = smooth_rate();
    let grid = TimeGrid::new(0.5, 10).unwrap();
    let g = functional_gradient(m.as_ref(), &FirstCoordinate, &[0.0], 0, &grid, &[vec![1.0]], 100, 1).unwrap();
    let rows = g.csv_rows();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("value,"));
    assert!(rows[1].starts_with("gradient_1,"));
    assert_eq!(rows[1].split(',').count(), 6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_finite_and_nonnegative(seed in any::<u64>(), x in -2.0f64..2.0, i in 0usize..3) {
        let m = random_rate_model(3, seed % 17);
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let wp = simulate_weighted_path(&m, &[x], i, &grid, &mut NoiseStream::new(seed, 0), false).unwrap();
        prop_assert!(wp.weight.is_finite() && wp.weight >= 0.0);
    }

    #[test]
    fn gradient_is_linear_in_the_direction(seed in any::<u64>(), c in -3.0f64..3.0) {
        let m = smooth_rate();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let phi = WeightedTanh(vec![1.0, 0.5]);
        let wp = simulate_weighted_path(m.as_ref(), &[0.3], 0, &grid, &mut NoiseStream::new(seed, 0), true).unwrap();
        let one = zeta_hat(m.as_ref(), &phi, &[1.0], &wp).unwrap();
        let scaled = zeta_hat(m.as_ref(), &phi, &[c], &wp).unwrap();
        prop_assert!((scaled - c * one).abs() <= 1e-10 * (1.0 + one.abs()));
    }
}
