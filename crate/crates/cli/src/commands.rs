use std::fmt::Write as _;
use std::sync::Arc;

use switchdiff::counterexample::{
    cx_decoupling_probability, cx_gap_estimate, cx_gap_oracle, cx_lower_bound, cx_lower_bound_limit,
};
use switchdiff::functional::{fd_gradient_oracle, functional_gradient, functional_value_cm, functional_value_direct};
use switchdiff::lotka::{lv_as_model, lv_distance_study, lv_moment_check, LvModel, MomentTable};
use switchdiff::mc::{fmt_f64, mc_map, McEstimate};
use switchdiff::model::{build_partition, check_jacobians, check_rate_gradients, validate_rate_matrix, DEFAULT_RATE_TOL};
use switchdiff::models::lotka_spec;
use switchdiff::observable::{FnObservable, Observable, ObservableRegistry};
use switchdiff::paths::{simulate_coupled, simulate_path, PathSample};
use switchdiff::sensitivity::{
    decoupling_probability_study, dynkin_residual, feller_gap, feller_truncation_check, lp_error_study,
    sup_distance_study, StudyConfig, StudyReport, MIN_DECOUPLING_EVENTS,
};
use switchdiff::{ModelRegistry, SwitchingModel, TimeGrid};

use crate::args::Command;
use crate::config::RunConfig;
use crate::{Check, CliError, Outcome};

pub fn dispatch(cmd: &Command, cfg: &mut RunConfig, check: bool) -> Result<Outcome, CliError> {
    cfg.seed.get_or_insert(1);
    match cmd {
        Command::Validate(_) => validate(cfg),
        Command::Simulate(_) => simulate(cfg),
        Command::Coupled(_) => coupled(cfg),
        Command::LpStudy(_) => lp_study(cfg),
        Command::Decouple(_) => decouple(cfg),
        Command::Supdist(_) => supdist(cfg),
        Command::Dynkin(_) => dynkin(cfg),
        Command::Feller(_) => feller(cfg),
        Command::GradCm(_) => grad_cm(cfg, check),
        Command::Counterexample(_) => counterexample(cfg),
        Command::LotkaMoments(_) => lotka_moments(cfg, check),
        Command::LotkaCoupled(_) => lotka_coupled(cfg),
    }
}

type Model = Arc<dyn SwitchingModel>;

fn model(cfg: &mut RunConfig, default: &str) -> Result<Model, CliError> {
    let name = cfg.model.name.get_or_insert_with(|| default.to_string()).clone();
    let params = cfg.model_params()?;
    ModelRegistry::with_builtins()
        .create(&name, params)
        .map_err(|e| CliError::usage(format!("model `{name}`: {e}")))
}

fn lotka_model(cfg: &mut RunConfig) -> Result<LvModel, CliError> {
    let name = cfg.model.name.get_or_insert_with(|| "lotka".into()).clone();
    if name != "lotka" {
        return Err(CliError::usage(format!("model.name: `{name}` given, the lotka commands need `lotka`")));
    }
    let spec = lotka_spec(cfg.model_params()?).map_err(|e| CliError::usage(format!("model `lotka`: {e}")))?;
    lv_as_model(&spec).map_err(|e| CliError::usage(format!("model `lotka`: {e}")))
}

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(1)
}

fn paths(cfg: &mut RunConfig, default: usize) -> usize {
    *cfg.study.paths.get_or_insert(default)
}

fn grid(cfg: &mut RunConfig) -> Result<TimeGrid, CliError> {
    let horizon = *cfg.study.horizon.get_or_insert(1.0);
    let steps = *cfg.study.steps.get_or_insert(100);
    TimeGrid::new(horizon, steps).map_err(|e| CliError::library("study.T/study.steps", e))
}

/// Starting point and 0-based regime.
fn start(cfg: &mut RunConfig, model: &dyn SwitchingModel) -> Result<(Vec<f64>, usize), CliError> {
    let r = model.state_dim();
    let default = match model.name() {
        "counterexample" => vec![1.0],
        "holder-rate" => vec![0.0],
        _ => vec![0.5; r],
    };
    let x = cfg.study.x.get_or_insert(default).clone();
    if x.len() != r {
        return Err(CliError::usage(format!("study.x: {} entries for a state of dimension {r}", x.len())));
    }
    let regime = *cfg.study.regime.get_or_insert(1);
    let m0 = model.regimes().size();
    if regime == 0 || regime > m0 {
        return Err(CliError::usage(format!("study.regime: {regime} is not in 1..={m0}")));
    }
    Ok((x, regime - 1))
}

fn direction(cfg: &mut RunConfig, r: usize) -> Result<Vec<f64>, CliError> {
    let mut e1 = vec![0.0; r];
    e1[0] = 1.0;
    let e = cfg.study.direction.get_or_insert(e1).clone();
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if e.len() != r || (norm - 1.0).abs() > 1e-9 {
        return Err(CliError::usage(format!("study.direction: need a unit vector with {r} entries")));
    }
    Ok(e)
}

fn observable(cfg: &mut RunConfig, default: &str) -> Result<Box<dyn Observable>, CliError> {
    let name = cfg.study.observable.get_or_insert_with(|| default.to_string()).clone();
    ObservableRegistry::default()
        .create(&name)
        .map_err(|e| CliError::usage(format!("study.observable: {e}")))
}

fn study_config(cfg: &mut RunConfig, deltas: &[f64], r: usize) -> Result<StudyConfig, CliError> {
    let g = grid(cfg)?;
    let direction = direction(cfg, r)?;
    let sc = StudyConfig {
        horizon: g.horizon(),
        n_steps: g.n_steps(),
        n_paths: paths(cfg, 10_000),
        deltas: cfg.study.deltas.get_or_insert_with(|| deltas.to_vec()).clone(),
        p: *cfg.study.p.get_or_insert(2.0),
        direction: Some(direction),
        seed: seed(cfg),
    };
    sc.validate(r).map_err(|e| CliError::library("study", e))?;
    Ok(sc)
}

fn join(values: &[f64], sep: &str) -> String {
    values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(sep)
}

fn report_outcome(report: &StudyReport, checks: Vec<Check>) -> Outcome {
    let mut buf = Vec::new();
    report.write_csv(&mut buf).expect("writing to memory");
    Outcome {
        body: String::from_utf8(buf).expect("utf-8"),
        checks,
        aborted: report.aborted(),
        attempted: report.attempted(),
    }
}

fn slope_check(name: &str, report: &StudyReport, lo: f64, hi: f64) -> Check {
    match &report.fit {
        Some(fit) => Check::new(name, (lo..=hi).contains(&fit.slope), format!("slope {:.4} in [{lo}, {hi}]", fit.slope)),
        None => Check::new(name, false, "no fit"),
    }
}

/// Derivative checks run off the sample grid, away from the round-number
/// knots of piecewise-linear models.
const KINK_OFFSET: f64 = 0.0173;

fn validate(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let m = model(cfg, "smooth-rate")?;
    let (r, m0) = (m.state_dim(), m.regimes().size());
    let mut body = String::from("point,check,value,ok\n");
    let mut problems = Vec::new();
    for v in [-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
        let x = vec![v; r];
        let label = join(&x, ";");
        let rows = m.rate_matrix(&x).rows();
        let report = validate_rate_matrix(&rows, DEFAULT_RATE_TOL).map_err(|e| CliError::library("validate", e))?;
        let worst = rows.iter().map(|row| row.iter().sum::<f64>().abs()).fold(0.0, f64::max);
        writeln!(body, "{label},generator,{},{}", fmt_f64(worst), u8::from(report.is_ok())).unwrap();
        problems.extend(report.violations.iter().map(|v| format!("at x = {label}: {v}")));
        let largest = (0..m0).map(|i| m.total_rate(&x, i)).fold(0.0, f64::max);
        let within = build_partition(m.as_ref(), &x);
        writeln!(body, "{label},total_rate,{},{}", fmt_f64(largest), u8::from(within.is_ok())).unwrap();
        if let Err(e) = within {
            problems.push(format!("at x = {label}: {e}"));
        }
        let xs: Vec<f64> = x.iter().map(|v| v + KINK_OFFSET).collect();
        let xs_label = join(&xs, ";");
        if m.jacobians().is_some() {
            let mut worst: f64 = 0.0;
            let mut ok = true;
            for i in 0..m0 {
                let c = check_jacobians(m.as_ref(), &xs, i).map_err(|e| CliError::library("validate", e))?;
                worst = worst.max(c.max_scaled_error);
                if !c.ok {
                    ok = false;
                    problems.push(format!("at x = {xs_label}, regime {}: Jacobians disagree with finite differences", i + 1));
                }
            }
            writeln!(body, "{xs_label},jacobians,{},{}", fmt_f64(worst), u8::from(ok)).unwrap();
        }
        if m.rate_gradients().is_some() {
            let c = check_rate_gradients(m.as_ref(), &xs).map_err(|e| CliError::library("validate", e))?;
            writeln!(body, "{xs_label},rate_gradients,{},{}", fmt_f64(c.max_scaled_error), u8::from(c.ok)).unwrap();
            if !c.ok {
                problems.push(format!("at x = {xs_label}: rate gradients disagree with finite differences"));
            }
        }
    }
    if !problems.is_empty() {
        return Err(CliError::usage(format!("model `{}`: {}", m.name(), problems.join("; "))));
    }
    Ok(Outcome {
        body,
        ..Outcome::default()
    })
}

fn path_rows(body: &mut String, index: usize, p: &PathSample) {
    for k in 0..p.len() {
        writeln!(body, "{index},{},{},{}", fmt_f64(p.time(k)), join(p.state(k), ","), p.regime(k) + 1).unwrap();
    }
}

fn columns(prefix: &str, r: usize) -> String {
    (1..=r).map(|c| format!("{prefix}_{c}")).collect::<Vec<_>>().join(",")
}

/// Splits per-path results into successes and divergences; any other error
/// is fatal and names the path.
fn sort_paths<T>(results: Vec<switchdiff::Result<T>>) -> Result<(Vec<(usize, T)>, usize), CliError> {
    let mut ok = Vec::with_capacity(results.len());
    let mut aborted = 0;
    for (k, res) in results.into_iter().enumerate() {
        match res {
            Ok(v) => ok.push((k + 1, v)),
            Err(e) if e.is_divergence() => {
                eprintln!("path {}: {e}", k + 1);
                aborted += 1;
            }
            Err(e) => return Err(CliError::library(&format!("path {}", k + 1), e)),
        }
    }
    Ok((ok, aborted))
}

fn simulate(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let m = model(cfg, "smooth-rate")?;
    let (x, i) = start(cfg, m.as_ref())?;
    let g = grid(cfg)?;
    let n = paths(cfg, 1);
    let results = mc_map(n, seed(cfg), |s| simulate_path(m.as_ref(), &x, i, &g, s));
    let (done, aborted) = sort_paths(results)?;
    let mut body = format!("path,t,{},alpha\n", columns("x", m.state_dim()));
    for (k, p) in &done {
        path_rows(&mut body, *k, p);
    }
    Ok(Outcome {
        body,
        aborted,
        attempted: n,
        ..Outcome::default()
    })
}

fn coupled(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let m = model(cfg, "smooth-rate")?;
    let (x, i) = start(cfg, m.as_ref())?;
    let r = m.state_dim();
    let e = direction(cfg, r)?;
    let delta = cfg.study.deltas.get_or_insert_with(|| vec![0.1])[0];
    let xt: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + delta * b).collect();
    let g = grid(cfg)?;
    let n = paths(cfg, 1);
    let results = mc_map(n, seed(cfg), |s| simulate_coupled(m.as_ref(), &x, &xt, i, &g, s));
    let (done, aborted) = sort_paths(results)?;
    let mut body = format!("path,t,{},alpha,{},alpha_t,decoupled\n", columns("x", r), columns("xt", r));
    for (k, cp) in &done {
        let (a, b) = (cp.first(), cp.second());
        let tau = cp.tau_node().unwrap_or(usize::MAX);
        for node in 0..a.len() {
            writeln!(
                body,
                "{k},{},{},{},{},{},{}",
                fmt_f64(a.time(node)),
                join(a.state(node), ","),
                a.regime(node) + 1,
                join(b.state(node), ","),
                b.regime(node) + 1,
                u8::from(node >= tau)
            )
            .unwrap();
        }
    }
    Ok(Outcome {
        body,
        aborted,
        attempted: n,
        ..Outcome::default()
    })
}

fn lp_study(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let m = model(cfg, "markovian-linear")?;
    let (x, i) = start(cfg, m.as_ref())?;
    let sc = study_config(cfg, &[1e-1, 1e-2, 1e-3], m.state_dim())?;
    let report = lp_error_study(m.as_ref(), &x, i, &sc).map_err(|e| CliError::library("lp-study", e))?;
    let means = report.means();
    let mut checks = vec![Check::new(
        "lp-decreasing",
        means.windows(2).all(|w| w[1] < w[0]),
        format!("errors {}", join(&means, " > ")),
    )];
    if m.name() == "markovian-linear" {
        let ratio = means.last().unwrap() / means[0];
        checks.push(Check::new("lp-ratio", ratio <= 0.1, format!("final/first {} <= 0.1", fmt_f64(ratio))));
    }
    Ok(report_outcome(&report, checks))
}

fn decouple(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let m = model(cfg, "counterexample")?;
    let (x, i) = start(cfg, m.as_ref())?;
    let deltas: &[f64] = if m.name() == "counterexample" { &[0.2, 0.1, 0.05] } else { &[1e-1, 1e-2, 1e-3] };
    let sc = study_config(cfg, deltas, m.state_dim())?;
    let report =
        decoupling_probability_study(m.as_ref(), &x, i, &sc).map_err(|e| CliError::library("decouple", e))?;
    let mut checks = Vec::new();
    match m.name() {
        "counterexample" if x == [1.0] && sc.direction.as_deref() == Some(&[1.0][..]) => {
            for (delta, est) in &report.rows {
                let exact = cx_decoupling_probability(*delta, sc.horizon);
                checks.push(Check::new(
                    format!("decouple-exact delta={}", fmt_f64(*delta)),
                    (est.mean - exact).abs() <= 3.0 * est.stderr,
                    format!("{} vs {} within 3 se = {}", fmt_f64(est.mean), fmt_f64(exact), fmt_f64(3.0 * est.stderr)),
                ));
            }
            checks.push(slope_check("decouple-slope", &report, 0.9, 1.1));
        }
        "holder-rate" => {
            for (delta, est) in &report.rows {
                let events = (est.mean * est.kept() as f64).round();
                checks.push(Check::new(
                    format!("decouple-events delta={}", fmt_f64(*delta)),
                    events >= MIN_DECOUPLING_EVENTS,
                    format!("{events} events"),
                ));
            }
            checks.push(slope_check("decouple-holder-slope", &report, 0.35, 0.75));
        }
        _ => {
            let markovian = report.notes.iter().any(|n| n.starts_with("Markovian"));
            checks.push(Check::new(
                "decouple-fit",
                markovian || report.fit.is_some(),
                if markovian { "no decoupling" } else { "fit present" },
            ));
        }
    }
    Ok(report_outcome(&report, checks))
}

fn supdist(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let m = model(cfg, "smooth-rate")?;
    let (x, i) = start(cfg, m.as_ref())?;
    let sc = study_config(cfg, &[1e-1, 1e-2, 1e-3], m.state_dim())?;
    let report = sup_distance_study(m.as_ref(), &x, i, &sc).map_err(|e| CliError::library("supdist", e))?;
    let checks = vec![slope_check("supdist-slope", &report, 0.85, f64::INFINITY)];
    Ok(report_outcome(&report, checks))
}

fn dynkin(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let m = model(cfg, "user-table")?;
    let (x, i) = start(cfg, m.as_ref())?;
    let f = observable(cfg, "x2")?;
    let horizon = *cfg.study.horizon.get_or_insert(1.0);
    let dts = cfg.study.dts.get_or_insert_with(|| vec![1e-2, 5e-3]).clone();
    let n = paths(cfg, 10_000);
    let rows = dynkin_residual(m.as_ref(), f.as_ref(), &x, i, horizon, &dts, n, seed(cfg))
        .map_err(|e| CliError::library("dynkin", e))?;
    let mut body = String::from("dt,n,terminal,terminal_stderr,defect,defect_stderr,aborted\n");
    let mut checks = Vec::new();
    for row in &rows {
        writeln!(
            body,
            "{},{},{},{},{},{},{}",
            fmt_f64(row.dt),
            row.defect.n,
            fmt_f64(row.terminal.mean),
            fmt_f64(row.terminal.stderr),
            fmt_f64(row.defect.mean),
            fmt_f64(row.defect.stderr),
            row.defect.aborted
        )
        .unwrap();
        let allowance = 3.0 * row.defect.stderr + 2.0 * row.dt;
        checks.push(Check::new(
            format!("dynkin-residual dt={}", fmt_f64(row.dt)),
            row.residual() <= allowance,
            format!("{} <= {}", fmt_f64(row.residual()), fmt_f64(allowance)),
        ));
    }
    for w in rows.windows(2) {
        let halved = (w[1].dt * 2.0 - w[0].dt).abs() <= 1e-9 * w[0].dt;
        if halved && w[0].residual() > 3.0 * w[0].defect.stderr {
            let ratio = w[0].defect.mean / w[1].defect.mean;
            checks.push(Check::new(
                format!("dynkin-halving dt={}", fmt_f64(w[0].dt)),
                (1.5..=3.0).contains(&ratio),
                format!("ratio {ratio:.3} in [1.5, 3]"),
            ));
        }
    }
    let aborted = rows.iter().map(|r| r.defect.aborted).sum();
    let attempted = rows.iter().map(|r| r.defect.n).sum();
    Ok(Outcome {
        body,
        checks,
        aborted,
        attempted,
    })
}

fn feller(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let m = model(cfg, "local-lipschitz")?;
    let (x, i) = start(cfg, m.as_ref())?;
    let e = direction(cfg, m.state_dim())?;
    let f = observable(cfg, "clamp1")?;
    let levels = *cfg.study.levels.get_or_insert(8);
    let g = grid(cfg)?;
    let n = paths(cfg, 10_000);
    let s = seed(cfg);
    let xs: Vec<Vec<f64>> = (1..=levels)
        .map(|k| x.iter().zip(&e).map(|(a, b)| a + 0.5f64.powi(k as i32) * b).collect())
        .collect();
    let table = feller_gap(m.as_ref(), f.as_ref(), &x, i, &xs, &g, n, s).map_err(|e| CliError::library("feller", e))?;
    let truncation = match cfg.study.radius {
        Some(radius) => {
            let width = *cfg.study.width.get_or_insert(0.5);
            Some(
                feller_truncation_check(Arc::clone(&m), radius, width, f.as_ref(), &x, i, &xs, &g, n, s)
                    .map_err(|e| CliError::library("feller truncation", e))?,
            )
        }
        None => None,
    };
    let mut body = format!(
        "# base: mean={},stderr={}\nlevel,distance,estimate,stderr,gap,combined_stderr,paired_mean,paired_stderr",
        fmt_f64(table.base.mean),
        fmt_f64(table.base.stderr)
    );
    body.push_str(if truncation.is_some() { ",truncated_gap,allowance,agrees\n" } else { "\n" });
    for (k, row) in table.rows.iter().enumerate() {
        write!(
            body,
            "{},{},{},{},{},{},{},{}",
            k + 1,
            fmt_f64(row.distance),
            fmt_f64(row.estimate.mean),
            fmt_f64(row.estimate.stderr),
            fmt_f64(row.gap),
            fmt_f64(row.combined_stderr),
            fmt_f64(row.paired.mean),
            fmt_f64(row.paired.stderr)
        )
        .unwrap();
        if let Some(t) = &truncation {
            let t = &t[k];
            write!(body, ",{},{},{}", fmt_f64(t.truncated_gap), fmt_f64(t.allowance), u8::from(t.agrees())).unwrap();
        }
        body.push('\n');
    }
    let mut checks = vec![Check::new(
        "feller-nearest-gaps",
        table.nearest_gaps_within_noise(),
        "two nearest gaps within 3 combined se",
    )];
    if let Some(t) = &truncation {
        let bad = t.iter().filter(|r| !r.agrees()).count();
        checks.push(Check::new("feller-truncation", bad == 0, format!("{bad} disagreeing rows")));
    }
    let aborted = table.base.aborted + table.rows.iter().map(|r| r.estimate.aborted).sum::<usize>();
    let attempted = table.base.n + table.rows.iter().map(|r| r.estimate.n).sum::<usize>();
    Ok(Outcome {
        body,
        checks,
        aborted,
        attempted,
    })
}

fn estimate_row(body: &mut String, name: &str, e: &McEstimate) {
    writeln!(body, "{name},{},{},{},{}", fmt_f64(e.mean), fmt_f64(e.stderr), e.n, e.aborted).unwrap();
}

fn within(name: String, a: &McEstimate, b: &McEstimate) -> Check {
    let band = 3.0 * a.combined_stderr(b);
    Check::new(
        name,
        (a.mean - b.mean).abs() <= band,
        format!("{} vs {} within {}", fmt_f64(a.mean), fmt_f64(b.mean), fmt_f64(band)),
    )
}

/// With `check`, also runs the oracles on seeds `seed + 1..=seed + 3`.
fn grad_cm(cfg: &mut RunConfig, check: bool) -> Result<Outcome, CliError> {
    let m = model(cfg, "smooth-rate")?;
    let (x, i) = start(cfg, m.as_ref())?;
    let r = m.state_dim();
    let phi = observable(cfg, "tanh")?;
    let directions = cfg
        .study
        .directions
        .get_or_insert_with(|| {
            let mut e1 = vec![0.0; r];
            e1[0] = 1.0;
            vec![e1]
        })
        .clone();
    let h = *cfg.study.h.get_or_insert(1e-2);
    let g = grid(cfg)?;
    let n = paths(cfg, 10_000);
    let s = seed(cfg);
    let lib = |e| CliError::library("grad-cm", e);
    let est = functional_gradient(m.as_ref(), phi.as_ref(), &x, i, &g, &directions, n, s).map_err(lib)?;
    let mut body = format!(
        "# n_max={},truncated_mass={}\ncomponent,value,stderr,n,aborted\n",
        est.n_max,
        fmt_f64(est.truncated_mass)
    );
    estimate_row(&mut body, "value", &est.value);
    for (k, gk) in est.gradient.iter().enumerate() {
        estimate_row(&mut body, &format!("gradient_{}", k + 1), gk);
    }
    let mut checks = Vec::new();
    let mut aborted = est.value.aborted;
    let mut attempted = est.value.n;
    if check {
        let unit = FnObservable::new(|_: &[f64], _| 1.0, |_: &[f64], _, g: &mut [f64]| g.fill(0.0), |_: &[f64], _, h: &mut [f64]| h.fill(0.0));
        let weight = functional_value_cm(m.as_ref(), &unit, &x, i, &g, n, s + 1).map_err(lib)?;
        let direct = functional_value_direct(m.as_ref(), phi.as_ref(), &x, i, &g, n, s + 2).map_err(lib)?;
        estimate_row(&mut body, "weight", &weight);
        estimate_row(&mut body, "direct_value", &direct);
        checks.push(Check::new(
            "grad-cm-weight",
            (weight.mean - 1.0).abs() <= 3.0 * weight.stderr,
            format!("{} vs 1 within {}", fmt_f64(weight.mean), fmt_f64(3.0 * weight.stderr)),
        ));
        checks.push(within("grad-cm-value".into(), &est.value, &direct));
        for (k, (e, gk)) in directions.iter().zip(&est.gradient).enumerate() {
            let fd = fd_gradient_oracle(m.as_ref(), phi.as_ref(), &x, i, &g, h, e, n, s + 3).map_err(lib)?;
            estimate_row(&mut body, &format!("fd_gradient_{}", k + 1), &fd);
            checks.push(within(format!("grad-cm-gradient_{}", k + 1), gk, &fd));
            aborted += fd.aborted;
            attempted += fd.n;
        }
        aborted += weight.aborted + direct.aborted;
        attempted += weight.n + direct.n;
    }
    Ok(Outcome {
        body,
        checks,
        aborted,
        attempted,
    })
}

fn counterexample(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let horizon = *cfg.study.horizon.get_or_insert(1.0);
    let ns = cfg.study.n.get_or_insert_with(|| vec![10]).clone();
    let n_paths = paths(cfg, 1_000_000);
    let s = seed(cfg);
    let lib = |e| CliError::library("counterexample", e);
    let limit = cx_lower_bound_limit(horizon).map_err(lib)?;
    let mut body = String::from("n,T,estimate,stderr,lower_bound,oracle\n");
    let mut checks = Vec::new();
    for &n in &ns {
        let est = cx_gap_estimate(n, horizon, n_paths, s).map_err(lib)?;
        let bound = cx_lower_bound(n, horizon).map_err(lib)?;
        let oracle = cx_gap_oracle(n, horizon).map_err(lib)?;
        writeln!(
            body,
            "{n},{},{},{},{},{}",
            fmt_f64(horizon),
            fmt_f64(est.mean),
            fmt_f64(est.stderr),
            fmt_f64(bound),
            fmt_f64(oracle)
        )
        .unwrap();
        let band = 3.0 * est.stderr;
        checks.push(Check::new(
            format!("cx-lower-bound n={n}"),
            est.mean - band >= bound,
            format!("{} - {} >= {}", fmt_f64(est.mean), fmt_f64(band), fmt_f64(bound)),
        ));
        checks.push(Check::new(
            format!("cx-oracle n={n}"),
            (est.mean - oracle).abs() <= band,
            format!("{} vs {}", fmt_f64(est.mean), fmt_f64(oracle)),
        ));
        checks.push(Check::new(
            format!("cx-non-cauchy n={n}"),
            est.mean >= limit - band,
            format!("{} >= {} - {}", fmt_f64(est.mean), fmt_f64(limit), fmt_f64(band)),
        ));
    }
    Ok(Outcome {
        body,
        checks,
        ..Outcome::default()
    })
}

fn moment_rows(body: &mut String, dt: f64, t: &MomentTable) {
    writeln!(
        body,
        "# dt={}: constant_first={},constant_second={},bounded={}",
        fmt_f64(dt),
        fmt_f64(t.constant_first),
        fmt_f64(t.constant_second),
        t.bounded
    )
    .unwrap();
    for (time, e) in t.times.iter().zip(&t.estimates) {
        writeln!(body, "{},{},{},{},{},{}", fmt_f64(dt), fmt_f64(*time), e.n, fmt_f64(e.mean), fmt_f64(e.stderr), e.aborted)
            .unwrap();
    }
}

/// With `check`, reruns at `dt / 2` and compares the two tables.
fn lotka_moments(cfg: &mut RunConfig, check: bool) -> Result<Outcome, CliError> {
    let m = lotka_model(cfg)?;
    let (x, i) = start(cfg, &m)?;
    let horizon = *cfg.study.horizon.get_or_insert(5.0);
    let order = *cfg.lotka.m.get_or_insert(2.0);
    let dt = *cfg.lotka.dt.get_or_insert(0.01);
    let checkpoints = *cfg.lotka.checkpoints.get_or_insert(10);
    let n = paths(cfg, 10_000);
    let s = seed(cfg);
    let lib = |e| CliError::library("lotka-moments", e);
    let mut body = String::from("dt,t,n,mean,stderr,aborted\n");
    let table = lv_moment_check(&m, &x, i, order, horizon, dt, checkpoints, n, s).map_err(lib)?;
    moment_rows(&mut body, dt, &table);
    let mut aborted = table.estimates[0].aborted;
    let mut attempted = n;
    let mut checks = vec![Check::new("lotka-bounded", table.bounded, format!("dt={}", fmt_f64(dt)))];
    if check {
        let half = lv_moment_check(&m, &x, i, order, horizon, dt / 2.0, checkpoints, n, s).map_err(lib)?;
        moment_rows(&mut body, dt / 2.0, &half);
        aborted += half.estimates[0].aborted;
        attempted += n;
        let ratio = half.sup() / table.sup();
        checks.push(Check::new("lotka-bounded-half", half.bounded, format!("dt={}", fmt_f64(dt / 2.0))));
        checks.push(Check::new(
            "lotka-dt-stability",
            (ratio - 1.0).abs() <= 0.2,
            format!("sup ratio {ratio:.4} within 20%"),
        ));
    }
    checks.push(Check::new("lotka-positivity", aborted == 0, format!("{aborted} paths left the orthant")));
    Ok(Outcome {
        body,
        checks,
        aborted,
        attempted,
    })
}

fn lotka_coupled(cfg: &mut RunConfig) -> Result<Outcome, CliError> {
    let m = lotka_model(cfg)?;
    let (x, i) = start(cfg, &m)?;
    let e = direction(cfg, m.state_dim())?;
    let offsets = cfg.lotka.offsets.get_or_insert_with(|| vec![1e-1, 1e-2, 1e-3]).clone();
    let radius = *cfg.lotka.radius.get_or_insert(10.0);
    let g = grid(cfg)?;
    let n = paths(cfg, 10_000);
    let report = lv_distance_study(&m, &x, &e, &offsets, radius, i, &g, n, seed(cfg))
        .map_err(|e| CliError::library("lotka-coupled", e))?;
    let checks = vec![slope_check("lotka-coupled-slope", &report, 1.8, 2.2)];
    Ok(report_outcome(&report, checks))
}
