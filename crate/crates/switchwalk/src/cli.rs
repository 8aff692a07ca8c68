//! Scenario execution: validation first, then the experiment list, then the
//! report files. One scenario is one job; a fixed worker pool makes the
//! outputs byte-identical for any worker count.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::coeffs::presets;
use crate::engine::{simulate_switched, SimControls};
use crate::error::{Error, Result};
use crate::estimate::{self, ScalarField};
use crate::geom::Ball;
use crate::harness;
use crate::kernels;
use crate::report::{
    grid_csv, sweep_csv, trace_lines, write_atomic, CheckLine, ExperimentResult, OutputPaths,
    ScenarioReport, SweepRow,
};
use crate::rng::RngStream;
use crate::scenario::{ExperimentSpec, Scenario};
use crate::switching::SwitchGraph;
use crate::validate::{validate_class, SamplingSpec};

/// Knobs of one `run` invocation.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads; `None` = one per core.
    pub workers: Option<usize>,
    /// Override the scenario seed.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Dump up to this many switched paths from the domain center.
    pub trace_paths: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: None, seed: None, out_dir: PathBuf::from("runs"), trace_paths: 0 }
    }
}

/// Load, execute and persist a scenario. Returns the report; `overall_pass`
/// decides the process exit status.
pub fn run_scenario_file(path: &Path, opts: &RunOptions) -> Result<ScenarioReport> {
    let scenario = load_scenario(path)?;
    run_scenario(scenario, opts)
}

/// Accept either a TOML scenario or a previously written JSON report (whose
/// embedded scenario is then re-run).
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    if path.extension().map(|e| e == "json").unwrap_or(false)
        || text.trim_start().starts_with('{')
    {
        let report: ScenarioReport =
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        return Ok(report.scenario);
    }
    Scenario::from_toml(&text)
}

pub fn run_scenario(mut scenario: Scenario, opts: &RunOptions) -> Result<ScenarioReport> {
    if let Some(seed) = opts.seed {
        scenario.scenario.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let report = pool.install(|| execute(&scenario, opts))?;
    let paths = OutputPaths::new(&opts.out_dir, &scenario.scenario.name);
    write_atomic(&paths.json, report.to_json()?.as_bytes())?;
    Ok(report)
}

fn execute(scenario: &Scenario, opts: &RunOptions) -> Result<ScenarioReport> {
    let coeffs = scenario.build_coefficients()?;
    let params =
        scenario.class.to_params(scenario.scenario.dimension, scenario.scenario.levels);
    let domain = scenario.domain_ball();
    let seed = scenario.scenario.seed;
    let paths = OutputPaths::new(&opts.out_dir, &scenario.scenario.name);

    // Class validation gates every experiment.
    let mut validation = None;
    if scenario.validation.enabled {
        let sampling = SamplingSpec {
            n_points: scenario.validation.n_points,
            region: Ball { center: domain.center.clone(), radius: domain.radius + 2.0 },
            holder_const: scenario.validation.holder_const,
        };
        let vr = validate_class(&coeffs, &params, &sampling, seed)?;
        let blocked = !vr.passed && !scenario.validation.allow_failure;
        validation = Some(vr);
        if blocked {
            return Ok(ScenarioReport {
                scenario: scenario.clone(),
                validation,
                experiments: Vec::new(),
                overall_pass: false,
            });
        }
    }

    if opts.trace_paths > 0 {
        let controls = scenario.controls_for(&domain);
        let mut records = Vec::new();
        for sid in 0..opts.trace_paths {
            records.push(simulate_switched(
                &coeffs,
                &domain,
                (&domain.center, 0),
                controls,
                RngStream::new(seed ^ 0x7ace, sid),
            )?);
        }
        write_atomic(
            &paths.trace(&scenario.scenario.name),
            trace_lines(&records).as_bytes(),
        )?;
    }

    let mut experiments = Vec::new();
    for (idx, spec) in scenario.experiments.iter().enumerate() {
        let exp_seed = seed.wrapping_add(1 + idx as u64);
        let result = run_experiment(scenario, &coeffs, spec, exp_seed, &paths, idx)?;
        experiments.push(result);
    }
    let overall_pass = experiments.iter().all(|e| e.pass)
        && validation.as_ref().map(|v| v.passed || scenario.validation.allow_failure).unwrap_or(true);
    Ok(ScenarioReport { scenario: scenario.clone(), validation, experiments, overall_pass })
}

fn details<T: serde::Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).unwrap_or(serde_json::Value::Null)
}

fn run_experiment(
    scenario: &Scenario,
    coeffs: &crate::coeffs::CoefficientSet,
    spec: &ExperimentSpec,
    seed: u64,
    out: &OutputPaths,
    index: usize,
) -> Result<ExperimentResult> {
    let domain = scenario.domain_ball();
    let n_default = scenario.controls.n;
    let name = scenario.scenario.name.clone();
    let label = |suffix: &str| format!("exp{index}.{suffix}");
    let mut checks: Vec<CheckLine> = Vec::new();
    let det;

    match spec {
        ExperimentSpec::ExitTime { n, expected, max_stderr } => {
            let n = n.unwrap_or(n_default);
            let controls = scenario.controls_for(&domain);
            let est =
                harness::exit_time_estimate(coeffs, &domain, (&domain.center, 0), n, controls, seed)?;
            checks.push(CheckLine::new(
                "mean_within_3se",
                (est.mean - expected).abs() <= 3.0 * est.stderr,
                est.mean,
                *expected,
                format!("Ê = {} ± {}", est.mean, est.stderr),
            ));
            if let Some(cap) = max_stderr {
                checks.push(CheckLine::new(
                    "stderr_cap",
                    est.stderr < *cap,
                    est.stderr,
                    *cap,
                    "sample count large enough for the declared precision".into(),
                ));
            }
            det = details(&est);
        }
        ExperimentSpec::PreswitchLaw { n, alphas, expected, cross_check, dt, max_time } => {
            let n = n.unwrap_or(n_default);
            let mut controls = SimControls::free(*dt, *max_time);
            controls.theta3 = scenario.class.theta3;
            let one = ScalarField::constant(1.0);
            let mut reports = Vec::new();
            for (i, &alpha) in alphas.iter().enumerate() {
                let est = estimate::estimate_preswitch_functional(
                    coeffs,
                    0,
                    alpha,
                    &one,
                    &domain.center,
                    n,
                    controls,
                    seed ^ ((i as u64) << 8),
                )?;
                if let Some(exp) = expected {
                    let target = exp[i];
                    checks.push(CheckLine::new(
                        &format!("alpha_{alpha}_closed_form"),
                        (est.mean - target).abs() <= 3.0 * est.stderr.max(1e-12),
                        est.mean,
                        target,
                        format!("± {}", est.stderr),
                    ));
                }
                reports.push((alpha, est));
            }
            if *cross_check {
                // LHS: E[e^{-ατ₁} φ(X_{τ₁⁻})]; RHS: resolvent of (-q_ii φ).
                let alpha = 0.5;
                let phi = ScalarField::new(|x: &[f64]| 1.0 + 0.3 * x[0].cos());
                let m = coeffs.m;
                let coeffs_q = coeffs.clone();
                let weighted = ScalarField::new(move |x: &[f64]| {
                    let mut q = vec![0.0; m * m];
                    coeffs_q.switching.eval_into(x, m, &mut q);
                    -q[0] * (1.0 + 0.3 * x[0].cos())
                });
                let lhs = estimate::estimate_preswitch_functional(
                    coeffs,
                    0,
                    alpha,
                    &phi,
                    &domain.center,
                    n,
                    controls,
                    seed ^ 0xf1,
                )?;
                let rhs = estimate::estimate_resolvent(
                    coeffs,
                    0,
                    alpha,
                    &weighted,
                    &domain.center,
                    n,
                    controls,
                    seed ^ 0xf2,
                )?;
                let se = (lhs.stderr.powi(2) + rhs.stderr.powi(2)).sqrt();
                checks.push(CheckLine::new(
                    "cross_estimator_identity",
                    (lhs.mean - rhs.mean).abs() <= 3.0 * se,
                    lhs.mean,
                    rhs.mean,
                    format!("combined stderr {se}"),
                ));
                reports.push((alpha, lhs));
                reports.push((alpha, rhs));
            }
            det = details(&reports);
        }
        ExperimentSpec::Representation { n, payoff, nodes_per_radius, n_per_node, levels } => {
            let n = n.unwrap_or(n_default);
            let controls = scenario.controls_for(&domain);
            let levels: Vec<usize> =
                levels.clone().unwrap_or_else(|| (0..coeffs.m).collect());
            let rep = harness::representation_residual(
                coeffs,
                &domain,
                &levels,
                &payoff.build(),
                n,
                *nodes_per_radius,
                *n_per_node,
                controls,
                seed,
            )?;
            for e in &rep.entries {
                checks.push(CheckLine::new(
                    &format!("residual_level_{}", e.level),
                    e.residual.abs() <= 3.0 * e.combined_stderr,
                    e.residual,
                    3.0 * e.combined_stderr,
                    format!("u-h {} coupling {}", e.u_minus_h, e.coupling_term),
                ));
            }
            det = details(&rep);
        }
        ExperimentSpec::GqNorm {
            n,
            radii,
            threshold,
            contraction_max,
            neumann_order,
            nodes_per_radius,
            n_per_node,
            payoff,
        } => {
            let n = n.unwrap_or(n_default);
            let mut rows = Vec::new();
            let mut best: Option<(f64, f64)> = None;
            let mut gq_reports = Vec::new();
            for &r in radii {
                let ball = Ball::new(domain.center.clone(), r)?;
                let controls = scenario.controls_for(&ball);
                let mut probes = vec![ball.center.clone()];
                let mut p = ball.center.clone();
                p[0] += r / 2.0;
                probes.push(p);
                let gq = estimate::estimate_gq_norm(
                    coeffs,
                    &ball,
                    &probes,
                    n,
                    controls,
                    seed ^ r.to_bits(),
                )?;
                let pass = gq.value < *threshold;
                rows.push(SweepRow {
                    radius: r,
                    statistic: "gq_norm_upper".into(),
                    value: gq.value,
                    stderr: 0.0,
                    pass,
                });
                if pass && best.map(|(br, _)| r > br).unwrap_or(true) {
                    best = Some((r, gq.value));
                }
                gq_reports.push((r, gq));
            }
            checks.push(CheckLine::new(
                "exists_radius_below_threshold",
                best.is_some(),
                best.map(|(_, v)| v).unwrap_or(f64::NAN),
                *threshold,
                format!("radii swept: {radii:?}"),
            ));
            let mut neumann_details = serde_json::Value::Null;
            if let Some((r, _)) = best {
                let ball = Ball::new(domain.center.clone(), r)?;
                let controls = scenario.controls_for(&ball);
                let rep = estimate::neumann_partial_sum(
                    coeffs,
                    &ball,
                    &payoff.build(),
                    *neumann_order,
                    *nodes_per_radius,
                    *n_per_node,
                    controls,
                    seed ^ 0x2e,
                )?;
                let worst = rep
                    .contraction_ratios
                    .iter()
                    .cloned()
                    .fold(0.0f64, f64::max);
                checks.push(CheckLine::new(
                    "expansion_contracts",
                    worst < *contraction_max && !rep.contraction_ratios.is_empty(),
                    worst,
                    *contraction_max,
                    format!("term norms {:?}", rep.term_norms),
                ));
                neumann_details = details(&rep);
            }
            write_atomic(&out.csv(&name, &label("gq_sweep")), &sweep_csv(&rows)?)?;
            det = json!({ "gq": details(&gq_reports), "neumann": neumann_details });
        }
        ExperimentSpec::ExitMoment { n, radii, start_fractions, r2_min, c_expected, c_rel_tol } => {
            let n = n.unwrap_or(n_default);
            let fracs = start_fractions.clone().unwrap_or_else(|| vec![0.0]);
            let rep = harness::exit_moment_report(
                coeffs,
                &domain.center,
                radii,
                &fracs,
                n,
                seed,
            )?;
            checks.push(CheckLine::new(
                "square_law_fit",
                rep.r_squared >= *r2_min,
                rep.r_squared,
                *r2_min,
                format!("ĉ = {}", rep.c_hat),
            ));
            if let Some(c) = c_expected {
                checks.push(CheckLine::new(
                    "coefficient_matches",
                    (rep.c_hat - c).abs() <= c_rel_tol * c,
                    rep.c_hat,
                    *c,
                    format!("relative tolerance {c_rel_tol}"),
                ));
            }
            let rows: Vec<SweepRow> = rep
                .rows
                .iter()
                .map(|row| SweepRow {
                    radius: row.radius,
                    statistic: format!("mean_exit_time@{}", row.start_fraction),
                    value: row.estimate.mean,
                    stderr: row.estimate.stderr,
                    pass: true,
                })
                .collect();
            write_atomic(&out.csv(&name, &label("exit_sweep")), &sweep_csv(&rows)?)?;
            det = details(&rep);
        }
        ExperimentSpec::GreenSandwich {
            n,
            radii,
            bins_per_radius,
            central_check,
            central_slack,
            stability_tol,
        } => {
            let n = n.unwrap_or(n_default);
            let mut reports = Vec::new();
            for &r in radii {
                let ball = Ball::new(domain.center.clone(), r)?;
                let controls = scenario.controls_for(&ball);
                let rep = harness::green_sandwich_report(
                    coeffs,
                    0,
                    &ball,
                    &[ball.center.clone()],
                    *bins_per_radius,
                    n,
                    controls,
                    seed ^ r.to_bits(),
                )?;
                write_atomic(
                    &out.csv(&name, &label(&format!("occupation_grid_r{r}"))),
                    &grid_csv(&rep.grids[0])?,
                )?;
                if *central_check {
                    let mut worst: f64 = 0.0;
                    let mut failed = 0usize;
                    let probe = estimate::OccupancyGrid {
                        ball: ball.clone(),
                        bins_per_radius: *bins_per_radius,
                        values: vec![],
                        stderr: vec![],
                        n: 0,
                        mean_occupied_time: 0.0,
                        empty_fraction: 0.0,
                    };
                    for row in &rep.rows {
                        let c = probe.bin_center(row.bin);
                        if crate::geom::dist(&c, &ball.center) > 0.5 * r {
                            continue;
                        }
                        let dev = (row.ratio - 1.0).abs();
                        if dev > 3.0 * row.rel_stderr + central_slack {
                            failed += 1;
                        }
                        worst = worst.max(dev - 3.0 * row.rel_stderr);
                    }
                    checks.push(CheckLine::new(
                        &format!("central_ratios_unit_r{r}"),
                        failed == 0,
                        worst,
                        *central_slack,
                        format!("{failed} central bins outside 1 ± 3·stderr + slack"),
                    ));
                }
                reports.push((r, rep));
            }
            for pair in reports.windows(2) {
                let (ra, a) = &pair[0];
                let (rb, b) = &pair[1];
                let stable = |x: f64, y: f64| (x / y - 1.0).abs() <= *stability_tol;
                checks.push(CheckLine::new(
                    &format!("interval_stability_{ra}_{rb}"),
                    stable(a.min_ratio, b.min_ratio) && stable(a.max_ratio, b.max_ratio),
                    a.max_ratio / b.max_ratio,
                    1.0 + stability_tol,
                    format!(
                        "[{:.4},{:.4}] vs [{:.4},{:.4}]",
                        a.min_ratio, a.max_ratio, b.min_ratio, b.max_ratio
                    ),
                ));
            }
            det = details(&reports);
        }
        ExperimentSpec::ThreeGScaling { n_triples, stability_tol, n_scaling_pairs } => {
            let d = scenario.scenario.dimension;
            let ball = Ball::unit(d);
            let a = harness::three_g_sweep(d, &ball, *n_triples, seed)?;
            let b = harness::three_g_sweep(d, &ball, *n_triples, seed ^ 0x77)?;
            checks.push(CheckLine::new(
                "three_g_sweep_stable",
                (a.max_ratio / b.max_ratio - 1.0).abs() <= *stability_tol,
                a.max_ratio,
                b.max_ratio,
                format!("two independent {n_triples}-triple sweeps"),
            ));
            // Exact scaling identity of the ball kernel for d = 2 and 3.
            let mut worst = 0.0f64;
            for dd in [2usize, 3] {
                let base = Ball::unit(dd);
                let mut rng = RngStream::new(seed ^ 0x5ca1e, dd as u64).rng();
                for _ in 0..*n_scaling_pairs {
                    use rand::Rng;
                    let lambda: f64 = 0.1 + 0.9 * rng.random::<f64>();
                    let scaled = base.scaled(lambda);
                    let mut x = vec![0.0; dd];
                    let mut y = vec![0.0; dd];
                    crate::geom::sample_in_ball(&mut rng, &scaled, &mut x);
                    crate::geom::sample_in_ball(&mut rng, &scaled, &mut y);
                    if crate::geom::dist(&x, &y) < 1e-9 {
                        continue;
                    }
                    let lhs = kernels::green_ball(dd, &scaled, &x, &y)?;
                    let xs: Vec<f64> = x.iter().map(|c| c / lambda).collect();
                    let ys: Vec<f64> = y.iter().map(|c| c / lambda).collect();
                    let rhs = lambda.powi(2 - dd as i32)
                        * kernels::green_ball(dd, &base, &xs, &ys)?;
                    worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1.0));
                }
            }
            checks.push(CheckLine::new(
                "kernel_scaling_identity",
                worst <= 1e-12,
                worst,
                1e-12,
                format!("{n_scaling_pairs} random pairs, d = 2 and 3"),
            ));
            det = json!({ "sweep_a": details(&a), "sweep_b": details(&b), "scaling_worst": worst });
        }
        ExperimentSpec::Combinatorics {} => {
            det = run_combinatorics(coeffs, seed, &mut checks)?;
        }
        ExperimentSpec::Harnack { n, radii, payoff, per_level_bound, cross_radius_factor } => {
            let n = n.unwrap_or(n_default);
            let payoff = payoff.build();
            let mut reports = Vec::new();
            for &r in radii {
                let ball = Ball::new(domain.center.clone(), r)?;
                let controls = scenario.controls_for(&ball);
                let rep =
                    harness::harnack_report(coeffs, &ball, &payoff, n, controls, seed ^ r.to_bits())?;
                if let Some(bound) = per_level_bound {
                    for (k, ratio) in rep.per_level_ratio.iter().enumerate() {
                        if let Some(ratio) = ratio {
                            // Delta-method slack from the extrema stderrs.
                            let se = ratio_stderr(&rep, k);
                            checks.push(CheckLine::new(
                                &format!("per_level_{k}_bound_r{r}"),
                                *ratio <= bound + 3.0 * se,
                                *ratio,
                                *bound,
                                format!("3·stderr slack {}", 3.0 * se),
                            ));
                        }
                    }
                }
                reports.push(rep);
            }
            for pair in reports.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                let within = |x: f64, y: f64| {
                    x.is_finite() && y.is_finite() && x / y <= *cross_radius_factor && y / x <= *cross_radius_factor
                };
                for k in 0..coeffs.m {
                    if let (Some(ra), Some(rb)) = (a.per_level_ratio[k], b.per_level_ratio[k]) {
                        checks.push(CheckLine::new(
                            &format!("per_level_{k}_scale_stable_{}_{}", a.radius, b.radius),
                            within(ra, rb),
                            ra,
                            rb,
                            format!("factor tolerance {cross_radius_factor}"),
                        ));
                    }
                }
                checks.push(CheckLine::new(
                    &format!("weighted_cross_scale_stable_{}_{}", a.radius, b.radius),
                    within(a.weighted_max_cross, b.weighted_max_cross),
                    a.weighted_max_cross,
                    b.weighted_max_cross,
                    format!("factor tolerance {cross_radius_factor}"),
                ));
                if let (Some(fa), Some(fb)) = (a.full_rank_stat, b.full_rank_stat) {
                    checks.push(CheckLine::new(
                        &format!("full_rank_scale_stable_{}_{}", a.radius, b.radius),
                        within(fa, fb),
                        fa,
                        fb,
                        format!("factor tolerance {cross_radius_factor}"),
                    ));
                }
            }
            let rows: Vec<SweepRow> = reports
                .iter()
                .flat_map(|rep| {
                    rep.per_level_ratio.iter().enumerate().filter_map(move |(k, v)| {
                        v.map(|v| SweepRow {
                            radius: rep.radius,
                            statistic: format!("per_level_ratio_{k}"),
                            value: v,
                            stderr: 0.0,
                            pass: true,
                        })
                    })
                })
                .collect();
            write_atomic(&out.csv(&name, &label("harnack_sweep")), &sweep_csv(&rows)?)?;
            det = details(&reports);
        }
        ExperimentSpec::Holder { n, payoff, n_separations, slope_min } => {
            let n = n.unwrap_or(n_default);
            let controls = scenario.controls_for(&domain);
            let rep = harness::holder_report(
                coeffs,
                &domain,
                &payoff.build(),
                *n_separations,
                n,
                controls,
                seed,
            )?;
            checks.push(CheckLine::new(
                "conclusive",
                !rep.inconclusive,
                rep.n_pairs_used as f64,
                3.0,
                "pairs clearing 5× the combined error".into(),
            ));
            if !rep.inconclusive {
                checks.push(CheckLine::new(
                    "slope_positive",
                    rep.slope > 0.0,
                    rep.slope,
                    0.0,
                    format!("intercept {}", rep.intercept),
                ));
                if let Some(min) = slope_min {
                    checks.push(CheckLine::new(
                        "slope_floor",
                        rep.slope >= *min,
                        rep.slope,
                        *min,
                        String::new(),
                    ));
                }
            }
            det = details(&rep);
        }
        ExperimentSpec::Scaling { n, lambda, sigma_tol } => {
            let n = n.unwrap_or(n_default);
            let rep = harness::scaling_report(coeffs, *lambda, &domain, n, seed)?;
            checks.push(CheckLine::new(
                "pipelines_agree",
                rep.max_standardized_discrepancy <= *sigma_tol,
                rep.max_standardized_discrepancy,
                *sigma_tol,
                format!("λ = {lambda}"),
            ));
            det = details(&rep);
        }
        ExperimentSpec::LevyExit { n, bins_per_radius, payoff } => {
            let n = n.unwrap_or(n_default);
            let controls = scenario.controls_for(&domain);
            let rep = harness::levy_exit_check(
                coeffs,
                0,
                &domain,
                &domain.center,
                &payoff.build(),
                *bins_per_radius,
                n,
                controls,
                seed,
            )?;
            checks.push(CheckLine::new(
                "jump_exit_identity",
                rep.discrepancy.abs() <= 3.0 * rep.combined_stderr,
                rep.discrepancy,
                3.0 * rep.combined_stderr,
                format!("sampled {} vs quadrature {}", rep.sampled.mean, rep.quadrature),
            ));
            det = details(&rep);
        }
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(ExperimentResult { kind: spec.kind_name().into(), pass, checks, details: det })
}

fn ratio_stderr(rep: &harness::HarnackReport, level: usize) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    let mut lo_se = 0.0;
    let mut hi_se = 0.0;
    for row in &rep.values {
        let e = &row[level];
        if e.mean <= 3.0 * e.stderr || e.mean <= 0.0 {
            continue;
        }
        if e.mean < lo {
            lo = e.mean;
            lo_se = e.stderr;
        }
        if e.mean > hi {
            hi = e.mean;
            hi_se = e.stderr;
        }
    }
    if !lo.is_finite() || hi <= 0.0 {
        return 0.0;
    }
    let ratio = hi / lo;
    ratio * ((hi_se / hi).powi(2) + (lo_se / lo).powi(2)).sqrt()
}

fn run_combinatorics(
    coeffs: &crate::coeffs::CoefficientSet,
    seed: u64,
    checks: &mut Vec<CheckLine>,
) -> Result<serde_json::Value> {
    use rand::Rng;
    // Path-weight sums against the enumeration oracle, exactly, on random
    // integer-weight graphs.
    let mut rng = RngStream::new(seed ^ 0xc0b, 0).rng();
    let mut mismatches = 0usize;
    let mut tested = 0usize;
    for _ in 0..100 {
        let m = rng.random_range(2..=4usize);
        let mut q = vec![0.0; m * m];
        for k in 0..m {
            for l in 0..m {
                if k != l {
                    q[k * m + l] = rng.random_range(0..=3) as f64;
                }
            }
        }
        let g = SwitchGraph::new(m, q)?;
        for n in 1..=6usize {
            let a_n = g.path_weight_sum(n)?;
            for k in 0..m {
                for l in 0..m {
                    let brute: f64 = g
                        .enumerate_paths(n, k, l)?
                        .iter()
                        .map(|p| p.windows(2).map(|e| g.weight(e[0], e[1])).product::<f64>())
                        .sum();
                    tested += 1;
                    if a_n[k * m + l] != brute {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    checks.push(CheckLine::new(
        "path_sums_match_enumeration",
        mismatches == 0,
        mismatches as f64,
        0.0,
        format!("{tested} entries compared exactly"),
    ));
    // Two-level closed form H₀₁(s) = s/(1 - s²) at s = 0.1.
    let g2 = SwitchGraph::new(2, vec![0.0, 1.0, 1.0, 0.0])?;
    let h = g2.h_series(0.1, 1.0, 1e-14)?;
    let closed = 0.1 / (1.0 - 0.01);
    checks.push(CheckLine::new(
        "two_level_series_closed_form",
        (h.get(0, 1) - closed).abs() <= 1e-10,
        h.get(0, 1),
        closed,
        "s = 0.1".into(),
    ));
    // Entries stay below 2 on the admissible range for the scenario's own
    // bound matrix (when it has edges) and for random graphs.
    let mut below_two = true;
    let mut graphs = vec![];
    if let Ok(g) = coeffs.switch_graph() {
        if g.q0_min().is_some() {
            graphs.push(g);
        }
    }
    for _ in 0..10 {
        let m = rng.random_range(2..=4usize);
        let mut q = vec![0.0; m * m];
        for k in 0..m {
            for l in 0..m {
                if k != l {
                    q[k * m + l] = rng.random::<f64>() * 2.0;
                }
            }
        }
        graphs.push(SwitchGraph::new(m, q)?);
    }
    for g in &graphs {
        let theta5 = g.q0_off.iter().cloned().fold(0.0f64, f64::max).max(1e-9);
        let s_max = g.admissible_s_max(theta5);
        for frac in [0.25, 0.5, 1.0] {
            let h = g.h_series(frac * s_max, theta5, 1e-12)?;
            if h.values.iter().any(|&v| v >= 2.0) {
                below_two = false;
            }
        }
    }
    checks.push(CheckLine::new(
        "series_below_two_on_admissible_range",
        below_two,
        if below_two { 1.0 } else { 0.0 },
        1.0,
        format!("{} graphs swept", graphs.len()),
    ));
    // Scenario graph classification for the report.
    let graph = coeffs.switch_graph()?;
    let reach = graph.reachability();
    Ok(json!({
        "strictly_irreducible": graph.is_strictly_irreducible(),
        "irreducible": graph.is_irreducible(),
        "reachability": details(&reach),
    }))
}

/// Print the preset catalog: field presets plus the whole-operator bundles.
pub fn list_presets() -> String {
    let mut out = String::new();
    out.push_str("preset catalog (id | kind | parameters | satisfied conditions)\n");
    for p in presets::catalog() {
        out.push_str(&format!("  {:22} | {:10} | {:28} | {}\n", p.id, p.kind, p.params, p.satisfies));
    }
    out
}

/// Parse a scenario and run the class validation only.
pub fn validate_scenario_file(path: &Path) -> Result<crate::validate::ValidationReport> {
    let scenario = load_scenario(path)?;
    let coeffs = scenario.build_coefficients()?;
    let params =
        scenario.class.to_params(scenario.scenario.dimension, scenario.scenario.levels);
    let domain = scenario.domain_ball();
    let sampling = SamplingSpec {
        n_points: scenario.validation.n_points,
        region: Ball { center: domain.center.clone(), radius: domain.radius + 2.0 },
        holder_const: scenario.validation.holder_const,
    };
    validate_class(&coeffs, &params, &sampling, scenario.scenario.seed)
}

/// Default output directory: the env override or `runs/`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os("SWITCHWALK_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}
