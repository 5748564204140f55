//! The experiment families and their shared sweep machinery.

use std::f64::consts::PI;

use ecd_core::cdfield::{ground_state, ControlSystem};
use ecd_core::ecd::{snap_omega, synth_su2_first_order, synth_su2_third_order, synth_three_level_exact, synth_two_qubit};
use ecd_core::ecd::{ECDSchedule, Mode, Wave};
use ecd_core::engine::{
    evolve_fixed, fit_power_law, infidelity, integral_norm, max_omega_for_budget, moving_average, propagate,
    propagate_best_effort, scale_strength, strength, tail_average, Drive, PropagationOptions, Trajectory,
};
use ecd_core::linalg::{inner, pauli, CMatrix, CVector, NormConvention, C64};
use ecd_core::models::{
    lz_formula, lzm_fcd, two_qubit_decoupled_states, two_qubit_fcd, ModelKind, ModelParams,
};
use ecd_core::quad::UnitRule;
use log::{info, warn};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, ExperimentKind, StrengthReference, SynthesisOrder};
use crate::error::LabError;
use crate::results::{ResultSet, Row, Series};

type LabResult<T> = Result<T, LabError>;

/// Settings shared by every experiment, resolved from a config.
#[derive(Clone, Debug)]
pub struct Context {
    pub opts: PropagationOptions,
    pub convention: NormConvention,
    pub reference: StrengthReference,
    pub samples: usize,
    pub output_points: usize,
    pub smoothing_window: usize,
    pub tail_fraction: f64,
}

impl Context {
    pub fn from_config(cfg: &ExperimentConfig) -> LabResult<Self> {
        let d = PropagationOptions::default();
        let opts = PropagationOptions {
            steps_per_period: cfg.steps_per_period.unwrap_or(d.steps_per_period),
            min_steps: cfg.min_steps.unwrap_or(d.min_steps),
            cert_tol: cfg.cert_tol.unwrap_or(d.cert_tol),
            max_refinements: d.max_refinements,
        };
        opts.validate().map_err(|e| LabError::Config(e.to_string()))?;
        Ok(Self {
            opts,
            convention: cfg.convention(),
            reference: cfg.strength_reference(),
            samples: cfg.samples.unwrap_or(1000),
            output_points: cfg.output_points.unwrap_or(1001),
            smoothing_window: cfg.smoothing_window.unwrap_or(20),
            tail_fraction: cfg.tail_fraction.unwrap_or(0.1),
        })
    }
}

/// Runs the configured experiment on the current rayon pool.
pub fn run(cfg: &ExperimentConfig) -> LabResult<ResultSet> {
    cfg.validate()?;
    let ctx = Context::from_config(cfg)?;
    info!("running {} ({} convention)", cfg.kind(), ctx.convention);
    let mut out = match cfg.kind() {
        ExperimentKind::LzmDynamics => lzm_dynamics(cfg, &ctx),
        ExperimentKind::EcdDynamics => ecd_dynamics(cfg, &ctx),
        ExperimentKind::StandaloneSweep => duration_sweep(cfg, &ctx, Mode::Standalone),
        ExperimentKind::OntopSweep => duration_sweep(cfg, &ctx, Mode::OnTop),
        ExperimentKind::IntnormSweep => intnorm_sweep(cfg, &ctx),
        ExperimentKind::TwoQubit => two_qubit_experiment(cfg, &ctx),
        ExperimentKind::ThreeLevel => three_level_experiment(cfg, &ctx),
        ExperimentKind::Robustness => robustness_sweep(cfg, &ctx),
        ExperimentKind::ScalingOrder => scaling_order_experiment(cfg, &ctx),
    }?;
    out.sort_rows();
    Ok(out)
}

/// Runs on a dedicated pool with `threads` workers (0 = rayon default).
pub fn run_with_threads(cfg: &ExperimentConfig, threads: usize) -> LabResult<ResultSet> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| run(cfg))
}

fn model_of(cfg: &ExperimentConfig, default: ModelKind) -> ModelKind {
    cfg.model.map(Into::into).unwrap_or(default)
}

fn params_of(cfg: &ExperimentConfig, model: ModelKind, epsilon: f64, tau: f64) -> LabResult<ModelParams> {
    let mut p = ModelParams::new(cfg.epsilon.unwrap_or(epsilon), cfg.tau.unwrap_or(tau));
    if model == ModelKind::ThreeLevel {
        p = p.with_d(cfg.d.unwrap_or(2.5));
    }
    p.validate().map_err(|e| LabError::Config(e.to_string()))?;
    Ok(p)
}

fn mode_of(cfg: &ExperimentConfig, default: Mode) -> Mode {
    cfg.mode.map(Into::into).unwrap_or(default)
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + k as f64 * step).collect()
}

fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
}

/// Output grid with `points_per_period` samples per oscillation period, or `min_points` overall.
fn output_grid(min_points: usize, n_periods: usize) -> Vec<f64> {
    let per = if n_periods == 0 { 1 } else { min_points.div_ceil(n_periods).max(1) };
    let n = (per * n_periods.max(1)).max(min_points.saturating_sub(1)).max(1);
    let n = if n_periods > 0 { n.div_ceil(n_periods) * n_periods } else { n };
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

/// E–CD schedule for a model with the recipe matching its algebra.
pub fn ecd_template(
    model: ModelKind,
    sys: &ControlSystem,
    params: &ModelParams,
    omega: f64,
    mode: Mode,
    order: SynthesisOrder,
) -> ecd_core::Result<ECDSchedule> {
    match (model, order) {
        (ModelKind::Lzm, SynthesisOrder::First) => synth_su2_first_order(sys, lzm_fcd(params), omega, (1, 0), mode),
        (ModelKind::Lzm, SynthesisOrder::Third) => synth_su2_third_order(sys, lzm_fcd(params), omega, (1, 0), mode),
        (ModelKind::TwoQubit, SynthesisOrder::First) => synth_two_qubit(sys, two_qubit_fcd(params), omega, mode),
        (ModelKind::ThreeLevel, SynthesisOrder::First) => synth_three_level_exact(sys, omega, mode),
        (m, SynthesisOrder::Third) => Err(ecd_core::Error::InvalidArgument(format!(
            "third-order synthesis is only available for the su(2) model, not {}",
            m.name()
        ))),
    }
}

/// S(H) measured on the configured reference operator.
pub fn base_strength(ctx: &Context, model: ModelKind, sys: &ControlSystem) -> f64 {
    let s = strength(sys, ctx.convention, ctx.samples);
    scale_strength(s, ctx.reference.factor(model), ctx.convention)
}

/// ω and N_T for a single run: explicit N_T, explicit ω (snapped), or the largest ω within budget k.
fn choose_omega(
    cfg: &ExperimentConfig,
    ctx: &Context,
    model: ModelKind,
    sys: &ControlSystem,
    params: &ModelParams,
    order: SynthesisOrder,
    default_periods: Option<usize>,
) -> LabResult<(f64, usize)> {
    let tau = params.tau;
    if let Some(n) = cfg.n_periods.or(if cfg.omega.is_none() && cfg.k.is_none() { default_periods } else { None }) {
        return Ok((2.0 * PI * n as f64 / tau, n));
    }
    if let Some(w) = cfg.omega {
        return Ok(snap_omega(w, tau)?);
    }
    let k = cfg.k.as_ref().and_then(|ks| ks.first().copied()).unwrap_or(1.0);
    let sb = base_strength(ctx, model, sys);
    let template = |w: f64| ecd_template(model, sys, params, w, Mode::Standalone, order);
    let b = max_omega_for_budget(&template, tau, sb, k, ctx.convention, ctx.samples)?;
    if b.n_periods < 1 {
        return Err(ecd_core::Error::BudgetInfeasible(format!("k = {k} at tau = {tau} fits no full period")).into());
    }
    Ok((b.omega, b.n_periods))
}

fn order_of(cfg: &ExperimentConfig) -> SynthesisOrder {
    cfg.synthesis.unwrap_or(SynthesisOrder::First)
}

fn basis_population_series(prefix: &str, t: &Trajectory) -> Vec<Series> {
    let dim = t.populations.first().map_or(0, Vec::len);
    (0..dim)
        .map(|k| {
            let ys: Vec<f64> = t.populations.iter().map(|p| p[k]).collect();
            Series::new(&format!("{prefix}population_{k}"), "s", &format!("population_{k}"), &t.s_grid, &ys)
        })
        .collect()
}

fn ground_population_series(name: &str, sys: &ControlSystem, grid: &[f64]) -> LabResult<Vec<Series>> {
    let dim = sys.dim();
    let mut cols = vec![Vec::with_capacity(grid.len()); dim];
    for &s in grid {
        let g = ground_state(sys, s)?;
        for (k, col) in cols.iter_mut().enumerate() {
            col.push(g[k].norm_sqr());
        }
    }
    Ok(cols
        .iter()
        .enumerate()
        .map(|(k, ys)| Series::new(&format!("{name}_{k}"), "s", &format!("population_{k}"), grid, ys))
        .collect())
}

fn adiabatic_row(ctx: &Context, model: ModelKind, sys: &ControlSystem, curve: &str, value: f64) -> LabResult<Row> {
    let psi0 = ground_state(sys, 0.0)?;
    let t = propagate_best_effort(sys, &psi0, &ctx.opts, &[1.0])?;
    Ok(Row {
        infidelity: t.final_infidelity(),
        strength_base: base_strength(ctx, model, sys),
        strength_corr: 0.0,
        integral_norm: integral_norm(sys, ctx.convention, ctx.samples),
        n_periods: 0,
        cert_delta: t.cert_delta,
        certified: t.certified(ctx.opts.cert_tol),
        ..Row::new(curve, value)
    })
}

fn ecd_row(ctx: &Context, sched: &ECDSchedule, strength_base: f64, curve: &str, value: f64) -> LabResult<Row> {
    let psi0 = ground_state(sched.base(), 0.0)?;
    let t = propagate_best_effort(sched, &psi0, &ctx.opts, &[1.0])?;
    Ok(Row {
        infidelity: t.final_infidelity(),
        strength_base,
        strength_corr: strength(&sched.with_mode(Mode::Standalone), ctx.convention, ctx.samples),
        integral_norm: integral_norm(sched, ctx.convention, ctx.samples),
        n_periods: sched.n_periods(),
        cert_delta: t.cert_delta,
        certified: t.certified(ctx.opts.cert_tol),
        ..Row::new(curve, value)
    })
}

/// Smallest x after which every certified point of the curve stays at or below `target`.
pub fn sustained_threshold(points: &[(f64, f64)], target: f64) -> Option<f64> {
    let mut best = None;
    for &(x, y) in points.iter().rev() {
        if y <= target {
            best = Some(x);
        } else {
            break;
        }
    }
    best
}

fn lzm_dynamics(cfg: &ExperimentConfig, ctx: &Context) -> LabResult<ResultSet> {
    let model = model_of(cfg, ModelKind::Lzm);
    let params = params_of(cfg, model, 20.0, 20.0)?;
    let sys = model.system(&params)?;
    let grid = output_grid(ctx.output_points, 0);
    let t = propagate(&sys, &ground_state(&sys, 0.0)?, &ctx.opts, &grid)?;

    let mut out = ResultSet::default();
    out.rows.push(Row {
        infidelity: t.final_infidelity(),
        strength_base: base_strength(ctx, model, &sys),
        integral_norm: integral_norm(&sys, ctx.convention, ctx.samples),
        cert_delta: t.cert_delta,
        ..Row::new("tau[adiabatic]", params.tau)
    });
    let tail = tail_average(&t.infidelity_series, ctx.tail_fraction);
    out.put("model", model.name());
    out.put("epsilon", params.epsilon);
    out.put("tau", params.tau);
    out.put("final_infidelity", t.final_infidelity());
    out.put("tail_average", tail);
    out.put("tail_fraction", ctx.tail_fraction);
    out.put("steps", t.steps);
    if model == ModelKind::Lzm {
        let p = lz_formula(&params);
        out.put("lz_formula", p);
        out.put("tail_relative_error", (tail - p).abs() / p);
    }
    out.series.push(Series::new("infidelity", "s", "infidelity", &t.s_grid, &t.infidelity_series));
    out.series.extend(basis_population_series("", &t));
    out.series.extend(ground_population_series("adiabatic_population", &sys, &grid)?);
    Ok(out)
}

fn ecd_dynamics(cfg: &ExperimentConfig, ctx: &Context) -> LabResult<ResultSet> {
    let model = model_of(cfg, ModelKind::Lzm);
    let params = params_of(cfg, model, 20.0, 20.0)?;
    let sys = model.system(&params)?;
    let order = order_of(cfg);
    let default_periods = (2.0 * params.tau).round().max(1.0) as usize;
    let (omega, n) = choose_omega(cfg, ctx, model, &sys, &params, order, Some(default_periods))?;
    let sched = ecd_template(model, &sys, &params, omega, mode_of(cfg, Mode::Standalone), order)?;
    let grid = output_grid(ctx.output_points, n);
    let t = propagate(&sched, &ground_state(&sys, 0.0)?, &ctx.opts, &grid)?;

    let sb = base_strength(ctx, model, &sys);
    let mut out = ResultSet::default();
    let mut row = ecd_row(ctx, &sched, sb, "tau[ecd]", params.tau)?;
    row.infidelity = t.final_infidelity();
    row.cert_delta = t.cert_delta;
    row.certified = true;
    out.rows.push(row.clone());

    let per = (grid.len() - 1) / n;
    let strobe: Vec<(f64, f64)> = (0..=n).map(|k| (grid[k * per], t.infidelity_series[k * per])).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = strobe.iter().copied().unzip();
    out.put("model", model.name());
    out.put("mode", sched.mode().as_str());
    out.put("omega", omega);
    out.put("n_periods", n);
    out.put("final_infidelity", t.final_infidelity());
    out.put("strength_base", sb);
    out.put("strength_corr", row.strength_corr);
    out.put("max_stroboscopic_infidelity", ys.iter().copied().fold(0.0, f64::max));
    out.put("max_infidelity", t.infidelity_series.iter().copied().fold(0.0, f64::max));
    out.series.push(Series::new("infidelity", "s", "infidelity", &t.s_grid, &t.infidelity_series));
    out.series.push(Series::new("stroboscopic_infidelity", "s", "infidelity", &xs, &ys));
    out.series.extend(basis_population_series("", &t));
    out.series.extend(ground_population_series("adiabatic_population", &sys, &grid)?);
    Ok(out)
}

fn k_label(k: f64) -> String {
    format!("tau[k={k}]")
}

enum SweepTask {
    Adiabatic(f64),
    Corrected(f64, f64),
}

fn duration_sweep(cfg: &ExperimentConfig, ctx: &Context, mode: Mode) -> LabResult<ResultSet> {
    let model = model_of(cfg, ModelKind::Lzm);
    let params = params_of(cfg, model, 20.0, 1.0)?;
    let order = order_of(cfg);
    let ks = cfg.k.clone().unwrap_or_else(|| vec![1.0, 0.5, 0.25]);
    let step = cfg.tau_step.unwrap_or(0.25);
    let lo = cfg.tau_min.unwrap_or(step);
    let ecd_hi = cfg.tau_max.unwrap_or(30.0);
    let ad_hi = cfg.adiabatic_tau_max.unwrap_or(150.0).max(ecd_hi);
    let target = cfg.infidelity_target.unwrap_or(if mode == Mode::OnTop { 1e-4 } else { 1e-3 });

    let mut tasks: Vec<SweepTask> = grid(lo, ad_hi, step).into_iter().map(SweepTask::Adiabatic).collect();
    for &k in &ks {
        tasks.extend(grid(lo, ecd_hi, step).into_iter().map(|tau| SweepTask::Corrected(k, tau)));
    }
    let rows: Vec<Option<Row>> = tasks
        .par_iter()
        .map(|task| -> LabResult<Option<Row>> {
            match *task {
                SweepTask::Adiabatic(tau) => {
                    let sys = model.system(&params.with_tau(tau))?;
                    adiabatic_row(ctx, model, &sys, "tau[adiabatic]", tau).map(Some)
                }
                SweepTask::Corrected(k, tau) => {
                    let p = params.with_tau(tau);
                    let sys = model.system(&p)?;
                    let sb = base_strength(ctx, model, &sys);
                    let template = |w: f64| ecd_template(model, &sys, &p, w, Mode::Standalone, order);
                    let choice = match max_omega_for_budget(&template, tau, sb, k, ctx.convention, ctx.samples) {
                        Ok(c) if c.n_periods >= 1 => c,
                        Ok(_) | Err(ecd_core::Error::BudgetInfeasible(_)) => return Ok(None),
                        Err(e) => return Err(e.into()),
                    };
                    let sched = ecd_template(model, &sys, &p, choice.omega, mode, order)?;
                    ecd_row(ctx, &sched, sb, &k_label(k), tau).map(Some)
                }
            }
        })
        .collect::<LabResult<Vec<_>>>()?;
    let skipped = rows.iter().filter(|r| r.is_none()).count();

    let mut out = ResultSet::default();
    out.rows = rows.into_iter().flatten().collect();
    out.sort_rows();
    let smooth = mode == Mode::OnTop;
    let mut curves = vec!["tau[adiabatic]".to_string()];
    curves.extend(ks.iter().map(|&k| k_label(k)));
    let mut thresholds = serde_json::Map::new();
    for name in &curves {
        let pts: Vec<(f64, f64)> = out.curve(name).filter(|r| r.certified).map(|r| (r.value, r.infidelity)).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        let ys = if smooth { moving_average(&ys, ctx.smoothing_window) } else { ys };
        let stem = name.replace("tau[", "").replace(']', "").replace('=', "");
        out.series.push(Series::new(&format!("infidelity_{stem}"), "tau", "infidelity", &xs, &ys));
        let pts: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        thresholds.insert(name.clone(), json!(sustained_threshold(&pts, target)));
    }
    let tau_ad = thresholds.get("tau[adiabatic]").and_then(|v| v.as_f64());
    let mut speedups = serde_json::Map::new();
    for &k in &ks {
        let tk = thresholds.get(&k_label(k)).and_then(|v| v.as_f64());
        speedups.insert(k_label(k), json!(tau_ad.zip(tk).map(|(a, b)| a / b)));
    }
    let sys = model.system(&params)?;
    let raw = strength(&sys, ctx.convention, ctx.samples);
    out.put("model", model.name());
    out.put("mode", mode.as_str());
    out.put("epsilon", params.epsilon);
    out.put("infidelity_target", target);
    out.put("smoothed", smooth);
    out.put("smoothing_window", if smooth { ctx.smoothing_window } else { 1 });
    out.put("strength_base_hamiltonian", raw);
    out.put(
        "strength_base_bracket",
        scale_strength(raw, StrengthReference::Bracket.factor(model), ctx.convention),
    );
    out.put("tau_required", thresholds);
    out.put("speedup", speedups);
    out.put("skipped_infeasible", skipped);
    out.put("uncertified_rows", out.rows.iter().filter(|r| !r.certified).count());
    Ok(out)
}

/// Linear interpolation on a curve sorted by x; `None` outside its range.
fn interpolate(curve: &[(f64, f64)], x: f64) -> Option<f64> {
    let i = curve.partition_point(|p| p.0 < x);
    if i == 0 {
        return (curve.first()?.0 == x).then(|| curve[0].1);
    }
    if i == curve.len() {
        return None;
    }
    let (x0, y0) = curve[i - 1];
    let (x1, y1) = curve[i];
    Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

fn intnorm_sweep(cfg: &ExperimentConfig, ctx: &Context) -> LabResult<ResultSet> {
    let model = model_of(cfg, ModelKind::Lzm);
    let step = cfg.tau_step.unwrap_or(0.25);
    let lo = cfg.tau_min.unwrap_or(step);
    let params = params_of(cfg, model, 40.0, lo)?;
    let hi = cfg.adiabatic_tau_max.or(cfg.tau_max).unwrap_or(200.0);
    let ecd_tau = params.tau;
    let periods: Vec<usize> = cfg.n_periods_list.clone().unwrap_or_else(|| (1..=60).collect());
    let order = order_of(cfg);
    let mode = mode_of(cfg, Mode::Standalone);

    let adiabatic: Vec<Row> = grid(lo, hi, step)
        .par_iter()
        .map(|&tau| adiabatic_row(ctx, model, &model.system(&params.with_tau(tau))?, "tau[adiabatic]", tau))
        .collect::<LabResult<_>>()?;
    let sys = model.system(&params)?;
    let sb = base_strength(ctx, model, &sys);
    let corrected: Vec<Row> = periods
        .par_iter()
        .map(|&n| {
            let sched = ecd_template(model, &sys, &params, 2.0 * PI * n as f64 / ecd_tau, mode, order)?;
            ecd_row(ctx, &sched, sb, "n_periods[ecd]", n as f64)
        })
        .collect::<LabResult<_>>()?;

    let mut ad_curve: Vec<(f64, f64)> =
        adiabatic.iter().filter(|r| r.certified).map(|r| (r.integral_norm, r.infidelity)).collect();
    ad_curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut compared = 0;
    let mut below = 0;
    let mut worst_ratio: f64 = 0.0;
    for r in corrected.iter().filter(|r| r.certified) {
        if let Some(ad) = interpolate(&ad_curve, r.integral_norm) {
            compared += 1;
            if r.infidelity < ad {
                below += 1;
            }
            worst_ratio = worst_ratio.max(r.infidelity / ad);
        }
    }
    let mut out = ResultSet::default();
    let (xs, ys): (Vec<f64>, Vec<f64>) = ad_curve.iter().copied().unzip();
    out.series.push(Series::new("infidelity_adiabatic", "integral_norm", "infidelity", &xs, &ys));
    let ecd: Vec<(f64, f64)> = corrected.iter().map(|r| (r.integral_norm, r.infidelity)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = ecd.iter().copied().unzip();
    out.series.push(Series::new("infidelity_ecd", "integral_norm", "infidelity", &xs, &ys));
    out.rows = adiabatic.into_iter().chain(corrected).collect();
    out.put("model", model.name());
    out.put("epsilon", params.epsilon);
    out.put("ecd_tau", ecd_tau);
    out.put("mode", mode.as_str());
    out.put("compared_points", compared);
    out.put("points_below_adiabatic", below);
    out.put("ecd_below_adiabatic", compared > 0 && below == compared);
    out.put("worst_infidelity_ratio", worst_ratio);
    Ok(out)
}

fn equal_infidelity_scan(
    ctx: &Context,
    model: ModelKind,
    params: &ModelParams,
    taus: &[f64],
) -> LabResult<Vec<Row>> {
    taus.par_iter()
        .map(|&tau| adiabatic_row(ctx, model, &model.system(&params.with_tau(tau))?, "tau[adiabatic_scan]", tau))
        .collect()
}

fn overlap_series(name: &str, t: &Trajectory, state: &[C64]) -> Series {
    let ys: Vec<f64> = t.states.iter().map(|psi| inner(state, psi).norm_sqr()).collect();
    Series::new(name, "s", "population", &t.s_grid, &ys)
}

fn two_qubit_experiment(cfg: &ExperimentConfig, ctx: &Context) -> LabResult<ResultSet> {
    let model = ModelKind::TwoQubit;
    if cfg.model.is_some_and(|m| ModelKind::from(m) != model) {
        return Err(LabError::Config("two_qubit experiment requires model = \"two_qubit\"".into()));
    }
    let params = params_of(cfg, model, 5.0, 5.0)?;
    let sys = model.system(&params)?;
    let (omega, n) = choose_omega(cfg, ctx, model, &sys, &params, SynthesisOrder::First, Some(10))?;
    let sched = ecd_template(model, &sys, &params, omega, mode_of(cfg, Mode::Standalone), SynthesisOrder::First)?;
    let grid = output_grid(ctx.output_points, n);
    let psi0 = ground_state(&sys, 0.0)?;
    let te = propagate(&sched, &psi0, &ctx.opts, &grid)?;
    let ta = propagate(&sys, &psi0, &ctx.opts, &grid)?;
    let sb = base_strength(ctx, model, &sys);

    let mut out = ResultSet::default();
    let mut row = ecd_row(ctx, &sched, sb, "tau[ecd]", params.tau)?;
    row.infidelity = te.final_infidelity();
    row.cert_delta = te.cert_delta;
    out.rows.push(row);
    out.rows.push(Row {
        infidelity: ta.final_infidelity(),
        strength_base: sb,
        integral_norm: integral_norm(&sys, ctx.convention, ctx.samples),
        cert_delta: ta.cert_delta,
        ..Row::new("tau[adiabatic]", params.tau)
    });

    let step = cfg.tau_step.unwrap_or(0.5);
    let scan = equal_infidelity_scan(ctx, model, &params, &grid_or_default(cfg, step, 100.0))?;
    let pts: Vec<(f64, f64)> = scan.iter().filter(|r| r.certified).map(|r| (r.value, r.infidelity)).collect();
    let tau_equal = sustained_threshold(&pts, te.final_infidelity());
    out.rows.extend(scan);

    let decoupled = two_qubit_decoupled_states();
    let max_decoupled = te
        .states
        .iter()
        .flat_map(|psi| decoupled.iter().map(move |d| inner(d, psi).norm_sqr()))
        .fold(0.0, f64::max);
    let bell = ground_state(&sys, 1.0)?;
    out.put("epsilon", params.epsilon);
    out.put("tau", params.tau);
    out.put("omega", omega);
    out.put("n_periods", n);
    out.put("mode", sched.mode().as_str());
    out.put("ecd_infidelity", te.final_infidelity());
    out.put("adiabatic_infidelity", ta.final_infidelity());
    out.put("max_decoupled_population", max_decoupled);
    out.put("final_bell_population", inner(&bell, te.final_state()).norm_sqr());
    out.put("adiabatic_tau_equal_infidelity", tau_equal);
    out.put("speedup", tau_equal.map(|t| t / params.tau));
    out.series.push(Series::new("infidelity_ecd", "s", "infidelity", &te.s_grid, &te.infidelity_series));
    out.series.push(Series::new("infidelity_adiabatic", "s", "infidelity", &ta.s_grid, &ta.infidelity_series));
    out.series.extend(basis_population_series("ecd_", &te));
    out.series.extend(basis_population_series("adiabatic_", &ta));
    for (k, d) in decoupled.iter().enumerate() {
        out.series.push(overlap_series(&format!("ecd_decoupled_{k}"), &te, d));
    }
    Ok(out)
}

fn grid_or_default(cfg: &ExperimentConfig, step: f64, hi: f64) -> Vec<f64> {
    let lo = cfg.tau_min.unwrap_or(step);
    grid(lo, cfg.adiabatic_tau_max.unwrap_or(hi), step)
}

fn three_level_experiment(cfg: &ExperimentConfig, ctx: &Context) -> LabResult<ResultSet> {
    let model = ModelKind::ThreeLevel;
    if cfg.model.is_some_and(|m| ModelKind::from(m) != model) {
        return Err(LabError::Config("three_level experiment requires model = \"three_level\"".into()));
    }
    let params = params_of(cfg, model, 40.0, 25.0)?;
    let sys = model.system(&params)?;
    let (omega, n) = choose_omega(cfg, ctx, model, &sys, &params, SynthesisOrder::First, None)?;
    let sched = ecd_template(model, &sys, &params, omega, mode_of(cfg, Mode::Standalone), SynthesisOrder::First)?;
    let grid = output_grid(ctx.output_points, n);
    let psi0 = ground_state(&sys, 0.0)?;
    let te = propagate(&sched, &psi0, &ctx.opts, &grid)?;
    let ta = propagate(&sys, &psi0, &ctx.opts, &grid)?;
    let sb = base_strength(ctx, model, &sys);

    let mut out = ResultSet::default();
    let mut row = ecd_row(ctx, &sched, sb, "tau[ecd]", params.tau)?;
    row.infidelity = te.final_infidelity();
    row.cert_delta = te.cert_delta;
    let strength_corr = row.strength_corr;
    out.rows.push(row);
    out.rows.push(Row {
        infidelity: ta.final_infidelity(),
        strength_base: sb,
        integral_norm: integral_norm(&sys, ctx.convention, ctx.samples),
        cert_delta: ta.cert_delta,
        ..Row::new("tau[adiabatic]", params.tau)
    });

    let step = cfg.tau_step.unwrap_or(0.5);
    let scan = equal_infidelity_scan(ctx, model, &params, &grid_or_default(cfg, step, 150.0))?;
    let pts: Vec<(f64, f64)> = scan.iter().filter(|r| r.certified).map(|r| (r.value, r.infidelity)).collect();
    let tau_equal = sustained_threshold(&pts, te.final_infidelity());
    out.rows.extend(scan);

    let f13_crossings = {
        let vals: Vec<f64> = (0..=2000)
            .map(|k| ecd_core::models::three_level_fcd(&sys, k as f64 / 2000.0).map(|f| f[2]))
            .collect::<ecd_core::Result<_>>()?;
        vals.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
    };
    out.put("epsilon", params.epsilon);
    out.put("tau", params.tau);
    out.put("d", params.d);
    out.put("omega", omega);
    out.put("n_periods", n);
    out.put("mode", sched.mode().as_str());
    out.put("strength_base", sb);
    out.put("strength_corr", strength_corr);
    out.put("ecd_infidelity", te.final_infidelity());
    out.put("adiabatic_infidelity", ta.final_infidelity());
    out.put("ecd_beats_adiabatic", te.final_infidelity() < ta.final_infidelity());
    out.put("adiabatic_tau_equal_infidelity", tau_equal);
    out.put("speedup", tau_equal.map(|t| t / params.tau));
    out.put("f13_sign_changes", f13_crossings);
    out.series.push(Series::new("infidelity_ecd", "s", "infidelity", &te.s_grid, &te.infidelity_series));
    out.series.push(Series::new("infidelity_adiabatic", "s", "infidelity", &ta.s_grid, &ta.infidelity_series));
    out.series.extend(basis_population_series("ecd_", &te));
    out.series.extend(basis_population_series("adiabatic_", &ta));
    out.series.extend(ground_population_series("target_population", &sys, &grid)?);
    Ok(out)
}

fn default_deltas() -> Vec<f64> {
    let mut mags = log_grid(1e-4, 1e-2, 9);
    mags.extend([0.02, 0.05, 0.1, 0.2, 0.5]);
    let mut d = vec![0.0];
    for m in mags {
        d.push(m);
        d.push(-m);
    }
    d
}

fn robustness_sweep(cfg: &ExperimentConfig, ctx: &Context) -> LabResult<ResultSet> {
    let model = ModelKind::Lzm;
    if cfg.model.is_some_and(|m| ModelKind::from(m) != model) {
        return Err(LabError::Config("robustness experiment perturbs the su(2) model; use model = \"lzm\"".into()));
    }
    let params = params_of(cfg, model, 20.0, 20.0)?;
    let sys = model.system(&params)?;
    let order = order_of(cfg);
    let default_periods = (2.0 * params.tau).round().max(1.0) as usize;
    let (omega, n) = choose_omega(cfg, ctx, model, &sys, &params, order, Some(default_periods))?;
    let sched = ecd_template(model, &sys, &params, omega, mode_of(cfg, Mode::Standalone), order)?;
    let psi0 = ground_state(&sys, 0.0)?;
    let base = propagate(&sched, &psi0, &ctx.opts, &[1.0])?;
    let gs1 = ground_state(&sys, 1.0)?;
    let steps = base.steps;
    let f0 = 1.0 - infidelity(&evolve_fixed(&sched, &psi0, steps)?, &gs1);
    let sb = base_strength(ctx, model, &sys);

    let deltas = cfg.deltas.clone().unwrap_or_else(default_deltas);
    let is_sine = |t: &ecd_core::ecd::HarmonicTerm| t.channel == 0 && t.wave == Wave::Sin && t.harmonic == 1;
    let tasks: Vec<(bool, f64)> = deltas.iter().flat_map(|&d| [(false, d), (true, d)]).collect();
    let runs: Vec<(bool, f64, f64, Row)> = tasks
        .par_iter()
        .map(|&(phase, d)| -> LabResult<_> {
            let p = if phase { sched.perturbed(is_sine, 1.0, 2.0 * PI * d) } else { sched.perturbed(is_sine, 1.0 + d, 0.0) };
            let f = 1.0 - infidelity(&evolve_fixed(&p, &psi0, steps)?, &gs1);
            let rel = (1.0 - f / f0).abs();
            let curve = if phase { "delta[phase]" } else { "delta[amplitude]" };
            let row = Row {
                infidelity: 1.0 - f,
                strength_base: sb,
                strength_corr: strength(&p.with_mode(Mode::Standalone), ctx.convention, ctx.samples),
                integral_norm: integral_norm(&p, ctx.convention, ctx.samples),
                n_periods: n,
                cert_delta: base.cert_delta,
                ..Row::new(curve, d)
            };
            Ok((phase, d, rel, row))
        })
        .collect::<LabResult<_>>()?;

    let mut out = ResultSet::default();
    for (phase, name) in [(false, "amplitude"), (true, "phase")] {
        let mut pts: Vec<(f64, f64)> = runs.iter().filter(|r| r.0 == phase).map(|r| (r.1, r.2)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        out.series.push(Series::new(&format!("{name}_relative_error"), "delta", "relative_error", &xs, &ys));
        let in_window = |d: f64| (1e-4 * (1.0 - 1e-9)..=1e-2 * (1.0 + 1e-9)).contains(&d.abs());
        let fit = |sel: &dyn Fn(f64) -> bool| {
            let (fx, fy): (Vec<f64>, Vec<f64>) =
                pts.iter().filter(|p| in_window(p.0) && sel(p.0)).map(|p| (p.0.abs(), p.1)).unzip();
            if fx.len() >= 2 { Some(fit_power_law(&fx, &fy)) } else { None }
        };
        let both = fit(&|_| true);
        out.put(&format!("{name}_slope"), both.map(|f| f.0));
        out.put(&format!("{name}_r2"), both.map(|f| f.2));
        out.put(&format!("{name}_slope_positive"), fit(&|d| d > 0.0).map(|f| f.0));
        out.put(&format!("{name}_slope_negative"), fit(&|d| d < 0.0).map(|f| f.0));
        let asym = pts
            .iter()
            .filter(|p| p.0 > 0.0)
            .filter_map(|p| pts.iter().find(|q| q.0 == -p.0).map(|q| (p.1 - q.1).abs()))
            .fold(0.0, f64::max);
        out.put(&format!("{name}_max_asymmetry"), asym);
        if let Some(z) = pts.iter().find(|p| p.0 == 0.0) {
            out.put(&format!("{name}_relative_error_at_zero"), z.1);
        }
    }
    out.rows = runs.into_iter().map(|r| r.3).collect();
    out.put("omega", omega);
    out.put("n_periods", n);
    out.put("base_fidelity", f0);
    out.put("steps", steps);
    out.put("perturbed_term", "sin(omega t) on the sigma_z channel");
    Ok(out)
}

/// One oscillation period of a schedule with amplitudes frozen at the period midpoint.
struct FrozenPeriod<'a> {
    hamiltonian: Box<dyn Fn(f64) -> CMatrix + Sync + 'a>,
    period: f64,
    reference: &'a ControlSystem,
}

impl Drive for FrozenPeriod<'_> {
    fn dim(&self) -> usize {
        self.reference.dim()
    }
    fn tau(&self) -> f64 {
        self.period
    }
    fn hamiltonian(&self, x: f64) -> CMatrix {
        (self.hamiltonian)(x * self.period)
    }
    fn reference(&self) -> &ControlSystem {
        self.reference
    }
}

/// exp(−iφσ_y)ψ
fn rotate_y(phi: f64, psi: &[C64]) -> CVector {
    let y = pauli::y();
    let (c, s) = (phi.cos(), phi.sin());
    (0..2).map(|i| c * psi[i] - C64::new(0.0, s) * (y[(i, 0)] * psi[0] + y[(i, 1)] * psi[1])).collect()
}

/// Single-period infidelity of the frozen-amplitude correction against exp(−i∫f dt σ_y).
pub fn single_period_infidelity(
    params: &ModelParams,
    s_start: f64,
    period: f64,
    order: SynthesisOrder,
    fcd: impl Fn(f64) -> f64 + Send + Sync + Clone + 'static,
    steps: usize,
) -> LabResult<f64> {
    let sys = ModelKind::Lzm.system(params)?;
    let omega = 2.0 * PI / period;
    let sched = match order {
        SynthesisOrder::First => synth_su2_first_order(&sys, fcd.clone(), omega, (1, 0), Mode::Standalone)?,
        SynthesisOrder::Third => synth_su2_third_order(&sys, fcd.clone(), omega, (1, 0), Mode::Standalone)?,
    };
    let tau = params.tau;
    let t0 = s_start * tau;
    let s_mid = (t0 + 0.5 * period) / tau;
    let drive = FrozenPeriod { hamiltonian: Box::new(sched.frozen_correction(s_mid)), period, reference: &sys };
    let psi0 = ground_state(&sys, s_start)?;
    let psi = evolve_fixed(&drive, &psi0, steps)?;
    let phi = UnitRule::new(16).integrate(t0, t0 + period, |t| fcd(t / tau));
    Ok(infidelity(&psi, &rotate_y(phi, &psi0)))
}

fn scaling_order_experiment(cfg: &ExperimentConfig, _ctx: &Context) -> LabResult<ResultSet> {
    if cfg.model.is_some_and(|m| ModelKind::from(m) != ModelKind::Lzm) {
        return Err(LabError::Config("scaling_order runs on the su(2) model; use model = \"lzm\"".into()));
    }
    let params = params_of(cfg, ModelKind::Lzm, 20.0, 20.0)?;
    let s_center = cfg.s_center.unwrap_or(0.45);
    let periods = log_grid(cfg.period_min.unwrap_or(1e-3), cfg.period_max.unwrap_or(1e-1), cfg.period_count.unwrap_or(13));
    const STEPS: usize = 400;
    let tasks: Vec<(SynthesisOrder, f64)> =
        [SynthesisOrder::First, SynthesisOrder::Third].iter().flat_map(|&o| periods.iter().map(move |&t| (o, t))).collect();
    let vals: Vec<(SynthesisOrder, f64, f64)> = tasks
        .par_iter()
        .map(|&(o, t)| Ok((o, t, single_period_infidelity(&params, s_center, t, o, lzm_fcd(&params), STEPS)?)))
        .collect::<LabResult<_>>()?;

    let mut out = ResultSet::default();
    for (order, name) in [(SynthesisOrder::First, "first"), (SynthesisOrder::Third, "third")] {
        let pts: Vec<(f64, f64)> = vals.iter().filter(|v| v.0 == order).map(|v| (v.1, v.2)).collect();
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        let (slope, _, r2) = fit_power_law(&xs, &ys);
        if r2 < 0.99 {
            warn!("{name}-order slope fit has R^2 = {r2:.4} < 0.99");
        }
        out.put(&format!("{name}_slope"), slope);
        out.put(&format!("{name}_r2"), r2);
        out.put(&format!("{name}_fit_flagged"), r2 < 0.99);
        out.series.push(Series::new(&format!("stroboscopic_{name}"), "period", "infidelity", &xs, &ys));
        for (t, i) in pts {
            out.rows.push(Row { infidelity: i, n_periods: 1, ..Row::new(format!("period[{name}]"), t) });
        }
    }
    let zero = single_period_infidelity(&params, s_center, periods[periods.len() / 2], SynthesisOrder::First, |_| 0.0, STEPS)?;
    out.put("zero_field_infidelity", zero);
    out.put("s_center", s_center);
    out.put("steps_per_period", STEPS);
    out.put("expected_first_order_exponent", ecd_core::magnus::infidelity_order(1));
    Ok(out)
}
