//! Multi-run studies: energy growth against epsilon, existence time across
//! (epsilon, mu), model-to-model stability, the mu-order of the gap between
//! two models, and convergence of the discretization.
//!
//! Every study is a pure function of its spec. Cells run in parallel on a
//! rayon pool whose size is capped by `WHITHAM_LAB_THREADS`; results are
//! assembled in sweep order.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ModelSpec, RunConfig};
use crate::model::{Model, ModelParams, State};
use crate::spectral::SpectralGrid;
use crate::stepper::{cfl_dt, run, RunControl, RunError, StepperConfig, Trajectory};

pub const THREADS_ENV: &str = "WHITHAM_LAB_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run {cell} failed: {source}")]
    Run {
        cell: String,
        #[source]
        source: RunError,
    },
    #[error("run {cell} blew up at t = {time} before reaching the fit window")]
    BlowUpBeforeFit { cell: String, time: f64 },
    #[error("sweep list {0} must not be empty")]
    EmptySweep(&'static str),
    #[error("ladder {0} is not nested (each entry must halve/double the previous)")]
    NonNested(&'static str),
    #[error("models must share grid and epsilon: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    EnergyGrowth,
    Timescale,
    Stability,
    MuScaling,
    Convergence,
}

fn default_window() -> [f64; 2] {
    [1.1, 4.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    /// Growth window `[lo, hi]` as multiples of the initial norm.
    #[serde(default = "default_window")]
    pub window: [f64; 2],
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window: default_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub kind: StudyKind,
    pub base: RunConfig,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub mus: Vec<f64>,
    #[serde(rename = "Ns", default)]
    pub ns: Vec<usize>,
    #[serde(default)]
    pub dts: Vec<f64>,
    #[serde(default)]
    pub models: Vec<ModelSpec>,
    /// Target slow time `T`; runs go to `T / epsilon`. Defaults to `base.t_end_over_eps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_target: Option<f64>,
    #[serde(default)]
    pub fit: FitOptions,
}

impl StudySpec {
    pub fn new(kind: StudyKind, base: RunConfig) -> Self {
        Self {
            kind,
            base,
            epsilons: Vec::new(),
            mus: Vec::new(),
            ns: Vec::new(),
            dts: Vec::new(),
            models: Vec::new(),
            t_target: None,
            fit: FitOptions::default(),
        }
    }

    fn t_target(&self) -> f64 {
        self.t_target.unwrap_or(self.base.t_end_over_eps)
    }
}

/// Run `f` over `items` on a pool capped by `WHITHAM_LAB_THREADS`, keeping order.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    match builder.build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

/// Least-squares line `y = slope x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Build the model for `cfg` without the epsilon > 0 requirement of
/// [`RunConfig::validate`], so linear reference runs are possible.
fn build(cfg: &RunConfig) -> Result<(Model, State), HarnessError> {
    let model = cfg.build_model().map_err(HarnessError::Config)?;
    let init = cfg.initial_state(&model).map_err(HarnessError::Config)?;
    Ok((model, init))
}

fn t_end_for(t_target: f64, epsilon: f64) -> f64 {
    if epsilon > 0.0 {
        t_target / epsilon
    } else {
        t_target
    }
}

fn control(cfg: &RunConfig, snapshot_every: usize) -> RunControl {
    RunControl {
        snapshot_every,
        diag_every: cfg.output.csv_cadence.max(1),
        blowup_factor: cfg.output.blowup_factor,
        s: cfg.s(),
        t0: cfg.t0(),
    }
}

// ---------------------------------------------------------------- growth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRun {
    pub epsilon: f64,
    pub mu: f64,
    /// Fitted exponential rate of `|U|_{X^s}`.
    pub rate: f64,
    /// Fitted prefactor relative to the initial norm.
    pub prefactor: f64,
    /// First time the norm reached `e` times its initial value.
    pub efold_time: Option<f64>,
    pub window: (f64, f64),
    pub fit_points: usize,
    pub blew_up: bool,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyFitReport {
    pub runs: Vec<GrowthRun>,
    /// Slope of the rate against epsilon, fitted through the origin.
    pub slope: f64,
    /// `rate - slope * epsilon` per run.
    pub residuals: Vec<f64>,
    /// Every rate is at most `1.5 * slope * epsilon`.
    pub one_sided_ok: bool,
    /// `max / min` of `epsilon * efold_time` over runs with epsilon > 0.
    pub efold_spread: Option<f64>,
}

/// Fit `log |U|_{X^s} = log(kappa |U0|) + rate t` on the growth window.
pub fn fit_growth(times: &[f64], norms: &[f64], window: [f64; 2]) -> (f64, f64, (f64, f64), usize) {
    let n0 = norms[0];
    let start = norms.iter().position(|&x| x >= window[0] * n0);
    let end = norms.iter().position(|&x| !(x <= window[1] * n0)).unwrap_or(norms.len());
    let (lo, hi) = match start {
        Some(s) if end > s + 2 => (s, end),
        _ => (0, end.max(2.min(norms.len()))),
    };
    let ts = &times[lo..hi];
    let logs: Vec<f64> = norms[lo..hi].iter().map(|x| (x / n0).ln()).collect();
    let (rate, intercept) = linear_fit(ts, &logs);
    (rate, intercept.exp(), (ts[0], ts[ts.len() - 1]), ts.len())
}

fn efold_time(times: &[f64], norms: &[f64]) -> Option<f64> {
    let target = std::f64::consts::E * norms[0];
    let k = norms.iter().position(|&x| x >= target)?;
    if k == 0 {
        return Some(times[0]);
    }
    let (a, b) = (norms[k - 1].ln(), norms[k].ln());
    let f = (target.ln() - a) / (b - a);
    Some(times[k - 1] + f * (times[k] - times[k - 1]))
}

pub fn energy_growth_study(spec: &StudySpec) -> Result<EnergyFitReport, HarnessError> {
    if spec.epsilons.is_empty() {
        return Err(HarnessError::EmptySweep("epsilons"));
    }
    let mus = if spec.mus.is_empty() { vec![spec.base.mu] } else { spec.mus.clone() };
    let cells: Vec<(f64, f64)> = mus
        .iter()
        .flat_map(|&mu| spec.epsilons.iter().map(move |&e| (e, mu)))
        .collect();
    let t_target = spec.t_target();
    let results = par_map(&cells, |&(eps, mu)| -> Result<GrowthRun, HarnessError> {
        let mut cfg = spec.base.clone();
        cfg.epsilon = eps;
        cfg.mu = mu;
        let (model, init) = build(&cfg)?;
        let stepper = cfg.stepper.clone().with_t_end(t_end_for(t_target, eps));
        let cell = format!("epsilon={eps}, mu={mu}");
        let (traj, blew_up) = match run(&model, &init, &stepper, &control(&cfg, usize::MAX)) {
            Ok(t) => (t, false),
            Err(RunError::BlowUpDetected { partial, .. }) | Err(RunError::NonFinite { partial, .. }) => {
                (*partial, true)
            }
            Err(source) => return Err(HarnessError::Run { cell, source }),
        };
        let times: Vec<f64> = traj.reports.iter().map(|r| r.time).collect();
        let norms: Vec<f64> = traj.reports.iter().map(|r| r.x_norm_s).collect();
        if blew_up {
            let reached = norms.iter().any(|&x| x >= spec.fit.window[1] * norms[0]);
            if !reached {
                return Err(HarnessError::BlowUpBeforeFit {
                    cell,
                    time: *times.last().unwrap(),
                });
            }
        }
        let (rate, prefactor, window, fit_points) = fit_growth(&times, &norms, spec.fit.window);
        Ok(GrowthRun {
            epsilon: eps,
            mu,
            rate,
            prefactor,
            efold_time: efold_time(&times, &norms),
            window,
            fit_points,
            blew_up,
            times,
            norms,
        })
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let sxy: f64 = runs.iter().map(|r| r.rate * r.epsilon).sum();
    let sxx: f64 = runs.iter().map(|r| r.epsilon * r.epsilon).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let residuals = runs.iter().map(|r| r.rate - slope * r.epsilon).collect();
    let one_sided_ok = runs.iter().all(|r| r.rate <= 1.5 * slope * r.epsilon + 1e-12);
    let scaled: Vec<f64> = runs
        .iter()
        .filter(|r| r.epsilon > 0.0)
        .filter_map(|r| r.efold_time.map(|t| t * r.epsilon))
        .collect();
    let efold_spread = if scaled.len() == runs.iter().filter(|r| r.epsilon > 0.0).count() && !scaled.is_empty() {
        let max = scaled.iter().cloned().fold(f64::MIN, f64::max);
        let min = scaled.iter().cloned().fold(f64::MAX, f64::min);
        Some(max / min)
    } else {
        None
    };
    Ok(EnergyFitReport {
        runs,
        slope,
        residuals,
        one_sided_ok,
        efold_spread,
    })
}

// ------------------------------------------------------------- timescale

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimescaleRow {
    pub epsilon: f64,
    pub mu: f64,
    pub completed: bool,
    pub t_target: f64,
    pub t_reached: f64,
    /// Final over initial `X^s` norm.
    pub norm_ratio: f64,
    /// Largest ratio along the run.
    pub max_ratio: f64,
}

pub fn timescale_study(spec: &StudySpec) -> Result<Vec<TimescaleRow>, HarnessError> {
    if spec.epsilons.is_empty() {
        return Err(HarnessError::EmptySweep("epsilons"));
    }
    if spec.mus.is_empty() {
        return Err(HarnessError::EmptySweep("mus"));
    }
    let cells: Vec<(f64, f64)> = spec
        .epsilons
        .iter()
        .flat_map(|&e| spec.mus.iter().map(move |&m| (e, m)))
        .collect();
    let t_target = spec.t_target();
    let rows = par_map(&cells, |&(eps, mu)| -> Result<TimescaleRow, HarnessError> {
        let mut cfg = spec.base.clone();
        cfg.epsilon = eps;
        cfg.mu = mu;
        let (model, init) = build(&cfg)?;
        let t_end = t_end_for(t_target, eps);
        let stepper = cfg.stepper.clone().with_t_end(t_end);
        let (traj, completed) = match run(&model, &init, &stepper, &control(&cfg, usize::MAX)) {
            Ok(t) => (t, true),
            Err(RunError::BlowUpDetected { partial, .. }) | Err(RunError::NonFinite { partial, .. }) => {
                (*partial, false)
            }
            Err(source) => {
                return Err(HarnessError::Run {
                    cell: format!("epsilon={eps}, mu={mu}"),
                    source,
                })
            }
        };
        let n0 = traj.reports[0].x_norm_s;
        let last = traj.reports.last().unwrap();
        let max = traj.reports.iter().map(|r| r.x_norm_s).fold(0.0, f64::max);
        Ok(TimescaleRow {
            epsilon: eps,
            mu,
            completed,
            t_target: t_end,
            t_reached: traj.last().time,
            norm_ratio: if n0 > 0.0 { last.x_norm_s / n0 } else { 1.0 },
            max_ratio: if n0 > 0.0 { max / n0 } else { 1.0 },
        })
    });
    rows.into_iter().collect()
}

// ------------------------------------------------------------- stability

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub times: Vec<f64>,
    /// `|U_A - U_B|_{X^{s-1}}` with model A's weights.
    pub error: Vec<f64>,
    /// `|R~|_{X^{s-1}}` of model B's solution plugged into model A.
    pub residual: Vec<f64>,
    pub e0: f64,
    pub sup_residual: f64,
    /// `max_k e_k / (e_0 + t_k sup_{i <= k} |R~_i|)`.
    pub c_hat: f64,
    /// `e_k <= c_hat (e_0 + t_k sup_{i<=k} |R~_i|)` at every sample.
    pub bound_holds: bool,
    pub dt: f64,
}

/// Fourth-order finite-difference time derivative at every stored step.
fn time_derivative(states: &[State], dt: f64) -> Vec<State> {
    let n = states.len();
    let c = |w: &[(f64, usize)]| -> State {
        let terms: Vec<(f64, &State)> = w.iter().map(|&(a, i)| (a / (12.0 * dt), &states[i])).collect();
        State::combine(&terms)
    };
    (0..n)
        .map(|k| {
            if n < 5 {
                // too short for the five-point stencils
                let (a, b) = if k + 1 < n { (k, k + 1) } else { (k - 1, k) };
                return State::combine(&[(-1.0 / dt, &states[a]), (1.0 / dt, &states[b])]);
            }
            let mut s = if k >= 2 && k + 2 < n {
                c(&[(1.0, k - 2), (-8.0, k - 1), (8.0, k + 1), (-1.0, k + 2)])
            } else if k == 0 {
                c(&[(-25.0, 0), (48.0, 1), (-36.0, 2), (16.0, 3), (-3.0, 4)])
            } else if k == 1 {
                c(&[(-3.0, 0), (-10.0, 1), (18.0, 2), (-6.0, 3), (1.0, 4)])
            } else if k == n - 1 {
                c(&[(25.0, n - 1), (-48.0, n - 2), (36.0, n - 3), (-16.0, n - 4), (3.0, n - 5)])
            } else {
                c(&[(3.0, n - 1), (10.0, n - 2), (-18.0, n - 3), (6.0, n - 4), (-1.0, n - 5)])
            };
            s.time = states[k].time;
            s
        })
        .collect()
}

/// Run both configurations on a common step and measure the error between
/// them, the residual of B's solution in A's equations and the ratio `C^`.
pub fn model_compare(config_a: &RunConfig, config_b: &RunConfig, t_end: f64) -> Result<CompareReport, HarnessError> {
    if config_a.dim != config_b.dim || config_a.n != config_b.n || config_a.length != config_b.length {
        return Err(HarnessError::Mismatch("grids differ".into()));
    }
    if config_a.epsilon != config_b.epsilon {
        return Err(HarnessError::Mismatch("epsilons differ".into()));
    }
    let (ma, ua) = build(config_a)?;
    let (mb, ub) = build(config_b)?;
    let dt = config_a
        .stepper
        .dt_override
        .unwrap_or_else(|| cfl_dt(&ma, &ua, config_a.stepper.cfl).min(cfl_dt(&mb, &ub, config_b.stepper.cfl)));
    let runs = par_map(&[(&ma, &ua, config_a), (&mb, &ub, config_b)], |&(m, u, cfg)| {
        let stepper = StepperConfig {
            dt_override: Some(dt),
            ..cfg.stepper.clone()
        }
        .with_t_end(t_end);
        run(m, u, &stepper, &control(cfg, 1)).map_err(|source| HarnessError::Run {
            cell: cfg.model.label(),
            source,
        })
    });
    let mut runs = runs.into_iter();
    let ta = runs.next().unwrap()?;
    let tb = runs.next().unwrap()?;
    if ta.times.len() != tb.times.len() {
        return Err(HarnessError::Mismatch("trajectories misaligned".into()));
    }
    let s1 = config_a.s() - 1.0;
    let error: Vec<f64> = ta
        .states
        .iter()
        .zip(&tb.states)
        .map(|(a, b)| ma.x_norm(&a.sub(b), s1))
        .collect();
    let derivs = time_derivative(&tb.states, ta.dt);
    let residual: Vec<f64> = derivs
        .iter()
        .zip(&tb.states)
        .map(|(d, u)| -> Result<f64, HarnessError> {
            let rhs = ma.rhs(u).map_err(|e| HarnessError::Config(e.to_string()))?;
            Ok(ma.x_norm(&d.sub(&rhs), s1))
        })
        .collect::<Result<_, _>>()?;
    let e0 = error[0];
    let sup_residual = residual.iter().cloned().fold(0.0, f64::max);
    let t0 = ta.times[0];
    let mut running = 0.0_f64;
    let denoms: Vec<f64> = residual
        .iter()
        .zip(&ta.times)
        .map(|(&r, &t)| {
            running = running.max(r);
            e0 + (t - t0) * running
        })
        .collect();
    let scale = error.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let c_hat = error
        .iter()
        .zip(&denoms)
        .filter(|(_, &d)| d > 1e-14 * scale)
        .map(|(e, d)| e / d)
        .fold(0.0, f64::max);
    let bound_holds = error
        .iter()
        .zip(&denoms)
        .all(|(e, d)| *e <= c_hat * d * (1.0 + 1e-12) + 1e-14 * scale);
    Ok(CompareReport {
        times: ta.times.clone(),
        error,
        residual,
        e0,
        sup_residual,
        c_hat,
        bound_holds,
        dt: ta.dt,
    })
}

// ------------------------------------------------------------- mu order

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuScalingReport {
    pub mus: Vec<f64>,
    /// `|U_A - U_B|` at the final time in `H^{s-1}` (unweighted).
    pub errors: Vec<f64>,
    /// Same on the doubled grid.
    pub errors_fine: Vec<f64>,
    /// Whether the doubled grid changes the error by less than 10%.
    pub resolved: Vec<bool>,
    pub slope: f64,
    pub intercept: f64,
}

/// `|zeta|_{H^r} + |v|_{H^r}` of a difference, without multiplier weights.
pub fn plain_norm(u: &State, r: f64) -> f64 {
    let g = &u.grid;
    let z = g.sobolev_norm(&u.zeta, r);
    let v = u.v.iter().map(|c| g.sobolev_norm(c, r).powi(2)).sum::<f64>().sqrt();
    z + v
}

fn pair_gap(spec: &StudySpec, a: &ModelSpec, b: &ModelSpec, mu: f64, n: usize) -> Result<f64, HarnessError> {
    let mut cfg = spec.base.clone();
    cfg.mu = mu;
    cfg.n = n;
    let t_end = t_end_for(spec.t_target(), cfg.epsilon);
    let mut finals = Vec::with_capacity(2);
    let mut dt = None;
    let mut built = Vec::new();
    for m in [a, b] {
        let mut c = cfg.clone();
        c.model = m.clone();
        let (model, init) = build(&c)?;
        let d = cfl_dt(&model, &init, c.stepper.cfl);
        dt = Some(dt.map_or(d, |x: f64| x.min(d)));
        built.push((c, model, init));
    }
    let dt = cfg.stepper.dt_override.unwrap_or(dt.unwrap());
    for (c, model, init) in &built {
        let stepper = StepperConfig {
            dt_override: Some(dt),
            ..c.stepper.clone()
        }
        .with_t_end(t_end);
        let traj = run(model, init, &stepper, &control(c, usize::MAX)).map_err(|source| HarnessError::Run {
            cell: format!("{} mu={mu} N={n}", c.model.label()),
            source,
        })?;
        finals.push(traj.last().clone());
    }
    Ok(plain_norm(&finals[0].sub(&finals[1]), cfg.s() - 1.0))
}

pub fn mu_scaling_study(spec: &StudySpec) -> Result<MuScalingReport, HarnessError> {
    if spec.mus.is_empty() {
        return Err(HarnessError::EmptySweep("mus"));
    }
    let (a, b) = match spec.models.as_slice() {
        [] => (ModelSpec::Preset("ddk".into()), ModelSpec::Preset("shallow_water".into())),
        [a, b] => (a.clone(), b.clone()),
        _ => return Err(HarnessError::Config("mu_scaling needs exactly two models".into())),
    };
    let n = spec.base.n;
    let cells: Vec<(f64, usize)> = spec.mus.iter().flat_map(|&mu| [(mu, n), (mu, 2 * n)]).collect();
    let gaps = par_map(&cells, |&(mu, n)| pair_gap(spec, &a, &b, mu, n));
    let gaps = gaps.into_iter().collect::<Result<Vec<_>, _>>()?;
    let errors: Vec<f64> = gaps.iter().step_by(2).copied().collect();
    let errors_fine: Vec<f64> = gaps.iter().skip(1).step_by(2).copied().collect();
    let resolved = errors
        .iter()
        .zip(&errors_fine)
        .map(|(e, f)| (e - f).abs() <= 0.1 * e.abs().max(f.abs()))
        .collect();
    let lx: Vec<f64> = spec.mus.iter().map(|m| m.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly);
    Ok(MuScalingReport {
        mus: spec.mus.clone(),
        errors,
        errors_fine,
        resolved,
        slope,
        intercept,
    })
}

// ----------------------------------------------------------- convergence

/// Exact solution of the linear (epsilon = 0) system, mode by mode.
pub fn exact_linear_solution(model: &Model, initial: &State, t: f64) -> State {
    let g = model.grid().clone();
    let g1 = model.g1_table();
    let dim = g.dim();
    let zh = g.forward(&initial.zeta);
    let vh: Vec<Vec<Complex64>> = initial.v.iter().map(|c| g.forward(c)).collect();
    let mut z_out = vec![Complex64::new(0.0, 0.0); g.len()];
    let mut v_out = vec![vec![Complex64::new(0.0, 0.0); g.len()]; dim];
    let i = Complex64::new(0.0, 1.0);
    for m in 0..g.len() {
        // the spectral derivative drops Nyquist components axis by axis
        let idx = g.mode_index(m);
        let mut k = g.wavenumber(m);
        for a in 0..dim {
            if idx[a] == -(g.n() as i64) / 2 {
                k[a] = 0.0;
            }
        }
        let kn = (0..dim).map(|a| k[a] * k[a]).sum::<f64>().sqrt();
        if kn == 0.0 {
            // derivatives vanish on these modes
            z_out[m] = zh[m];
            for a in 0..dim {
                v_out[a][m] = vh[a][m];
            }
            continue;
        }
        let dir: Vec<f64> = (0..dim).map(|a| k[a] / kn).collect();
        let q: Complex64 = (0..dim).map(|a| vh[a][m] * dir[a]).sum();
        let omega = kn * g1[m];
        let (c, s) = ((omega * t).cos(), (omega * t).sin());
        let sinc = if omega != 0.0 { s / omega } else { t };
        let z = zh[m] * c - i * kn * g1[m] * g1[m] * q * sinc;
        let qn = q * c - i * kn * zh[m] * sinc;
        z_out[m] = z;
        for a in 0..dim {
            v_out[a][m] = vh[a][m] + (qn - q) * dir[a];
        }
    }
    let mut out = State::new(
        g.clone(),
        g.inverse(&z_out),
        v_out.iter().map(|c| g.inverse(c)).collect(),
    )
    .expect("shapes come from the grid");
    out.time = initial.time + t;
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `(dt, error)` in `X^0` at the final time.
    pub temporal: Vec<(f64, f64)>,
    /// `error(dt_k) / error(dt_{k+1})`.
    pub temporal_ratios: Vec<f64>,
    /// `(N, error)` in `X^0` at the final time, at the first (largest) dt.
    pub spatial: Vec<(usize, f64)>,
    /// Temporal error at the dt used for the spatial ladder.
    pub temporal_floor: f64,
    /// Whether the exact linear solution served as reference.
    pub exact_reference: bool,
}

/// Sample a fine-grid state on a nested coarse grid.
fn restrict(state: &State, coarse: &std::sync::Arc<SpectralGrid>) -> State {
    let fine = &state.grid;
    let r = fine.n() / coarse.n();
    let pick = |c: &Vec<f64>| -> Vec<f64> {
        (0..coarse.len())
            .map(|p| match coarse.dim() {
                1 => c[p * r],
                _ => {
                    let (i, j) = (p / coarse.n(), p % coarse.n());
                    c[(i * r) * fine.n() + j * r]
                }
            })
            .collect()
    };
    let mut out = State::new(coarse.clone(), pick(&state.zeta), state.v.iter().map(pick).collect())
        .expect("shapes come from the grid");
    out.time = state.time;
    out
}

pub fn convergence_study(spec: &StudySpec) -> Result<ConvergenceReport, HarnessError> {
    if spec.dts.len() < 2 {
        return Err(HarnessError::EmptySweep("dts"));
    }
    if spec.ns.is_empty() {
        return Err(HarnessError::EmptySweep("Ns"));
    }
    if spec.dts.windows(2).any(|w| ((w[0] / w[1]) - 2.0).abs() > 1e-9) {
        return Err(HarnessError::NonNested("dts"));
    }
    if spec.ns.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(HarnessError::NonNested("Ns"));
    }
    let base = &spec.base;
    let t_end = t_end_for(spec.t_target(), base.epsilon);
    let exact = base.epsilon == 0.0;
    let n_max = *spec.ns.last().unwrap();

    let run_cell = |n: usize, dt: f64| -> Result<(Model, State, State), HarnessError> {
        let mut cfg = base.clone();
        cfg.n = n;
        let (model, init) = build(&cfg)?;
        let stepper = StepperConfig {
            dt_override: Some(dt),
            ..cfg.stepper.clone()
        }
        .with_t_end(t_end);
        let traj: Trajectory = run(&model, &init, &stepper, &control(&cfg, usize::MAX)).map_err(|source| {
            HarnessError::Run {
                cell: format!("N={n} dt={dt}"),
                source,
            }
        })?;
        let last = traj.last().clone();
        Ok((model, init, last))
    };

    let temporal_cells: Vec<f64> = spec.dts.clone();
    let temporal_runs = par_map(&temporal_cells, |&dt| run_cell(n_max, dt));
    let temporal_runs = temporal_runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let temporal: Vec<(f64, f64)> = if exact {
        temporal_runs
            .iter()
            .zip(&spec.dts)
            .map(|((m, init, last), &dt)| (dt, m.x_norm(&last.sub(&exact_linear_solution(m, init, t_end)), 0.0)))
            .collect()
    } else {
        let (m, _, reference) = temporal_runs.last().unwrap();
        temporal_runs[..temporal_runs.len() - 1]
            .iter()
            .zip(&spec.dts)
            .map(|((_, _, last), &dt)| (dt, m.x_norm(&last.sub(reference), 0.0)))
            .collect()
    };
    let temporal_ratios = temporal.windows(2).map(|w| w[0].1 / w[1].1).collect();
    let temporal_floor = temporal[0].1;

    let dt_space = spec.dts[0];
    let spatial_runs = par_map(&spec.ns, |&n| run_cell(n, dt_space));
    let spatial_runs = spatial_runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let spatial: Vec<(usize, f64)> = if exact {
        spatial_runs
            .iter()
            .zip(&spec.ns)
            .map(|((m, init, last), &n)| (n, m.x_norm(&last.sub(&exact_linear_solution(m, init, t_end)), 0.0)))
            .collect()
    } else {
        let (_, _, reference) = spatial_runs.last().unwrap();
        spatial_runs[..spatial_runs.len() - 1]
            .iter()
            .zip(&spec.ns)
            .map(|((m, _, last), &n)| (n, m.x_norm(&last.sub(&restrict(reference, m.grid())), 0.0)))
            .collect()
    };
    Ok(ConvergenceReport {
        temporal,
        temporal_ratios,
        spatial,
        temporal_floor,
        exact_reference: exact,
    })
}

/// Summary returned by [`run_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StudyReport {
    EnergyGrowth(EnergyFitReport),
    Timescale { rows: Vec<TimescaleRow> },
    Stability { cells: Vec<(f64, CompareReport)> },
    MuScaling(MuScalingReport),
    Convergence(ConvergenceReport),
}

/// Dispatch on the study kind. The stability study compares `models[0]`
/// against `models[1]` for every mu in the sweep.
pub fn run_study(spec: &StudySpec) -> Result<StudyReport, HarnessError> {
    Ok(match spec.kind {
        StudyKind::EnergyGrowth => StudyReport::EnergyGrowth(energy_growth_study(spec)?),
        StudyKind::Timescale => StudyReport::Timescale {
            rows: timescale_study(spec)?,
        },
        StudyKind::Stability => {
            let [a, b] = spec.models.as_slice() else {
                return Err(HarnessError::Config("stability needs exactly two models".into()));
            };
            let mus = if spec.mus.is_empty() { vec![spec.base.mu] } else { spec.mus.clone() };
            let t_end = t_end_for(spec.t_target(), spec.base.epsilon);
            let mut cells = Vec::new();
            for mu in mus {
                let mut ca = spec.base.clone();
                ca.mu = mu;
                ca.model = a.clone();
                let mut cb = ca.clone();
                cb.model = b.clone();
                cells.push((mu, model_compare(&ca, &cb, t_end)?));
            }
            StudyReport::Stability { cells }
        }
        StudyKind::MuScaling => StudyReport::MuScaling(mu_scaling_study(spec)?),
        StudyKind::Convergence => StudyReport::Convergence(convergence_study(spec)?),
    })
}

/// Model parameters for an `epsilon = 0` variant of `cfg`.
pub fn linear_params(cfg: &RunConfig) -> Result<ModelParams, HarnessError> {
    let pair = cfg.model.pair(cfg.mu).map_err(HarnessError::Config)?;
    ModelParams::new(&pair, 0.0, cfg.mu, cfg.h_min).map_err(|e| HarnessError::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::InitialSpec;

    #[test]
    fn fit_recovers_exponential() {
        let times: Vec<f64> = (0..50).map(|k| 0.1 * k as f64).collect();
        let norms: Vec<f64> = times.iter().map(|t| 2.0 * (0.3 * t).exp()).collect();
        let (rate, pre, _, pts) = fit_growth(&times, &norms, [1.1, 4.0]);
        assert!((rate - 0.3).abs() < 1e-12);
        assert!((pre - 1.0).abs() < 1e-10);
        assert!(pts > 3);
        let e = efold_time(&times, &norms).unwrap();
        assert!((e - 1.0 / 0.3).abs() < 1e-12);
    }

    #[test]
    fn exact_solution_is_right_moving_wave() {
        let cfg = RunConfig::new("shallow_water", 1, 32, 0.1, InitialSpec::cosine(1.0, 1));
        let m = Model::new(cfg.grid().unwrap(), linear_params(&cfg).unwrap()).unwrap();
        let init = cfg.initial_state(&m).unwrap();
        let u = exact_linear_solution(&m, &init, 0.7);
        let g = m.grid();
        let want = g.sample(|x, _| (x - 0.7).cos());
        assert!(u.zeta.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-13));
        assert!(u.v[0].iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-13));
    }

    #[test]
    fn exact_solution_2d_conserves_rotational_part() {
        let mut cfg = RunConfig::new("ddk", 2, 16, 0.1, InitialSpec::gaussian(0.3, 1.0));
        cfg.initial.velocity_factor = 0.5;
        let m = Model::new(cfg.grid().unwrap(), linear_params(&cfg).unwrap()).unwrap();
        let init = cfg.initial_state(&m).unwrap();
        let u = exact_linear_solution(&m, &init, 0.3);
        // compare with a finely stepped RK4 run
        let stepper = StepperConfig::default().with_t_end(0.3).with_dt(0.3 / 64.0);
        let t = run(&m, &init, &stepper, &RunControl::for_dim(2)).unwrap();
        let err = m.x_norm(&t.last().sub(&u), 0.0);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn nested_ladders_required() {
        let mut spec = StudySpec::new(
            StudyKind::Convergence,
            RunConfig::new("shallow_water", 1, 16, 0.1, InitialSpec::cosine(0.1, 1)),
        );
        spec.dts = vec![0.1, 0.03];
        spec.ns = vec![16];
        assert!(matches!(convergence_study(&spec), Err(HarnessError::NonNested("dts"))));
    }

    #[test]
    fn identical_models_compare_to_zero() {
        let mut cfg = RunConfig::new("ddk", 1, 32, 0.1, InitialSpec::gaussian(0.3, 1.0));
        cfg.mu = 0.5;
        cfg.stepper.dt_override = Some(0.01);
        let r = model_compare(&cfg, &cfg, 1.0).unwrap();
        assert!(r.error.iter().all(|&e| e == 0.0));
        assert!(r.sup_residual < 1e-6, "{}", r.sup_residual);
    }
}
