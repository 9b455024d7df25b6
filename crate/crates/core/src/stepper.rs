//! Time integration: classical RK4 for the nonlinear system, the
//! `J_alpha`-regularized linearized solver with frozen coefficients, and the
//! Picard iteration built on top of it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{energy_report, EnergyReport};
use crate::model::{Model, ModelError, State};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("initial data violates non-cavitation: min(1 + eps zeta) = {min_depth} < h_min = {h_min}")]
    CavitationViolated { min_depth: f64, h_min: f64 },
    #[error("blow-up detected at t = {time}: X^s norm {last_norm} exceeded the threshold")]
    BlowUpDetected {
        time: f64,
        last_norm: f64,
        partial: Box<Trajectory>,
    },
    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64, partial: Box<Trajectory> },
    #[error("frozen trajectory covers [{have_start}, {have_end}], need [{need_start}, {need_end}]")]
    TimeRange {
        have_start: f64,
        have_end: f64,
        need_start: f64,
        need_end: f64,
    },
    #[error("Picard iteration did not converge in {iterations} iterations (last difference {last_difference:e})")]
    MaxIterExceeded { iterations: usize, last_difference: f64 },
    #[error("the Picard reference solver is limited to 1-D grids with N <= 64")]
    PicardGrid,
    #[error("invalid stepper setting: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Rk4,
    PicardReference,
}

fn default_cfl() -> f64 {
    0.4
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperConfig {
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Final time; in run configs it is derived from `t_end_over_eps`.
    #[serde(skip)]
    pub t_end: f64,
    #[serde(default)]
    pub dt_override: Option<f64>,
    #[serde(default)]
    pub scheme: Scheme,
    /// `J_alpha = (1 - alpha Lap)^{-1/2}`; `alpha = 0` is the identity.
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_max_iter")]
    pub picard_max_iter: usize,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            cfl: default_cfl(),
            t_end: 0.0,
            dt_override: None,
            scheme: Scheme::Rk4,
            alpha: 0.0,
            picard_tol: default_tol(),
            picard_max_iter: default_max_iter(),
        }
    }
}

impl StepperConfig {
    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt_override = Some(dt);
        self
    }
}

/// Cadences and thresholds for a nonlinear run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunControl {
    pub snapshot_every: usize,
    pub diag_every: usize,
    pub blowup_factor: f64,
    pub s: f64,
    pub t0: f64,
}

impl RunControl {
    pub fn for_dim(dim: usize) -> Self {
        Self {
            snapshot_every: 1,
            diag_every: 1,
            blowup_factor: 100.0,
            s: dim as f64 / 2.0 + 1.51,
            t0: dim as f64 / 2.0 + 0.51,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    BlowUp,
    NonFinite,
}

/// Snapshots of a run plus per-cadence diagnostics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub reports: Vec<EnergyReport>,
    pub dt: f64,
    pub steps: usize,
    pub termination: Termination,
}

impl Trajectory {
    fn start(state: &State, dt: f64) -> Self {
        Self {
            times: vec![state.time],
            states: vec![state.clone()],
            reports: Vec::new(),
            dt,
            steps: 0,
            termination: Termination::Completed,
        }
    }

    fn push(&mut self, state: &State) {
        self.times.push(state.time);
        self.states.push(state.clone());
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory is never empty")
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Constant-in-time trajectory sampled at `times`.
    pub fn constant(state: &State, times: &[f64]) -> Self {
        let states = times
            .iter()
            .map(|&t| {
                let mut s = state.clone();
                s.time = t;
                s
            })
            .collect();
        Self {
            times: times.to_vec(),
            states,
            reports: Vec::new(),
            dt: if times.len() > 1 { times[1] - times[0] } else { 0.0 },
            steps: times.len().saturating_sub(1),
            termination: Termination::Completed,
        }
    }

    /// Cubic Lagrange interpolation on the four nearest snapshots.
    pub fn interpolate(&self, t: f64) -> State {
        let n = self.times.len();
        if n == 1 {
            let mut s = self.states[0].clone();
            s.time = t;
            return s;
        }
        let idx = self.times.partition_point(|&x| x <= t).clamp(1, n - 1);
        let width = n.min(4);
        let start = (idx as isize - (width as isize / 2)).clamp(0, (n - width) as isize) as usize;
        let nodes = start..start + width;
        let mut terms = Vec::with_capacity(width);
        for i in nodes.clone() {
            let mut w = 1.0;
            for k in nodes.clone() {
                if k != i {
                    w *= (t - self.times[k]) / (self.times[i] - self.times[k]);
                }
            }
            terms.push((w, &self.states[i]));
        }
        let mut s = State::combine(&terms);
        s.time = t;
        s
    }
}

/// `dt = cfl * dx / c_max`, `c_max = sup G1^2 + eps (1 + sup|G2|^2 max|v|)`.
pub fn cfl_dt(model: &Model, state: &State, cfl: f64) -> f64 {
    let sup_g1sq = model.g1_table().iter().map(|g| g * g).fold(0.0, f64::max);
    let sup_g2sq = model.g2_table().iter().map(|g| g * g).fold(0.0, f64::max);
    let c_max = sup_g1sq + model.epsilon() * (1.0 + sup_g2sq * state.max_velocity());
    cfl * model.grid().dx() / c_max
}

/// Generic classical RK4 step for `u' = f(t, u)`.
fn rk4<F>(u: &State, dt: f64, mut f: F) -> Result<State, ModelError>
where
    F: FnMut(f64, &State) -> Result<State, ModelError>,
{
    let t = u.time;
    let k1 = f(t, u)?;
    let k2 = f(t + 0.5 * dt, &u.axpy(0.5 * dt, &k1))?;
    let k3 = f(t + 0.5 * dt, &u.axpy(0.5 * dt, &k2))?;
    let k4 = f(t + dt, &u.axpy(dt, &k3))?;
    let mut out = State::combine(&[
        (1.0, u),
        (dt / 6.0, &k1),
        (dt / 3.0, &k2),
        (dt / 3.0, &k3),
        (dt / 6.0, &k4),
    ]);
    out.time = t + dt;
    Ok(out)
}

pub fn step_rk4(model: &Model, state: &State, dt: f64) -> Result<State, ModelError> {
    let out = rk4(state, dt, |_, u| model.rhs(u))?;
    if !out.is_finite() {
        return Err(ModelError::NonFinite("RK4 stage"));
    }
    Ok(out)
}

/// Number of steps and the uniform step that lands exactly on `t_end`.
pub fn step_plan(t_end: f64, dt: f64) -> (usize, f64) {
    if t_end <= 0.0 {
        return (0, dt);
    }
    let steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
    (steps, t_end / steps as f64)
}

fn resolve_dt(model: &Model, initial: &State, cfg: &StepperConfig) -> Result<f64, RunError> {
    let dt = cfg.dt_override.unwrap_or_else(|| cfl_dt(model, initial, cfg.cfl));
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(RunError::BadConfig(format!("time step must be positive, got {dt}")));
    }
    Ok(dt)
}

/// Nonlinear run from `initial` to `initial.time + cfg.t_end`.
pub fn run(model: &Model, initial: &State, cfg: &StepperConfig, control: &RunControl) -> Result<Trajectory, RunError> {
    let (ok, min_depth) = model.non_cavitation(initial);
    if !ok {
        return Err(RunError::CavitationViolated {
            min_depth,
            h_min: model.params().h_min,
        });
    }
    if cfg.t_end < 0.0 {
        return Err(RunError::BadConfig("t_end must be non-negative".into()));
    }
    if cfg.scheme == Scheme::PicardReference {
        let mut out = picard_solve(model, initial, cfg)?.trajectory;
        out.reports = out
            .states
            .iter()
            .map(|s| energy_report(model, s, control.s, control.t0))
            .collect();
        return Ok(out);
    }
    let (steps, dt) = step_plan(cfg.t_end, resolve_dt(model, initial, cfg)?);
    let snap_every = control.snapshot_every.max(1);
    let diag_every = control.diag_every.max(1);

    let mut traj = Trajectory::start(initial, dt);
    traj.reports.push(energy_report(model, initial, control.s, control.t0));
    let threshold = control.blowup_factor * model.x_norm(initial, control.s);
    let mut state = initial.clone();
    for k in 1..=steps {
        let next = match step_rk4(model, &state, dt) {
            Ok(s) => s,
            Err(ModelError::NonFinite(_)) => {
                traj.termination = Termination::NonFinite;
                traj.steps = k - 1;
                return Err(RunError::NonFinite {
                    time: state.time + dt,
                    partial: Box::new(traj),
                });
            }
            Err(e) => return Err(e.into()),
        };
        // keep the step grid exact
        state = next;
        state.time = initial.time + k as f64 * dt;
        let norm = model.x_norm(&state, control.s);
        if !norm.is_finite() || norm > threshold {
            traj.push(&state);
            traj.reports.push(energy_report(model, &state, control.s, control.t0));
            traj.termination = Termination::BlowUp;
            traj.steps = k;
            return Err(RunError::BlowUpDetected {
                time: state.time,
                last_norm: norm,
                partial: Box::new(traj),
            });
        }
        if k % diag_every == 0 {
            traj.reports.push(energy_report(model, &state, control.s, control.t0));
        }
        if k % snap_every == 0 || k == steps {
            traj.push(&state);
        }
    }
    traj.steps = steps;
    Ok(traj)
}

/// Additive forcing `eps R(t)` for the linearized solver.
pub type Forcing<'a> = &'a dyn Fn(f64) -> State;

/// Solve `d_t U + sum_j A_j(U_(t)) d_j J_alpha U = forcing(t)` with the frozen
/// state interpolated from `frozen`, storing every step.
pub fn linearized_solve(
    model: &Model,
    frozen: &Trajectory,
    initial: &State,
    forcing: Option<Forcing<'_>>,
    alpha: f64,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory, RunError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(RunError::BadConfig(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let t_start = initial.time;
    let tol = 1e-9 * (1.0 + t_end.abs());
    if frozen.t_start() > t_start + tol || frozen.t_end() < t_start + t_end - tol {
        return Err(RunError::TimeRange {
            have_start: frozen.t_start(),
            have_end: frozen.t_end(),
            need_start: t_start,
            need_end: t_start + t_end,
        });
    }
    let grid = model.grid().clone();
    let j_alpha = grid
        .symbol_table(|xi| (1.0 + alpha * (xi[0] * xi[0] + xi[1] * xi[1])).powf(-0.5))
        .map_err(|_| ModelError::NonFinite("J_alpha symbol"))?;
    let dim = grid.dim();
    let operator = |t: f64, u: &State| -> Result<State, ModelError> {
        let fr = model.freeze(&frozen.interpolate(t));
        let regular = if alpha == 0.0 {
            u.clone()
        } else {
            let mut r = u.clone();
            r.zeta = grid.apply_table(&j_alpha, &u.zeta);
            for (o, c) in r.v.iter_mut().zip(&u.v) {
                *o = grid.apply_table(&j_alpha, c);
            }
            r
        };
        let mut out = match forcing {
            Some(f) => f(t),
            None => State::zeros(grid.clone()),
        };
        for j in 0..dim {
            let a = model.apply_a_frozen(&fr, j, &regular.derivative(j));
            out = out.axpy(-1.0, &a);
        }
        Ok(out)
    };
    let (steps, dt) = step_plan(t_end, dt);
    let mut traj = Trajectory::start(initial, dt);
    let mut state = initial.clone();
    for k in 1..=steps {
        state = rk4(&state, dt, operator)?;
        state.time = t_start + k as f64 * dt;
        if !state.is_finite() {
            traj.termination = Termination::NonFinite;
            return Err(RunError::NonFinite {
                time: state.time,
                partial: Box::new(traj),
            });
        }
        traj.push(&state);
    }
    traj.steps = steps;
    Ok(traj)
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub trajectory: Trajectory,
    /// Index `n` of the first iterate with `sup_t |U_{n+1} - U_n|_{X^0} < tol`.
    pub iterations: usize,
    /// `sup_t |U_{n+1} - U_n|_{X^0}` for `n = 0, 1, ...`.
    pub cauchy: Vec<f64>,
}

/// Picard iteration `d_t U_{n+1} + sum_j A_j(U_n) d_j U_{n+1} = 0` started
/// from the constant-in-time trajectory `U_0(t) = U_0`.
pub fn picard_solve(model: &Model, initial: &State, cfg: &StepperConfig) -> Result<PicardOutcome, RunError> {
    let grid = model.grid();
    if grid.dim() != 1 || grid.n() > 64 {
        return Err(RunError::PicardGrid);
    }
    let (steps, dt) = step_plan(cfg.t_end, resolve_dt(model, initial, cfg)?);
    let times: Vec<f64> = (0..=steps).map(|k| initial.time + k as f64 * dt).collect();
    let mut current = Trajectory::constant(initial, &times);
    current.dt = dt;
    let mut cauchy = Vec::new();
    for n in 0..cfg.picard_max_iter {
        let next = linearized_solve(model, &current, initial, None, cfg.alpha, dt, cfg.t_end)?;
        let diff = current
            .states
            .iter()
            .zip(&next.states)
            .map(|(a, b)| model.x_norm(&b.sub(a), 0.0))
            .fold(0.0, f64::max);
        cauchy.push(diff);
        current = next;
        if diff < cfg.picard_tol {
            return Ok(PicardOutcome {
                trajectory: current,
                iterations: n,
                cauchy,
            });
        }
    }
    Err(RunError::MaxIterExceeded {
        iterations: cfg.picard_max_iter,
        last_difference: *cauchy.last().unwrap_or(&f64::NAN),
    })
}
