//! Measurements on states and trajectories: energy reports, coercivity of
//! the symmetrizer, the energy identity, blow-up status and sampled ratios
//! for the product/commutator estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelError, State};
use crate::stepper::Trajectory;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("trajectories are misaligned in time")]
    Misaligned,
    #[error("need at least three snapshots, got {0}")]
    TooShort(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One row of the diagnostics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub time: f64,
    pub x_norm_0: f64,
    pub x_norm_t0: f64,
    pub x_norm_t0p1: f64,
    pub x_norm_s: f64,
    /// `NaN` when `G1` vanishes on the grid.
    pub y_norm_0: f64,
    pub quad_form: f64,
    pub min_depth: f64,
    pub max_velocity: f64,
}

impl EnergyReport {
    pub const COLUMNS: [&'static str; 9] = [
        "time",
        "x_norm_0",
        "x_norm_t0",
        "x_norm_t0p1",
        "x_norm_s",
        "y_norm_0",
        "quad_form",
        "min_depth",
        "max_velocity",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.time,
            self.x_norm_0,
            self.x_norm_t0,
            self.x_norm_t0p1,
            self.x_norm_s,
            self.y_norm_0,
            self.quad_form,
            self.min_depth,
            self.max_velocity,
        ]
    }
}

pub fn energy_report(model: &Model, state: &State, s: f64, t0: f64) -> EnergyReport {
    let fr = model.freeze(state);
    let quad_form = model.apply_s0_frozen(&fr, state).inner(state);
    let (_, min_depth) = model.non_cavitation(state);
    let g2v: Vec<Vec<f64>> = state.v.iter().map(|c| model.apply_g2(c)).collect();
    let max_velocity = (0..state.zeta.len())
        .map(|p| g2v.iter().map(|c| c[p] * c[p]).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    EnergyReport {
        time: state.time,
        x_norm_0: model.x_norm(state, 0.0),
        x_norm_t0: model.x_norm(state, t0),
        x_norm_t0p1: model.x_norm(state, t0 + 1.0),
        x_norm_s: model.x_norm(state, s),
        y_norm_0: model.y_norm(state, 0.0).unwrap_or(f64::NAN),
        quad_form,
        min_depth,
        max_velocity,
    }
}

/// `(S_0(U_) w, w) - (|w_zeta|^2 + h_min |G1 w_v|^2)`.
pub fn coercivity_margin(model: &Model, frozen: &State, w: &State) -> f64 {
    let q = model.apply_s0_frozen(&model.freeze(frozen), w).inner(w);
    let g = model.grid();
    let z = g.inner(&w.zeta, &w.zeta);
    let v: f64 = w
        .v
        .iter()
        .map(|c| {
            let gc = model.apply_g1(c);
            g.inner(&gc, &gc)
        })
        .sum();
    q - (z + model.params().h_min * v)
}

/// Random band-limited state with Gaussian coefficients decaying like `<xi>^{-decay}`.
///
/// Each component is drawn from its own child generator, so the same parent
/// seed yields nested fields on nested grids.
pub fn random_state(model: &Model, rng: &mut ChaCha8Rng, decay: f64) -> State {
    let g = model.grid().clone();
    let mut fields: Vec<Vec<f64>> = (0..=g.dim())
        .map(|_| child(rng))
        .collect::<Vec<_>>()
        .into_iter()
        .map(|mut r| g.random_field(&mut r, decay))
        .collect();
    let zeta = fields.remove(0);
    State::new(g, zeta, fields).expect("shapes come from the grid")
}

/// Independent generator seeded from `rng`.
pub fn child(rng: &mut ChaCha8Rng) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(rng.random())
}

/// Random frozen state with `eps zeta_ >= h_min - 1` at every grid point.
///
/// A band-limited field is drawn and shrunk (never clipped) until the bound
/// holds, so it stays in the dealiased band.
pub fn random_frozen_state(model: &Model, rng: &mut ChaCha8Rng, decay: f64) -> State {
    let mut s = random_state(model, rng, decay);
    let eps = model.epsilon();
    let floor = model.params().h_min - 1.0;
    let min = s.zeta.iter().cloned().fold(f64::INFINITY, f64::min);
    if eps > 0.0 && eps * min < floor {
        let k = floor / (eps * min) * (1.0 - 1e-9);
        s.zeta.iter_mut().for_each(|z| *z *= k);
    }
    s
}

/// Worst coercivity margin over `n_trials` random frozen states and random
/// test functions normalized in `X^0`.
pub fn coercivity_check(model: &Model, n_trials: usize, seed: u64) -> f64 {
    let decay = model.grid().dim() as f64 / 2.0 + 2.51;
    (0..n_trials)
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
            let frozen = random_frozen_state(model, &mut rng, decay);
            let w = random_state(model, &mut rng, decay);
            let w = w.scaled(1.0 / model.x_norm(&w, 0.0).max(f64::MIN_POSITIVE));
            coercivity_margin(model, &frozen, &w)
        })
        .fold(f64::INFINITY, f64::min)
}

/// One point of the energy-identity residual curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub time: f64,
    /// Centered difference of `(S_0(U_) U, U)`.
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Compare the centered time difference of `(S_0(U_) U, U)` with
/// `(d_t S_0 U, U) + sum_j ([d_j, A~_j] U, U) + 2 eps sum_j (F_j d_j U, U)`
/// at every interior snapshot. Both trajectories must share their times.
pub fn energy_identity_residual(
    model: &Model,
    frozen: &Trajectory,
    u: &Trajectory,
) -> Result<Vec<IdentityResidual>, DiagnosticsError> {
    let n = u.times.len();
    if frozen.times.len() != n {
        return Err(DiagnosticsError::Misaligned);
    }
    let scale = u.times.last().unwrap().abs().max(1.0);
    if frozen.times.iter().zip(&u.times).any(|(a, b)| (a - b).abs() > 1e-12 * scale) {
        return Err(DiagnosticsError::Misaligned);
    }
    if n < 3 {
        return Err(DiagnosticsError::TooShort(n));
    }
    let fr: Vec<_> = frozen.states.iter().map(|s| model.freeze(s)).collect();
    let quad = |k: usize, w: &State| model.apply_s0_frozen(&fr[k], w).inner(w);
    let dim = model.grid().dim();
    let mut out = Vec::with_capacity(n - 2);
    for k in 1..n - 1 {
        let dt2 = u.times[k + 1] - u.times[k - 1];
        let lhs = (quad(k + 1, &u.states[k + 1]) - quad(k - 1, &u.states[k - 1])) / dt2;
        let w = &u.states[k];
        let mut rhs = (quad(k + 1, w) - quad(k - 1, w)) / dt2;
        for j in 0..dim {
            let dw = w.derivative(j);
            let sym_w = model.apply_sym_frozen(&fr[k], j, w);
            let sym_dw = model.apply_sym_frozen(&fr[k], j, &dw);
            rhs += sym_w.derivative(j).sub(&sym_dw).inner(w);
            let b = model.apply_b_frozen(&fr[k], j, &dw);
            let bt = model.apply_b_adjoint_frozen(&fr[k], j, &dw);
            rhs -= b.sub(&bt).inner(w);
        }
        out.push(IdentityResidual {
            time: u.times[k],
            lhs,
            rhs,
            residual: (lhs - rhs).abs(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BlowUpStatus {
    Alive,
    BlownUp { time: f64 },
}

/// Scan a trajectory for `|U|_{X^s} > factor * |U(0)|_{X^s}` or non-finite values.
pub fn blow_up_monitor(model: &Model, trajectory: &Trajectory, factor: f64, s: f64) -> BlowUpStatus {
    let Some(first) = trajectory.states.first() else {
        return BlowUpStatus::Alive;
    };
    let threshold = factor * model.x_norm(first, s);
    for state in &trajectory.states[1..] {
        let norm = model.x_norm(state, s);
        if !state.is_finite() || !norm.is_finite() || norm > threshold {
            return BlowUpStatus::BlownUp { time: state.time };
        }
    }
    BlowUpStatus::Alive
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateId {
    /// `|fg|_{H^s} <= C |f|_{H^{max(t0,s)}} |g|_{H^s}`
    Product,
    /// `|[Lambda^s, f] g|_2 <= C |f|_{H^{max(t0+1,s)}} |g|_{H^{s-1}}`
    CommutatorLambda,
    /// `|G(D) f|_{H^s} <= sup|G| |f|_{H^s}`
    MultiplierBound,
    /// `|[G(D), f] g|_{H^s} <= C |f|_{H^{max(t0+1,s)}} |g|_{H^{s-1}}`
    CommutatorOrder0,
    /// `|F_j d_j U|_{Y^0} <= C |U|_{X^0}`
    SkewBound,
}

impl EstimateId {
    pub const ALL: [EstimateId; 5] = [
        EstimateId::Product,
        EstimateId::CommutatorLambda,
        EstimateId::MultiplierBound,
        EstimateId::CommutatorOrder0,
        EstimateId::SkewBound,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRatioSample {
    pub id: EstimateId,
    pub trial: usize,
    pub measured_lhs: f64,
    pub measured_rhs_factor: f64,
    pub ratio: f64,
    /// For the multiplier bound: `sup |G|` over the grid.
    pub bound: Option<f64>,
}

impl EstimateRatioSample {
    fn new(id: EstimateId, trial: usize, lhs: f64, rhs: f64) -> Self {
        Self {
            id,
            trial,
            measured_lhs: lhs,
            measured_rhs_factor: rhs,
            ratio: lhs / rhs,
            bound: None,
        }
    }
}

/// Smooth fixed frozen state used by the skew-bound ratio.
pub fn reference_frozen_state(model: &Model) -> State {
    let g = model.grid().clone();
    let l = g.length();
    let k = 2.0 * std::f64::consts::PI / l;
    let zeta = g.sample(|x, y| 0.3 * (k * x).cos() + 0.1 * (k * y).sin() + 0.1 * (2.0 * k * x).sin());
    let v = (0..g.dim())
        .map(|j| g.sample(|x, y| 0.2 * (k * x + j as f64).sin() + 0.1 * (k * y).cos()))
        .collect();
    State::new(g, zeta, v).expect("shapes come from the grid")
}

/// `max_j |F_j(U_)[d_j u]|_{Y^0} / |u|_{X^0}`.
pub fn remainder_ratio(model: &Model, frozen: &State, u: &State) -> Result<f64, ModelError> {
    let mut worst: f64 = 0.0;
    for j in 0..model.grid().dim() {
        let (_, skew) = model.split_symmetric(frozen, j, &u.derivative(j))?;
        worst = worst.max(model.y_norm(&skew, 0.0)?);
    }
    Ok(worst / model.x_norm(u, 0.0))
}

/// Sample the estimate ratios with random `f, g` (unit `L^2` norm,
/// coefficients decaying like `<xi>^{-(t0+2)}`), using the model's `G1` as
/// the order-zero symbol. Trial `i` uses seed `seed + i` on every grid, so
/// runs on nested grids see the same low modes.
pub fn estimate_ratio_suite(
    model: &Model,
    n_trials: usize,
    seed: u64,
    s: f64,
    t0: f64,
) -> Result<Vec<EstimateRatioSample>, ModelError> {
    let g = model.grid().clone();
    let decay = t0 + 2.0;
    let g1 = model.g1_table();
    let sup_g = g1.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let lambda_s = g
        .symbol_table(|xi| (1.0 + xi[0] * xi[0] + xi[1] * xi[1]).powf(s / 2.0))
        .map_err(|_| ModelError::NonFinite("Lambda^s symbol"))?;
    let h = |f: &[f64], r: f64| g.sobolev_norm(f, r);
    let unit = |mut f: Vec<f64>| {
        let n = h(&f, 0.0);
        f.iter_mut().for_each(|x| *x /= n);
        f
    };
    let frozen = reference_frozen_state(model);
    let mut out = Vec::with_capacity(5 * n_trials);
    for trial in 0..n_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
        let (mut rf, mut rg, mut ru) = (child(&mut rng), child(&mut rng), child(&mut rng));
        let f = unit(g.random_field(&mut rf, decay));
        let gg = unit(g.random_field(&mut rg, decay));

        let fg = g.product(&f, &gg);
        out.push(EstimateRatioSample::new(
            EstimateId::Product,
            trial,
            h(&fg, s),
            h(&f, t0.max(s)) * h(&gg, s),
        ));

        let comm: Vec<f64> = {
            let a = g.apply_table(&lambda_s, &fg);
            let b = g.product(&f, &g.apply_table(&lambda_s, &gg));
            a.iter().zip(&b).map(|(x, y)| x - y).collect()
        };
        let rhs_comm = h(&f, (t0 + 1.0).max(s)) * h(&gg, s - 1.0);
        out.push(EstimateRatioSample::new(
            EstimateId::CommutatorLambda,
            trial,
            h(&comm, 0.0),
            rhs_comm,
        ));

        let mut mb = EstimateRatioSample::new(
            EstimateId::MultiplierBound,
            trial,
            h(&g.apply_table(g1, &f), s),
            h(&f, s),
        );
        mb.bound = Some(sup_g);
        out.push(mb);

        let comm0: Vec<f64> = {
            let a = g.apply_table(g1, &fg);
            let b = g.product(&f, &g.apply_table(g1, &gg));
            a.iter().zip(&b).map(|(x, y)| x - y).collect()
        };
        out.push(EstimateRatioSample::new(
            EstimateId::CommutatorOrder0,
            trial,
            h(&comm0, s),
            rhs_comm,
        ));

        if model.epsilon() > 0.0 {
            let u = random_state(model, &mut ru, decay);
            let lhs = remainder_ratio(model, &frozen, &u)?;
            out.push(EstimateRatioSample::new(EstimateId::SkewBound, trial, lhs, 1.0));
        }
    }
    Ok(out)
}

/// Largest ratio per estimate id, in [`EstimateId::ALL`] order.
pub fn max_ratios(samples: &[EstimateRatioSample]) -> Vec<(EstimateId, f64)> {
    EstimateId::ALL
        .iter()
        .filter_map(|&id| {
            samples
                .iter()
                .filter(|s| s.id == id)
                .map(|s| s.ratio)
                .reduce(f64::max)
                .map(|r| (id, r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelParams;
    use crate::multiplier::{preset, MultiplierPair, SymbolSpec};
    use crate::spectral::SpectralGrid;
    use std::f64::consts::PI;

    fn model(pair: &MultiplierPair, eps: f64, h_min: f64) -> Model {
        let grid = SpectralGrid::shared(1, 32, 2.0 * PI).unwrap();
        Model::new(grid, ModelParams::new(pair, eps, 1.0, h_min).unwrap()).unwrap()
    }

    fn identity_pair() -> MultiplierPair {
        MultiplierPair::new(SymbolSpec::identity(), SymbolSpec::identity())
    }

    #[test]
    fn zero_state_report() {
        let m = model(&identity_pair(), 0.3, 0.5);
        let r = energy_report(&m, &State::zeros(m.grid().clone()), 2.01, 1.01);
        assert_eq!(r.x_norm_0, 0.0);
        assert_eq!(r.x_norm_s, 0.0);
        assert_eq!(r.quad_form, 0.0);
        assert_eq!(r.min_depth, 1.0);
    }

    #[test]
    fn cosine_report() {
        let m = model(&identity_pair(), 0.1, 0.5);
        let g = m.grid().clone();
        let s = State::new(g.clone(), g.sample(|x, _| x.cos()), vec![vec![0.0; 32]]).unwrap();
        let r = energy_report(&m, &s, 2.01, 1.01);
        assert!((r.x_norm_0 - PI.sqrt()).abs() < 1e-12);
        assert!((r.min_depth - 0.9).abs() < 1e-12);
        assert!(r.x_norm_0 <= r.x_norm_t0 && r.x_norm_t0 <= r.x_norm_t0p1);
    }

    #[test]
    fn quad_form_at_rest_is_l2_sum() {
        let (pair, _) = preset("ddk", 1.0).unwrap();
        let m = model(&pair, 0.2, 0.5);
        let g = m.grid().clone();
        let s = State::new(g.clone(), vec![0.0; 32], vec![g.sample(|x, _| (2.0 * x).sin())]).unwrap();
        let r = energy_report(&m, &s, 2.01, 1.01);
        let g1v = m.apply_g1(&s.v[0]);
        assert!((r.quad_form - g.inner(&g1v, &g1v)).abs() < 1e-12);
    }

    #[test]
    fn coercivity_equality_case() {
        let m = model(&identity_pair(), 0.5, 1.0 - 1e-15);
        let g = m.grid().clone();
        let w = State::new(g.clone(), g.sample(|x, _| x.sin()), vec![g.sample(|x, _| x.cos())]).unwrap();
        let margin = coercivity_margin(&m, &State::zeros(g), &w);
        assert!(margin.abs() < 1e-12);
    }

    #[test]
    fn coercivity_constant_depth() {
        let m = model(&identity_pair(), 1.0, 0.5);
        let g = m.grid().clone();
        let frozen = State::new(g.clone(), vec![0.5; 32], vec![vec![0.0; 32]]).unwrap();
        let w = State::new(g.clone(), g.sample(|x, _| x.sin()), vec![g.sample(|x, _| x.cos())]).unwrap();
        let margin = coercivity_margin(&m, &frozen, &w);
        // quad form |zeta|^2 + 1.5|v|^2 against |zeta|^2 + 0.5|v|^2
        assert!((margin - PI).abs() < 1e-12);
    }

    #[test]
    fn coercivity_random_ddk() {
        let (pair, _) = preset("ddk", 1.0).unwrap();
        let m = model(&pair, 0.7, 0.3);
        assert!(coercivity_check(&m, 100, 7) >= -1e-10);
    }

    #[test]
    fn multiplier_ratio_identity_is_one() {
        let m = model(&identity_pair(), 0.1, 0.5);
        let samples = estimate_ratio_suite(&m, 3, 1, 2.01, 1.01).unwrap();
        for s in samples.iter().filter(|s| s.id == EstimateId::MultiplierBound) {
            assert!((s.ratio - 1.0).abs() < 1e-14);
        }
        for s in samples.iter().filter(|s| s.id == EstimateId::CommutatorOrder0) {
            assert!(s.ratio < 1e-13);
        }
    }

    #[test]
    fn product_ratio_closed_form() {
        let m = model(&identity_pair(), 0.1, 0.5);
        let g = m.grid();
        let c = g.sample(|x, _| x.cos());
        let p = g.product(&c, &c);
        assert!((g.sobolev_norm(&p, 0.0) - (3.0 * PI).sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn monitor_flags_growth() {
        let m = model(&identity_pair(), 0.1, 0.5);
        let g = m.grid().clone();
        let a = State::new(g.clone(), g.sample(|x, _| x.cos()), vec![vec![0.0; 32]]).unwrap();
        let mut b = a.scaled(3.0);
        b.time = 1.0;
        let t = Trajectory::constant(&a, &[0.0]);
        assert_eq!(blow_up_monitor(&m, &t, 2.0, 2.0), BlowUpStatus::Alive);
        let mut t2 = t.clone();
        t2.times.push(1.0);
        t2.states.push(b);
        assert_eq!(blow_up_monitor(&m, &t2, 2.0, 2.0), BlowUpStatus::BlownUp { time: 1.0 });
        assert_eq!(blow_up_monitor(&m, &t2, 4.0, 2.0), BlowUpStatus::Alive);
    }
}
