use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use whitham_lab::diagnostics::{
    blow_up_monitor, energy_report, estimate_ratio_suite, max_ratios, random_state, BlowUpStatus, EstimateId,
};
use whitham_lab::harness::exact_linear_solution;
use whitham_lab::model::{Model, ModelParams, State};
use whitham_lab::multiplier::preset;
use whitham_lab::spectral::SpectralGrid;
use whitham_lab::stepper::{cfl_dt, run, step_plan, RunControl, RunError, StepperConfig, Termination};

fn model(name: &str, dim: usize, n: usize, eps: f64) -> Model {
    let (pair, _) = preset(name, 1.0).unwrap();
    let grid = SpectralGrid::shared(dim, n, 2.0 * PI).unwrap();
    Model::new(grid, ModelParams::new(&pair, eps, 1.0, 0.5).unwrap()).unwrap()
}

fn bump(m: &Model, amp: f64) -> State {
    let g = m.grid().clone();
    let dy = if g.dim() == 2 { 1.0 } else { 0.0 };
    let z = g.sample(|x, y| amp * (-(x - PI).powi(2) - dy * (y - PI).powi(2)).exp());
    let v = vec![z.clone(); g.dim()];
    State::new(g, z, v).unwrap()
}

#[test]
fn rk4_matches_the_exact_linear_flow_in_two_dimensions() {
    let m = model("ddk", 2, 16, 0.0);
    let u0 = bump(&m, 0.5);
    let cfg = StepperConfig::default().with_t_end(1.0).with_dt(0.01);
    let traj = run(&m, &u0, &cfg, &RunControl::for_dim(2)).unwrap();
    let exact = exact_linear_solution(&m, &u0, 1.0);
    assert!(m.x_norm(&traj.last().sub(&exact), 0.0) < 1e-8);
    assert_eq!(traj.termination, Termination::Completed);
}

#[test]
fn nonlinear_run_conserves_mass() {
    let m = model("ddk", 1, 64, 0.3);
    let u0 = bump(&m, 0.5);
    let cfg = StepperConfig::default().with_t_end(2.0);
    let traj = run(&m, &u0, &cfg, &RunControl::for_dim(1)).unwrap();
    for s in &traj.states {
        assert!((s.mean_zeta() - u0.mean_zeta()).abs() < 1e-13);
    }
    assert!((traj.last().time - 2.0).abs() < 1e-12);
}

#[test]
fn step_plan_lands_on_the_final_time() {
    for (t, dt) in [(1.0, 0.3), (2.0, 0.01), (0.5, 0.5)] {
        let (steps, adjusted) = step_plan(t, dt);
        assert!(adjusted <= dt);
        assert!((steps as f64 * adjusted - t).abs() < 1e-12);
    }
}

#[test]
fn cfl_step_shrinks_with_resolution() {
    let coarse = model("shallow_water", 1, 32, 0.1);
    let fine = model("shallow_water", 1, 64, 0.1);
    let a = cfl_dt(&coarse, &bump(&coarse, 0.5), 0.5);
    let b = cfl_dt(&fine, &bump(&fine, 0.5), 0.5);
    assert!(b < a);
}

#[test]
fn cavitating_initial_data_is_refused() {
    let m = model("ddk", 1, 32, 0.5);
    let u0 = bump(&m, -1.5);
    let cfg = StepperConfig::default().with_t_end(1.0);
    assert!(matches!(run(&m, &u0, &cfg, &RunControl::for_dim(1)), Err(RunError::CavitationViolated { .. })));
}

#[test]
fn low_blowup_threshold_reports_partial_trajectory() {
    let m = model("shallow_water", 1, 64, 0.5);
    let u0 = bump(&m, 0.8);
    let cfg = StepperConfig::default().with_t_end(20.0);
    let control = RunControl {
        blowup_factor: 1.5,
        ..RunControl::for_dim(1)
    };
    match run(&m, &u0, &cfg, &control) {
        Err(RunError::BlowUpDetected { time, partial, .. }) => {
            assert!(time > 0.0 && time < 20.0);
            assert!(!partial.reports.is_empty());
            assert!(matches!(blow_up_monitor(&m, &partial, 1.5, control.s), BlowUpStatus::BlownUp { .. }));
        }
        other => panic!("expected blow-up, got {other:?}"),
    }
}

#[test]
fn energy_report_of_zero_state() {
    let m = model("ddk", 1, 16, 0.2);
    let r = energy_report(&m, &State::zeros(m.grid().clone()), 2.01, 1.01);
    assert_eq!(r.x_norm_s, 0.0);
    assert_eq!(r.quad_form, 0.0);
}

#[test]
fn multiplier_ratio_respects_its_bound() {
    let m = model("ddk", 1, 32, 0.2);
    let samples = estimate_ratio_suite(&m, 20, 1, 2.01, 1.01).unwrap();
    for s in samples.iter().filter(|s| s.id == EstimateId::MultiplierBound) {
        assert!(s.ratio <= s.bound.unwrap() * (1.0 + 1e-12));
    }
    let maxes = max_ratios(&samples);
    assert_eq!(maxes.len(), EstimateId::ALL.len());
    assert!(maxes.iter().all(|(_, r)| r.is_finite() && *r > 0.0));
}

#[test]
fn random_states_are_reproducible() {
    let m = model("ddk", 2, 16, 0.2);
    let a = random_state(&m, &mut ChaCha8Rng::seed_from_u64(4), 2.0);
    let b = random_state(&m, &mut ChaCha8Rng::seed_from_u64(4), 2.0);
    assert!(a.components().zip(b.components()).all(|(x, y)| x == y));
}
