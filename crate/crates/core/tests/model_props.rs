use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use whitham_lab::diagnostics::{coercivity_margin, random_frozen_state, random_state};
use whitham_lab::model::{Model, ModelParams, State};
use whitham_lab::multiplier::preset;
use whitham_lab::spectral::SpectralGrid;

fn model(name: &str, dim: usize, n: usize, eps: f64) -> Model {
    let (pair, _) = preset(name, 1.0).unwrap();
    let grid = SpectralGrid::shared(dim, n, 2.0 * PI).unwrap();
    Model::new(grid, ModelParams::new(&pair, eps, 1.0, 0.5).unwrap()).unwrap()
}

fn name_strategy() -> impl Strategy<Value = &'static str> {
    prop_oneof![Just("shallow_water"), Just("abcd"), Just("ddk"), Just("quasilinear_wb")]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn symmetric_part_is_self_adjoint(seed in any::<u64>(), name in name_strategy(), dim in 1usize..3, eps in 0.05f64..1.0) {
        let m = model(name, dim, 16, eps);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frozen = random_frozen_state(&m, &mut rng, 2.0);
        let f = random_state(&m, &mut rng, 1.0);
        let h = random_state(&m, &mut rng, 1.0);
        for j in 0..dim {
            let (sf, _) = m.split_symmetric(&frozen, j, &f).unwrap();
            let (sh, _) = m.split_symmetric(&frozen, j, &h).unwrap();
            let (l, r) = (sf.inner(&h), f.inner(&sh));
            prop_assert!((l - r).abs() <= 1e-12 * l.abs().max(r.abs()).max(1e-300));
        }
    }

    #[test]
    fn symmetrizer_is_self_adjoint_and_coercive(seed in any::<u64>(), name in name_strategy(), eps in 0.05f64..1.0) {
        let m = model(name, 1, 32, eps);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frozen = random_frozen_state(&m, &mut rng, 2.0);
        let f = random_state(&m, &mut rng, 1.0);
        let h = random_state(&m, &mut rng, 1.0);
        let l = m.apply_s0(&frozen, &f).unwrap().inner(&h);
        let r = f.inner(&m.apply_s0(&frozen, &h).unwrap());
        prop_assert!((l - r).abs() <= 1e-12 * l.abs().max(1.0));
        prop_assert!(coercivity_margin(&m, &frozen, &f) >= -1e-10);
    }

    #[test]
    fn quasilinear_form_reproduces_rhs(seed in any::<u64>(), name in name_strategy(), dim in 1usize..3) {
        let m = model(name, dim, 16, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_state(&m, &mut rng, 2.0);
        let mut acc = m.rhs(&u).unwrap();
        for j in 0..dim {
            acc = acc.axpy(1.0, &m.apply_a(&u, j, &u.derivative(j)).unwrap());
        }
        let scale = m.x_norm(&m.rhs(&u).unwrap(), 0.0).max(1e-12);
        prop_assert!(m.x_norm(&acc, 0.0) <= 1e-11 * scale);
    }
}

#[test]
fn b_splits_into_symmetric_and_skew_parts() {
    let m = model("ddk", 1, 32, 0.4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let frozen = random_frozen_state(&m, &mut rng, 2.0);
    let w = random_state(&m, &mut rng, 1.0);
    let (sym, skew) = m.split_symmetric(&frozen, 0, &w).unwrap();
    let b = m.apply_b(&frozen, 0, &w).unwrap();
    let rebuilt = sym.axpy(-0.4, &skew);
    assert!(m.x_norm(&rebuilt.sub(&b), 0.0) < 1e-13 * m.x_norm(&b, 0.0));
}

#[test]
fn zero_epsilon_has_no_skew_part() {
    let m = model("ddk", 1, 16, 0.0);
    let z = State::zeros(m.grid().clone());
    assert!(m.split_symmetric(&z, 0, &z).is_err());
    assert!(m.apply_a(&z, 1, &z).is_err());
}

#[test]
fn norms_of_a_single_mode() {
    let m = model("shallow_water", 1, 32, 0.1);
    let g = m.grid().clone();
    let u = State::new(g.clone(), g.sample(|x, _| x.cos()), vec![vec![0.0; 32]]).unwrap();
    // |cos|_{L2} = sqrt(pi), <1>^s weight (1 + 1)^{s/2}
    assert!((m.x_norm(&u, 0.0) - PI.sqrt()).abs() < 1e-12);
    assert!((m.x_norm(&u, 2.0) - 2.0 * PI.sqrt()).abs() < 1e-12);
    assert!((m.y_norm(&u, 0.0).unwrap() - PI.sqrt()).abs() < 1e-12);
}

#[test]
fn non_cavitation_threshold() {
    let m = model("ddk", 1, 16, 0.5);
    let g = m.grid().clone();
    let shallow = State::new(g.clone(), vec![-1.2; 16], vec![vec![0.0; 16]]).unwrap();
    let (ok, depth) = m.non_cavitation(&shallow);
    assert!(!ok);
    assert!((depth - 0.4).abs() < 1e-15);
    assert!(m.non_cavitation(&State::zeros(g)).0);
}
