//! Quick invariant suite behind the `selftest` subcommand.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{InitialSpec, RunConfig};
use crate::diagnostics::{coercivity_check, estimate_ratio_suite, random_state, EstimateId};
use crate::model::{Model, ModelParams, State};
use crate::multiplier::{grid_sample_range, preset, validate_admissible};
use crate::snapshot::{decode, encode, SnapshotMeta};
use crate::spectral::SpectralGrid;
use crate::stepper::{picard_solve, run, RunControl, StepperConfig};

pub struct Check {
    pub name: &'static str,
    pub outcome: Result<String, String>,
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn grid(n: usize) -> Arc<SpectralGrid> {
    SpectralGrid::shared(1, n, 2.0 * PI).expect("valid grid")
}

fn model(name: &str, eps: f64, n: usize) -> Model {
    let (pair, _) = preset(name, 1.0).expect("known preset");
    Model::new(grid(n), ModelParams::new(&pair, eps, 1.0, 0.5).expect("valid params")).expect("valid model")
}

fn fft_round_trip() -> Result<String, String> {
    let g = SpectralGrid::shared(2, 16, 3.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = g.random_field(&mut rng, 1.0);
    let back = g.inverse(&g.forward(&f));
    let err = f.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let parseval = (g.sobolev_norm(&f, 0.0) - g.inner(&f, &f).sqrt()).abs();
    ensure(err < 1e-13 && parseval < 1e-12, format!("round trip {err:.1e}, Parseval {parseval:.1e}"))
}

fn dealiased_product() -> Result<String, String> {
    let g = grid(32);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = g.random_field(&mut rng, 1.0);
    let b = g.random_field(&mut rng, 1.0);
    let (ca, cb) = (g.forward(&a), g.forward(&b));
    let n = g.n() as i64;
    let mut want = vec![Complex64::new(0.0, 0.0); g.len()];
    for p in 0..g.len() {
        for q in 0..g.len() {
            let k = g.mode_index(p)[0] + g.mode_index(q)[0];
            if k.abs() <= n / 3 {
                want[k.rem_euclid(n) as usize] += ca[p] * cb[q];
            }
        }
    }
    let got = g.forward(&g.product(&a, &b));
    let err = got.iter().zip(&want).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    ensure(err < 1e-13, format!("max coefficient error {err:.1e}"))
}

fn admissibility() -> Result<String, String> {
    let range = grid_sample_range(&grid(64));
    let ddk = validate_admissible(&preset("ddk", 1.0).unwrap().0, range, 256);
    let open = validate_admissible(&preset("open_wb", 1.0).unwrap().0, range, 256);
    ensure(
        ddk.passed() && !open.passed(),
        format!("ddk passes: {}, open_wb rejected: {}", ddk.passed(), !open.passed()),
    )
}

fn matricial_form() -> Result<String, String> {
    let m = model("ddk", 0.4, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = random_state(&m, &mut rng, 3.0);
    let mut acc = m.rhs(&u).map_err(|e| e.to_string())?;
    let a = m.apply_a(&u, 0, &u.derivative(0)).map_err(|e| e.to_string())?;
    acc = acc.axpy(1.0, &a);
    let err = m.x_norm(&acc, 0.0) / m.x_norm(&a, 0.0);
    ensure(err < 1e-10, format!("relative mismatch {err:.1e}"))
}

fn symmetric_part() -> Result<String, String> {
    let m = model("ddk", 0.3, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let frozen = random_state(&m, &mut rng, 3.0);
    let f = random_state(&m, &mut rng, 2.0);
    let h = random_state(&m, &mut rng, 2.0);
    let (sf, _) = m.split_symmetric(&frozen, 0, &f).map_err(|e| e.to_string())?;
    let (sh, _) = m.split_symmetric(&frozen, 0, &h).map_err(|e| e.to_string())?;
    let (l, r) = (sf.inner(&h), f.inner(&sh));
    let err = (l - r).abs() / l.abs().max(r.abs()).max(1e-300);
    ensure(err < 1e-12, format!("self-adjointness defect {err:.1e}"))
}

fn coercivity() -> Result<String, String> {
    let m = model("ddk", 0.8, 32);
    let worst = coercivity_check(&m, 20, 5);
    ensure(worst >= -1e-10, format!("worst margin {worst:.3e}"))
}

fn plane_wave() -> Result<String, String> {
    let m = model("shallow_water", 0.0, 32);
    let g = m.grid().clone();
    let c = g.sample(|x, _| x.cos());
    let u0 = State::new(g, c.clone(), vec![c]).map_err(|e| e.to_string())?;
    let cfg = StepperConfig::default().with_t_end(2.0 * PI);
    let t = run(&m, &u0, &cfg, &RunControl::for_dim(1)).map_err(|e| e.to_string())?;
    let err = m.x_norm(&t.last().sub(&u0), 0.0);
    let q0 = t.reports[0].quad_form;
    let drift = t.reports.iter().map(|r| (r.quad_form - q0).abs()).fold(0.0, f64::max) / q0;
    ensure(err < 1e-4 && drift < 1e-6, format!("period error {err:.1e}, energy drift {drift:.1e}"))
}

fn picard_linear() -> Result<String, String> {
    let m = model("ddk", 0.0, 16);
    let g = m.grid().clone();
    let u0 = State::new(g.clone(), g.sample(|x, _| x.sin()), vec![g.sample(|x, _| x.cos())]).map_err(|e| e.to_string())?;
    let cfg = StepperConfig::default().with_t_end(0.5);
    let out = picard_solve(&m, &u0, &cfg).map_err(|e| e.to_string())?;
    ensure(out.iterations == 1, format!("{} iterations", out.iterations))
}

fn multiplier_bound() -> Result<String, String> {
    let m = model("ddk", 0.2, 32);
    let samples = estimate_ratio_suite(&m, 10, 6, 2.01, 1.01).map_err(|e| e.to_string())?;
    let worst = samples
        .iter()
        .filter(|s| s.id == EstimateId::MultiplierBound)
        .map(|s| s.ratio - s.bound.unwrap_or(0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    ensure(worst <= 1e-12, format!("max ratio - sup|G| = {worst:.2e}"))
}

fn persistence() -> Result<String, String> {
    let m = model("ddk", 0.2, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut s = random_state(&m, &mut rng, 1.0);
    s.time = 0.25;
    let bytes = encode(&s, SnapshotMeta { mu: 1.0, epsilon: 0.2 }).map_err(|e| e.to_string())?;
    let (back, _) = decode(&bytes).map_err(|e| e.to_string())?;
    let snap_ok = s.components().zip(back.components()).all(|(a, b)| a == b);
    let cfg = RunConfig::new("ddk", 1, 32, 0.1, InitialSpec::gaussian(0.5, 1.0));
    let again = RunConfig::from_json(&cfg.to_json()).map_err(|e| e.to_string())?;
    ensure(snap_ok && again == cfg, format!("snapshot exact: {snap_ok}, config identical: {}", again == cfg))
}

pub fn run_all() -> Vec<Check> {
    let checks: [(&'static str, fn() -> Result<String, String>); 11] = [
        ("fft_round_trip", fft_round_trip),
        ("dealiased_product", dealiased_product),
        ("admissibility", admissibility),
        ("matricial_form", matricial_form),
        ("symmetric_part", symmetric_part),
        ("coercivity", coercivity),
        ("plane_wave", plane_wave),
        ("picard_linear", picard_linear),
        ("multiplier_bound", multiplier_bound),
        ("persistence", persistence),
        ("deterministic_rerun", deterministic_rerun),
    ];
    checks
        .into_iter()
        .map(|(name, f)| Check { name, outcome: f() })
        .collect()
}

fn deterministic_rerun() -> Result<String, String> {
    let m = model("ddk", 0.3, 32);
    let g = m.grid().clone();
    let z = g.sample(|x, _| 0.5 * (-(x - PI).powi(2)).exp());
    let u0 = State::new(g, z.clone(), vec![z]).map_err(|e| e.to_string())?;
    let cfg = StepperConfig::default().with_t_end(1.0);
    let a = run(&m, &u0, &cfg, &RunControl::for_dim(1)).map_err(|e| e.to_string())?;
    let b = run(&m, &u0, &cfg, &RunControl::for_dim(1)).map_err(|e| e.to_string())?;
    let same = a.last().components().zip(b.last().components()).all(|(x, y)| x == y);
    ensure(same, format!("bit-identical: {same}"))
}
