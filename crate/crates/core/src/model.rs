//! The quasi-linear system with Fourier multipliers
//!
//! ```text
//! d_t zeta + G1^2 div v + eps G2 div(zeta G2[v]) = 0
//! d_t v    + grad zeta  + eps (G2[v] . grad) G2[v] = 0
//! ```
//!
//! together with its matricial operators `A_j(U)`, the symmetrizer `S_0(U)`,
//! the blocks `B_j = S_0 A_j`, their symmetric/skew split and the energy norms.
//! Every product is dealiased as `P(Pa * Pb)`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::multiplier::{MultiplierPair, SymbolTableError};
use crate::spectral::SpectralGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("epsilon must lie in [0, 1], got {0}")]
    BadEpsilon(f64),
    #[error("mu must lie in (0, 1], got {0}")]
    BadMu(f64),
    #[error("h_min must lie in (0, 1), got {0}")]
    BadHmin(f64),
    #[error("direction {j} out of range for dimension {dim}")]
    BadDirection { j: usize, dim: usize },
    #[error("states live on different grids or have different shapes")]
    ShapeMismatch,
    #[error("the skew part needs epsilon > 0")]
    ZeroEpsilon,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("G1 vanishes on a grid mode; the Y norm is undefined")]
    VanishingG1,
    #[error(transparent)]
    Symbol(#[from] SymbolTableError),
}

/// `U = (zeta, v)` on a grid, physical samples.
#[derive(Debug, Clone)]
pub struct State {
    pub grid: Arc<SpectralGrid>,
    pub zeta: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub time: f64,
}

impl State {
    pub fn zeros(grid: Arc<SpectralGrid>) -> Self {
        let n = grid.len();
        let d = grid.dim();
        Self {
            zeta: vec![0.0; n],
            v: vec![vec![0.0; n]; d],
            grid,
            time: 0.0,
        }
    }

    pub fn new(grid: Arc<SpectralGrid>, zeta: Vec<f64>, v: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let n = grid.len();
        if zeta.len() != n || v.len() != grid.dim() || v.iter().any(|c| c.len() != n) {
            return Err(ModelError::ShapeMismatch);
        }
        Ok(Self {
            grid,
            zeta,
            v,
            time: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn same_shape(&self, other: &State) -> bool {
        *self.grid == *other.grid && self.v.len() == other.v.len()
    }

    pub fn components(&self) -> impl Iterator<Item = &Vec<f64>> {
        std::iter::once(&self.zeta).chain(self.v.iter())
    }

    fn components_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        std::iter::once(&mut self.zeta).chain(self.v.iter_mut())
    }

    pub fn is_finite(&self) -> bool {
        self.components().all(|c| c.iter().all(|x| x.is_finite()))
    }

    /// `self + a * other`, keeping `self.time`.
    pub fn axpy(&self, a: f64, other: &State) -> State {
        let mut out = self.clone();
        out.components_mut()
            .zip(other.components())
            .for_each(|(x, y)| x.iter_mut().zip(y).for_each(|(x, y)| *x += a * y));
        out
    }

    pub fn scaled(&self, a: f64) -> State {
        let mut out = self.clone();
        out.components_mut().for_each(|x| x.iter_mut().for_each(|x| *x *= a));
        out
    }

    pub fn sub(&self, other: &State) -> State {
        self.axpy(-1.0, other)
    }

    /// Linear combination `sum c_i s_i` on the shape of the first state.
    pub fn combine(terms: &[(f64, &State)]) -> State {
        let (c0, s0) = terms[0];
        let mut out = s0.scaled(c0);
        for (c, s) in &terms[1..] {
            out = out.axpy(*c, s);
        }
        out
    }

    /// Spectral derivative of every component along `axis`.
    pub fn derivative(&self, axis: usize) -> State {
        let g = &self.grid;
        let mut out = self.clone();
        out.components_mut()
            .for_each(|c| *c = g.derivative(c, axis).expect("axis checked by caller"));
        out
    }

    /// Pointwise maximum of `|v|`.
    pub fn max_velocity(&self) -> f64 {
        (0..self.zeta.len())
            .map(|p| self.v.iter().map(|c| c[p] * c[p]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Discrete L2 pairing over all components.
    pub fn inner(&self, other: &State) -> f64 {
        self.components()
            .zip(other.components())
            .map(|(a, b)| self.grid.inner(a, b))
            .sum()
    }

    pub fn mean_zeta(&self) -> f64 {
        self.zeta.iter().sum::<f64>() / self.zeta.len() as f64
    }
}

/// Physical and structural parameters of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub pair: MultiplierPair,
    pub epsilon: f64,
    pub mu: f64,
    pub h_min: f64,
}

impl ModelParams {
    /// Rescales `pair` to `mu`. `epsilon = 0` is accepted for linear runs.
    pub fn new(pair: &MultiplierPair, epsilon: f64, mu: f64, h_min: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(ModelError::BadEpsilon(epsilon));
        }
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(ModelError::BadMu(mu));
        }
        if !(h_min > 0.0 && h_min < 1.0) {
            return Err(ModelError::BadHmin(h_min));
        }
        Ok(Self {
            pair: pair.with_mu(mu),
            epsilon,
            mu,
            h_min,
        })
    }
}

/// Frozen coefficients `zeta_` and `G2[v_]`, already band-limited.
#[derive(Debug, Clone)]
pub struct Frozen {
    zeta: Vec<f64>,
    g2v: Vec<Vec<f64>>,
}

/// Pointwise minimum of `1 + eps zeta` and whether it reaches `h_min`.
pub fn check_non_cavitation(zeta: &[f64], epsilon: f64, h_min: f64) -> (bool, f64) {
    let min = zeta.iter().map(|z| 1.0 + epsilon * z).fold(f64::INFINITY, f64::min);
    (min >= h_min, min)
}

/// A model on a fixed grid with its symbol tables.
#[derive(Debug, Clone)]
pub struct Model {
    grid: Arc<SpectralGrid>,
    params: ModelParams,
    g1: Vec<f64>,
    g1_sq: Vec<f64>,
    g1_inv: Option<Vec<f64>>,
    g2: Vec<f64>,
}

impl Model {
    pub fn new(grid: Arc<SpectralGrid>, params: ModelParams) -> Result<Self, ModelError> {
        let g1 = params.pair.g1.table(&grid)?;
        let g2 = params.pair.g2.table(&grid)?;
        let g1_sq = g1.iter().map(|g| g * g).collect();
        let g1_inv = if g1.iter().all(|&g| g > 0.0) {
            Some(g1.iter().map(|g| 1.0 / g).collect())
        } else {
            None
        };
        Ok(Self {
            grid,
            params,
            g1,
            g1_sq,
            g1_inv,
            g2,
        })
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn epsilon(&self) -> f64 {
        self.params.epsilon
    }

    pub fn g1_table(&self) -> &[f64] {
        &self.g1
    }

    pub fn g2_table(&self) -> &[f64] {
        &self.g2
    }

    pub fn apply_g1(&self, f: &[f64]) -> Vec<f64> {
        self.grid.apply_table(&self.g1, f)
    }

    pub fn apply_g1_sq(&self, f: &[f64]) -> Vec<f64> {
        self.grid.apply_table(&self.g1_sq, f)
    }

    pub fn apply_g2(&self, f: &[f64]) -> Vec<f64> {
        self.grid.apply_table(&self.g2, f)
    }

    fn check_direction(&self, j: usize) -> Result<(), ModelError> {
        if j >= self.grid.dim() {
            return Err(ModelError::BadDirection { j, dim: self.grid.dim() });
        }
        Ok(())
    }

    fn check_state(&self, u: &State) -> Result<(), ModelError> {
        if *u.grid != *self.grid || u.dim() != self.grid.dim() {
            return Err(ModelError::ShapeMismatch);
        }
        Ok(())
    }

    pub fn freeze(&self, state: &State) -> Frozen {
        Frozen {
            zeta: self.grid.dealias(&state.zeta),
            g2v: state.v.iter().map(|c| self.grid.dealias(&self.apply_g2(c))).collect(),
        }
    }

    fn mul(&self, projected: &[f64], w: &[f64]) -> Vec<f64> {
        self.grid.product_projected(projected, w)
    }

    /// Time derivative `d_t U` of the nonlinear system.
    pub fn rhs(&self, u: &State) -> Result<State, ModelError> {
        self.check_state(u)?;
        let g = &self.grid;
        let eps = self.params.epsilon;
        let d = g.dim();
        let g2v: Vec<Vec<f64>> = u.v.iter().map(|c| self.apply_g2(c)).collect();
        let mut out = State::zeros(g.clone());
        out.time = u.time;

        // divergence terms of the zeta equation, assembled spectrally
        let mut acc = vec![num_complex::Complex64::new(0.0, 0.0); g.len()];
        for j in 0..d {
            let mut flux = g.forward(&u.v[j]);
            flux.iter_mut().zip(&self.g1_sq).for_each(|(c, w)| *c *= *w);
            if eps != 0.0 {
                let nl = g.forward(&g.product(&u.zeta, &g2v[j]));
                flux.iter_mut()
                    .zip(nl.iter().zip(&self.g2))
                    .for_each(|(c, (n, w))| *c += eps * w * n);
            }
            g.differentiate_coeffs(&mut flux, j);
            acc.iter_mut().zip(&flux).for_each(|(a, f)| *a -= f);
        }
        out.zeta = g.inverse(&acc);

        for i in 0..d {
            let mut dv = g.derivative(&u.zeta, i).expect("direction in range");
            dv.iter_mut().for_each(|x| *x = -*x);
            if eps != 0.0 {
                let pa: Vec<Vec<f64>> = g2v.iter().map(|c| g.dealias(c)).collect();
                for j in 0..d {
                    let grad = g.derivative(&g2v[i], j).expect("direction in range");
                    let adv = self.mul(&pa[j], &grad);
                    dv.iter_mut().zip(&adv).for_each(|(x, a)| *x -= eps * a);
                }
            }
            out.v[i] = dv;
        }
        if !out.is_finite() {
            return Err(ModelError::NonFinite("rhs"));
        }
        Ok(out)
    }

    /// `A_j(U_)[w]` acting on an undifferentiated argument.
    pub fn apply_a(&self, frozen: &State, j: usize, w: &State) -> Result<State, ModelError> {
        self.check_direction(j)?;
        self.check_state(frozen)?;
        self.check_state(w)?;
        Ok(self.apply_a_frozen(&self.freeze(frozen), j, w))
    }

    pub fn apply_a_frozen(&self, fr: &Frozen, j: usize, w: &State) -> State {
        let eps = self.params.epsilon;
        let mut out = State::zeros(self.grid.clone());
        out.time = w.time;
        let mut zeta = self.apply_g1_sq(&w.v[j]);
        if eps != 0.0 {
            let a = &fr.g2v[j];
            let t1 = self.apply_g2(&self.mul(a, &w.zeta));
            let t2 = self.apply_g2(&self.mul(&fr.zeta, &self.apply_g2(&w.v[j])));
            zeta.iter_mut()
                .zip(t1.iter().zip(&t2))
                .for_each(|(z, (x, y))| *z += eps * (x + y));
        }
        out.zeta = zeta;
        for i in 0..self.grid.dim() {
            let mut vi = if eps != 0.0 {
                let mut t = self.mul(&fr.g2v[j], &self.apply_g2(&w.v[i]));
                t.iter_mut().for_each(|x| *x *= eps);
                t
            } else {
                vec![0.0; self.grid.len()]
            };
            if i == j {
                vi.iter_mut().zip(&w.zeta).for_each(|(x, z)| *x += z);
            }
            out.v[i] = vi;
        }
        out
    }

    /// L2 adjoint `A_j(U_)^*[w]`, assembled by reversing each composition.
    pub fn apply_a_adjoint_frozen(&self, fr: &Frozen, j: usize, w: &State) -> State {
        let eps = self.params.epsilon;
        let mut out = State::zeros(self.grid.clone());
        out.time = w.time;
        let mut zeta = w.v[j].clone();
        if eps != 0.0 {
            let t = self.mul(&fr.g2v[j], &self.apply_g2(&w.zeta));
            zeta.iter_mut().zip(&t).for_each(|(z, x)| *z += eps * x);
        }
        out.zeta = zeta;
        for i in 0..self.grid.dim() {
            let mut vi = if eps != 0.0 {
                let mut t = self.apply_g2(&self.mul(&fr.g2v[j], &w.v[i]));
                t.iter_mut().for_each(|x| *x *= eps);
                t
            } else {
                vec![0.0; self.grid.len()]
            };
            if i == j {
                let sym = self.s0_velocity_block(fr, &w.zeta);
                vi.iter_mut().zip(&sym).for_each(|(x, s)| *x += s);
            }
            out.v[i] = vi;
        }
        out
    }

    /// `G1^2 f + eps G2[zeta_ G2[f]]`.
    fn s0_velocity_block(&self, fr: &Frozen, f: &[f64]) -> Vec<f64> {
        let mut out = self.apply_g1_sq(f);
        let eps = self.params.epsilon;
        if eps != 0.0 {
            let t = self.apply_g2(&self.mul(&fr.zeta, &self.apply_g2(f)));
            out.iter_mut().zip(&t).for_each(|(o, x)| *o += eps * x);
        }
        out
    }

    /// `S_0(U_)[w] = (w_zeta, G1^2 w_v + eps G2[zeta_ G2[w_v]])`.
    pub fn apply_s0(&self, frozen: &State, w: &State) -> Result<State, ModelError> {
        self.check_state(frozen)?;
        self.check_state(w)?;
        Ok(self.apply_s0_frozen(&self.freeze(frozen), w))
    }

    pub fn apply_s0_frozen(&self, fr: &Frozen, w: &State) -> State {
        let mut out = w.clone();
        for (o, c) in out.v.iter_mut().zip(&w.v) {
            *o = self.s0_velocity_block(fr, c);
        }
        out
    }

    /// `(S_0(U_) w, w)_2`.
    pub fn quadratic_form(&self, frozen: &State, w: &State) -> Result<f64, ModelError> {
        Ok(self.apply_s0(frozen, w)?.inner(w))
    }

    /// `B_j(U_)[w] = S_0(U_)[A_j(U_)[w]]`.
    pub fn apply_b(&self, frozen: &State, j: usize, w: &State) -> Result<State, ModelError> {
        self.check_direction(j)?;
        self.check_state(frozen)?;
        self.check_state(w)?;
        let fr = self.freeze(frozen);
        Ok(self.apply_b_frozen(&fr, j, w))
    }

    pub fn apply_b_frozen(&self, fr: &Frozen, j: usize, w: &State) -> State {
        self.apply_s0_frozen(fr, &self.apply_a_frozen(fr, j, w))
    }

    /// `B_j(U_)^*[w] = A_j(U_)^*[S_0(U_)[w]]`.
    pub fn apply_b_adjoint_frozen(&self, fr: &Frozen, j: usize, w: &State) -> State {
        self.apply_a_adjoint_frozen(fr, j, &self.apply_s0_frozen(fr, w))
    }

    /// `(A~_j[w], F_j[w])` with `A~_j = (B_j + B_j^*)/2` and
    /// `F_j = -(B_j - B_j^*)/(2 eps)`, so that `B_j = A~_j - eps F_j`.
    pub fn split_symmetric(&self, frozen: &State, j: usize, w: &State) -> Result<(State, State), ModelError> {
        self.check_direction(j)?;
        self.check_state(frozen)?;
        self.check_state(w)?;
        let eps = self.params.epsilon;
        if eps == 0.0 {
            return Err(ModelError::ZeroEpsilon);
        }
        let fr = self.freeze(frozen);
        let b = self.apply_b_frozen(&fr, j, w);
        let bt = self.apply_b_adjoint_frozen(&fr, j, w);
        let sym = State::combine(&[(0.5, &b), (0.5, &bt)]);
        let skew = State::combine(&[(-0.5 / eps, &b), (0.5 / eps, &bt)]);
        Ok((sym, skew))
    }

    /// `(A~_j[w])` only; defined for every epsilon.
    pub fn apply_sym_frozen(&self, fr: &Frozen, j: usize, w: &State) -> State {
        let b = self.apply_b_frozen(fr, j, w);
        let bt = self.apply_b_adjoint_frozen(fr, j, w);
        State::combine(&[(0.5, &b), (0.5, &bt)])
    }

    /// `|zeta|_{H^s} + |G[v]|_{H^s}` for a tabulated velocity weight.
    fn weighted_norm(&self, u: &State, s: f64, weight: &[f64]) -> f64 {
        let g = &self.grid;
        let z = g.sobolev_norm_coeffs(&g.forward(&u.zeta), s, None);
        let v = u
            .v
            .iter()
            .map(|c| g.sobolev_norm_coeffs(&g.forward(c), s, Some(weight)).powi(2))
            .sum::<f64>()
            .sqrt();
        z + v
    }

    /// `|U|_{X^s} = |zeta|_{H^s} + |G1 v|_{H^s}`.
    pub fn x_norm(&self, u: &State, s: f64) -> f64 {
        self.weighted_norm(u, s, &self.g1)
    }

    /// `|U|_{Y^s} = |zeta|_{H^s} + |G1^{-1} v|_{H^s}`.
    pub fn y_norm(&self, u: &State, s: f64) -> Result<f64, ModelError> {
        let inv = self.g1_inv.as_ref().ok_or(ModelError::VanishingG1)?;
        Ok(self.weighted_norm(u, s, inv))
    }

    pub fn non_cavitation(&self, state: &State) -> (bool, f64) {
        check_non_cavitation(&state.zeta, self.params.epsilon, self.params.h_min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiplier::{preset, SymbolSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup(name: &str, eps: f64, n: usize) -> Model {
        let grid = SpectralGrid::shared(1, n, 2.0 * PI).unwrap();
        let (pair, _) = preset(name, 1.0).unwrap();
        Model::new(grid, ModelParams::new(&pair, eps, 1.0, 0.5).unwrap()).unwrap()
    }

    fn state(m: &Model, z: impl Fn(f64) -> f64, v: impl Fn(f64) -> f64) -> State {
        let g = m.grid().clone();
        let zeta = g.sample(|x, _| z(x));
        let vel = g.sample(|x, _| v(x));
        State::new(g, zeta, vec![vel]).unwrap()
    }

    fn max_diff(a: &[f64], f: impl Fn(f64) -> f64, g: &SpectralGrid) -> f64 {
        a.iter()
            .zip(g.coordinates(0))
            .map(|(y, x)| (y - f(x)).abs())
            .fold(0.0, f64::max)
    }

    fn random_state(m: &Model, rng: &mut ChaCha8Rng, amp: f64) -> State {
        let g = m.grid().clone();
        let d = g.dim();
        let zeta: Vec<f64> = g.random_field(rng, 3.0).iter().map(|x| amp * x).collect();
        let v = (0..d)
            .map(|_| g.random_field(rng, 3.0).iter().map(|x| amp * x).collect())
            .collect();
        State::new(g, zeta, v).unwrap()
    }

    #[test]
    fn linear_tendencies() {
        let m = setup("shallow_water", 0.0, 32);
        let g = m.grid().clone();
        let r = m.rhs(&state(&m, f64::cos, |_| 0.0)).unwrap();
        assert!(max_diff(&r.zeta, |_| 0.0, &g) < 1e-12);
        assert!(max_diff(&r.v[0], f64::sin, &g) < 1e-12);
        let r = m.rhs(&state(&m, |_| 0.0, f64::cos)).unwrap();
        assert!(max_diff(&r.zeta, f64::sin, &g) < 1e-12);
        assert!(max_diff(&r.v[0], |_| 0.0, &g) < 1e-12);
    }

    #[test]
    fn nonlinear_shallow_water_tendency() {
        let m = setup("shallow_water", 1.0, 32);
        let g = m.grid().clone();
        let r = m.rhs(&state(&m, |_| 0.0, f64::cos)).unwrap();
        assert!(max_diff(&r.zeta, f64::sin, &g) < 1e-12);
        assert!(max_diff(&r.v[0], |x| (2.0 * x).sin() / 2.0, &g) < 1e-12);
        let zero = m.rhs(&State::zeros(g)).unwrap();
        assert!(zero.zeta.iter().chain(&zero.v[0]).all(|x| *x == 0.0));
    }

    #[test]
    fn a_at_zero_state_is_linear_coupling() {
        let m = setup("ddk", 0.7, 16);
        let g = m.grid().clone();
        let u = state(&m, f64::cos, f64::sin);
        let out = m.apply_a(&State::zeros(g.clone()), 0, &u).unwrap();
        let g1sq = m.apply_g1_sq(&u.v[0]);
        assert!(out.zeta.iter().zip(&g1sq).all(|(a, b)| (a - b).abs() < 1e-14));
        assert!(out.v[0].iter().zip(&u.zeta).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn a_with_constant_coefficients() {
        let m = setup("shallow_water", 0.3, 16);
        let g = m.grid().clone();
        let (zb, vb) = (0.4, -0.7);
        let frozen = state(&m, |_| zb, |_| vb);
        let u = state(&m, f64::cos, f64::sin);
        let out = m.apply_a(&frozen, 0, &u).unwrap();
        let eps = 0.3;
        assert!(max_diff(&out.zeta, |x| eps * vb * x.cos() + (1.0 + eps * zb) * x.sin(), &g) < 1e-13);
        assert!(max_diff(&out.v[0], |x| x.cos() + eps * vb * x.sin(), &g) < 1e-13);
    }

    #[test]
    fn matricial_form_matches_rhs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for name in ["shallow_water", "ddk", "abcd", "quasilinear_wb"] {
            for dim in [1, 2] {
                let n = if dim == 1 { 32 } else { 16 };
                let grid = SpectralGrid::shared(dim, n, 2.0 * PI).unwrap();
                let (pair, _) = preset(name, 0.5).unwrap();
                let m = Model::new(grid, ModelParams::new(&pair, 0.8, 0.5, 0.2).unwrap()).unwrap();
                let u = random_state(&m, &mut rng, 0.5);
                let r = m.rhs(&u).unwrap();
                let mut total = State::zeros(m.grid().clone());
                for j in 0..dim {
                    total = total.axpy(1.0, &m.apply_a(&u, j, &u.derivative(j)).unwrap());
                }
                let sum = total.axpy(1.0, &r);
                let scale = m.x_norm(&r, 0.0);
                assert!(m.x_norm(&sum, 0.0) < 1e-10 * scale.max(1.0), "{name} d={dim}");
                assert!(r.zeta.iter().sum::<f64>().abs() < 1e-11);
            }
        }
    }

    #[test]
    fn symmetrizer_examples() {
        let m = setup("shallow_water", 1.0, 16);
        let g = m.grid().clone();
        let frozen = state(&m, |_| 0.5, |_| 0.0);
        let u = state(&m, f64::cos, |_| 0.0);
        let out = m.apply_s0(&frozen, &u).unwrap();
        assert_eq!(out.zeta, u.zeta);
        assert!(out.v[0].iter().all(|x| x.abs() < 1e-15));
        let u = state(&m, |_| 0.0, f64::cos);
        let out = m.apply_s0(&frozen, &u).unwrap();
        assert!(max_diff(&out.v[0], |x| 1.5 * x.cos(), &g) < 1e-13);

        let m0 = setup("ddk", 0.0, 16);
        let frozen = state(&m0, f64::sin, f64::cos);
        let u = state(&m0, |_| 0.0, f64::cos);
        let out = m0.apply_s0(&frozen, &u).unwrap();
        let g1sq = m0.apply_g1_sq(&u.v[0]);
        assert!(out.v[0].iter().zip(&g1sq).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn quadratic_form_at_rest() {
        let m = setup("ddk", 0.4, 32);
        let g = m.grid().clone();
        let u = state(&m, f64::cos, |x| (2.0 * x).sin());
        let q = m.quadratic_form(&State::zeros(g.clone()), &u).unwrap();
        let g1v = m.apply_g1(&u.v[0]);
        let expected = g.inner(&u.zeta, &u.zeta) + g.inner(&g1v, &g1v);
        assert!((q - expected).abs() < 1e-12);
        assert_eq!(m.quadratic_form(&u, &State::zeros(g)).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_part_is_self_adjoint_and_skew_vanishes_for_constants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = setup("ddk", 0.6, 32);
        let frozen = random_state(&m, &mut rng, 0.5);
        for _ in 0..5 {
            let u = random_state(&m, &mut rng, 1.0);
            let w = random_state(&m, &mut rng, 1.0);
            let (su, _) = m.split_symmetric(&frozen, 0, &u).unwrap();
            let (sw, _) = m.split_symmetric(&frozen, 0, &w).unwrap();
            let lhs = su.inner(&w);
            let rhs = u.inner(&sw);
            assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        }
        let sw = setup("shallow_water", 0.6, 16);
        let frozen = state(&sw, |_| 0.3, |_| -0.2);
        let u = random_state(&sw, &mut rng, 1.0);
        let (_, skew) = sw.split_symmetric(&frozen, 0, &u).unwrap();
        assert!(sw.x_norm(&skew, 0.0) < 1e-13);
        let (sym, skew) = sw.split_symmetric(&frozen, 0, &u).unwrap();
        let b = sw.apply_b(&frozen, 0, &u).unwrap();
        let recon = sym.axpy(-0.6, &skew);
        assert!(sw.x_norm(&recon.sub(&b), 0.0) < 1e-13);
    }

    #[test]
    fn skew_part_needs_epsilon() {
        let m = setup("ddk", 0.0, 16);
        let u = State::zeros(m.grid().clone());
        assert_eq!(m.split_symmetric(&u, 0, &u).unwrap_err(), ModelError::ZeroEpsilon);
        assert!(matches!(
            m.apply_a(&u, 1, &u),
            Err(ModelError::BadDirection { j: 1, dim: 1 })
        ));
    }

    #[test]
    fn norms() {
        let m = setup("ddk", 0.1, 32);
        let u = state(&m, f64::cos, |_| 0.0);
        assert!((m.x_norm(&u, 0.0) - PI.sqrt()).abs() < 1e-12);
        assert!((m.y_norm(&u, 0.0).unwrap() - PI.sqrt()).abs() < 1e-12);
        assert_eq!(m.x_norm(&State::zeros(m.grid().clone()), 1.5), 0.0);
        let sw = setup("shallow_water", 0.1, 32);
        let u = state(&sw, f64::sin, |x| (3.0 * x).cos());
        assert!((sw.x_norm(&u, 1.0) - sw.y_norm(&u, 1.0).unwrap()).abs() < 1e-13);

        let grid = SpectralGrid::shared(1, 16, 2.0 * PI).unwrap();
        let pair = MultiplierPair::new(
            SymbolSpec::new(crate::multiplier::SymbolKind::InvHelmholtz { b: 1.0 }).with_scale(0.0),
            SymbolSpec::identity(),
        );
        let zero_g1 = Model::new(grid.clone(), ModelParams::new(&pair, 0.1, 1.0, 0.5).unwrap()).unwrap();
        assert_eq!(zero_g1.y_norm(&State::zeros(grid), 0.0).unwrap_err(), ModelError::VanishingG1);
    }

    #[test]
    fn non_cavitation_examples() {
        assert_eq!(check_non_cavitation(&[0.0; 8], 1.0, 0.9), (true, 1.0));
        let grid = SpectralGrid::new(1, 64, 2.0 * PI).unwrap();
        let z = grid.sample(|x, _| -0.8 * x.cos());
        let (ok, min) = check_non_cavitation(&z, 1.0, 0.5);
        assert!(!ok);
        assert!((min - 0.2).abs() < 1e-12);
        let z = grid.sample(|x, _| x.cos());
        let (ok, min) = check_non_cavitation(&z, 0.1, 0.5);
        assert!(ok);
        assert!((min - 0.9).abs() < 1e-12);
    }
}
