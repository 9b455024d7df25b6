//! Periodic pseudo-spectral layer: grids, transforms, Fourier multipliers,
//! spectral derivatives, two-thirds dealiasing and Sobolev norms.
//!
//! Normalization is fixed in one place: the forward transform divides by
//! `N^d`, so a coefficient `c_k` is the mean of `f e^{-i xi_k x}` over the
//! torus and `f(x) = sum_k c_k e^{i xi_k x}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    BadDimension(usize),
    #[error("points per dimension must be a power of two >= 8, got {0}")]
    BadResolution(usize),
    #[error("domain length must be positive and finite, got {0}")]
    BadLength(f64),
    #[error("field is already in {0} representation")]
    RepresentationMismatch(Representation),
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("symbol is not finite at wavenumber ({0}, {1})")]
    NonFiniteSymbol(f64, f64),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Periodic grid on `[0, L)^d` with cached FFT plans.
///
/// Immutable once built; share it behind an `Arc`.
pub struct SpectralGrid {
    dim: usize,
    n: usize,
    length: f64,
    axis_index: Vec<i64>,
    axis_wavenumber: Vec<f64>,
    keep: Vec<bool>,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.length == other.length
    }
}

impl SpectralGrid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self, SpectralError> {
        if !(1..=2).contains(&dim) {
            return Err(SpectralError::BadDimension(dim));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(SpectralError::BadResolution(n));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(SpectralError::BadLength(length));
        }
        let half = (n / 2) as i64;
        let axis_index: Vec<i64> = (0..n as i64)
            .map(|i| if i < half { i } else { i - n as i64 })
            .collect();
        let axis_wavenumber = axis_index
            .iter()
            .map(|&k| 2.0 * PI * k as f64 / length)
            .collect();
        // two-thirds rule: keep |k| <= N/3 on every axis
        let axis_keep: Vec<bool> = axis_index.iter().map(|&k| 3 * k.abs() <= n as i64).collect();
        let keep = match dim {
            1 => axis_keep,
            _ => {
                let mut keep = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        keep.push(axis_keep[i] && axis_keep[j]);
                    }
                }
                keep
            }
        };
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        Ok(Self {
            dim,
            n,
            length,
            axis_index,
            axis_wavenumber,
            keep,
            fft,
            ifft,
        })
    }

    pub fn shared(dim: usize, n: usize, length: f64) -> Result<Arc<Self>, SpectralError> {
        Self::new(dim, n, length).map(Arc::new)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Total number of samples, `N^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Torus volume `L^d`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Signed FFT index along one axis.
    pub fn signed_index(&self, i: usize) -> i64 {
        self.axis_index[i]
    }

    fn axis_positions(&self, mode: usize) -> [usize; 2] {
        match self.dim {
            1 => [mode, 0],
            _ => [mode / self.n, mode % self.n],
        }
    }

    /// Integer mode vector `k` of a flattened mode index.
    pub fn mode_index(&self, mode: usize) -> [i64; 2] {
        let [i, j] = self.axis_positions(mode);
        match self.dim {
            1 => [self.axis_index[i], 0],
            _ => [self.axis_index[i], self.axis_index[j]],
        }
    }

    /// `xi_k = 2 pi k / L`; the second component is zero in 1-D.
    pub fn wavenumber(&self, mode: usize) -> [f64; 2] {
        let [i, j] = self.axis_positions(mode);
        match self.dim {
            1 => [self.axis_wavenumber[i], 0.0],
            _ => [self.axis_wavenumber[i], self.axis_wavenumber[j]],
        }
    }

    pub fn wavenumber_norm(&self, mode: usize) -> f64 {
        let [a, b] = self.wavenumber(mode);
        a.hypot(b)
    }

    /// Largest `|xi|` represented on the grid.
    pub fn max_wavenumber(&self) -> f64 {
        2.0 * PI / self.length * (self.n / 2) as f64 * (self.dim as f64).sqrt()
    }

    pub fn is_kept(&self, mode: usize) -> bool {
        self.keep[mode]
    }

    pub fn dealias_mask(&self) -> &[bool] {
        &self.keep
    }

    /// Physical coordinate along `axis` for every sample.
    pub fn coordinates(&self, axis: usize) -> Vec<f64> {
        let dx = self.dx();
        (0..self.len())
            .map(|p| {
                let [i, j] = self.axis_positions(p);
                let idx = if axis == 0 { i } else { j };
                idx as f64 * dx
            })
            .collect()
    }

    /// Sample `f(x, y)` on the grid (`y = 0` in 1-D).
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let dx = self.dx();
        (0..self.len())
            .map(|p| {
                let [i, j] = self.axis_positions(p);
                match self.dim {
                    1 => f(i as f64 * dx, 0.0),
                    _ => f(i as f64 * dx, j as f64 * dx),
                }
            })
            .collect()
    }

    fn check_len(&self, got: usize) -> Result<(), SpectralError> {
        if got != self.len() {
            return Err(SpectralError::LengthMismatch {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    fn transform_in_place(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        plan.process(data);
        if self.dim == 2 {
            let mut column = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    column[i] = data[i * n + j];
                }
                plan.process(&mut column);
                for i in 0..n {
                    data[i * n + j] = column[i];
                }
            }
        }
    }

    /// Physical samples to normalized spectral coefficients.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.len());
        let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform_in_place(&mut data, &self.fft);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    /// Spectral coefficients back to (real) physical samples.
    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.len());
        let mut data = coeffs.to_vec();
        self.transform_in_place(&mut data, &self.ifft);
        data.into_iter().map(|c| c.re).collect()
    }

    /// Tabulate a symbol on every mode.
    pub fn symbol_table(&self, symbol: impl Fn([f64; 2]) -> f64) -> Result<Vec<f64>, SpectralError> {
        (0..self.len())
            .map(|m| {
                let xi = self.wavenumber(m);
                let g = symbol(xi);
                if g.is_finite() {
                    Ok(g)
                } else {
                    Err(SpectralError::NonFiniteSymbol(xi[0], xi[1]))
                }
            })
            .collect()
    }

    /// Multiply spectral coefficients by a tabulated symbol.
    pub fn apply_table(&self, table: &[f64], values: &[f64]) -> Vec<f64> {
        let mut c = self.forward(values);
        c.iter_mut().zip(table).for_each(|(c, g)| *c *= *g);
        self.inverse(&c)
    }

    pub fn apply_symbol(
        &self,
        symbol: impl Fn([f64; 2]) -> f64,
        values: &[f64],
    ) -> Result<Vec<f64>, SpectralError> {
        self.check_len(values.len())?;
        let table = self.symbol_table(symbol)?;
        Ok(self.apply_table(&table, values))
    }

    fn is_nyquist(&self, mode: usize, axis: usize) -> bool {
        let pos = self.axis_positions(mode)[axis];
        pos == self.n / 2
    }

    /// Multiply coefficients by `i xi_axis` in place; the Nyquist plane is zeroed.
    pub fn differentiate_coeffs(&self, coeffs: &mut [Complex64], axis: usize) {
        for (m, c) in coeffs.iter_mut().enumerate() {
            if self.is_nyquist(m, axis) {
                *c = Complex64::new(0.0, 0.0);
            } else {
                let xi = self.wavenumber(m)[axis];
                *c *= Complex64::new(0.0, xi);
            }
        }
    }

    pub fn derivative(&self, values: &[f64], axis: usize) -> Result<Vec<f64>, SpectralError> {
        if axis >= self.dim {
            return Err(SpectralError::AxisOutOfRange {
                axis,
                dim: self.dim,
            });
        }
        self.check_len(values.len())?;
        let mut c = self.forward(values);
        self.differentiate_coeffs(&mut c, axis);
        Ok(self.inverse(&c))
    }

    /// `P f`: drop every mode outside the two-thirds band.
    pub fn dealias(&self, values: &[f64]) -> Vec<f64> {
        let mut c = self.forward(values);
        self.mask_coeffs(&mut c);
        self.inverse(&c)
    }

    pub fn mask_coeffs(&self, coeffs: &mut [Complex64]) {
        coeffs
            .iter_mut()
            .zip(&self.keep)
            .filter(|(_, &k)| !k)
            .for_each(|(c, _)| *c = Complex64::new(0.0, 0.0));
    }

    /// Dealiased product `P(Pa * Pb)`.
    ///
    /// For fixed `a` this is self-adjoint in `b` for the discrete L2 pairing.
    pub fn product(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let pa = self.dealias(a);
        self.product_projected(&pa, b)
    }

    /// `P(a * Pb)` for a coefficient `a` already band-limited by [`Self::dealias`].
    pub fn product_projected(&self, projected: &[f64], b: &[f64]) -> Vec<f64> {
        let pb = self.dealias(b);
        let prod: Vec<f64> = projected.iter().zip(&pb).map(|(x, y)| x * y).collect();
        self.dealias(&prod)
    }

    /// Discrete L2 pairing, consistent with the continuum integral on the torus.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let w = self.volume() / self.len() as f64;
        f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>() * w
    }

    /// `sqrt(sum <xi>^{2s} |c_k|^2 L^d)`.
    pub fn sobolev_norm(&self, values: &[f64], s: f64) -> f64 {
        self.sobolev_norm_coeffs(&self.forward(values), s, None)
    }

    /// Sobolev norm of `G(D) f` given the coefficients of `f`.
    pub fn sobolev_norm_coeffs(&self, coeffs: &[Complex64], s: f64, weight: Option<&[f64]>) -> f64 {
        let mut acc = 0.0;
        for (m, c) in coeffs.iter().enumerate() {
            let xi = self.wavenumber_norm(m);
            let bracket = if s == 0.0 {
                1.0
            } else {
                (1.0 + xi * xi).powf(s)
            };
            let g = weight.map_or(1.0, |w| w[m]);
            acc += bracket * g * g * c.norm_sqr();
        }
        (acc * self.volume()).sqrt()
    }

    /// Random real field with Gaussian coefficients scaled by `<xi>^{-decay}`
    /// on the two-thirds band.
    ///
    /// Modes are drawn in an order that does not depend on `N`, so the same
    /// seed produces the same trigonometric polynomial (up to band-limit) on
    /// nested grids.
    pub fn random_field<R: Rng>(&self, rng: &mut R, decay: f64) -> Vec<f64> {
        let kmax = (self.n / 3) as i64;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.len()];
        let base = 2.0 * PI / self.length;
        let amplitude = |k: [i64; 2]| {
            let xi2 = (base * k[0] as f64).powi(2) + (base * k[1] as f64).powi(2);
            (1.0 + xi2).powf(-decay / 2.0)
        };
        let draw = |rng: &mut R| -> f64 { rng.sample(StandardNormal) };
        let flat = |k: [i64; 2]| -> usize {
            let wrap = |k: i64| if k >= 0 { k as usize } else { (k + self.n as i64) as usize };
            match self.dim {
                1 => wrap(k[0]),
                _ => wrap(k[0]) * self.n + wrap(k[1]),
            }
        };
        // zero mode is real
        coeffs[0] = Complex64::new(draw(rng), 0.0);
        for shell in 1..=kmax {
            for k in half_shell(self.dim, shell) {
                let a = amplitude(k) / std::f64::consts::SQRT_2;
                let c = Complex64::new(a * draw(rng), a * draw(rng));
                coeffs[flat(k)] = c;
                coeffs[flat([-k[0], -k[1]])] = c.conj();
            }
        }
        self.inverse(&coeffs)
    }
}

/// Modes with `max(|k1|, |k2|) == shell` in the half-space `k1 > 0 || (k1 == 0 && k2 > 0)`,
/// in a fixed order.
fn half_shell(dim: usize, shell: i64) -> Vec<[i64; 2]> {
    if dim == 1 {
        return vec![[shell, 0]];
    }
    let mut out = Vec::new();
    for k1 in 0..=shell {
        for k2 in -shell..=shell {
            if k1.abs().max(k2.abs()) != shell {
                continue;
            }
            if k1 > 0 || (k1 == 0 && k2 > 0) {
                out.push([k1, k2]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Physical,
    Spectral,
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Representation::Physical => f.write_str("physical"),
            Representation::Spectral => f.write_str("spectral"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum FieldData {
    Physical(Vec<f64>),
    Spectral(Vec<Complex64>),
}

/// A real scalar field held either as samples or as spectral coefficients.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<SpectralGrid>,
    data: FieldData,
}

impl ScalarField {
    pub fn from_values(grid: Arc<SpectralGrid>, values: Vec<f64>) -> Result<Self, SpectralError> {
        grid.check_len(values.len())?;
        Ok(Self {
            grid,
            data: FieldData::Physical(values),
        })
    }

    pub fn zeros(grid: Arc<SpectralGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            data: FieldData::Physical(vec![0.0; n]),
        }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        match self.data {
            FieldData::Physical(_) => Representation::Physical,
            FieldData::Spectral(_) => Representation::Spectral,
        }
    }

    pub fn to_spectral(self) -> Result<Self, SpectralError> {
        match self.data {
            FieldData::Physical(v) => Ok(Self {
                data: FieldData::Spectral(self.grid.forward(&v)),
                grid: self.grid,
            }),
            FieldData::Spectral(_) => Err(SpectralError::RepresentationMismatch(Representation::Spectral)),
        }
    }

    pub fn to_physical(self) -> Result<Self, SpectralError> {
        match self.data {
            FieldData::Spectral(c) => Ok(Self {
                data: FieldData::Physical(self.grid.inverse(&c)),
                grid: self.grid,
            }),
            FieldData::Physical(_) => Err(SpectralError::RepresentationMismatch(Representation::Physical)),
        }
    }

    /// Switch representation.
    pub fn transform(self) -> Self {
        match self.representation() {
            Representation::Physical => self.to_spectral(),
            Representation::Spectral => self.to_physical(),
        }
        .expect("representation checked")
    }

    /// Physical samples, transforming if needed.
    pub fn values(&self) -> Vec<f64> {
        match &self.data {
            FieldData::Physical(v) => v.clone(),
            FieldData::Spectral(c) => self.grid.inverse(c),
        }
    }

    /// Spectral coefficients, transforming if needed.
    pub fn coefficients(&self) -> Vec<Complex64> {
        match &self.data {
            FieldData::Physical(v) => self.grid.forward(v),
            FieldData::Spectral(c) => c.clone(),
        }
    }

    pub fn apply_symbol(&self, symbol: impl Fn([f64; 2]) -> f64) -> Result<Self, SpectralError> {
        let out = self.grid.apply_symbol(symbol, &self.values())?;
        Self::from_values(self.grid.clone(), out)
    }

    pub fn derivative(&self, axis: usize) -> Result<Self, SpectralError> {
        let out = self.grid.derivative(&self.values(), axis)?;
        Self::from_values(self.grid.clone(), out)
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.grid.sobolev_norm_coeffs(&self.coefficients(), s, None)
    }
}

/// `d` scalar components sharing one grid.
#[derive(Debug, Clone)]
pub struct VectorField {
    pub components: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(grid: Arc<SpectralGrid>) -> Self {
        let d = grid.dim();
        Self {
            components: (0..d).map(|_| ScalarField::zeros(grid.clone())).collect(),
        }
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.sobolev_norm(s).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid1(n: usize) -> Arc<SpectralGrid> {
        SpectralGrid::shared(1, n, 2.0 * PI).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert_eq!(SpectralGrid::new(3, 8, 1.0).unwrap_err(), SpectralError::BadDimension(3));
        assert_eq!(SpectralGrid::new(1, 12, 1.0).unwrap_err(), SpectralError::BadResolution(12));
        assert_eq!(SpectralGrid::new(1, 4, 1.0).unwrap_err(), SpectralError::BadResolution(4));
        assert_eq!(SpectralGrid::new(1, 8, 0.0).unwrap_err(), SpectralError::BadLength(0.0));
        assert!(SpectralGrid::new(2, 8, -1.0).is_err());
    }

    #[test]
    fn wavenumbers_follow_fft_ordering() {
        let g = grid1(8);
        let ks: Vec<i64> = (0..8).map(|i| g.signed_index(i)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        for m in 0..8 {
            assert!((g.wavenumber(m)[0] - ks[m] as f64).abs() < 1e-14);
        }
        let kept: Vec<bool> = (0..8).map(|m| g.is_kept(m)).collect();
        assert_eq!(kept, vec![true, true, true, false, false, false, true, true]);
        assert_eq!(g.wavenumber(0), [0.0, 0.0]);
    }

    #[test]
    fn two_dimensional_wavenumber() {
        let g = SpectralGrid::new(2, 8, 1.0).unwrap();
        // mode (1, 0) sits at flat index 1 * 8 + 0
        let xi = g.wavenumber(8);
        assert!((xi[0] - 2.0 * PI).abs() < 1e-12);
        assert_eq!(xi[1], 0.0);
        assert_eq!(g.len(), 64);
    }

    #[test]
    fn constant_and_cosine_coefficients() {
        let g = grid1(16);
        let c = g.forward(&vec![1.0; 16]);
        assert!((c[0].re - 1.0).abs() < 1e-14);
        assert!(c[1..].iter().all(|z| z.norm() < 1e-14));

        let f = g.sample(|x, _| x.cos());
        let c = g.forward(&f);
        assert!((c[1].re - 0.5).abs() < 1e-14);
        assert!((c[15].re - 0.5).abs() < 1e-14);
        let others: f64 = c.iter().enumerate().filter(|(m, _)| *m != 1 && *m != 15).map(|(_, z)| z.norm()).sum();
        assert!(others < 1e-13);
    }

    #[test]
    fn representation_mismatch_is_an_error() {
        let g = grid1(8);
        let f = ScalarField::zeros(g);
        let err = f.clone().to_physical().unwrap_err();
        assert_eq!(err, SpectralError::RepresentationMismatch(Representation::Physical));
        let s = f.to_spectral().unwrap();
        assert_eq!(s.representation(), Representation::Spectral);
        assert!(s.to_spectral().is_err());
    }

    #[test]
    fn random_round_trip_and_hermitian_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [1, 2] {
            let g = SpectralGrid::shared(dim, 16, 3.0).unwrap();
            let f: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let field = ScalarField::from_values(g.clone(), f.clone()).unwrap();
            let spec = field.transform();
            let coeffs = spec.coefficients();
            for m in 0..g.len() {
                let k = g.mode_index(m);
                let wrap = |k: i64| ((k + 16) % 16) as usize;
                let mirror = if dim == 1 { wrap(-k[0]) } else { wrap(-k[0]) * 16 + wrap(-k[1]) };
                assert!((coeffs[m] - coeffs[mirror].conj()).norm() < 1e-14);
            }
            let back = spec.transform().values();
            let err = f.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "round trip error {err}");
        }
    }

    #[test]
    fn symbol_application() {
        let g = grid1(16);
        let f = g.sample(|x, _| x.cos());
        let same = g.apply_symbol(|_| 1.0, &f).unwrap();
        assert!(f.iter().zip(&same).all(|(a, b)| (a - b).abs() < 1e-14));

        let g1 = |xi: [f64; 2]| {
            let r = xi[0].hypot(xi[1]);
            if r == 0.0 { 1.0 } else { (r.tanh() / r).sqrt() }
        };
        let out = g.apply_symbol(g1, &f).unwrap();
        let expected = 1.0f64.tanh().sqrt();
        assert!((expected - 0.872694).abs() < 1e-6);
        for (o, x) in out.iter().zip(g.coordinates(0)) {
            assert!((o - expected * x.cos()).abs() < 1e-13);
        }
        let zero = g.apply_symbol(g1, &vec![0.0; 16]).unwrap();
        assert!(zero.iter().all(|&z| z == 0.0));
        let bad = g.apply_symbol(|xi| 1.0 / xi[0], &f);
        assert!(matches!(bad, Err(SpectralError::NonFiniteSymbol(..))));
    }

    #[test]
    fn derivatives_of_trig_modes() {
        let g = grid1(32);
        let dcos = g.derivative(&g.sample(|x, _| x.cos()), 0).unwrap();
        let dsin2 = g.derivative(&g.sample(|x, _| (2.0 * x).sin()), 0).unwrap();
        let dconst = g.derivative(&vec![3.0; 32], 0).unwrap();
        for (i, x) in g.coordinates(0).into_iter().enumerate() {
            assert!((dcos[i] + x.sin()).abs() < 1e-12);
            assert!((dsin2[i] - 2.0 * (2.0 * x).cos()).abs() < 1e-12);
            assert!(dconst[i].abs() < 1e-12);
        }
        assert!(matches!(
            g.derivative(&dcos, 1),
            Err(SpectralError::AxisOutOfRange { axis: 1, dim: 1 })
        ));
    }

    #[test]
    fn nyquist_mode_is_dropped_by_derivative() {
        let g = grid1(8);
        let alternating: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let d = g.derivative(&alternating, 0).unwrap();
        assert!(d.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn sobolev_norms_of_cosine() {
        let g = grid1(32);
        let f = g.sample(|x, _| x.cos());
        assert!((g.sobolev_norm(&f, 0.0) - PI.sqrt()).abs() < 1e-12);
        assert!((g.sobolev_norm(&f, 1.0) - (2.0 * PI).sqrt()).abs() < 1e-12);
        assert_eq!(g.sobolev_norm(&vec![0.0; 32], 3.0), 0.0);
    }

    #[test]
    fn random_fields_are_nested_across_resolutions() {
        let coarse = SpectralGrid::new(1, 32, 2.0 * PI).unwrap();
        let fine = SpectralGrid::new(1, 64, 2.0 * PI).unwrap();
        let a = coarse.random_field(&mut ChaCha8Rng::seed_from_u64(3), 3.0);
        let b = fine.random_field(&mut ChaCha8Rng::seed_from_u64(3), 3.0);
        let ca = coarse.forward(&a);
        let cb = fine.forward(&b);
        for k in 0..=10usize {
            assert!((ca[k] - cb[k]).norm() < 1e-14, "mode {k}");
        }
    }
}
