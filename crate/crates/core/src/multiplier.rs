//! Radial Fourier multiplier symbols, the shallowness rescaling
//! `G^mu(xi) = G(sqrt(mu) xi)`, admissibility sampling, and the model zoo.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{SpectralError, SpectralGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolError {
    #[error("custom table evaluated at {at} outside its range [{lo}, {hi}]")]
    OutOfTableRange { at: f64, lo: f64, hi: f64 },
    #[error("invalid custom table: {0}")]
    BadTable(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("mu must lie in (0, 1], got {0}")]
    BadMu(f64),
}

/// Tabulated radial profile, linearly interpolated in `|xi|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomTable {
    pub xi: Vec<f64>,
    pub values: Vec<f64>,
}

impl CustomTable {
    pub fn validate(&self) -> Result<(), SymbolError> {
        if self.xi.len() < 2 || self.xi.len() != self.values.len() {
            return Err(SymbolError::BadTable(
                "need at least two nodes and matching lengths".into(),
            ));
        }
        if self.xi[0] < 0.0 || self.xi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SymbolError::BadTable("nodes must be non-negative and increasing".into()));
        }
        if self.xi.iter().chain(&self.values).any(|x| !x.is_finite()) {
            return Err(SymbolError::BadTable("non-finite entry".into()));
        }
        Ok(())
    }

    fn eval(&self, r: f64) -> Result<f64, SymbolError> {
        let lo = self.xi[0];
        let hi = *self.xi.last().unwrap();
        if !(lo..=hi).contains(&r) {
            return Err(SymbolError::OutOfTableRange { at: r, lo, hi });
        }
        let i = match self.xi.partition_point(|&x| x <= r) {
            0 => 0,
            p if p >= self.xi.len() => self.xi.len() - 2,
            p => p - 1,
        };
        let t = (r - self.xi[i]) / (self.xi[i + 1] - self.xi[i]);
        Ok(self.values[i] * (1.0 - t) + self.values[i + 1] * t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    Identity,
    /// `sqrt(tanh|xi| / |xi|)`
    SqrtTanhRatio,
    /// `tanh|xi| / |xi|`
    TanhRatio,
    /// `1 / (1 + b |xi|^2)`
    InvHelmholtz { b: f64 },
    /// `sqrt(1 - a |xi|^2) / (1 + b |xi|^2)`, the abcd-Boussinesq `G1`
    BcsBoussinesq { a: f64, b: f64 },
    CustomTable(CustomTable),
}

fn default_scale() -> f64 {
    1.0
}

fn default_mu() -> f64 {
    1.0
}

/// A catalog symbol together with its shallowness parameter and a constant factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolSpec {
    pub kind: SymbolKind,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

/// `tanh(x)/x` with the removable singularity handled by its Taylor series.
pub fn tanh_ratio(x: f64) -> f64 {
    let x = x.abs();
    if x < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0
    } else {
        x.tanh() / x
    }
}

impl SymbolSpec {
    pub fn new(kind: SymbolKind) -> Self {
        Self {
            kind,
            mu: 1.0,
            scale: 1.0,
        }
    }

    pub fn identity() -> Self {
        Self::new(SymbolKind::Identity)
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Profile `G(r)` before rescaling.
    fn base(&self, r: f64) -> Result<f64, SymbolError> {
        let g = match &self.kind {
            SymbolKind::Identity => 1.0,
            SymbolKind::SqrtTanhRatio => tanh_ratio(r).sqrt(),
            SymbolKind::TanhRatio => tanh_ratio(r),
            SymbolKind::InvHelmholtz { b } => 1.0 / (1.0 + b * r * r),
            SymbolKind::BcsBoussinesq { a, b } => (1.0 - a * r * r).max(0.0).sqrt() / (1.0 + b * r * r),
            SymbolKind::CustomTable(t) => t.eval(r)?,
        };
        Ok(self.scale * g)
    }

    /// `G^mu(xi) = G(sqrt(mu) |xi|)`.
    pub fn eval(&self, xi: f64) -> Result<f64, SymbolError> {
        self.base(self.mu.sqrt() * xi.abs())
    }

    pub fn eval_vec(&self, xi: [f64; 2]) -> Result<f64, SymbolError> {
        self.eval(xi[0].hypot(xi[1]))
    }

    /// Radial derivative `dG^mu/d|xi|` by centered differences (step 1e-4),
    /// falling back to one-sided differences at the edge of a custom table.
    pub fn radial_gradient(&self, xi: f64) -> Result<f64, SymbolError> {
        const H: f64 = 1e-4;
        let r = xi.abs();
        match (self.eval(r + H), self.eval(r - H)) {
            (Ok(p), Ok(m)) => Ok((p - m) / (2.0 * H)),
            (Ok(p), Err(_)) => Ok((p - self.eval(r)?) / H),
            (Err(_), Ok(m)) => Ok((self.eval(r)? - m) / H),
            (Err(e), Err(_)) => Err(e),
        }
    }

    /// Values on every grid mode.
    pub fn table(&self, grid: &SpectralGrid) -> Result<Vec<f64>, SymbolTableError> {
        let mut out = Vec::with_capacity(grid.len());
        for m in 0..grid.len() {
            let g = self.eval(grid.wavenumber_norm(m))?;
            if !g.is_finite() {
                let xi = grid.wavenumber(m);
                return Err(SpectralError::NonFiniteSymbol(xi[0], xi[1]).into());
            }
            out.push(g);
        }
        Ok(out)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SymbolTableError {
    #[error(transparent)]
    Symbol(#[from] SymbolError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// The pair `(G1, G2)` of system multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierPair {
    pub g1: SymbolSpec,
    pub g2: SymbolSpec,
}

impl MultiplierPair {
    pub fn new(g1: SymbolSpec, g2: SymbolSpec) -> Self {
        Self { g1, g2 }
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        Self {
            g1: self.g1.clone().with_mu(mu),
            g2: self.g2.clone().with_mu(mu),
        }
    }

    /// `max_k max(sup |G_k|, sup <xi>|grad G_k|)` over the given samples.
    pub fn structural_constant(&self, samples: &[f64]) -> Result<f64, SymbolError> {
        let mut worst: f64 = 0.0;
        for spec in [&self.g1, &self.g2] {
            for &xi in samples {
                let g = spec.eval(xi)?.abs();
                let w = (1.0 + xi * xi).sqrt() * spec.radial_gradient(xi)?.abs();
                worst = worst.max(g).max(w);
            }
        }
        Ok(worst)
    }
}

/// Which admissibility clause failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "clause")]
pub enum AdmissibilityViolation {
    /// A symbol or its weighted gradient is not finite (unbounded or undefined).
    NotBounded { symbol: usize, xi: f64 },
    /// `G1(xi) > 0` fails.
    G1NotPositive { xi: f64, value: f64 },
    /// `|G2(xi)| <= G1(xi)` fails.
    Domination { xi: f64, g1: f64, g2: f64 },
    /// A custom table does not cover the sample range.
    Evaluation { message: String },
}

impl std::fmt::Display for AdmissibilityViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NotBounded { symbol, xi } => {
                write!(f, "boundedness: G{} or <xi>grad G{} not finite at |xi| = {xi}", symbol, symbol)
            }
            Self::G1NotPositive { xi, value } => write!(f, "positivity: G1({xi}) = {value} is not > 0"),
            Self::Domination { xi, g1, g2 } => {
                write!(f, "domination |G2| <= G1 fails at |xi| = {xi}: |G2| = {}, G1 = {g1}", g2.abs())
            }
            Self::Evaluation { message } => write!(f, "evaluation: {message}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub sup_g: [f64; 2],
    pub sup_weighted_grad: [f64; 2],
    pub min_g1: f64,
    pub domination_ok: bool,
    pub n_samples: usize,
    pub range: (f64, f64),
    pub violations: Vec<AdmissibilityViolation>,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `|xi| = 0` followed by log-spaced samples over `range`.
pub fn sample_points(range: (f64, f64), n_samples: usize) -> Vec<f64> {
    let hi = range.1.max(1e-12);
    let lo = if range.0 > 0.0 { range.0 } else { (hi * 1e-4).min(1e-2) };
    let count = n_samples.max(2) - 1;
    let mut out = vec![0.0];
    let (la, lb) = (lo.ln(), hi.ln());
    for i in 0..count {
        let t = if count == 1 { 1.0 } else { i as f64 / (count - 1) as f64 };
        out.push((la + t * (lb - la)).exp());
    }
    out
}

/// Sampled check of the admissibility triple.
pub fn validate_admissible(pair: &MultiplierPair, range: (f64, f64), n_samples: usize) -> AdmissibilityReport {
    let samples = sample_points(range, n_samples.max(64));
    let mut sup_g = [0.0f64; 2];
    let mut sup_grad = [0.0f64; 2];
    let mut min_g1 = f64::INFINITY;
    let mut violations = Vec::new();
    let mut domination_ok = true;

    for &xi in &samples {
        let mut vals = [0.0; 2];
        for (k, spec) in [&pair.g1, &pair.g2].into_iter().enumerate() {
            let evaluated = spec.eval(xi).and_then(|g| Ok((g, spec.radial_gradient(xi)?)));
            let (g, grad) = match evaluated {
                Ok(v) => v,
                Err(e) => {
                    violations.push(AdmissibilityViolation::Evaluation { message: e.to_string() });
                    return finish(sup_g, sup_grad, min_g1, false, samples.len(), range, violations);
                }
            };
            let weighted = (1.0 + xi * xi).sqrt() * grad.abs();
            if !g.is_finite() || !weighted.is_finite() {
                violations.push(AdmissibilityViolation::NotBounded { symbol: k + 1, xi });
            }
            sup_g[k] = sup_g[k].max(g.abs());
            sup_grad[k] = sup_grad[k].max(weighted);
            vals[k] = g;
        }
        min_g1 = min_g1.min(vals[0]);
        if !(vals[0] > 0.0) && !violations.iter().any(|v| matches!(v, AdmissibilityViolation::G1NotPositive { .. })) {
            violations.push(AdmissibilityViolation::G1NotPositive { xi, value: vals[0] });
        }
        // roundoff slack for pairs with G2 = G1^2 or G2 = G1 exactly
        if vals[1].abs() > vals[0] * (1.0 + 1e-12) + 1e-15 {
            if domination_ok {
                violations.push(AdmissibilityViolation::Domination { xi, g1: vals[0], g2: vals[1] });
            }
            domination_ok = false;
        }
    }
    finish(sup_g, sup_grad, min_g1, domination_ok, samples.len(), range, violations)
}

fn finish(
    sup_g: [f64; 2],
    sup_weighted_grad: [f64; 2],
    min_g1: f64,
    domination_ok: bool,
    n_samples: usize,
    range: (f64, f64),
    violations: Vec<AdmissibilityViolation>,
) -> AdmissibilityReport {
    AdmissibilityReport {
        sup_g,
        sup_weighted_grad,
        min_g1,
        domination_ok,
        n_samples,
        range,
        violations,
    }
}

/// Sampling range for a grid: up to four times its largest wavenumber.
pub fn grid_sample_range(grid: &SpectralGrid) -> (f64, f64) {
    (0.0, 4.0 * grid.max_wavenumber())
}

/// Order at which a model is consistent with the water-waves equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsistencyClass {
    /// `O(mu)`, shallow water.
    Mu,
    /// `O(mu^2 + mu eps)`, Boussinesq systems.
    MuSquaredPlusMuEps,
    /// `O(mu eps)`, Whitham-Boussinesq systems.
    MuEps,
}

pub const PRESETS: &[&str] = &["shallow_water", "abcd", "ddk", "quasilinear_wb", "open_wb"];

/// Default abcd parameters: `a = 0`, `b = 1/6`, which matches the water-waves
/// dispersion of `G1^2` to `O(mu^2)`.
pub const ABCD_DEFAULT: (f64, f64) = (0.0, 1.0 / 6.0);

pub fn abcd_pair(a: f64, b: f64, mu: f64) -> MultiplierPair {
    MultiplierPair::new(
        SymbolSpec::new(SymbolKind::BcsBoussinesq { a, b }).with_mu(mu),
        SymbolSpec::new(SymbolKind::InvHelmholtz { b }).with_mu(mu),
    )
}

/// Named model from the zoo, rescaled to `mu`.
///
/// `open_wb` (`G2 = Id`, `G1` the square-root tanh ratio) is shipped for
/// experimentation; it violates domination and is not admissible.
pub fn preset(name: &str, mu: f64) -> Result<(MultiplierPair, ConsistencyClass), SymbolError> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(SymbolError::BadMu(mu));
    }
    let sqrt_tanh = SymbolSpec::new(SymbolKind::SqrtTanhRatio);
    let tanh = SymbolSpec::new(SymbolKind::TanhRatio);
    let (pair, class) = match name {
        "shallow_water" => (
            MultiplierPair::new(SymbolSpec::identity(), SymbolSpec::identity()),
            ConsistencyClass::Mu,
        ),
        "abcd" => (
            abcd_pair(ABCD_DEFAULT.0, ABCD_DEFAULT.1, 1.0),
            ConsistencyClass::MuSquaredPlusMuEps,
        ),
        "ddk" => (MultiplierPair::new(sqrt_tanh, tanh), ConsistencyClass::MuEps),
        "quasilinear_wb" => (MultiplierPair::new(sqrt_tanh.clone(), sqrt_tanh), ConsistencyClass::MuEps),
        "open_wb" => (MultiplierPair::new(sqrt_tanh, SymbolSpec::identity()), ConsistencyClass::MuEps),
        other => return Err(SymbolError::UnknownPreset(other.to_string())),
    };
    Ok((pair.with_mu(mu), class))
}
