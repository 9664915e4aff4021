//! Reference models with closed-form answers.
//!
//! * `gauss_shift(n)`: `n` iid observations, nulls `N(−1, 1)` and `N(1, 1)`
//!   against `Q = N(0, 1)`. With `ξ = Σ Z_i ~ N(0, n)` under `Q` the
//!   likelihood-ratio vector is `(e^{−ξ−n/2}, e^{ξ−n/2})`, which lies on the
//!   hyperbola `x₁x₂ = e^{−n}`.
//! * `gauss_sym3`: three unit-shift nulls in the plane, at angles `0`, `2π/3`,
//!   `4π/3` around the standard normal alternative.
//! * `bernoulli` and `atom_example`: finite outcome spaces.
//!
//! For the Gaussian models the optimal pivotal e-variable is `L / Σ y_i` in
//! likelihood-ratio coordinates `y`; in raw data this is `e^{n/2}/cosh(ΣZ)`
//! and `3√e / h(Z)`.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::DiscreteHypothesis;
use crate::measure::{ParticleMeasure, Provenance, RNCloud};
use crate::quadrature::{composite_normal, expect_normal_adaptive, gauss_hermite, gauss_legendre, normal_cdf, NormalRule};
use crate::rng::StreamRng;

/// Half-width of the composite rule in standard-normal units.
const Z_MAX: f64 = 12.0;
/// Default node count of the composite rule.
pub const DEFAULT_NODES: usize = 16384;
/// Angular nodes of the planar rule; a multiple of 3 keeps the rule invariant under the symmetry group.
const SYM3_ANGLES: usize = 96;

/// A named reference model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum OracleSpec {
    GaussShift { n_obs: u32 },
    GaussSym3,
    Bernoulli { nulls: Vec<f64>, alt: f64 },
    AtomExample,
}

/// How to discretize a continuous model into an [`RNCloud`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum CloudMethod {
    /// Composite Gauss–Legendre with 4-node panels (the default).
    Composite { nodes: usize },
    /// Plain Gauss–Hermite.
    Hermite { nodes: usize },
    /// Iid samples under `Q`, tilted to unit mean.
    MonteCarlo { n: usize, seed: u64 },
}

impl Default for CloudMethod {
    fn default() -> Self {
        CloudMethod::Composite { nodes: DEFAULT_NODES }
    }
}

/// Means of the three symmetric nulls.
pub fn sym3_means() -> [[f64; 2]; 3] {
    let s = 3f64.sqrt() / 2.0;
    [[1.0, 0.0], [-0.5, -s], [-0.5, s]]
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            OracleSpec::GaussShift { n_obs } if *n_obs == 0 => Err(Error::InvalidInput("n_obs must be at least 1".into())),
            OracleSpec::Bernoulli { nulls, alt } => {
                if nulls.is_empty() {
                    return Err(Error::InvalidInput("need at least one Bernoulli null".into()));
                }
                match nulls.iter().chain(std::iter::once(alt)).find(|p| !(**p > 0.0 && **p < 1.0)) {
                    Some(p) => Err(Error::InvalidInput(format!("Bernoulli parameter {p} is outside (0, 1)"))),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Number of nulls.
    pub fn n_null(&self) -> usize {
        match self {
            OracleSpec::GaussShift { .. } | OracleSpec::AtomExample => 2,
            OracleSpec::GaussSym3 => 3,
            OracleSpec::Bernoulli { nulls, .. } => nulls.len(),
        }
    }

    /// The finite-outcome hypothesis behind `bernoulli` and `atom_example`.
    pub fn hypothesis(&self) -> Result<DiscreteHypothesis> {
        self.validate()?;
        match self {
            OracleSpec::Bernoulli { nulls, alt } => DiscreteHypothesis::bernoulli(nulls, *alt),
            OracleSpec::AtomExample => atom_example_hypothesis(),
            _ => Err(Error::InvalidInput("Gaussian oracles have no finite outcome space".into())),
        }
    }

    /// Likelihood-ratio vector of one raw observation.
    ///
    /// `gauss_shift(n)` takes the `n` observations of a block, `gauss_sym3` a
    /// point in the plane, and the discrete models an outcome index.
    pub fn rn_point(&self, data: &[f64]) -> Result<Vec<f64>> {
        match self {
            OracleSpec::GaussShift { n_obs } => {
                if data.len() != *n_obs as usize {
                    return Err(Error::DimMismatch { expected: *n_obs as usize, found: data.len() });
                }
                Ok(gauss_shift_point(data.iter().sum(), *n_obs))
            }
            OracleSpec::GaussSym3 => match data {
                [a, b] => Ok(sym3_point(*a, *b)),
                _ => Err(Error::DimMismatch { expected: 2, found: data.len() }),
            },
            OracleSpec::Bernoulli { .. } | OracleSpec::AtomExample => {
                let h = self.hypothesis()?;
                let k = match data {
                    [k] if *k >= 0.0 && k.fract() == 0.0 && (*k as usize) < h.n_outcomes() => *k as usize,
                    _ => return Err(Error::InvalidInput(format!("{data:?} is not an outcome index"))),
                };
                let q = h.alt[0][k];
                Ok(h.null.iter().map(|p| p[k] / q).collect())
            }
        }
    }
}

/// `(e^{−ξ−n/2}, e^{ξ−n/2})`.
pub fn gauss_shift_point(xi: f64, n_obs: u32) -> Vec<f64> {
    let h = 0.5 * n_obs as f64;
    vec![(-xi - h).exp(), (xi - h).exp()]
}

/// `(e^{m_k · z − 1/2})_k` for the three symmetric means.
pub fn sym3_point(z1: f64, z2: f64) -> Vec<f64> {
    sym3_means().iter().map(|m| (m[0] * z1 + m[1] * z2 - 0.5).exp()).collect()
}

/// The three-outcome hypothesis whose cloud is the atom example.
pub fn atom_example_hypothesis() -> Result<DiscreteHypothesis> {
    let (a, b, c, d) = (0.2, 0.3, 0.5, 0.6);
    DiscreteHypothesis::new(
        vec!["[0,1]".into(), "[1,2]".into(), "[2,3]".into()],
        vec![vec![a, c, 1.0 - a - c], vec![b, d, 1.0 - b - d]],
        vec![vec![1.0 / 3.0; 3]],
    )
}

/// Discretize the likelihood-ratio law of `spec` under `Q`.
pub fn gamma_cloud(spec: &OracleSpec, method: CloudMethod) -> Result<RNCloud> {
    spec.validate()?;
    match spec {
        OracleSpec::Bernoulli { .. } | OracleSpec::AtomExample => spec.hypothesis()?.rn_cloud(),
        OracleSpec::GaussShift { n_obs } => {
            let sigma = (*n_obs as f64).sqrt();
            match method {
                CloudMethod::MonteCarlo { n, seed } => {
                    let mut rng = StreamRng::new(seed, 0);
                    let coords = (0..n).flat_map(|_| gauss_shift_point(sigma * rng.normal(), *n_obs)).collect();
                    RNCloud::from_samples(2, coords, seed)
                }
                CloudMethod::Composite { nodes } | CloudMethod::Hermite { nodes } => {
                    let (rule, name) = line_rule(method, nodes)?;
                    let points = rule.nodes.iter().map(|z| gauss_shift_point(sigma * z, *n_obs)).collect();
                    let base = ParticleMeasure::new(2, points, rule.weights.clone())?;
                    RNCloud::new(base, Provenance::Quadrature { rule: name, n_nodes: rule.len() })
                }
            }
        }
        OracleSpec::GaussSym3 => match method {
            CloudMethod::MonteCarlo { n, seed } => {
                let mut rng = StreamRng::new(seed, 0);
                let coords = (0..n)
                    .flat_map(|_| {
                        let z1 = rng.normal();
                        sym3_point(z1, rng.normal())
                    })
                    .collect();
                RNCloud::from_samples(3, coords, seed)
            }
            CloudMethod::Composite { nodes } | CloudMethod::Hermite { nodes } => {
                let (points, weights) = planar_rule(nodes)?;
                let n_nodes = points.len();
                let base = ParticleMeasure::new(3, points.iter().map(|p| sym3_point(p[0], p[1])).collect(), weights)?;
                RNCloud::new(base, Provenance::Quadrature { rule: "polar-gauss-legendre".into(), n_nodes })
            }
        },
    }
}

fn line_rule(method: CloudMethod, nodes: usize) -> Result<(NormalRule, String)> {
    match method {
        CloudMethod::Hermite { .. } if nodes >= 1 => Ok((gauss_hermite(nodes), "gauss-hermite".into())),
        CloudMethod::Composite { .. } if nodes >= 4 => Ok((composite_normal(nodes / 4, 4, Z_MAX), "composite-gauss-legendre".into())),
        _ => Err(Error::InvalidInput(format!("{nodes} quadrature nodes is too few"))),
    }
}

/// Polar product rule for `N(0, I₂)`: equally spaced half-offset angles times
/// composite Gauss–Legendre in the radius against the density `r e^{−r²/2}`.
fn planar_rule(nodes: usize) -> Result<(Vec<[f64; 2]>, Vec<f64>)> {
    let radial_panels = nodes / (SYM3_ANGLES * 4);
    if radial_panels == 0 {
        return Err(Error::InvalidInput(format!("{nodes} quadrature nodes is too few for the planar rule")));
    }
    let (gx, gw) = gauss_legendre(4);
    let h = Z_MAX / radial_panels as f64;
    let mut radial = Vec::with_capacity(radial_panels * 4);
    for p in 0..radial_panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in gx.iter().zip(&gw) {
            let r = mid + 0.5 * h * x;
            radial.push((r, 0.5 * h * w * r * (-0.5 * r * r).exp()));
        }
    }
    let mut points = Vec::with_capacity(radial.len() * SYM3_ANGLES);
    let mut weights = Vec::with_capacity(radial.len() * SYM3_ANGLES);
    for k in 0..SYM3_ANGLES {
        let theta = (k as f64 + 0.5) * 2.0 * PI / SYM3_ANGLES as f64;
        let (s, c) = theta.sin_cos();
        for &(r, w) in &radial {
            points.push([r * c, r * s]);
            weights.push(w);
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((points, weights))
}

/// `μ(x) = 2Φ(log(√e x + √(e x² − 1))) − 1`, the limiting diagonal cdf for `gauss_shift(1)`.
pub fn closed_form_mu_cdf(x: f64) -> f64 {
    let lo = (-0.5f64).exp();
    if x < lo {
        return 0.0;
    }
    let se = E.sqrt();
    let t = (se * x + (E * x * x - 1.0).max(0.0).sqrt()).ln();
    (2.0 * normal_cdf(t) - 1.0).clamp(0.0, 1.0)
}

/// `log cosh t` without overflow.
pub fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Optimal e-power `n/2 − E log cosh(N(0, n))` of `gauss_shift(n)`.
pub fn optimal_epower(spec: &OracleSpec) -> Result<f64> {
    spec.validate()?;
    match spec {
        OracleSpec::GaussShift { n_obs } => {
            let n = *n_obs as f64;
            Ok(0.5 * n - expect_normal_adaptive(n.sqrt(), log_cosh))
        }
        _ => Err(Error::InvalidInput("the optimal e-power is only available in closed form for gauss_shift".into())),
    }
}

/// Closed-form optimal e-variable of a Gaussian oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ClosedForm {
    GaussShift { n_obs: u32 },
    GaussSym3,
}

impl ClosedForm {
    pub fn of(spec: &OracleSpec) -> Result<Self> {
        spec.validate()?;
        match spec {
            OracleSpec::GaussShift { n_obs } => Ok(ClosedForm::GaussShift { n_obs: *n_obs }),
            OracleSpec::GaussSym3 => Ok(ClosedForm::GaussSym3),
            _ => Err(Error::InvalidInput("closed forms exist only for the Gaussian oracles".into())),
        }
    }

    /// Value on raw data: the block of observations, or a point in the plane.
    pub fn eval_data(&self, data: &[f64]) -> Result<f64> {
        match self {
            ClosedForm::GaussShift { n_obs } => {
                if data.len() != *n_obs as usize {
                    return Err(Error::DimMismatch { expected: *n_obs as usize, found: data.len() });
                }
                let s: f64 = data.iter().sum();
                Ok((0.5 * *n_obs as f64 - log_cosh(s)).exp())
            }
            ClosedForm::GaussSym3 => match data {
                [z1, z2] => Ok(3.0 * E.sqrt() / sym3_h(*z1, *z2)),
                _ => Err(Error::DimMismatch { expected: 2, found: data.len() }),
            },
        }
    }

    /// Value at a likelihood-ratio point: `L / Σ y_i`.
    pub fn eval_rn(&self, y: &[f64]) -> f64 {
        y.len() as f64 / y.iter().sum::<f64>()
    }
}

/// `h(z) = e^{z₁} + e^{(−z₁−√3z₂)/2} + e^{(−z₁+√3z₂)/2}`.
pub fn sym3_h(z1: f64, z2: f64) -> f64 {
    let r = 3f64.sqrt();
    z1.exp() + (0.5 * (-z1 - r * z2)).exp() + (0.5 * (-z1 + r * z2)).exp()
}
