//! Finite weighted particle measures in `R^L`.
//!
//! Every measure in the pipeline (the RN cloud, split pieces, diagonal
//! approximants) is carried as a [`ParticleMeasure`]: a list of atoms with
//! nonnegative weights. Measures are immutable values; splitting returns new
//! measures.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Boundary classification tolerance, scaled by `max(1, |x|)`.
pub const TOL_GEOM: f64 = 1e-10;
/// Relative tolerance for "barycenter lies on the diagonal" checks.
pub const TOL_BARY: f64 = 1e-8;
/// Atoms lighter than this fraction of the parent mass are dropped after a split.
pub const DROP_REL: f64 = 1e-15;

/// Finite weighted point set in `R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MeasureRepr", into = "MeasureRepr")]
pub struct ParticleMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MeasureRepr {
    dim: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl TryFrom<MeasureRepr> for ParticleMeasure {
    type Error = Error;
    fn try_from(r: MeasureRepr) -> Result<Self> {
        ParticleMeasure::new(r.dim, r.points, r.weights)
    }
}

impl From<ParticleMeasure> for MeasureRepr {
    fn from(m: ParticleMeasure) -> Self {
        MeasureRepr { dim: m.dim, points: m.points().map(<[f64]>::to_vec).collect(), weights: m.weights }
    }
}

impl ParticleMeasure {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimMismatch { expected: dim, found: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords, weights)
    }

    /// Build from row-major coordinates (`coords.len() == dim * weights.len()`).
    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if coords.len() != dim * weights.len() {
            return Err(Error::DimMismatch { expected: dim * weights.len(), found: coords.len() });
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidInput(format!("weight {w} is not a finite nonnegative number")));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        Ok(Self { dim, coords, weights })
    }

    /// Unit mass at a single point.
    pub fn dirac(point: Vec<f64>) -> Self {
        let dim = point.len();
        Self { dim, coords: point, weights: vec![1.0] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points().zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Unnormalized first moment `sum_i w_i x_i`.
    pub fn first_moment(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for (p, w) in self.atoms() {
            for (a, x) in acc.iter_mut().zip(p) {
                *a += w * x;
            }
        }
        acc
    }

    pub fn barycenter(&self) -> Result<Vec<f64>> {
        let mass = self.total_mass();
        if mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        Ok(self.first_moment().into_iter().map(|m| m / mass).collect())
    }

    /// Trace of the covariance matrix (mean squared distance to the barycenter).
    pub fn second_central_moment(&self) -> Result<f64> {
        let b = self.barycenter()?;
        let mass = self.total_mass();
        let s: f64 = self
            .atoms()
            .map(|(p, w)| w * p.iter().zip(&b).map(|(x, c)| (x - c) * (x - c)).sum::<f64>())
            .sum();
        Ok(s / mass)
    }

    pub fn normalize(&self) -> Result<Self> {
        let mass = self.total_mass();
        if mass <= 0.0 {
            return Err(Error::ZeroMass);
        }
        Ok(self.scale(1.0 / mass))
    }

    pub fn scale(&self, t: f64) -> Self {
        assert!(t >= 0.0 && t.is_finite(), "scale factor must be finite and nonnegative");
        Self { dim: self.dim, coords: self.coords.clone(), weights: self.weights.iter().map(|w| w * t).collect() }
    }

    /// Apply `f` to every point, keeping weights.
    pub fn map_points(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut coords = Vec::with_capacity(self.coords.len());
        let mut dim = None;
        for p in self.points() {
            let q = f(p);
            match dim {
                None => dim = Some(q.len()),
                Some(d) if d != q.len() => return Err(Error::DimMismatch { expected: d, found: q.len() }),
                _ => {}
            }
            coords.extend(q);
        }
        Self::from_flat(dim.unwrap_or(self.dim), coords, self.weights.clone())
    }

    /// Keep only atoms selected by `keep`, in order.
    pub fn select(&self, keep: impl Fn(usize) -> bool) -> Self {
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for i in 0..self.len() {
            if keep(i) {
                coords.extend_from_slice(self.point(i));
                weights.push(self.weights[i]);
            }
        }
        Self { dim: self.dim, coords, weights }
    }

    /// Drop atoms whose weight is below `rel * total_mass` (and exact zeros).
    pub fn prune(&self, rel: f64) -> Self {
        let floor = rel * self.total_mass();
        self.select(|i| self.weights[i] > floor && self.weights[i] > 0.0)
    }

    /// Max coordinate spread of the barycenter around its mean, relative to that mean.
    pub fn diagonal_defect(&self) -> Result<f64> {
        let b = self.barycenter()?;
        Ok(diagonal_defect(&b))
    }

    /// Merge atoms that coincide up to `1e-12 * (1 + |x|)` in every coordinate.
    pub fn merge_duplicates(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        let mut coords: Vec<f64> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for i in idx {
            let p = self.point(i);
            let w = self.weights[i];
            if let Some(last) = weights.len().checked_sub(1) {
                if close(&coords[last * self.dim..], p) {
                    weights[last] += w;
                    continue;
                }
            }
            coords.extend_from_slice(p);
            weights.push(w);
        }
        Self { dim: self.dim, coords, weights }
    }

    /// Snap to a grid of step `h`, merging each cell into one atom placed at
    /// the cell's conditional barycenter. Mass and first moment are preserved
    /// and the result is smaller in convex order.
    pub fn coarsen(&self, h: f64) -> Self {
        assert!(h > 0.0);
        let mut cells: BTreeMap<Vec<i64>, (f64, Vec<f64>)> = BTreeMap::new();
        for (p, w) in self.atoms() {
            if w <= 0.0 {
                continue;
            }
            let key: Vec<i64> = p.iter().map(|x| (x / h).floor() as i64).collect();
            let entry = cells.entry(key).or_insert_with(|| (0.0, vec![0.0; self.dim]));
            entry.0 += w;
            for (a, x) in entry.1.iter_mut().zip(p) {
                *a += w * x;
            }
        }
        let mut coords = Vec::with_capacity(cells.len() * self.dim);
        let mut weights = Vec::with_capacity(cells.len());
        for (_, (w, m)) in cells {
            coords.extend(m.iter().map(|x| x / w));
            weights.push(w);
        }
        Self { dim: self.dim, coords, weights }
    }

    /// Coarsen with the smallest power-of-two grid refinement that leaves at most `n_max` atoms.
    pub fn coarsen_to(&self, n_max: usize) -> Self {
        let merged = self.merge_duplicates();
        if merged.len() <= n_max {
            return merged;
        }
        let extent = (0..self.dim)
            .map(|d| {
                let (lo, hi) = self
                    .points()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[d]), hi.max(p[d])));
                hi - lo
            })
            .fold(0.0, f64::max)
            .max(1e-12);
        let mut h = extent / (n_max as f64).powf(1.0 / self.dim as f64);
        loop {
            let c = self.coarsen(h);
            if c.len() <= n_max {
                return c;
            }
            h *= 1.25;
        }
    }

    /// Split into `(inside, outside)` along `halfspace`.
    ///
    /// `boundary_fractions` must contain exactly the atoms lying on the
    /// boundary hyperplane (within [`TOL_GEOM`]); atom `i` sends
    /// `f * w_i` inside and `(1 - f) * w_i` outside.
    pub fn restrict_split(
        &self,
        halfspace: &HalfSpace,
        boundary_fractions: &BTreeMap<usize, f64>,
    ) -> Result<(Self, Self)> {
        if halfspace.normal.len() != self.dim {
            return Err(Error::DimMismatch { expected: self.dim, found: halfspace.normal.len() });
        }
        for (&i, &f) in boundary_fractions {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidFraction { index: i, fraction: f });
            }
            if i >= self.len() {
                return Err(Error::InvalidInput(format!("boundary index {i} out of range")));
            }
        }
        let mut w_in = vec![0.0; self.len()];
        let mut w_out = vec![0.0; self.len()];
        for (i, (p, w)) in self.atoms().enumerate() {
            match (halfspace.side(p), boundary_fractions.get(&i)) {
                (Side::Boundary, Some(&f)) => {
                    w_in[i] = f * w;
                    w_out[i] = w - w_in[i];
                }
                (Side::Boundary, None) => {
                    return Err(Error::InvalidInput(format!("atom {i} lies on the boundary but has no fraction")))
                }
                (_, Some(_)) => {
                    return Err(Error::InvalidInput(format!("atom {i} is not on the boundary but has a fraction")))
                }
                (Side::Inside, None) => w_in[i] = w,
                (Side::Outside, None) => w_out[i] = w,
            }
        }
        let floor = DROP_REL * self.total_mass();
        let build = |ws: &[f64]| {
            let mut coords = Vec::new();
            let mut weights = Vec::new();
            for (i, &w) in ws.iter().enumerate() {
                if w > floor && w > 0.0 {
                    coords.extend_from_slice(self.point(i));
                    weights.push(w);
                }
            }
            Self { dim: self.dim, coords, weights }
        };
        Ok((build(&w_in), build(&w_out)))
    }
}

/// `max_i |b_i - mean(b)| / max(1, mean(b))`.
pub fn diagonal_defect(b: &[f64]) -> f64 {
    let mean = b.iter().sum::<f64>() / b.len() as f64;
    b.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max) / mean.abs().max(1.0)
}

/// Where a point sits relative to a half-space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Inside,
    Boundary,
    Outside,
}

/// Closed half-space `{y : normal . y <= offset}` with a unit normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl HalfSpace {
    /// Normalizes `normal`; fails on a zero vector.
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidInput("half-space normal must be a nonzero finite vector".into()));
        }
        Ok(Self { normal: normal.iter().map(|v| v / norm).collect(), offset: offset / norm })
    }

    /// Half-space with unit normal `normal` whose boundary passes through `point`.
    pub fn through(normal: Vec<f64>, point: &[f64]) -> Result<Self> {
        let hs = Self::new(normal, 0.0)?;
        let offset = dot(&hs.normal, point);
        Ok(Self { offset, ..hs })
    }

    /// Signed distance `normal . y - offset`.
    pub fn signed_distance(&self, y: &[f64]) -> f64 {
        dot(&self.normal, y) - self.offset
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        self.signed_distance(y) <= 0.0
    }

    pub fn side(&self, y: &[f64]) -> Side {
        let d = self.signed_distance(y);
        let scale = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        if d.abs() <= TOL_GEOM * scale {
            Side::Boundary
        } else if d < 0.0 {
            Side::Inside
        } else {
            Side::Outside
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How an [`RNCloud`] was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ExactDiscrete,
    MonteCarlo { seed: u64, n_samples: usize },
    Quadrature { rule: String, n_nodes: usize },
}

/// Law of the likelihood-ratio vector `(dP_1/dQ, ..., dP_L/dQ)` under `Q`,
/// carried as a probability measure on the nonnegative orthant with mean `1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RNCloud {
    pub base: ParticleMeasure,
    pub provenance: Provenance,
}

impl RNCloud {
    /// Validates coordinates, unit mass and (for deterministic provenances) the unit barycenter.
    pub fn new(base: ParticleMeasure, provenance: Provenance) -> Result<Self> {
        if base.coords().iter().any(|&c| c < 0.0) {
            return Err(Error::InvalidInput("likelihood-ratio coordinates must be nonnegative".into()));
        }
        let mass = base.total_mass();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::MassMismatch { left: mass, right: 1.0 });
        }
        if !matches!(provenance, Provenance::MonteCarlo { .. }) {
            let b = base.barycenter()?;
            let err = b.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
            if err > TOL_BARY {
                return Err(Error::InvalidInput(format!("cloud barycenter deviates from 1 by {err:e}")));
            }
        }
        Ok(Self { base, provenance })
    }

    /// Cloud from iid samples of the likelihood-ratio vector under `Q`.
    ///
    /// The empirical weights are exponentially tilted (minimum-KL
    /// reweighting) so the barycenter is exactly the all-ones vector.
    pub fn from_samples(dim: usize, coords: Vec<f64>, seed: u64) -> Result<Self> {
        let n = coords.len() / dim.max(1);
        let weights = tilt_to_unit_mean(dim, &coords)?;
        let base = ParticleMeasure::from_flat(dim, coords, weights)?;
        Ok(Self { base, provenance: Provenance::MonteCarlo { seed, n_samples: n } })
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Sample `n` atoms from the cloud itself (with replacement), as a sanity generator for tests.
    pub fn resample(&self, n: usize, rng: &mut StreamRng) -> Vec<usize> {
        let cdf: Vec<f64> = self
            .base
            .weights()
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        let total = *cdf.last().unwrap_or(&0.0);
        (0..n)
            .map(|_| {
                let u = rng.uniform() * total;
                cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
            })
            .collect()
    }
}

/// Weights `w_i ∝ exp(theta . (y_i - 1))` with `sum w_i y_i = 1`, found by
/// Newton's method on the convex dual `log sum exp(theta . (y_i - 1))`.
fn tilt_to_unit_mean(dim: usize, coords: &[f64]) -> Result<Vec<f64>> {
    let n = coords.len() / dim;
    if n == 0 {
        return Err(Error::ZeroMass);
    }
    let mut theta = vec![0.0; dim];
    let gtol = 1e-14 * coords.iter().fold(1.0f64, |a, v| a.max((v - 1.0).abs()));
    let eval = |theta: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let exps: Vec<f64> = coords.chunks_exact(dim).map(|y| y.iter().zip(theta).map(|(v, t)| t * (v - 1.0)).sum()).collect();
        let shift = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = exps.iter().map(|e| (e - shift).exp()).collect();
        let z: f64 = w.iter().sum();
        (z.ln() + shift, w.iter().map(|x| x / z).collect(), exps)
    };
    for _ in 0..100 {
        let (obj, w, _) = eval(&theta);
        let mut grad = vec![0.0; dim];
        for (y, wi) in coords.chunks_exact(dim).zip(&w) {
            for d in 0..dim {
                grad[d] += wi * (y[d] - 1.0);
            }
        }
        if grad.iter().map(|g| g.abs()).fold(0.0, f64::max) < gtol {
            return Ok(w);
        }
        let mut hess = vec![0.0; dim * dim];
        for (y, wi) in coords.chunks_exact(dim).zip(&w) {
            for a in 0..dim {
                for b in 0..dim {
                    hess[a * dim + b] += wi * (y[a] - 1.0 - grad[a]) * (y[b] - 1.0 - grad[b]);
                }
            }
        }
        for a in 0..dim {
            hess[a * dim + a] += 1e-14;
        }
        let step = crate::linalg::solve_sym(dim, &hess, &grad)
            .ok_or_else(|| Error::SolverFailure("singular covariance while tilting samples".into()))?;
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            let (obj_c, _, _) = eval(&cand);
            if obj_c <= obj - 1e-4 * t * dot(&grad, &step) + 1e-13 * obj.abs().max(1.0) || t < 1e-10 {
                theta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::InvalidInput("the all-ones vector is not inside the convex hull of the samples".into()))
}
