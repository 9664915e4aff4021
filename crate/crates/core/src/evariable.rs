//! E-variables and p-variables read off a SHINE tree.
//!
//! Every leaf of the tree is a region of likelihood-ratio space cut out by
//! the half-spaces on its root path, and carries the value `1 / level`.
//! A point is routed down the cuts; on a cut boundary it follows the stored
//! boundary share, either fractionally (for expectations) or by comparing a
//! uniform draw against the share (for sampling).
//!
//! The p-variable is the randomized survival rank of `X` under the common
//! null law of `X`, with leaves sorted by `X` in descending order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypothesis::DiscreteHypothesis;
use crate::measure::{HalfSpace, RNCloud, Side};
use crate::rng::StreamRng;
use crate::shine::ShineTree;

/// One cut on a root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub halfspace: HalfSpace,
    /// True when the path takes the half-space (lower) side.
    pub lower: bool,
    /// Fraction of boundary points sent to the lower side.
    pub boundary_share: f64,
}

/// A leaf region and its e-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub path: Vec<Cut>,
    pub value: f64,
    /// `Q`-mass of the leaf.
    pub mass: f64,
    /// Diagonal level of the leaf barycenter.
    pub level: f64,
    /// Full leaf barycenter.
    pub bary: Vec<f64>,
}

impl Region {
    fn key(&self) -> Vec<u8> {
        self.path.iter().map(|c| u8::from(!c.lower)).collect()
    }
}

/// An e-variable, either on likelihood-ratio space or on a finite outcome space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "EVariableRepr")]
pub enum EVariableFn {
    ShineRegions { dim: usize, regions: Vec<Region> },
    OutcomeVector { values: Vec<f64> },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum EVariableRepr {
    ShineRegions { dim: usize, regions: Vec<Region> },
    OutcomeVector { values: Vec<f64> },
}

impl TryFrom<EVariableRepr> for EVariableFn {
    type Error = Error;
    fn try_from(r: EVariableRepr) -> Result<Self> {
        match r {
            EVariableRepr::ShineRegions { dim, regions } => EVariableFn::from_regions(dim, regions),
            EVariableRepr::OutcomeVector { values } => EVariableFn::outcome_vector(values),
        }
    }
}

impl EVariableFn {
    /// Validate and order regions so that every subtree is a contiguous, lower-first block.
    pub fn from_regions(dim: usize, mut regions: Vec<Region>) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::InvalidInput("an e-variable needs at least one region".into()));
        }
        for r in &regions {
            if !(r.value >= 0.0 && r.value.is_finite()) {
                return Err(Error::InvalidInput(format!("region value {} is not a finite nonnegative number", r.value)));
            }
            if let Some(c) = r.path.iter().find(|c| c.halfspace.normal.len() != dim) {
                return Err(Error::DimMismatch { expected: dim, found: c.halfspace.normal.len() });
            }
        }
        regions.sort_by_key(Region::key);
        Ok(EVariableFn::ShineRegions { dim, regions })
    }

    pub fn outcome_vector(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("outcome values must be finite and nonnegative".into()));
        }
        Ok(EVariableFn::OutcomeVector { values })
    }

    /// The constant e-variable `X ≡ 1` on `R^dim`.
    pub fn constant_one(dim: usize) -> Self {
        EVariableFn::ShineRegions {
            dim,
            regions: vec![Region { path: Vec::new(), value: 1.0, mass: 1.0, level: 1.0, bary: vec![1.0; dim] }],
        }
    }

    pub fn regions(&self) -> &[Region] {
        match self {
            EVariableFn::ShineRegions { regions, .. } => regions,
            EVariableFn::OutcomeVector { .. } => &[],
        }
    }

    /// `(region index, weight)` pairs for a likelihood-ratio point; weights sum to 1.
    pub fn route(&self, point: &[f64]) -> Result<Vec<(usize, f64)>> {
        let regions = self.shine_regions(point)?;
        let mut out = Vec::with_capacity(2);
        route_into(regions, 0, regions.len(), 0, point, 1.0, &mut out);
        if out.is_empty() {
            return Err(Error::UnroutablePoint(point.to_vec()));
        }
        Ok(out)
    }

    /// Region reached by a single uniform draw `u` (boundary points go lower iff `u < share`).
    pub fn region_index(&self, point: &[f64], u: f64) -> Result<usize> {
        let regions = self.shine_regions(point)?;
        let (mut lo, mut hi, mut depth, mut u) = (0, regions.len(), 0, u);
        loop {
            if hi - lo == 1 && regions[lo].path.len() == depth {
                return Ok(lo);
            }
            let cut = match regions[lo].path.get(depth) {
                Some(c) => c,
                None => return Err(Error::UnroutablePoint(point.to_vec())),
            };
            let mid = lo + regions[lo..hi].partition_point(|r| r.path.get(depth).is_some_and(|c| c.lower));
            let go_lower = match cut.halfspace.side(point) {
                Side::Inside => true,
                Side::Outside => false,
                Side::Boundary => {
                    let s = cut.boundary_share;
                    if u < s {
                        u /= s;
                        true
                    } else {
                        u = if s < 1.0 { (u - s) / (1.0 - s) } else { 0.0 };
                        false
                    }
                }
            };
            (lo, hi) = if go_lower { (lo, mid) } else { (mid, hi) };
            if lo == hi {
                return Err(Error::UnroutablePoint(point.to_vec()));
            }
            depth += 1;
        }
    }

    /// Randomized evaluation at a likelihood-ratio point.
    pub fn eval(&self, point: &[f64], u: f64) -> Result<f64> {
        Ok(self.regions()[self.region_index(point, u)?].value)
    }

    /// Evaluation averaged over the boundary randomization.
    pub fn expect_at(&self, point: &[f64]) -> Result<f64> {
        let regions = self.regions();
        Ok(self.route(point)?.into_iter().map(|(k, w)| w * regions[k].value).sum())
    }

    /// Value on outcome `k` of an outcome-vector e-variable.
    pub fn eval_outcome(&self, k: usize) -> Result<f64> {
        match self {
            EVariableFn::OutcomeVector { values } => {
                values.get(k).copied().ok_or_else(|| Error::InvalidInput(format!("outcome index {k} out of range")))
            }
            EVariableFn::ShineRegions { .. } => {
                Err(Error::InvalidInput("region e-variables are evaluated at likelihood-ratio points".into()))
            }
        }
    }

    /// `E^Q[log X]` from the stored leaf masses and levels.
    pub fn leafwise_e_power(&self) -> Option<f64> {
        match self {
            EVariableFn::ShineRegions { regions, .. } => Some(regions.iter().map(|r| r.mass * r.value.ln()).sum()),
            EVariableFn::OutcomeVector { .. } => None,
        }
    }

    /// `E^{P_i}[X] = Σ mass · bary_i · value` from the stored leaves.
    pub fn leafwise_null_expectations(&self) -> Option<Vec<f64>> {
        match self {
            EVariableFn::ShineRegions { dim, regions } => Some(
                (0..*dim).map(|i| regions.iter().map(|r| r.mass * r.bary[i] * r.value).sum()).collect(),
            ),
            EVariableFn::OutcomeVector { .. } => None,
        }
    }

    fn shine_regions(&self, point: &[f64]) -> Result<&[Region]> {
        match self {
            EVariableFn::ShineRegions { dim, regions } => {
                if point.len() != *dim || point.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::UnroutablePoint(point.to_vec()));
                }
                Ok(regions)
            }
            EVariableFn::OutcomeVector { .. } => {
                Err(Error::InvalidInput("outcome-vector e-variables are evaluated by outcome index".into()))
            }
        }
    }
}

fn route_into(regions: &[Region], lo: usize, hi: usize, depth: usize, point: &[f64], weight: f64, out: &mut Vec<(usize, f64)>) {
    if lo == hi || weight <= 0.0 {
        return;
    }
    if hi - lo == 1 && regions[lo].path.len() == depth {
        out.push((lo, weight));
        return;
    }
    let Some(cut) = regions[lo].path.get(depth) else { return };
    let mid = lo + regions[lo..hi].partition_point(|r| r.path.get(depth).is_some_and(|c| c.lower));
    match cut.halfspace.side(point) {
        Side::Inside => route_into(regions, lo, mid, depth + 1, point, weight, out),
        Side::Outside => route_into(regions, mid, hi, depth + 1, point, weight, out),
        Side::Boundary => {
            let s = cut.boundary_share;
            route_into(regions, lo, mid, depth + 1, point, weight * s, out);
            route_into(regions, mid, hi, depth + 1, point, weight * (1.0 - s), out);
        }
    }
}

/// Read the e-variable `X = 1 / level` off the leaves of a SHINE tree.
pub fn recover_evariable(tree: &ShineTree) -> Result<EVariableFn> {
    let mut regions = Vec::with_capacity(tree.n_leaves());
    let mut stack = vec![(0usize, Vec::<Cut>::new())];
    while let Some((i, path)) = stack.pop() {
        let n = &tree.nodes[i];
        match n.children {
            Some([a, b]) => {
                let hs = n.halfspace.clone().ok_or_else(|| Error::InvalidInput(format!("split node {i} has no half-space")))?;
                let cut = |lower| Cut { halfspace: hs.clone(), lower, boundary_share: n.boundary_share };
                let mut upper_path = path.clone();
                upper_path.push(cut(false));
                let mut lower_path = path;
                lower_path.push(cut(true));
                stack.push((b, upper_path));
                stack.push((a, lower_path));
            }
            None => {
                if !(n.bary_scalar > 0.0) {
                    return Err(Error::InfeasibleExactness(format!(
                        "leaf {} sits at the origin, where every null has zero density",
                        if n.path.is_empty() { "root" } else { &n.path }
                    )));
                }
                regions.push(Region { path, value: 1.0 / n.bary_scalar, mass: n.mass, level: n.bary_scalar, bary: n.bary.clone() });
            }
        }
    }
    EVariableFn::from_regions(tree.dim(), regions)
}

/// `Σ_atoms w · Σ_k route_k · f(value_k, point)` for a region e-variable, or by
/// outcome index when `X` is an outcome vector aligned with the atoms of `gamma`.
fn integrate(x: &EVariableFn, gamma: &RNCloud, f: impl Fn(f64, &[f64]) -> f64) -> Result<f64> {
    let base = &gamma.base;
    match x {
        EVariableFn::ShineRegions { regions, .. } => {
            let mut total = 0.0;
            for (p, w) in base.atoms() {
                for (k, r) in x.route(p)? {
                    total += w * r * f(regions[k].value, p);
                }
            }
            Ok(total)
        }
        EVariableFn::OutcomeVector { values } => {
            if values.len() != base.len() {
                return Err(Error::DimMismatch { expected: base.len(), found: values.len() });
            }
            Ok(base.atoms().zip(values).map(|((p, w), &v)| w * f(v, p)).sum())
        }
    }
}

/// `E^Q[log X]`, integrating `X` over the atoms of `gamma`.
pub fn e_power(x: &EVariableFn, gamma: &RNCloud) -> Result<f64> {
    integrate(x, gamma, |v, _| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY })
}

/// `E^{P_i}[X] = E^Q[y_i X]` for every null.
pub fn null_expectations(x: &EVariableFn, gamma: &RNCloud) -> Result<Vec<f64>> {
    (0..gamma.dim()).map(|i| integrate(x, gamma, |v, p| p[i] * v)).collect()
}

/// Largest sup-distance between the laws of `X` under two different nulls,
/// each law obtained by reweighting the atoms of `gamma` by one coordinate.
pub fn pivotality_gap(x: &EVariableFn, gamma: &RNCloud) -> Result<f64> {
    let dim = gamma.dim();
    let mut laws: Vec<Vec<(f64, f64)>> = vec![Vec::new(); dim];
    match x {
        EVariableFn::ShineRegions { regions, .. } => {
            for (p, w) in gamma.base.atoms() {
                for (k, r) in x.route(p)? {
                    for (i, law) in laws.iter_mut().enumerate() {
                        law.push((regions[k].value, w * r * p[i]));
                    }
                }
            }
        }
        EVariableFn::OutcomeVector { values } => {
            if values.len() != gamma.base.len() {
                return Err(Error::DimMismatch { expected: gamma.base.len(), found: values.len() });
            }
            for ((p, w), &v) in gamma.base.atoms().zip(values) {
                for (i, law) in laws.iter_mut().enumerate() {
                    law.push((v, w * p[i]));
                }
            }
        }
    }
    Ok(max_cdf_gap(laws))
}

/// Pivotality gap of an outcome-indexed e-variable under the nulls of `h`.
pub fn outcome_pivotality_gap(values: &[f64], h: &DiscreteHypothesis) -> Result<f64> {
    if values.len() != h.n_outcomes() {
        return Err(Error::DimMismatch { expected: h.n_outcomes(), found: values.len() });
    }
    Ok(max_cdf_gap(h.null.iter().map(|p| values.iter().copied().zip(p.iter().copied()).collect()).collect()))
}

fn max_cdf_gap(laws: Vec<Vec<(f64, f64)>>) -> f64 {
    let mut grid: Vec<f64> = laws.iter().flatten().map(|(v, _)| *v).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let cdfs: Vec<Vec<f64>> = laws
        .into_iter()
        .map(|mut law| {
            law.sort_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = law.iter().map(|(_, w)| w).sum();
            let mut out = Vec::with_capacity(grid.len());
            let (mut acc, mut k) = (0.0, 0);
            for &t in &grid {
                while k < law.len() && law[k].0 <= t {
                    acc += law[k].1;
                    k += 1;
                }
                out.push(if total > 0.0 { acc / total } else { 0.0 });
            }
            out
        })
        .collect();
    let mut gap: f64 = 0.0;
    for a in 0..cdfs.len() {
        for b in a + 1..cdfs.len() {
            for (u, v) in cdfs[a].iter().zip(&cdfs[b]) {
                gap = gap.max((u - v).abs());
            }
        }
    }
    gap
}

/// `(1 − b) + b X`.
pub fn calibrate(x: &EVariableFn, b: f64) -> Result<EVariableFn> {
    if !(b > 0.0 && b <= 1.0) {
        return Err(Error::InvalidInput(format!("calibration weight {b} must lie in (0, 1]")));
    }
    let mix = |v: f64| (1.0 - b) + b * v;
    Ok(match x {
        EVariableFn::ShineRegions { dim, regions } => EVariableFn::ShineRegions {
            dim: *dim,
            regions: regions.iter().map(|r| Region { value: mix(r.value), ..r.clone() }).collect(),
        },
        EVariableFn::OutcomeVector { values } => EVariableFn::OutcomeVector { values: values.iter().map(|&v| mix(v)).collect() },
    })
}

/// The e-variable `2 − 2p` built from a p-value.
pub fn p_to_e(p: f64) -> f64 {
    2.0 - 2.0 * p
}

/// A block of leaves sharing one value of `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankGroup {
    pub value: f64,
    /// Mass of the block under the common null law of `X`.
    pub null_mass: f64,
    /// Null mass of all blocks with a strictly larger value.
    pub null_above: f64,
    pub q_mass: f64,
    /// Per-null masses of the block, from the leaf barycenters.
    pub per_null: Vec<f64>,
}

/// Randomized survival rank of a region e-variable under its null law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PVariableFn {
    pub base: EVariableFn,
    /// Blocks in descending order of value.
    pub groups: Vec<RankGroup>,
    /// Block index of every region of `base`.
    pub group_of: Vec<usize>,
}

/// Build the p-variable `p = F(X > x) + U · F(X = x)` from a region e-variable.
pub fn recover_pvariable(x: &EVariableFn) -> Result<PVariableFn> {
    let EVariableFn::ShineRegions { dim, regions } = x else {
        return Err(Error::InvalidInput("p-variables are recovered from region e-variables".into()));
    };
    let mut order: Vec<usize> = (0..regions.len()).collect();
    order.sort_by(|&a, &b| regions[b].value.total_cmp(&regions[a].value).then(a.cmp(&b)));
    let mut groups: Vec<RankGroup> = Vec::new();
    let mut group_of = vec![0; regions.len()];
    for &k in &order {
        let r = &regions[k];
        let same = groups.last().is_some_and(|g| (g.value - r.value).abs() <= 1e-12 * g.value.max(1.0));
        if !same {
            let above = groups.last().map_or(0.0, |g| g.null_above + g.null_mass);
            groups.push(RankGroup { value: r.value, null_mass: 0.0, null_above: above, q_mass: 0.0, per_null: vec![0.0; *dim] });
        }
        let g = groups.last_mut().expect("a group was just pushed");
        g.null_mass += r.mass * r.level;
        g.q_mass += r.mass;
        for (acc, b) in g.per_null.iter_mut().zip(&r.bary) {
            *acc += r.mass * b;
        }
        group_of[k] = groups.len() - 1;
    }
    Ok(PVariableFn { base: x.clone(), groups, group_of })
}

impl PVariableFn {
    /// p-value of a leaf region given the rank uniform `u`.
    pub fn p_of_region(&self, region: usize, u: f64) -> f64 {
        let g = &self.groups[self.group_of[region]];
        (g.null_above + u * g.null_mass).clamp(0.0, 1.0)
    }

    /// p-value at a likelihood-ratio point; draws two uniforms (routing, rank) from `rng`.
    pub fn eval(&self, point: &[f64], rng: &mut StreamRng) -> Result<f64> {
        let region = self.base.region_index(point, rng.uniform())?;
        Ok(self.p_of_region(region, rng.uniform()))
    }

    /// Grid points `α_k` (cumulative null mass of the top `k` blocks) with `Q(p ≤ α_k)`.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        let mut q = 0.0;
        self.groups
            .iter()
            .map(|g| {
                q += g.q_mass;
                (g.null_above + g.null_mass, q)
            })
            .collect()
    }

    /// `P_i(p ≤ α_k)` at the same grid, from the leaf barycenters.
    pub fn null_grid(&self, i: usize) -> Vec<f64> {
        let mut acc = 0.0;
        self.groups
            .iter()
            .map(|g| {
                acc += g.per_null[i];
                acc
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{ParticleMeasure, Provenance};
    use crate::shine::ShineTree;

    fn atom_cloud() -> RNCloud {
        let base = ParticleMeasure::new(2, vec![vec![0.6, 0.9], vec![1.5, 1.8], vec![0.9, 0.3]], vec![1.0 / 3.0; 3]).unwrap();
        RNCloud::new(base, Provenance::ExactDiscrete).unwrap()
    }

    fn atom_tree() -> ShineTree {
        ShineTree::new(atom_cloud()).unwrap().step().unwrap()
    }

    #[test]
    fn atom_example_values() {
        let x = recover_evariable(&atom_tree()).unwrap();
        let vals: Vec<f64> = x.regions().iter().map(|r| r.value).collect();
        assert!((vals[0] - 10.0 / 7.0).abs() < 1e-12 && (vals[1] - 10.0 / 13.0).abs() < 1e-12);
        let gamma = atom_cloud();
        let target = 0.5 * (10.0f64 / 7.0).ln() + 0.5 * (10.0f64 / 13.0).ln();
        assert!((e_power(&x, &gamma).unwrap() - target).abs() < 1e-12);
        assert!((x.leafwise_e_power().unwrap() - target).abs() < 1e-12);
        for e in null_expectations(&x, &gamma).unwrap() {
            assert!((e - 1.0).abs() < 1e-12);
        }
        assert!(pivotality_gap(&x, &gamma).unwrap() < 1e-12);
        // the third atom sits on the cut and is split half and half
        let r = x.route(&[0.9, 0.3]).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0].1 - 0.5).abs() < 1e-12);
        assert_eq!(x.eval(&[0.9, 0.3], 0.49).unwrap(), vals[0]);
        assert_eq!(x.eval(&[0.9, 0.3], 0.51).unwrap(), vals[1]);
    }

    #[test]
    fn frozen_root_is_constant_one() {
        let cloud = RNCloud::new(ParticleMeasure::dirac(vec![1.0, 1.0]), Provenance::ExactDiscrete).unwrap();
        let x = recover_evariable(&ShineTree::new(cloud.clone()).unwrap()).unwrap();
        assert_eq!(x.eval(&[3.0, 0.1], 0.3).unwrap(), 1.0);
        assert_eq!(e_power(&x, &cloud).unwrap(), 0.0);
        assert_eq!(x, EVariableFn::constant_one(2));
    }

    #[test]
    fn unroutable_points() {
        let x = recover_evariable(&atom_tree()).unwrap();
        assert!(matches!(x.route(&[1.0]), Err(Error::UnroutablePoint(_))));
        assert!(matches!(x.route(&[f64::NAN, 1.0]), Err(Error::UnroutablePoint(_))));
        assert!(matches!(x.eval(&[-1.0, 1.0], 0.5), Err(Error::UnroutablePoint(_))));
    }

    #[test]
    fn outcome_vector_gap_and_calibration() {
        let h = DiscreteHypothesis::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0.2, 0.5, 0.3], vec![0.3, 0.6, 0.1]],
            vec![vec![1.0 / 3.0; 3]],
        )
        .unwrap();
        let values = vec![1.63007, 0.66073, 1.14540];
        // cdfs at 0.66 and 1.15: P1 gives 0.5 and 0.8, P2 gives 0.6 and 0.7
        assert!((outcome_pivotality_gap(&values, &h).unwrap() - 0.1).abs() < 1e-12);
        let x = EVariableFn::outcome_vector(values.clone()).unwrap();
        assert!((pivotality_gap(&x, &h.rn_cloud().unwrap()).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(calibrate(&x, 1.0).unwrap(), x);
        let half = calibrate(&x, 0.5).unwrap();
        assert!((half.eval_outcome(1).unwrap() - (0.5 + 0.5 * 0.66073)).abs() < 1e-15);
        assert!(calibrate(&x, 0.0).is_err());
        assert_eq!(p_to_e(0.25), 1.5);
    }

    #[test]
    fn json_round_trip() {
        let x = recover_evariable(&atom_tree()).unwrap();
        let s = serde_json::to_string(&x).unwrap();
        assert!(s.contains("\"kind\":\"shine_regions\""));
        let back: EVariableFn = serde_json::from_str(&s).unwrap();
        assert_eq!(back, x);
        let bad = r#"{"kind":"outcome_vector","values":[-1.0]}"#;
        assert!(serde_json::from_str::<EVariableFn>(bad).is_err());
    }

    #[test]
    fn pvariable_grid_on_atom_example() {
        let x = recover_evariable(&atom_tree()).unwrap();
        let p = recover_pvariable(&x).unwrap();
        // top block is X = 10/7 with null mass 0.5 · 0.7
        assert_eq!(p.groups.len(), 2);
        let grid = p.grid();
        assert!((grid[0].0 - 0.35).abs() < 1e-12 && (grid[0].1 - 0.5).abs() < 1e-12);
        assert!((grid[1].0 - 1.0).abs() < 1e-12);
        for i in 0..2 {
            for (g, n) in grid.iter().zip(p.null_grid(i)) {
                assert!((g.0 - n).abs() < 1e-12);
            }
        }
        assert!(grid.iter().all(|(a, q)| q + 1e-12 >= *a));
        let mut rng = StreamRng::new(1, 0);
        let v = p.eval(&[0.6, 0.9], &mut rng).unwrap();
        assert!((0.0..=0.35).contains(&v));
    }
}
