//! The iterated separating-hyperplane construction.
//!
//! Starting from the root node `(γ, 1)`, every step splits each active leaf
//! `μ_k` at its own diagonal level `x_k` with [`separate`], producing two
//! children whose barycenters lie on the diagonal. Collapsing each leaf to
//! `(x_k, mass_k)` gives a diagonal measure `μ^(s)`; these increase in convex
//! order with `s` and stay below `γ`. The leaf levels also define the
//! e-variable `X = 1 / x_k` on each leaf region.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::hyperplane::separate;
use crate::measure::{HalfSpace, ParticleMeasure, RNCloud};

/// Leaves freeze when their second central moment is at most this.
pub const FREEZE_MOMENT: f64 = 1e-14;
/// Leaves freeze when their mass is at most this.
pub const FREEZE_MASS: f64 = 1e-12;
/// Maximum number of leaves; beyond it the lightest leaves stop splitting.
pub const LEAF_CAP: usize = 1 << 14;

/// One node of the splitting tree.
#[derive(Debug, Clone)]
pub struct ShineNode {
    pub measure: Arc<ParticleMeasure>,
    pub bary_scalar: f64,
    pub mass: f64,
    /// Barycenter vector (kept for exactness diagnostics).
    pub bary: Vec<f64>,
    /// Split applied at this node; `children[0]` is the half-space side.
    pub halfspace: Option<HalfSpace>,
    /// Fraction of boundary mass sent to the half-space side.
    pub boundary_share: f64,
    pub children: Option<[usize; 2]>,
    pub frozen: bool,
    /// `0`/`1` string of lower/upper turns from the root.
    pub path: String,
}

impl ShineNode {
    fn new(measure: ParticleMeasure, path: String) -> Result<Self> {
        let mass = measure.total_mass();
        let bary = measure.barycenter()?;
        let bary_scalar = bary.iter().sum::<f64>() / bary.len() as f64;
        Ok(Self {
            measure: Arc::new(measure),
            bary_scalar,
            mass,
            bary,
            halfspace: None,
            boundary_share: 0.0,
            children: None,
            frozen: false,
            path,
        })
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// The splitting tree over a likelihood-ratio cloud.
#[derive(Debug, Clone)]
pub struct ShineTree {
    pub nodes: Vec<ShineNode>,
    pub depth: usize,
    pub gamma: Arc<RNCloud>,
}

/// Diagonal measure `Σ w_k δ_{v_k 1}`, stored by its scalar levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalMeasure {
    /// `(level, weight)` sorted by level.
    pub atoms: Vec<(f64, f64)>,
}

impl DiagonalMeasure {
    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|(v, w)| v * w).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }

    /// `μ(v <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.atoms.iter().filter(|(v, _)| *v <= t).map(|(_, w)| w).sum()
    }

    /// As a particle measure on the diagonal of `R^dim`.
    pub fn to_particles(&self, dim: usize) -> ParticleMeasure {
        ParticleMeasure::new(dim, self.atoms.iter().map(|(v, _)| vec![*v; dim]).collect(), self.atoms.iter().map(|(_, w)| *w).collect())
            .expect("diagonal atoms are valid")
    }
}

/// Transition probabilities of the diagonal martingale out of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub node: usize,
    pub path: String,
    pub level: f64,
    /// `(target node, probability)`; a frozen leaf maps to itself.
    pub transitions: Vec<(usize, f64)>,
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub e_power: f64,
    pub n_leaves: usize,
}

/// A finished run: the final tree and its per-step trace.
#[derive(Debug, Clone)]
pub struct ShineRun {
    pub tree: ShineTree,
    pub trace: Vec<TraceRow>,
}

impl ShineTree {
    /// Depth-0 tree: the whole cloud as a single node at level 1.
    pub fn new(gamma: RNCloud) -> Result<Self> {
        let mut root = ShineNode::new(gamma.base.clone(), String::new())?;
        root.frozen = should_freeze(&root)?;
        Ok(Self { nodes: vec![root], depth: 0, gamma: Arc::new(gamma) })
    }

    pub fn root(&self) -> &ShineNode {
        &self.nodes[0]
    }

    pub fn dim(&self) -> usize {
        self.gamma.dim()
    }

    pub fn leaf_ids(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf()).collect()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &ShineNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().count()
    }

    /// `E^Q[log X] = −Σ_leaves mass · log(level)`.
    pub fn e_power(&self) -> f64 {
        -self.leaves().map(|n| n.mass * n.bary_scalar.ln()).sum::<f64>()
    }

    /// Split every active leaf once.
    pub fn step(&self) -> Result<ShineTree> {
        let mut nodes = self.nodes.clone();
        let mut active: Vec<usize> = self.leaf_ids().into_iter().filter(|&i| !nodes[i].frozen).collect();
        let room = LEAF_CAP.saturating_sub(self.n_leaves());
        if active.len() > room {
            active.sort_by(|&a, &b| nodes[b].mass.total_cmp(&nodes[a].mass).then(a.cmp(&b)));
            for &i in &active[room..] {
                nodes[i].frozen = true;
            }
            active.truncate(room);
            active.sort_unstable();
        }
        let splits: Vec<(usize, Result<Option<_>>)> = active
            .par_iter()
            .map(|&i| {
                let node = &nodes[i];
                let r = match separate(&node.measure, node.bary_scalar) {
                    Ok(s) => Ok(Some(s)),
                    Err(Error::DegenerateNode) => Ok(None),
                    Err(e) => Err(e.at_node(&display_path(&node.path))),
                };
                (i, r)
            })
            .collect();
        for (i, r) in splits {
            match r? {
                None => nodes[i].frozen = true,
                Some(split) => {
                    let parent_path = nodes[i].path.clone();
                    let mut lower = ShineNode::new(split.lower, format!("{parent_path}0"))?;
                    let mut upper = ShineNode::new(split.upper, format!("{parent_path}1"))?;
                    lower.bary_scalar = split.b_lower;
                    upper.bary_scalar = split.b_upper;
                    lower.frozen = should_freeze(&lower)?;
                    upper.frozen = should_freeze(&upper)?;
                    let parent = &nodes[i].measure;
                    let (num, den) = split
                        .boundary_fractions
                        .iter()
                        .fold((0.0, 0.0), |(a, b), (&k, &f)| (a + f * parent.weight(k), b + parent.weight(k)));
                    let ids = [nodes.len(), nodes.len() + 1];
                    nodes.push(lower);
                    nodes.push(upper);
                    let node = &mut nodes[i];
                    node.halfspace = Some(split.halfspace);
                    node.boundary_share = if den > 0.0 { num / den } else { 0.0 };
                    node.children = Some(ids);
                }
            }
        }
        Ok(ShineTree { nodes, depth: self.depth + 1, gamma: Arc::clone(&self.gamma) })
    }

    /// Leaf levels and masses as a diagonal measure (levels within 1e-12 merged).
    pub fn diagonal_measure(&self) -> DiagonalMeasure {
        let mut atoms: Vec<(f64, f64)> = self.leaves().map(|n| (n.bary_scalar, n.mass)).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, w) in atoms {
            match merged.last_mut() {
                Some(last) if (v - last.0).abs() <= 1e-12 * last.0.abs().max(1.0) => {
                    last.0 = (last.0 * last.1 + v * w) / (last.1 + w);
                    last.1 += w;
                }
                _ => merged.push((v, w)),
            }
        }
        DiagonalMeasure { atoms: merged }
    }

    /// Transition table of the diagonal martingale: child mass over sibling-pair mass.
    pub fn coupling_kernel(&self) -> Result<Vec<KernelRow>> {
        let mut rows = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let transitions = match n.children {
                Some([a, b]) => {
                    let total = self.nodes[a].mass + self.nodes[b].mass;
                    if total <= 0.0 {
                        return Err(Error::ZeroMassChildren(i));
                    }
                    vec![(a, self.nodes[a].mass / total), (b, self.nodes[b].mass / total)]
                }
                None if n.frozen => vec![(i, 1.0)],
                None => continue,
            };
            rows.push(KernelRow { node: i, path: n.path.clone(), level: n.bary_scalar, transitions });
        }
        Ok(rows)
    }

    /// Nested JSON export: every node with its level, mass and split half-space.
    pub fn to_json(&self) -> Value {
        fn node_json(t: &ShineTree, i: usize) -> Value {
            let n = &t.nodes[i];
            let children: Vec<Value> = n.children.map(|c| c.iter().map(|&k| node_json(t, k)).collect()).unwrap_or_default();
            json!({
                "path": n.path,
                "bary_scalar": n.bary_scalar,
                "mass": n.mass,
                "frozen": n.frozen,
                "halfspace": n.halfspace,
                "boundary_share": n.boundary_share,
                "children": children,
            })
        }
        json!({ "dim": self.dim(), "depth": self.depth, "root": node_json(self, 0) })
    }
}

fn display_path(p: &str) -> String {
    if p.is_empty() {
        "root".to_string()
    } else {
        p.to_string()
    }
}

fn should_freeze(n: &ShineNode) -> Result<bool> {
    Ok(n.mass <= FREEZE_MASS || n.measure.second_central_moment()? <= FREEZE_MOMENT)
}

/// Iterate until `steps` splits or an e-power gain below `stop_eps`.
pub fn run(gamma: RNCloud, steps: usize, stop_eps: f64) -> Result<ShineRun> {
    let mut tree = ShineTree::new(gamma)?;
    let mut trace = vec![TraceRow { step: 0, e_power: tree.e_power(), n_leaves: tree.n_leaves() }];
    for s in 1..=steps {
        if tree.leaves().all(|n| n.frozen) {
            break;
        }
        let next = tree.step()?;
        let gain = next.e_power() - tree.e_power();
        tree = next;
        trace.push(TraceRow { step: s, e_power: tree.e_power(), n_leaves: tree.n_leaves() });
        if gain < stop_eps {
            break;
        }
    }
    Ok(ShineRun { tree, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Provenance;

    fn atom_cloud() -> RNCloud {
        let base = ParticleMeasure::new(2, vec![vec![0.6, 0.9], vec![1.5, 1.8], vec![0.9, 0.3]], vec![1.0 / 3.0; 3]).unwrap();
        RNCloud::new(base, Provenance::ExactDiscrete).unwrap()
    }

    #[test]
    fn dirac_root_freezes() {
        let cloud = RNCloud::new(ParticleMeasure::dirac(vec![1.0, 1.0]), Provenance::ExactDiscrete).unwrap();
        let t = ShineTree::new(cloud).unwrap();
        assert!(t.root().frozen);
        let r = run(t.gamma.as_ref().clone(), 3, 0.0).unwrap();
        assert_eq!(r.tree.n_leaves(), 1);
        assert_eq!(r.trace.last().unwrap().e_power, 0.0);
    }

    #[test]
    fn atom_example_one_step() {
        let t = ShineTree::new(atom_cloud()).unwrap().step().unwrap();
        let d = t.diagonal_measure();
        assert_eq!(d.atoms.len(), 2);
        assert!((d.atoms[0].0 - 0.7).abs() < 1e-12 && (d.atoms[0].1 - 0.5).abs() < 1e-12);
        assert!((d.atoms[1].0 - 1.3).abs() < 1e-12 && (d.atoms[1].1 - 0.5).abs() < 1e-12);
        let k = t.coupling_kernel().unwrap();
        assert!((k[0].transitions[0].1 - 0.5).abs() < 1e-12);
        // both children are two-atom pieces on a line through their barycenter
        let t2 = t.step().unwrap();
        assert_eq!(t2.n_leaves(), 2);
        assert!(t2.leaves().all(|n| n.frozen));
        assert!(k.iter().all(|r| (r.transitions.iter().map(|t| t.1).sum::<f64>() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn depth_zero_is_dirac() {
        let t = ShineTree::new(atom_cloud()).unwrap();
        assert_eq!(t.diagonal_measure().atoms, vec![(1.0, 1.0)]);
        assert_eq!(t.e_power(), 0.0);
        let r = run(atom_cloud(), 0, 0.0).unwrap();
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn json_export_nests_children() {
        let t = ShineTree::new(atom_cloud()).unwrap().step().unwrap();
        let v = t.to_json();
        assert_eq!(v["root"]["children"].as_array().unwrap().len(), 2);
        assert!(v["root"]["halfspace"]["normal"].is_array());
    }
}
