//! Convex order between discrete measures.
//!
//! `μ ⪯cx ν` holds exactly when a martingale coupling exists: a transport plan
//! `π` with marginals `μ` and `ν` such that each source atom `x_i` is the
//! barycenter of its conditional target distribution. Feasibility of that
//! linear system is decided by LP. When it is infeasible, the Farkas ray is
//! turned into a convex piecewise-linear function `φ` with `∫φ dμ > ∫φ dν`.
//! Both outcomes are re-verified here before being returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{Cmp, LinearProgram, LpOutcome, VarKind};
use crate::measure::{dot, ParticleMeasure};

/// Default cap on atoms per side; larger inputs must be coarsened first.
pub const N_MAX: usize = 500;

/// A martingale coupling between the (merged) atoms of `μ` and `ν`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingPlan {
    pub mu: ParticleMeasure,
    pub nu: ParticleMeasure,
    /// Row-major `mu.len() x nu.len()` masses.
    pub mass: Vec<f64>,
}

impl CouplingPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.nu.len() + j]
    }

    /// Largest violation of the marginal and martingale constraints, each
    /// measured against its own tolerance scale (so `<= 1e-9` means valid).
    pub fn max_violation(&self) -> f64 {
        let (n, m, dim) = (self.mu.len(), self.nu.len(), self.mu.dim());
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let row: f64 = (0..m).map(|j| self.get(i, j)).sum();
            worst = worst.max((row - self.mu.weight(i)).abs());
            let x = self.mu.point(i);
            let scale = self.mu.weight(i) * (1.0 + dot(x, x).sqrt());
            for d in 0..dim {
                let s: f64 = (0..m).map(|j| self.get(i, j) * self.nu.point(j)[d]).sum();
                let target = self.mu.weight(i) * x[d];
                worst = worst.max((s - target).abs() / scale.max(1.0));
            }
        }
        for j in 0..m {
            let col: f64 = (0..n).map(|i| self.get(i, j)).sum();
            worst = worst.max((col - self.nu.weight(j)).abs());
        }
        let neg = self.mass.iter().copied().fold(0.0, f64::min);
        worst.max(-neg)
    }
}

/// Convex function `φ(y) = max_k (intercept_k + slope_k . y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexWitness {
    pub intercepts: Vec<f64>,
    pub slopes: Vec<Vec<f64>>,
}

impl ConvexWitness {
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.intercepts
            .iter()
            .zip(&self.slopes)
            .map(|(a, c)| a + dot(c, y))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn integrate(&self, m: &ParticleMeasure) -> f64 {
        m.atoms().map(|(p, w)| w * self.eval(p)).sum()
    }

    /// `∫φ dμ − ∫φ dν`.
    pub fn gap(&self, mu: &ParticleMeasure, nu: &ParticleMeasure) -> f64 {
        self.integrate(mu) - self.integrate(nu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CxVerdict {
    Dominated(CouplingPlan),
    NotDominated(ConvexWitness),
}

impl CxVerdict {
    pub fn is_dominated(&self) -> bool {
        matches!(self, CxVerdict::Dominated(_))
    }
}

/// Decide `μ ⪯cx ν`.
pub fn is_cx_dominated(mu: &ParticleMeasure, nu: &ParticleMeasure) -> Result<CxVerdict> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimMismatch { expected: mu.dim(), found: nu.dim() });
    }
    let (mass_mu, mass_nu) = (mu.total_mass(), nu.total_mass());
    if (mass_mu - mass_nu).abs() > 1e-9 * mass_mu.max(1.0) {
        return Err(Error::MassMismatch { left: mass_mu, right: mass_nu });
    }
    if mass_mu <= 0.0 {
        return Err(Error::ZeroMass);
    }
    let mu = mu.merge_duplicates().prune(0.0);
    let nu = nu.merge_duplicates().prune(0.0).scale(mass_mu / mass_nu);
    for m in [&mu, &nu] {
        if m.len() > N_MAX {
            return Err(Error::InvalidInput(format!("{} atoms exceed the LP cap of {N_MAX}; coarsen first", m.len())));
        }
    }
    let (n, m, dim) = (mu.len(), nu.len(), mu.dim());

    let mut lp = LinearProgram::new();
    for _ in 0..n * m {
        lp.add_var(VarKind::NonNeg, 0.0);
    }
    for i in 0..n {
        lp.add_row((0..m).map(|j| (i * m + j, 1.0)).collect(), Cmp::Eq, mu.weight(i));
    }
    for j in 0..m {
        lp.add_row((0..n).map(|i| (i * m + j, 1.0)).collect(), Cmp::Eq, nu.weight(j));
    }
    for i in 0..n {
        for d in 0..dim {
            let coefs = (0..m).map(|j| (i * m + j, nu.point(j)[d])).collect();
            lp.add_row(coefs, Cmp::Eq, mu.weight(i) * mu.point(i)[d]);
        }
    }

    match lp.minimize()? {
        LpOutcome::Optimal { x, .. } => {
            let plan = CouplingPlan { mu, nu, mass: x.into_iter().map(|v| v.max(0.0)).collect() };
            let viol = plan.max_violation();
            if viol > 1e-9 {
                return Err(Error::SolverFailure(format!("coupling plan violates constraints by {viol:e}")));
            }
            Ok(CxVerdict::Dominated(plan))
        }
        LpOutcome::Infeasible { farkas } => {
            let scale = farkas.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if scale <= 0.0 {
                return Err(Error::SolverFailure("empty Farkas ray".into()));
            }
            let intercepts: Vec<f64> = farkas[..n].iter().map(|v| v / scale).collect();
            let slopes: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..dim).map(|d| farkas[n + m + i * dim + d] / scale).collect())
                .collect();
            let witness = ConvexWitness { intercepts, slopes };
            let gap = witness.gap(&mu, &nu);
            if gap <= 1e-9 {
                return Err(Error::SolverFailure(format!("convex witness gap {gap:e} is not conclusive")));
            }
            Ok(CxVerdict::NotDominated(witness))
        }
        LpOutcome::Unbounded => Err(Error::SolverFailure("feasibility LP reported unbounded".into())),
    }
}

/// True iff each consecutive pair of the list is in convex order.
pub fn cx_chain_check(measures: &[ParticleMeasure]) -> Result<bool> {
    for pair in measures.windows(2) {
        if !is_cx_dominated(&pair[0], &pair[1])?.is_dominated() {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom_gamma() -> ParticleMeasure {
        ParticleMeasure::new(2, vec![vec![0.6, 0.9], vec![1.5, 1.8], vec![0.9, 0.3]], vec![1.0 / 3.0; 3]).unwrap()
    }

    fn mu1() -> ParticleMeasure {
        ParticleMeasure::new(2, vec![vec![0.7, 0.7], vec![1.3, 1.3]], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn dirac_is_dominated_by_mean_one_measure() {
        let d = ParticleMeasure::dirac(vec![1.0, 1.0]);
        match is_cx_dominated(&d, &atom_gamma()).unwrap() {
            CxVerdict::Dominated(plan) => assert!(plan.max_violation() <= 1e-12),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn atom_example_first_step_is_dominated() {
        assert!(is_cx_dominated(&mu1(), &atom_gamma()).unwrap().is_dominated());
        assert!(cx_chain_check(&[ParticleMeasure::dirac(vec![1.0, 1.0]), mu1(), atom_gamma()]).unwrap());
    }

    #[test]
    fn spread_is_not_below_a_point() {
        let spread = ParticleMeasure::new(1, vec![vec![0.0], vec![2.0]], vec![0.5, 0.5]).unwrap();
        let point = ParticleMeasure::dirac(vec![1.0]);
        match is_cx_dominated(&spread, &point).unwrap() {
            CxVerdict::NotDominated(w) => {
                assert!(w.gap(&spread, &point) > 1e-9);
                // a positive multiple of |x-1| up to an affine term: zero at 1, equal values at 0 and 2
                let (a, b, c) = (w.eval(&[0.0]), w.eval(&[1.0]), w.eval(&[2.0]));
                assert!(a + c - 2.0 * b > 0.0);
            }
            v => panic!("{v:?}"),
        }
        assert!(!cx_chain_check(&[atom_gamma(), ParticleMeasure::dirac(vec![1.0, 1.0])]).unwrap());
    }

    #[test]
    fn singleton_chain_and_errors() {
        assert!(cx_chain_check(&[atom_gamma()]).unwrap());
        let half = ParticleMeasure::new(2, vec![vec![1.0, 1.0]], vec![0.5]).unwrap();
        assert!(matches!(is_cx_dominated(&half, &atom_gamma()), Err(Error::MassMismatch { .. })));
        let one_d = ParticleMeasure::dirac(vec![1.0]);
        assert!(matches!(is_cx_dominated(&one_d, &atom_gamma()), Err(Error::DimMismatch { .. })));
    }
}
