//! Finite hypothesis sets: existence gates and LP/KKT e-variables.
//!
//! A [`DiscreteHypothesis`] lists `L` null and `M` alternative probability
//! vectors over `m` outcomes. The gates decide whether the alternative side
//! (a point or a convex hull) meets the linear span or the convex hull of the
//! nulls. An empty intersection is exactly the existence condition for an
//! exact (span) or plain (hull) nontrivial e-variable, and every answer comes
//! with a certificate that is re-checked before it is returned.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lp::{Cmp, LinearProgram, LpOutcome, VarKind};
use crate::measure::{ParticleMeasure, Provenance, RNCloud};

const SUM_TOL: f64 = 1e-12;
/// Product outcome spaces are capped at this many outcomes.
pub const MAX_PRODUCT_OUTCOMES: u128 = 1_000_000;
/// Default upper bound on LP e-variable values.
pub const DEFAULT_BOUND: f64 = 100.0;

/// Null and alternative laws on a finite outcome space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HypothesisRepr")]
pub struct DiscreteHypothesis {
    pub outcomes: Vec<String>,
    pub null: Vec<Vec<f64>>,
    pub alt: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct HypothesisRepr {
    outcomes: Vec<String>,
    null: Vec<Vec<f64>>,
    alt: Vec<Vec<f64>>,
}

impl TryFrom<HypothesisRepr> for DiscreteHypothesis {
    type Error = Error;
    fn try_from(r: HypothesisRepr) -> Result<Self> {
        DiscreteHypothesis::new(r.outcomes, r.null, r.alt)
    }
}

impl DiscreteHypothesis {
    pub fn new(outcomes: Vec<String>, null: Vec<Vec<f64>>, alt: Vec<Vec<f64>>) -> Result<Self> {
        let m = outcomes.len();
        if m < 2 {
            return Err(Error::InvalidInput("need at least two outcomes".into()));
        }
        if null.is_empty() || alt.is_empty() {
            return Err(Error::InvalidInput("need at least one null and one alternative law".into()));
        }
        for v in null.iter().chain(&alt) {
            if v.len() != m {
                return Err(Error::DimMismatch { expected: m, found: v.len() });
            }
            if v.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::InvalidInput("probabilities must be finite and nonnegative".into()));
            }
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > SUM_TOL * m as f64 {
                return Err(Error::InvalidInput(format!("probability vector sums to {s}")));
            }
        }
        Ok(Self { outcomes, null, alt })
    }

    /// Bernoulli nulls `Ber(p_i)` against `Ber(q)`, outcomes `"0"` and `"1"`.
    pub fn bernoulli(nulls: &[f64], alt: f64) -> Result<Self> {
        let ber = |p: f64| vec![1.0 - p, p];
        Self::new(vec!["0".into(), "1".into()], nulls.iter().map(|&p| ber(p)).collect(), vec![ber(alt)])
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n_null(&self) -> usize {
        self.null.len()
    }

    /// `E^{P_i}[x]` for every null.
    pub fn null_expectations(&self, x: &[f64]) -> Vec<f64> {
        self.null.iter().map(|p| dot(p, x)).collect()
    }

    pub fn alt_expectations(&self, x: &[f64]) -> Vec<f64> {
        self.alt.iter().map(|q| dot(q, x)).collect()
    }

    /// The likelihood-ratio cloud of the nulls against the (single) alternative.
    ///
    /// Requires every null to be absolutely continuous with respect to the alternative.
    pub fn rn_cloud(&self) -> Result<RNCloud> {
        let q = self.single_alt()?;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (w, &qw) in q.iter().enumerate() {
            if qw > 0.0 {
                points.push(self.null.iter().map(|p| p[w] / qw).collect());
                weights.push(qw);
            } else if self.null.iter().any(|p| p[w] > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "outcome {} has null mass but no alternative mass",
                    self.outcomes[w]
                )));
            }
        }
        let base = ParticleMeasure::new(self.n_null(), points, weights)?;
        RNCloud::new(base, Provenance::ExactDiscrete)
    }

    fn single_alt(&self) -> Result<&[f64]> {
        match self.alt.as_slice() {
            [q] => Ok(q),
            _ => Err(Error::InvalidInput(format!("expected one alternative law, found {}", self.alt.len()))),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Which intersection the gate tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// `Q ∈ Span(P)`; disjoint iff an exact nontrivial e-variable exists.
    SpanMembership,
    /// `Q ∈ Conv(P)`; disjoint iff a nontrivial e-variable exists.
    ConvMembership,
    /// `Span(P) ∩ Conv(Q) = ∅`.
    SpanConvDisjoint,
    /// `Conv(P) ∩ Conv(Q) = ∅`.
    ConvConvDisjoint,
}

impl GateMode {
    fn span(self) -> bool {
        matches!(self, GateMode::SpanMembership | GateMode::SpanConvDisjoint)
    }

    fn membership(self) -> bool {
        matches!(self, GateMode::SpanMembership | GateMode::ConvMembership)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Answer {
    Intersect,
    Disjoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Certificate {
    /// `Σ alpha_i P_i = Σ beta_j Q_j`.
    Intersection { alpha: Vec<f64>, beta: Vec<f64> },
    /// `P_i . x = 0` (span modes) or `<= 0` (hull modes), and `Q_j . x >= margin`.
    Separation { x: Vec<f64>, margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub mode: GateMode,
    pub answer: Answer,
    /// L1 residual of the best intersection attempt.
    pub residual: f64,
    /// Residual fell in the ambiguous band `[1e-9 m, 1e-6 m]`.
    pub borderline: bool,
    pub certificate: Certificate,
}

impl GateVerdict {
    /// True when the existence condition holds.
    pub fn is_disjoint(&self) -> bool {
        self.answer == Answer::Disjoint
    }

    /// Re-check the certificate against `h`.
    pub fn verify(&self, h: &DiscreteHypothesis) -> bool {
        let m = h.n_outcomes();
        match &self.certificate {
            Certificate::Intersection { alpha, beta } => {
                let span = self.mode.span();
                if !span && (alpha.iter().any(|a| *a < -1e-12) || (alpha.iter().sum::<f64>() - 1.0).abs() > 1e-9) {
                    return false;
                }
                if beta.iter().any(|b| *b < -1e-12) || (beta.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return false;
                }
                let resid: f64 = (0..m)
                    .map(|w| {
                        let lhs: f64 = alpha.iter().zip(&h.null).map(|(a, p)| a * p[w]).sum();
                        let rhs: f64 = beta.iter().zip(&h.alt).map(|(b, q)| b * q[w]).sum();
                        (lhs - rhs).abs()
                    })
                    .sum();
                resid <= 1e-9 * m as f64
            }
            Certificate::Separation { x, margin } => {
                let nulls_ok = h.null_expectations(x).iter().all(|v| if self.mode.span() { v.abs() <= 1e-12 } else { *v <= 1e-12 });
                let alts_ok = h.alt_expectations(x).iter().all(|v| *v >= 1e-9 && *v >= margin - 1e-12);
                nulls_ok && alts_ok && *margin >= 1e-9
            }
        }
    }
}

/// Decide whether the null family and the alternative family meet.
pub fn gate(h: &DiscreteHypothesis, mode: GateMode) -> Result<GateVerdict> {
    if mode.membership() && h.alt.len() != 1 {
        return Err(Error::InvalidInput("membership modes take exactly one alternative law".into()));
    }
    let m = h.n_outcomes() as f64;
    let (residual, alpha, beta) = intersection_residual(h, mode.span())?;
    let borderline = residual > 1e-9 * m && residual <= 1e-6 * m;
    let verdict = |answer, certificate| GateVerdict { mode, answer, residual, borderline, certificate };
    if residual <= 1e-9 * m {
        let v = verdict(Answer::Intersect, Certificate::Intersection { alpha, beta });
        return if v.verify(h) { Ok(v) } else { Err(Error::SolverFailure("intersection certificate failed re-check".into())) };
    }
    let (x, margin) = separation(h, mode.span())?;
    if margin > 1e-9 {
        let v = verdict(Answer::Disjoint, Certificate::Separation { x, margin });
        if v.verify(h) {
            return Ok(v);
        }
        return Err(Error::SolverFailure("separation certificate failed re-check".into()));
    }
    if borderline {
        return Ok(verdict(Answer::Intersect, Certificate::Intersection { alpha, beta }));
    }
    Err(Error::SolverFailure(format!("residual {residual:e} but no separating direction found")))
}

/// Minimize `|Σ α_i P_i − Σ β_j Q_j|_1` over admissible coefficients.
fn intersection_residual(h: &DiscreteHypothesis, span: bool) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let m = h.n_outcomes();
    let mut lp = LinearProgram::new();
    let alpha: Vec<usize> =
        (0..h.n_null()).map(|_| lp.add_var(if span { VarKind::Free } else { VarKind::NonNeg }, 0.0)).collect();
    let beta: Vec<usize> = (0..h.alt.len()).map(|_| lp.add_var(VarKind::NonNeg, 0.0)).collect();
    let pos: Vec<usize> = (0..m).map(|_| lp.add_var(VarKind::NonNeg, 1.0)).collect();
    let neg: Vec<usize> = (0..m).map(|_| lp.add_var(VarKind::NonNeg, 1.0)).collect();
    for w in 0..m {
        let mut row: Vec<(usize, f64)> = alpha.iter().zip(&h.null).map(|(&a, p)| (a, p[w])).collect();
        row.extend(beta.iter().zip(&h.alt).map(|(&b, q)| (b, -q[w])));
        row.push((pos[w], -1.0));
        row.push((neg[w], 1.0));
        lp.add_row(row, Cmp::Eq, 0.0);
    }
    if !span {
        lp.add_row(alpha.iter().map(|&a| (a, 1.0)).collect(), Cmp::Eq, 1.0);
    }
    lp.add_row(beta.iter().map(|&b| (b, 1.0)).collect(), Cmp::Eq, 1.0);
    match lp.minimize()? {
        LpOutcome::Optimal { x, objective } => {
            Ok((objective.max(0.0), alpha.iter().map(|&i| x[i]).collect(), beta.iter().map(|&i| x[i]).collect()))
        }
        other => Err(Error::SolverFailure(format!("intersection LP: {other:?}"))),
    }
}

/// Maximize the margin `ε` of a direction `|x|_∞ <= 1` separating the nulls from the alternatives.
fn separation(h: &DiscreteHypothesis, span: bool) -> Result<(Vec<f64>, f64)> {
    let m = h.n_outcomes();
    let mut lp = LinearProgram::new();
    let xs: Vec<usize> = (0..m).map(|_| lp.add_var(VarKind::Free, 0.0)).collect();
    let eps = lp.add_var(VarKind::NonNeg, 1.0);
    for &x in &xs {
        lp.add_row(vec![(x, 1.0)], Cmp::Le, 1.0);
        lp.add_row(vec![(x, 1.0)], Cmp::Ge, -1.0);
    }
    for p in &h.null {
        lp.add_row(xs.iter().zip(p).map(|(&x, &v)| (x, v)).collect(), if span { Cmp::Eq } else { Cmp::Le }, 0.0);
    }
    for q in &h.alt {
        let mut row: Vec<(usize, f64)> = xs.iter().zip(q).map(|(&x, &v)| (x, v)).collect();
        row.push((eps, -1.0));
        lp.add_row(row, Cmp::Ge, 0.0);
    }
    match lp.maximize()? {
        LpOutcome::Optimal { x, .. } => {
            let mut dir: Vec<f64> = xs.iter().map(|&i| x[i]).collect();
            // polish: remove the tiny null-side components left by the simplex
            if span {
                project_out_nulls(h, &mut dir);
            }
            let margin = h.alt_expectations(&dir).into_iter().fold(f64::INFINITY, f64::min);
            Ok((dir, margin))
        }
        other => Err(Error::SolverFailure(format!("separation LP: {other:?}"))),
    }
}

/// Orthogonal projection of `x` onto `{x : P_i . x = 0 for all i}`.
fn project_out_nulls(h: &DiscreteHypothesis, x: &mut [f64]) {
    let l = h.n_null();
    let m = h.n_outcomes();
    let gram: Vec<f64> = (0..l * l).map(|k| dot(&h.null[k / l], &h.null[k % l])).collect();
    let rhs = h.null_expectations(x);
    if let Some(c) = linalg::solve_sym(l, &gram, &rhs) {
        for w in 0..m {
            x[w] -= (0..l).map(|i| c[i] * h.null[i][w]).sum::<f64>();
        }
    }
}

/// The `k`-fold iid product of every law in `h`.
///
/// Outcomes are tuples in lexicographic order with the last coordinate
/// varying fastest, labelled `"(a,b,...)"`.
pub fn product_power(h: &DiscreteHypothesis, k: u32) -> Result<DiscreteHypothesis> {
    if k == 0 {
        return Err(Error::InvalidInput("power must be positive".into()));
    }
    if k == 1 {
        return Ok(h.clone());
    }
    let m = h.n_outcomes() as u128;
    let size = m.checked_pow(k).unwrap_or(u128::MAX);
    if size > MAX_PRODUCT_OUTCOMES {
        return Err(Error::SizeOverflow { size, limit: MAX_PRODUCT_OUTCOMES });
    }
    let size = size as usize;
    let m = m as usize;
    let tuple = |mut idx: usize| -> Vec<usize> {
        let mut t = vec![0; k as usize];
        for slot in t.iter_mut().rev() {
            *slot = idx % m;
            idx /= m;
        }
        t
    };
    let outcomes = (0..size)
        .map(|i| format!("({})", tuple(i).iter().map(|&j| h.outcomes[j].as_str()).collect::<Vec<_>>().join(",")))
        .collect();
    let power = |v: &Vec<f64>| -> Vec<f64> { (0..size).map(|i| tuple(i).iter().map(|&j| v[j]).product()).collect() };
    Ok(DiscreteHypothesis {
        outcomes,
        null: h.null.iter().map(power).collect(),
        alt: h.alt.iter().map(power).collect(),
    })
}

/// A per-outcome e-variable with its LP margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpEVariable {
    pub values: Vec<f64>,
    pub epsilon: f64,
}

/// Margin-maximizing e-variable: `0 <= X <= bound`, `E^{P_i} X = 1` (or `<= 1`),
/// `E^{Q_j} X >= 1 + ε` with `ε` as large as possible.
pub fn lp_evariable(h: &DiscreteHypothesis, exact: bool, bound: f64) -> Result<LpEVariable> {
    if !(bound > 1.0 && bound.is_finite()) {
        return Err(Error::InvalidInput("bound must be a finite number above 1".into()));
    }
    let mut lp = LinearProgram::new();
    let xs: Vec<usize> = (0..h.n_outcomes()).map(|_| lp.add_var(VarKind::Bounded(bound), 0.0)).collect();
    let eps = lp.add_var(VarKind::Free, 1.0);
    for p in &h.null {
        lp.add_row(xs.iter().zip(p).map(|(&x, &v)| (x, v)).collect(), if exact { Cmp::Eq } else { Cmp::Le }, 1.0);
    }
    for q in &h.alt {
        let mut row: Vec<(usize, f64)> = xs.iter().zip(q).map(|(&x, &v)| (x, v)).collect();
        row.push((eps, -1.0));
        lp.add_row(row, Cmp::Ge, 1.0);
    }
    match lp.maximize()? {
        LpOutcome::Optimal { x, .. } => {
            let values: Vec<f64> = xs.iter().map(|&i| x[i].clamp(0.0, bound)).collect();
            let epsilon = h.alt_expectations(&values).into_iter().fold(f64::INFINITY, f64::min) - 1.0;
            if epsilon <= 1e-12 {
                return Err(Error::Infeasible(format!(
                    "best margin {epsilon:e}: the {} gate does not separate",
                    if exact { "span" } else { "hull" }
                )));
            }
            Ok(LpEVariable { values, epsilon })
        }
        LpOutcome::Infeasible { .. } => Err(Error::Infeasible("no e-variable satisfies the null constraints".into())),
        LpOutcome::Unbounded => Err(Error::SolverFailure("bounded LP reported unbounded".into())),
    }
}

/// Log-optimal exact e-variable (pivotality not imposed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEPower {
    pub values: Vec<f64>,
    pub epower: f64,
    pub lambda: Vec<f64>,
}

/// Maximize `Σ q_ω log X_ω` subject to `E^{P_i} X = 1` for all `i` and `X >= 0`.
///
/// The optimum has the form `X_ω = q_ω / (λ . p_ω)` where `q_ω > 0`; `λ`
/// minimizes the convex dual `Σ λ_i − Σ q_ω log(λ . p_ω)` and is found by
/// damped Newton. Outcomes with `q_ω = 0` enter the dual through a vanishing
/// log-barrier (which keeps `λ . p_ω >= 0` there) and are finally filled by
/// the minimum-norm nonnegative solution of the remaining constraints.
pub fn max_epower_exact(h: &DiscreteHypothesis) -> Result<MaxEPower> {
    let q = h.single_alt()?.to_vec();
    let l = h.n_null();
    let m = h.n_outcomes();
    let col = |w: usize| -> Vec<f64> { h.null.iter().map(|p| p[w]).collect() };
    let charged: Vec<usize> = (0..m).filter(|&w| q[w] > 0.0).collect();
    let free: Vec<usize> = (0..m).filter(|&w| q[w] == 0.0 && h.null.iter().any(|p| p[w] > 0.0)).collect();
    if let Some(&w) = charged.iter().find(|&&w| h.null.iter().all(|p| p[w] == 0.0)) {
        return Err(Error::InfeasibleExactness(format!(
            "outcome {} has alternative mass but no null mass, so the e-power is unbounded",
            h.outcomes[w]
        )));
    }

    let mut lambda = vec![1.0 / l as f64; l];
    let mut mu = if free.is_empty() { 0.0 } else { 1e-2 };
    let mut last_resid = f64::INFINITY;
    loop {
        let coef: Vec<(Vec<f64>, f64)> = charged
            .iter()
            .map(|&w| (col(w), q[w]))
            .chain(free.iter().map(|&w| (col(w), mu)))
            .filter(|(_, c)| *c > 0.0)
            .collect();
        let (lam, resid) = newton_dual(&coef, lambda.clone())?;
        lambda = lam;
        last_resid = resid.min(last_resid);
        if mu <= 1e-14 {
            break;
        }
        mu *= 0.1;
    }

    let mut values = vec![0.0; m];
    for &w in &charged {
        values[w] = q[w] / dot(&lambda, &col(w)).max(1e-300);
    }
    if !free.is_empty() {
        let target: Vec<f64> = (0..l).map(|i| 1.0 - charged.iter().map(|&w| h.null[i][w] * values[w]).sum::<f64>()).collect();
        let fill = nonneg_min_norm(&free.iter().map(|&w| col(w)).collect::<Vec<_>>(), &target)
            .ok_or_else(|| Error::InfeasibleExactness("no nonnegative completion on zero-probability outcomes".into()))?;
        for (&w, v) in free.iter().zip(fill) {
            values[w] = v;
        }
    }
    let resid = h.null_expectations(&values).iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    if resid > 1e-10 {
        return Err(Error::NewtonDivergence { iterations: 200, residual: resid.max(last_resid) });
    }
    let epower = charged.iter().map(|&w| q[w] * values[w].ln()).sum();
    Ok(MaxEPower { values, epower, lambda })
}

/// Damped Newton on `D(λ) = Σλ − Σ c_k log(λ . p_k)`; returns `λ` and the final gradient norm.
fn newton_dual(terms: &[(Vec<f64>, f64)], mut lambda: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let l = lambda.len();
    let objective = |lam: &[f64]| -> Option<f64> {
        let mut s: f64 = lam.iter().sum();
        for (p, c) in terms {
            let d = dot(lam, p);
            if d < 1e-12 {
                return None;
            }
            s -= c * d.ln();
        }
        Some(s)
    };
    let mut resid = f64::INFINITY;
    for _ in 0..200 {
        let mut grad = vec![1.0; l];
        let mut hess = vec![0.0; l * l];
        for (p, c) in terms {
            let d = dot(&lambda, p);
            for a in 0..l {
                grad[a] -= c * p[a] / d;
                for b in 0..l {
                    hess[a * l + b] += c * p[a] * p[b] / (d * d);
                }
            }
        }
        resid = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if resid <= 1e-13 {
            return Ok((lambda, resid));
        }
        let step = linalg::solve_sym(l, &hess, &grad)
            .ok_or_else(|| Error::NewtonDivergence { iterations: 0, residual: resid })?;
        let f0 = objective(&lambda).expect("iterate stays in the domain");
        let slope = dot(&grad, &step);
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand: Vec<f64> = lambda.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            if let Some(f) = objective(&cand) {
                if f <= f0 - 1e-4 * t * slope || (f - f0).abs() <= 1e-15 * f0.abs().max(1.0) {
                    lambda = cand;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if resid <= 1e-10 {
        Ok((lambda, resid))
    } else {
        Err(Error::NewtonDivergence { iterations: 200, residual: resid })
    }
}

/// Minimum-norm `x >= 0` with `Σ_k x_k cols[k] = target`, by an active-set loop.
fn nonneg_min_norm(cols: &[Vec<f64>], target: &[f64]) -> Option<Vec<f64>> {
    let rows = target.len();
    let mut active: Vec<usize> = (0..cols.len()).collect();
    while !active.is_empty() {
        let a: Vec<f64> = (0..rows).flat_map(|r| active.iter().map(move |&k| (r, k))).map(|(r, k)| cols[k][r]).collect();
        let sol = linalg::lstsq(rows, active.len(), &a, target)?;
        match sol.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)) {
            Some((idx, &v)) if v < -1e-13 => {
                active.remove(idx);
            }
            _ => {
                let mut x = vec![0.0; cols.len()];
                for (&k, v) in active.iter().zip(sol) {
                    x[k] = v.max(0.0);
                }
                let ok = (0..rows).all(|r| {
                    ((0..cols.len()).map(|k| cols[k][r] * x[k]).sum::<f64>() - target[r]).abs() <= 1e-10
                });
                return ok.then_some(x);
            }
        }
    }
    target.iter().all(|t| t.abs() <= 1e-10).then(|| vec![0.0; cols.len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ber() -> DiscreteHypothesis {
        DiscreteHypothesis::bernoulli(&[0.1, 0.2], 0.3).unwrap()
    }

    #[test]
    fn bernoulli_gates() {
        let h = ber();
        let span = gate(&h, GateMode::SpanMembership).unwrap();
        assert_eq!(span.answer, Answer::Intersect);
        assert!(span.verify(&h));
        let conv = gate(&h, GateMode::ConvMembership).unwrap();
        assert_eq!(conv.answer, Answer::Disjoint);
        assert!(conv.verify(&h));
        let sq = product_power(&h, 2).unwrap();
        let span2 = gate(&sq, GateMode::SpanMembership).unwrap();
        assert_eq!(span2.answer, Answer::Disjoint);
        assert!(span2.verify(&sq));
    }

    #[test]
    fn identical_laws_intersect_with_unit_coefficient() {
        let h = DiscreteHypothesis::new(vec!["a".into(), "b".into()], vec![vec![0.4, 0.6]], vec![vec![0.4, 0.6]]).unwrap();
        let v = gate(&h, GateMode::SpanMembership).unwrap();
        match v.certificate {
            Certificate::Intersection { alpha, .. } => assert!((alpha[0] - 1.0).abs() < 1e-12),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn disjoint_supports_separate_in_every_mode() {
        let o: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let h = DiscreteHypothesis::new(
            o,
            vec![vec![0.5, 0.5, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]],
            vec![vec![0.0, 0.0, 0.5, 0.5], vec![0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        for mode in [GateMode::SpanConvDisjoint, GateMode::ConvConvDisjoint] {
            assert!(gate(&h, mode).unwrap().is_disjoint());
        }
        let e = lp_evariable(&h, true, 2.0).unwrap();
        assert!((e.epsilon - 1.0).abs() < 1e-9);
        assert!((e.values[2] - 2.0).abs() < 1e-9 && (e.values[3] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn product_power_layout() {
        let sq = product_power(&ber(), 2).unwrap();
        assert_eq!(sq.outcomes, vec!["(0,0)", "(0,1)", "(1,0)", "(1,1)"]);
        assert!((sq.null[0][0] - 0.81).abs() < 1e-15);
        assert!((sq.alt[0][3] - 0.09).abs() < 1e-15);
        assert_eq!(product_power(&ber(), 1).unwrap(), ber());
        assert!(matches!(product_power(&ber(), 21), Err(Error::SizeOverflow { .. })));
    }

    #[test]
    fn lp_evariable_on_bernoulli() {
        let h = ber();
        assert!(matches!(lp_evariable(&h, true, 10.0), Err(Error::Infeasible(_))));
        let e = lp_evariable(&h, false, 10.0).unwrap();
        assert!(e.epsilon > 0.0);
        assert!(h.null_expectations(&e.values).iter().all(|v| *v <= 1.0 + 1e-12));
        let e2 = lp_evariable(&product_power(&h, 2).unwrap(), true, 10.0).unwrap();
        assert!(e2.epsilon > 0.0);
    }

    #[test]
    fn single_null_gives_likelihood_ratio() {
        let h = DiscreteHypothesis::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0.2, 0.3, 0.5]],
            vec![vec![0.5, 0.25, 0.25]],
        )
        .unwrap();
        let r = max_epower_exact(&h).unwrap();
        let kl: f64 = [0.5f64, 0.25, 0.25].iter().zip([0.2, 0.3, 0.5]).map(|(q, p)| q * (q / p).ln()).sum();
        assert!((r.epower - kl).abs() < 1e-12);
        assert!((r.values[0] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_outcomes_are_completed() {
        // the alternative never hits outcome c; the nulls do
        let h = DiscreteHypothesis::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0.3, 0.3, 0.4], vec![0.5, 0.2, 0.3]],
            vec![vec![0.6, 0.4, 0.0]],
        )
        .unwrap();
        let r = max_epower_exact(&h).unwrap();
        for v in h.null_expectations(&r.values) {
            assert!((v - 1.0).abs() < 1e-10);
        }
        assert!(r.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn hypothesis_json_shape() {
        let h: DiscreteHypothesis =
            serde_json::from_str(r#"{"outcomes":["0","1"],"null":[[0.9,0.1],[0.8,0.2]],"alt":[[0.7,0.3]]}"#).unwrap();
        assert_eq!(h, ber());
        assert!(serde_json::from_str::<DiscreteHypothesis>(r#"{"outcomes":["0","1"],"null":[[0.9,0.2]],"alt":[[0.7,0.3]]}"#).is_err());
    }
}
