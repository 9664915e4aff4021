//! Separating half-spaces through a diagonal point.
//!
//! Given a measure `m` whose barycenter is `x·1`, [`separate`] finds a closed
//! half-space `H` with `x·1` on its boundary and `-1 ∈ H` such that both
//! `m|_H` and `m|_{H^c}` have barycenters on the diagonal. Atoms that sit on
//! the boundary may be split fractionally.
//!
//! In two dimensions the normal is `(cos φ, sin φ)` with `φ ∈ (-π/4, 3π/4)`.
//! For a particle measure the off-diagonal residual
//! `g(φ) = Σ_{lower} w (y_1 - y_2)` is a step function that only jumps when
//! the boundary line sweeps across an atom, so the roots are found exactly by
//! sorting the crossing angles: either `g` vanishes on a whole interval
//! (we take its midpoint) or it changes sign across a crossing, where the
//! crossing atoms are split with the fraction that zeroes `g`. Among all
//! roots that make progress (`b_lower < x`), the one with the largest lower
//! mass wins, ties going to the smallest angle.
//!
//! For three or more dimensions the normal is `normalize(1/√L + B p)` with
//! `B` an orthonormal basis of `1^⊥`; the search tries the symmetric normal,
//! then a lift of the two-dimensional solution on half-averaged
//! coordinates, then damped Newton on a sigmoid-smoothed residual. This path
//! is best effort.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measure::{diagonal_defect, dot, HalfSpace, ParticleMeasure, Side, TOL_BARY};

/// Outcome of a separating split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub halfspace: HalfSpace,
    pub lower: ParticleMeasure,
    pub upper: ParticleMeasure,
    pub b_lower: f64,
    pub b_upper: f64,
    pub boundary_fractions: BTreeMap<usize, f64>,
}

/// Split `m` (barycenter `x·1`) by a separating half-space through `x·1`.
pub fn separate(m: &ParticleMeasure, x: f64) -> Result<SplitResult> {
    let dim = m.dim();
    let mass = m.total_mass();
    if mass <= 0.0 {
        return Err(Error::ZeroMass);
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::InvalidInput(format!("diagonal level {x} must be finite and nonnegative")));
    }
    let b = m.barycenter()?;
    let scale = x.abs().max(1.0);
    if b.iter().any(|v| (v - x).abs() > TOL_BARY * scale) {
        return Err(Error::InvalidInput(format!("barycenter {b:?} is not x·1 for x = {x}")));
    }
    let d: Vec<Vec<f64>> = m.points().map(|p| p.iter().map(|v| v - x).collect()).collect();
    let spread = d.iter().map(|v| norm(v)).fold(0.0, f64::max);
    if spread <= 1e-12 * scale {
        return Err(Error::DegenerateNode);
    }
    if let Some(dir) = common_line(&d, m.weights()) {
        let on_diagonal = diagonal_defect(&dir) <= 1e-9 && dir.iter().all(|v| v.signum() == dir[0].signum());
        if !on_diagonal {
            return Err(Error::DegenerateNode);
        }
    }
    match dim {
        1 => split_1d(m, x),
        2 => split_2d(m, x, &d),
        _ => split_high(m, x, &d),
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// If all charged displacement vectors are parallel, their common unit direction.
fn common_line(d: &[Vec<f64>], w: &[f64]) -> Option<Vec<f64>> {
    let lead = d.iter().zip(w).filter(|(_, &w)| w > 0.0).map(|(v, _)| v).max_by(|a, b| norm(a).total_cmp(&norm(b)))?;
    let n = norm(lead);
    let u: Vec<f64> = lead.iter().map(|v| v / n).collect();
    let collinear = d.iter().zip(w).filter(|(_, &w)| w > 0.0).all(|(v, _)| {
        let t = dot(v, &u);
        v.iter().zip(&u).map(|(a, b)| (a - t * b).powi(2)).sum::<f64>().sqrt() <= 1e-10 * n
    });
    collinear.then_some(u)
}

/// Build the split from a half-space and fractions, and check every invariant.
fn finish(m: &ParticleMeasure, halfspace: HalfSpace, fractions: BTreeMap<usize, f64>) -> Result<SplitResult> {
    let (lower, upper) = m.restrict_split(&halfspace, &fractions)?;
    let (bl, bu) = (lower.barycenter()?, upper.barycenter()?);
    if diagonal_defect(&bl) > TOL_BARY || diagonal_defect(&bu) > TOL_BARY {
        return Err(Error::NoSignChange { path: String::new() });
    }
    let b_lower = bl.iter().sum::<f64>() / bl.len() as f64;
    let b_upper = bu.iter().sum::<f64>() / bu.len() as f64;
    Ok(SplitResult { halfspace, lower, upper, b_lower, b_upper, boundary_fractions: fractions })
}

/// Atoms strictly below `x` go down; atoms at `x` stay up.
fn split_1d(m: &ParticleMeasure, x: f64) -> Result<SplitResult> {
    let hs = HalfSpace::new(vec![1.0], x)?;
    let fractions = boundary_map(m, &hs, |_| 0.0);
    finish(m, hs, fractions)
}

fn boundary_map(m: &ParticleMeasure, hs: &HalfSpace, f: impl Fn(usize) -> f64) -> BTreeMap<usize, f64> {
    (0..m.len()).filter(|&i| hs.side(m.point(i)) == Side::Boundary).map(|i| (i, f(i))).collect()
}

#[derive(Debug, Clone, Copy)]
enum AtomClass {
    /// At `x·1`; always on the boundary, kept in the upper piece.
    Center,
    /// On the diagonal: fixed side for every admissible normal.
    Diagonal { lower: bool },
    /// Crosses the boundary at angle `phi`; `lower_before` gives its side just below `phi`.
    Crossing { phi: f64, lower_before: bool },
}

#[derive(Debug, Clone)]
struct Candidate {
    phi: f64,
    /// Crossing atoms split with fraction `f` (empty for interval midpoints).
    group: Vec<usize>,
    f: f64,
    lower_mass: f64,
    lower_level: f64,
}

fn unit(phi: f64) -> [f64; 2] {
    [phi.cos(), phi.sin()]
}

fn split_2d(m: &ParticleMeasure, x: f64, d: &[Vec<f64>]) -> Result<SplitResult> {
    let n = m.len();
    let scale = x.abs().max(1.0);
    let w = m.weights();
    let classes: Vec<AtomClass> = d
        .iter()
        .map(|v| {
            let len = norm(v);
            if len <= 1e-12 * scale {
                AtomClass::Center
            } else if (v[0] - v[1]).abs() <= 1e-12 * len {
                AtomClass::Diagonal { lower: v[0] + v[1] < 0.0 }
            } else {
                let mut phi = v[0].atan2(-v[1]);
                while phi < -FRAC_PI_4 {
                    phi += PI;
                }
                while phi >= 3.0 * FRAC_PI_4 {
                    phi -= PI;
                }
                let deriv = -phi.sin() * v[0] + phi.cos() * v[1];
                AtomClass::Crossing { phi, lower_before: deriv > 0.0 }
            }
        })
        .collect();
    let e: Vec<f64> = (0..n).map(|i| w[i] * (d[i][0] - d[i][1])).collect();
    let lvl: Vec<f64> = (0..n).map(|i| w[i] * 0.5 * (d[i][0] + d[i][1])).collect();
    let ztol = 1e-11 * e.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let total_mass = m.total_mass();

    let mut g = 0.0;
    let mut mass = 0.0;
    let mut level = 0.0;
    let mut events: Vec<(f64, usize, bool)> = Vec::new();
    for (i, c) in classes.iter().enumerate() {
        let lower_now = match *c {
            AtomClass::Center => false,
            AtomClass::Diagonal { lower } => lower,
            AtomClass::Crossing { phi, lower_before } => {
                events.push((phi, i, lower_before));
                lower_before
            }
        };
        if lower_now {
            g += e[i];
            mass += w[i];
            level += lvl[i];
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut candidates: Vec<Candidate> = Vec::new();
    let mut prev_phi = -FRAC_PI_4;
    let mut k = 0;
    while k < events.len() {
        let phi = events[k].0;
        let mut end = k;
        while end < events.len() && events[end].0 - phi <= 1e-14 {
            end += 1;
        }
        let group = &events[k..end];
        if g.abs() <= ztol {
            candidates.push(Candidate { phi: 0.5 * (prev_phi + phi), group: vec![], f: 0.0, lower_mass: mass, lower_level: level });
        }
        let (mut gs, mut ms, mut ls) = (g, mass, level);
        let (mut gb, mut mb, mut lb) = (0.0, 0.0, 0.0);
        for &(_, i, before) in group {
            if before {
                gs -= e[i];
                ms -= w[i];
                ls -= lvl[i];
            }
            gb += e[i];
            mb += w[i];
            lb += lvl[i];
        }
        let (mut ga, mut ma, mut la) = (gs, ms, ls);
        for &(_, i, before) in group {
            if !before {
                ga += e[i];
                ma += w[i];
                la += lvl[i];
            }
        }
        if gb.abs() > ztol {
            let f = -gs / gb;
            if (-1e-12..=1.0 + 1e-12).contains(&f) {
                let f = f.clamp(0.0, 1.0);
                let edge = f <= 1e-9 || f >= 1.0 - 1e-9;
                if !(edge && (g.abs() <= ztol || ga.abs() <= ztol)) {
                    candidates.push(Candidate {
                        phi,
                        group: group.iter().map(|t| t.1).collect(),
                        f,
                        lower_mass: ms + f * mb,
                        lower_level: ls + f * lb,
                    });
                }
            }
        }
        g = ga;
        mass = ma;
        level = la;
        prev_phi = phi;
        k = end;
    }
    if g.abs() <= ztol {
        candidates.push(Candidate { phi: 0.5 * (prev_phi + 3.0 * FRAC_PI_4), group: vec![], f: 0.0, lower_mass: mass, lower_level: level });
    }

    let progress = |c: &Candidate| {
        c.lower_mass > 1e-12 * total_mass
            && total_mass - c.lower_mass > 1e-12 * total_mass
            && c.lower_level / c.lower_mass < -1e-12 * scale
    };
    let best = candidates
        .into_iter()
        .filter(progress)
        .reduce(|a, b| {
            if b.lower_mass > a.lower_mass * (1.0 + 1e-12) {
                b
            } else {
                a
            }
        })
        .ok_or(Error::NoSignChange { path: String::new() })?;

    // Re-derive the split at the chosen angle from scratch.
    let v = unit(best.phi);
    let center = [x, x];
    let hs = HalfSpace::through(v.to_vec(), &center)?;
    let in_group: Vec<bool> = {
        let mut flags = vec![false; n];
        best.group.iter().for_each(|&i| flags[i] = true);
        flags
    };
    let mut f = best.f;
    if !best.group.is_empty() {
        let mut gs = 0.0;
        let mut gb = 0.0;
        for i in 0..n {
            if in_group[i] {
                gb += e[i];
            } else if !matches!(classes[i], AtomClass::Center) && dot(&v, &d[i]) < 0.0 {
                gs += e[i];
            }
        }
        f = (-gs / gb).clamp(0.0, 1.0);
    }
    let fractions = boundary_map(m, &hs, |i| {
        if in_group[i] {
            f
        } else if matches!(classes[i], AtomClass::Center) {
            0.0
        } else if dot(&v, &d[i]) < 0.0 {
            1.0
        } else {
            0.0
        }
    });
    finish(m, hs, fractions)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn split_high(m: &ParticleMeasure, x: f64, d: &[Vec<f64>]) -> Result<SplitResult> {
    let dim = m.dim();
    let basis = linalg::ones_complement_basis(dim);
    let u0: Vec<f64> = vec![1.0 / (dim as f64).sqrt(); dim];
    let center = vec![x; dim];
    let normal_of = |p: &[f64]| -> Vec<f64> {
        let mut v = u0.clone();
        for (pk, bk) in p.iter().zip(&basis) {
            for (a, b) in v.iter_mut().zip(bk) {
                *a += pk * b;
            }
        }
        let n = norm(&v);
        v.iter().map(|a| a / n).collect()
    };
    let params_of = |v: &[f64]| -> Option<Vec<f64>> {
        let s = dot(v, &u0);
        (s > 1e-6).then(|| basis.iter().map(|b| dot(b, v) / s).collect())
    };
    let hard = |v: &[f64]| -> Option<SplitResult> {
        let hs = HalfSpace::through(v.to_vec(), &center).ok()?;
        let fractions = boundary_map(m, &hs, |_| 0.0);
        let r = finish(m, hs, fractions).ok()?;
        let ok = r.lower.total_mass() > 1e-12 && r.upper.total_mass() > 1e-12 && r.b_lower < x - 1e-12 * x.max(1.0);
        ok.then_some(r)
    };

    if let Some(r) = hard(&u0) {
        return Ok(r);
    }

    // Seed: two-dimensional split of (mean of first half, mean of second half) coordinates.
    let half = dim / 2;
    let mut p = vec![0.0; dim - 1];
    let proj = m.map_points(|y| vec![y[..half].iter().sum::<f64>() / half as f64, y[half..].iter().sum::<f64>() / (dim - half) as f64])?;
    if let Ok(r2) = separate(&proj, x) {
        let n2 = &r2.halfspace.normal;
        let lifted: Vec<f64> = (0..dim).map(|k| if k < half { n2[0] / half as f64 } else { n2[1] / (dim - half) as f64 }).collect();
        let lifted: Vec<f64> = lifted.iter().map(|a| a / norm(&lifted)).collect();
        if let Some(r) = hard(&lifted) {
            return Ok(r);
        }
        if let Some(p0) = params_of(&lifted) {
            p = p0;
        }
    }

    let w = m.weights();
    let mass = m.total_mass();
    let bd: Vec<Vec<f64>> = d.iter().map(|v| basis.iter().map(|b| dot(b, v)).collect()).collect();
    let rms = (d.iter().zip(w).map(|(v, wi)| wi * dot(v, v)).sum::<f64>() / mass).sqrt();
    let residual = |p: &[f64], tau: f64| -> Vec<f64> {
        let v = normal_of(p);
        let mut r = vec![0.0; dim - 1];
        for i in 0..d.len() {
            let s = sigmoid(-dot(&v, &d[i]) / tau) * w[i] / mass;
            for (a, b) in r.iter_mut().zip(&bd[i]) {
                *a += s * b;
            }
        }
        r
    };
    let mut tau = 0.1 * rms;
    let mut iterations = 0;
    let mut last = f64::INFINITY;
    while tau > 1e-9 * rms {
        for _ in 0..30 {
            iterations += 1;
            let r = residual(&p, tau);
            let rn = norm(&r);
            last = rn;
            if rn <= 1e-14 * rms {
                break;
            }
            let k = dim - 1;
            let mut jac = vec![0.0; k * k];
            for c in 0..k {
                let h = 1e-6 * (1.0 + p[c].abs());
                let mut pp = p.clone();
                pp[c] += h;
                let mut pm = p.clone();
                pm[c] -= h;
                let (rp, rm) = (residual(&pp, tau), residual(&pm, tau));
                for row in 0..k {
                    jac[row * k + c] = (rp[row] - rm[row]) / (2.0 * h);
                }
            }
            let Some(step) = linalg::lstsq(k, k, &jac, &r) else { break };
            let mut t = 1.0;
            let mut moved = false;
            while t > 1e-6 {
                let cand: Vec<f64> = p.iter().zip(&step).map(|(a, s)| a - t * s).collect();
                if norm(&residual(&cand, tau)) < rn {
                    p = cand;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if let Some(r) = hard(&normal_of(&p)) {
            return Ok(r);
        }
        tau *= 0.2;
    }
    Err(Error::NewtonDivergence { iterations, residual: last })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom_gamma() -> ParticleMeasure {
        ParticleMeasure::new(2, vec![vec![0.6, 0.9], vec![1.5, 1.8], vec![0.9, 0.3]], vec![1.0 / 3.0; 3]).unwrap()
    }

    #[test]
    fn atom_example_split() {
        let r = separate(&atom_gamma(), 1.0).unwrap();
        assert!((r.b_lower - 0.7).abs() < 1e-12, "{}", r.b_lower);
        assert!((r.b_upper - 1.3).abs() < 1e-12);
        assert_eq!(r.boundary_fractions.len(), 1);
        assert!((r.boundary_fractions[&2] - 0.5).abs() < 1e-12);
        assert!((r.lower.total_mass() - 0.5).abs() < 1e-12);
        assert!(r.halfspace.contains(&[-1.0, -1.0]));
        assert!(r.halfspace.signed_distance(&[1.0, 1.0]).abs() < 1e-12);
    }

    #[test]
    fn dirac_is_degenerate() {
        assert_eq!(separate(&ParticleMeasure::dirac(vec![2.0, 2.0]), 2.0).unwrap_err(), Error::DegenerateNode);
    }

    #[test]
    fn two_atoms_on_a_line_are_degenerate() {
        let m = ParticleMeasure::new(2, vec![vec![0.6, 0.9], vec![0.9, 0.3]], vec![1.0 / 3.0, 1.0 / 6.0]).unwrap();
        assert_eq!(separate(&m, 0.7).unwrap_err(), Error::DegenerateNode);
    }

    #[test]
    fn diagonal_measure_splits_like_the_line() {
        let m = ParticleMeasure::new(2, vec![vec![0.5, 0.5], vec![1.0, 1.0], vec![1.5, 1.5]], vec![0.25, 0.5, 0.25]).unwrap();
        let r = separate(&m, 1.0).unwrap();
        assert!((r.b_lower - 0.5).abs() < 1e-12);
        assert!((r.b_upper - 7.0 / 6.0).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.halfspace.normal[0] - s).abs() < 1e-12 && (r.halfspace.normal[1] - s).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_split() {
        let m = ParticleMeasure::new(1, vec![vec![0.5], vec![1.0], vec![1.5]], vec![0.25, 0.5, 0.25]).unwrap();
        let r = separate(&m, 1.0).unwrap();
        assert_eq!(r.lower.len(), 1);
        assert!((r.b_upper - 7.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_cloud_gets_symmetric_normal() {
        let pts = vec![vec![0.2, 1.4], vec![1.4, 0.2], vec![1.9, 2.1], vec![2.1, 1.9], vec![0.5, 0.3], vec![0.3, 0.5]];
        let m0 = ParticleMeasure::new(2, pts, vec![1.0; 6]).unwrap();
        let b = m0.barycenter().unwrap()[0];
        let r = separate(&m0, b).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.halfspace.normal[0] - s).abs() < 1e-8 && (r.halfspace.normal[1] - s).abs() < 1e-8);
    }

    #[test]
    fn symmetric_three_dimensional_cloud() {
        // invariant under cyclic coordinate shifts
        let base = [[0.3, 0.9, 1.5], [2.0, 1.1, 0.4]];
        let mut pts = Vec::new();
        for p in base {
            for s in 0..3 {
                pts.push(vec![p[s % 3], p[(s + 1) % 3], p[(s + 2) % 3]]);
            }
        }
        let m = ParticleMeasure::new(3, pts, vec![1.0; 6]).unwrap();
        let x = m.barycenter().unwrap()[0];
        let r = separate(&m, x).unwrap();
        assert!(r.b_lower < x && r.b_upper > x);
    }

    #[test]
    fn off_diagonal_barycenter_rejected() {
        let m = ParticleMeasure::new(2, vec![vec![0.5, 1.0], vec![1.5, 1.4]], vec![0.5, 0.5]).unwrap();
        assert!(matches!(separate(&m, 1.0), Err(Error::InvalidInput(_))));
    }
}
