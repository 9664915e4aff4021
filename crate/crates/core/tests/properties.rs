//! Property tests for the measure, convex-order, gate, splitting and
//! e-variable layers on randomly generated inputs.

use std::collections::BTreeMap;

use proptest::prelude::*;

use evgate::convex_order::{cx_chain_check, is_cx_dominated, CxVerdict};
use evgate::evariable::{calibrate, e_power, null_expectations, recover_evariable, recover_pvariable, EVariableFn};
use evgate::hyperplane::separate;
use evgate::hypothesis::{gate, lp_evariable, max_epower_exact, product_power, DiscreteHypothesis, GateMode, DEFAULT_BOUND};
use evgate::measure::Side;
use evgate::shine::{run, ShineTree};
use evgate::{Error, HalfSpace, ParticleMeasure};

fn measure(dim: usize, max_atoms: usize) -> impl Strategy<Value = ParticleMeasure> {
    (1..=max_atoms).prop_flat_map(move |n| {
        (prop::collection::vec(-5.0..5.0f64, n * dim), prop::collection::vec(0.01..1.0f64, n))
            .prop_map(move |(coords, weights)| ParticleMeasure::from_flat(dim, coords, weights).unwrap())
    })
}

fn law(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02..1.0f64, m).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

/// Hypotheses with `l` strictly positive nulls and one strictly positive alternative.
fn hypothesis(l: std::ops::RangeInclusive<usize>, m: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = DiscreteHypothesis> {
    (l, m).prop_flat_map(|(l, m)| {
        (prop::collection::vec(law(m), l), law(m)).prop_map(move |(null, q)| {
            DiscreteHypothesis::new((0..m).map(|i| i.to_string()).collect(), null, vec![q]).unwrap()
        })
    })
}

/// A two-dimensional measure translated so that its barycenter is `x·1`.
fn diagonal_cloud(max_atoms: usize) -> impl Strategy<Value = (ParticleMeasure, f64)> {
    (3..=max_atoms, 0.5..3.0f64).prop_flat_map(|(n, x)| {
        (prop::collection::vec(-2.0..2.0f64, 2 * n), prop::collection::vec(0.05..1.0f64, n)).prop_map(move |(c, w)| {
            let m = ParticleMeasure::from_flat(2, c, w).unwrap();
            let b = m.barycenter().unwrap();
            (m.map_points(|p| vec![p[0] - b[0] + x, p[1] - b[1] + x]).unwrap(), x)
        })
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn log_power(q: &[f64], x: &[f64]) -> f64 {
    q.iter().zip(x).filter(|(q, _)| **q > 0.0).map(|(q, x)| q * x.ln()).sum()
}

/// Orthonormal basis of `{d : P_i . d = 0 for all i}` by Gram–Schmidt.
fn null_space(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = rows[0].len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut complement: Vec<Vec<f64>> = Vec::new();
    let push = |v: &[f64], into_complement: bool, basis: &mut Vec<Vec<f64>>, complement: &mut Vec<Vec<f64>>| {
        let mut u = v.to_vec();
        for b in complement.iter().chain(basis.iter()) {
            let d: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            u.iter_mut().for_each(|x| *x /= n);
            if into_complement {
                complement.push(u);
            } else {
                basis.push(u);
            }
        }
    };
    for r in rows {
        push(r, true, &mut basis, &mut complement);
    }
    for k in 0..m {
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        push(&e, false, &mut basis, &mut complement);
    }
    basis
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn restrict_split_conserves_mass_and_moment(
        m in (1..=3usize).prop_flat_map(|d| measure(d, 10)),
        seed_normal in prop::collection::vec(-1.0..1.0f64, 3),
        anchor in any::<prop::sample::Index>(),
        f in 0.0..=1.0f64,
    ) {
        let dim = m.dim();
        let normal: Vec<f64> = seed_normal[..dim].to_vec();
        prop_assume!(normal.iter().map(|x| x * x).sum::<f64>() > 1e-4);
        let h = HalfSpace::through(normal, m.point(anchor.index(m.len()))).unwrap();
        let fractions: BTreeMap<usize, f64> =
            (0..m.len()).filter(|&i| h.side(m.point(i)) == Side::Boundary).map(|i| (i, f)).collect();
        let (a, b) = m.restrict_split(&h, &fractions).unwrap();
        let total = m.total_mass();
        prop_assert!((a.total_mass() + b.total_mass() - total).abs() <= 1e-12 * total.max(1.0));
        let sum: Vec<f64> = a.first_moment().iter().zip(b.first_moment()).map(|(x, y)| x + y).collect();
        prop_assert!(max_abs_diff(&sum, &m.first_moment()) <= 1e-12 * 5.0 * total.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn barycenter_is_affine_equivariant(m in measure(2, 8), a in 0.1..4.0f64, c in prop::collection::vec(-3.0..3.0f64, 2)) {
        let b = m.barycenter().unwrap();
        let image = m.map_points(|p| vec![a * p[0] + c[0], a * p[1] + c[1]]).unwrap();
        let expected = [a * b[0] + c[0], a * b[1] + c[1]];
        prop_assert!(max_abs_diff(&image.barycenter().unwrap(), &expected) <= 1e-12 * 40.0);
    }

    #[test]
    fn hypothesis_cloud_has_unit_barycenter(h in hypothesis(1..=4, 2..=7)) {
        let cloud = h.rn_cloud().unwrap();
        let b = cloud.base.barycenter().unwrap();
        prop_assert!(b.iter().all(|x| (x - 1.0).abs() <= 1e-12));
    }

    #[test]
    fn gate_certificates_verify(h in hypothesis(1..=3, 2..=5)) {
        for mode in [GateMode::SpanMembership, GateMode::ConvMembership, GateMode::SpanConvDisjoint, GateMode::ConvConvDisjoint] {
            let v = gate(&h, mode).unwrap();
            prop_assert!(v.verify(&h), "{mode:?} certificate does not verify");
        }
    }

    #[test]
    fn span_disjointness_yields_exact_margin(h in hypothesis(1..=3, 2..=5)) {
        let v = gate(&h, GateMode::SpanMembership).unwrap();
        if v.is_disjoint() && !v.borderline {
            let e = lp_evariable(&h, true, DEFAULT_BOUND).unwrap();
            prop_assert!(e.epsilon > 0.0);
            prop_assert!(max_abs_diff(&h.null_expectations(&e.values), &vec![1.0; h.n_null()]) <= 1e-9);
        }
    }

    #[test]
    fn max_epower_is_exact_and_optimal(h in hypothesis(1..=3, 2..=6), dirs in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 6), 100)) {
        let best = max_epower_exact(&h).unwrap();
        let q = &h.alt[0];
        prop_assert!(max_abs_diff(&h.null_expectations(&best.values), &vec![1.0; h.n_null()]) <= 1e-9);
        prop_assert!(best.values.iter().all(|x| *x >= 0.0));
        prop_assert!((log_power(q, &best.values) - best.epower).abs() <= 1e-9);
        if let Ok(lp) = lp_evariable(&h, true, DEFAULT_BOUND) {
            prop_assert!(best.epower >= log_power(q, &lp.values) - 1e-9);
        }
        let basis = null_space(&h.null);
        for c in dirs.iter().filter(|_| !basis.is_empty()) {
            let mut d = vec![0.0; h.n_outcomes()];
            for (b, w) in basis.iter().zip(c) {
                d.iter_mut().zip(b).for_each(|(x, y)| *x += w * y);
            }
            // largest step keeping the candidate nonnegative, then a random fraction of it
            let room = best.values.iter().zip(&d).filter(|(_, d)| **d < 0.0).map(|(x, d)| -x / d).fold(1.0, f64::min);
            let t = 0.9 * room * c[5].abs();
            let cand: Vec<f64> = best.values.iter().zip(&d).map(|(x, d)| x + t * d).collect();
            prop_assert!(log_power(q, &cand) <= best.epower + 1e-9);
        }
    }

    #[test]
    fn max_epower_is_superadditive_over_powers(h in hypothesis(1..=2, 2..=4)) {
        let one = max_epower_exact(&h).unwrap().epower;
        let two = max_epower_exact(&product_power(&h, 2).unwrap()).unwrap().epower;
        prop_assert!(two >= 2.0 * one - 1e-9);
    }

    #[test]
    fn separation_conserves_and_lands_on_diagonal((m, x) in diagonal_cloud(12)) {
        let s = match separate(&m, x) {
            Err(Error::DegenerateNode) => return Ok(()),
            r => r.unwrap(),
        };
        let total = m.total_mass();
        prop_assert!((s.lower.total_mass() + s.upper.total_mass() - total).abs() <= 1e-12 * total.max(1.0));
        let sum: Vec<f64> = s.lower.first_moment().iter().zip(s.upper.first_moment()).map(|(a, b)| a + b).collect();
        prop_assert!(max_abs_diff(&sum, &m.first_moment()) <= 1e-10);
        for (child, level) in [(&s.lower, s.b_lower), (&s.upper, s.b_upper)] {
            let b = child.barycenter().unwrap();
            prop_assert!(max_abs_diff(&b, &[level, level]) <= 1e-8 * level.max(1.0));
        }
        prop_assert!(s.b_lower <= x + 1e-12 && x <= s.b_upper + 1e-12);
    }

    #[test]
    fn symmetric_clouds_split_along_the_sum(
        half in prop::collection::vec((0.0..3.0f64, 0.0..3.0f64, 0.05..1.0f64), 2..6),
    ) {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(a, b, w) in &half {
            points.push(vec![a, b]);
            points.push(vec![b, a]);
            weights.extend([w, w]);
        }
        let m = ParticleMeasure::new(2, points, weights).unwrap();
        prop_assume!(m.points().any(|p| (p[0] - p[1]).abs() > 1e-3));
        let x = m.barycenter().unwrap()[0];
        let s = match separate(&m, x) {
            Err(Error::DegenerateNode) => return Ok(()),
            r => r.unwrap(),
        };
        let n = &s.halfspace.normal;
        let r = std::f64::consts::FRAC_1_SQRT_2;
        prop_assert!((n[0].abs() - r).abs() <= 1e-9 && (n[1] - n[0]).abs() <= 1e-9, "normal {n:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contractions_are_dominated_and_not_conversely(
        nu in (1..=2usize).prop_flat_map(|d| measure(d, 6)),
        labels in prop::collection::vec(0..3usize, 6),
    ) {
        let dim = nu.dim();
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        let mut spread = false;
        for g in 0..3 {
            let members: Vec<usize> = (0..nu.len()).filter(|&i| labels[i] == g).collect();
            if members.is_empty() {
                continue;
            }
            let w: f64 = members.iter().map(|&i| nu.weight(i)).sum();
            let mut c = vec![0.0; dim];
            for &i in &members {
                c.iter_mut().zip(nu.point(i)).for_each(|(a, p)| *a += nu.weight(i) * p / w);
            }
            spread |= members.iter().any(|&i| max_abs_diff(nu.point(i), &c) > 1e-3);
            coords.extend(c);
            weights.push(w);
        }
        let mu = ParticleMeasure::from_flat(dim, coords, weights).unwrap();
        match is_cx_dominated(&mu, &nu).unwrap() {
            CxVerdict::Dominated(plan) => prop_assert!(plan.max_violation() <= 1e-9),
            CxVerdict::NotDominated(_) => prop_assert!(false, "a contraction must be dominated"),
        }
        if spread {
            match is_cx_dominated(&nu, &mu).unwrap() {
                CxVerdict::NotDominated(w) => prop_assert!(w.gap(&nu, &mu) > 1e-9),
                CxVerdict::Dominated(_) => prop_assert!(false, "a strict spread cannot be dominated by its contraction"),
            }
        }
    }

    #[test]
    fn shine_levels_form_a_martingale(h in hypothesis(2..=2, 3..=6)) {
        let r = run(h.rn_cloud().unwrap(), 3, 0.0).unwrap();
        let tree = &r.tree;
        for n in &tree.nodes {
            if let Some([a, b]) = n.children {
                let (a, b) = (&tree.nodes[a], &tree.nodes[b]);
                prop_assert!((a.mass + b.mass - n.mass).abs() <= 1e-12);
                prop_assert!((a.mass * a.bary_scalar + b.mass * b.bary_scalar - n.mass * n.bary_scalar).abs() <= 1e-9);
            }
        }
        let d = tree.diagonal_measure();
        prop_assert!((d.total_mass() - 1.0).abs() <= 1e-12);
        prop_assert!((d.mean() - 1.0).abs() <= 1e-9);
        let eps: Vec<f64> = r.trace.iter().map(|t| t.e_power).collect();
        prop_assert!(eps.windows(2).all(|w| w[1] >= w[0] - 1e-12), "trace {eps:?}");
    }

    #[test]
    fn diagonal_measures_increase_in_convex_order(h in hypothesis(2..=2, 3..=6)) {
        let mut tree = ShineTree::new(h.rn_cloud().unwrap()).unwrap();
        let mut chain = vec![tree.diagonal_measure().to_particles(1)];
        for _ in 0..3 {
            tree = tree.step().unwrap();
            chain.push(tree.diagonal_measure().to_particles(1));
        }
        prop_assert!(cx_chain_check(&chain).unwrap());
    }

    #[test]
    fn recovered_evariable_is_exact(h in hypothesis(2..=2, 3..=6)) {
        let gamma = h.rn_cloud().unwrap();
        let tree = run(gamma.clone(), 2, 0.0).unwrap().tree;
        let x = match recover_evariable(&tree) {
            Err(Error::InfeasibleExactness(_)) => return Ok(()),
            r => r.unwrap(),
        };
        prop_assert!(max_abs_diff(&null_expectations(&x, &gamma).unwrap(), &[1.0, 1.0]) <= 1e-9);
        prop_assert!((e_power(&x, &gamma).unwrap() - tree.e_power()).abs() <= 1e-9);
    }

    #[test]
    fn calibration_vanishes_and_starts_increasing(h in hypothesis(2..=2, 3..=6)) {
        let gamma = h.rn_cloud().unwrap();
        let tree = run(gamma.clone(), 2, 0.0).unwrap().tree;
        let Ok(x) = recover_evariable(&tree) else { return Ok(()) };
        let mean_q: f64 = x.regions().iter().map(|r| r.mass * r.value).sum();
        prop_assume!(mean_q > 1.0 + 1e-6);
        let ep = |b: f64| e_power(&calibrate(&x, b).unwrap(), &gamma).unwrap();
        prop_assert!(ep(1e-9).abs() <= 1e-7);
        let (small, smaller) = (ep(2e-4), ep(1e-4));
        prop_assert!(small > smaller && smaller > 0.0, "{smaller} {small}");
    }

    #[test]
    fn pvariable_grid_is_exact_under_every_null(h in hypothesis(2..=2, 3..=6)) {
        let tree = run(h.rn_cloud().unwrap(), 2, 0.0).unwrap().tree;
        let Ok(x) = recover_evariable(&tree) else { return Ok(()) };
        let p = recover_pvariable(&x).unwrap();
        let grid = p.grid();
        prop_assert!(grid.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1));
        let (alpha_last, q_last) = grid[grid.len() - 1];
        prop_assert!((alpha_last - 1.0).abs() <= 1e-9 && (q_last - 1.0).abs() <= 1e-12);
        let alphas: Vec<f64> = grid.iter().map(|g| g.0).collect();
        for i in 0..2 {
            prop_assert!(max_abs_diff(&p.null_grid(i), &alphas) <= 1e-8);
        }
    }

    #[test]
    fn outcome_vectors_roundtrip_through_json(values in prop::collection::vec(0.0..10.0f64, 1..8)) {
        let x = EVariableFn::outcome_vector(values).unwrap();
        let text = serde_json::to_string(&x).unwrap();
        prop_assert_eq!(serde_json::from_str::<EVariableFn>(&text).unwrap(), x);
    }
}
