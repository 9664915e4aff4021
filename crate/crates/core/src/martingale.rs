//! Wealth processes built by multiplying iid e-values.
//!
//! `M_t = Π_{i ≤ t} X(Z_i)` with `Z_i` drawn from one regime measure (a null
//! or the alternative). Under every null an exact `X` makes `M` a
//! martingale; under the alternative `(log M_T)/T` converges to the e-power.
//! Every path draws from its own random stream, so results do not depend on
//! the number of threads.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evariable::EVariableFn;
use crate::hypothesis::DiscreteHypothesis;
use crate::oracles::{log_cosh, sym3_means, ClosedForm, OracleSpec};
use crate::rng::StreamRng;

/// Which measure generates the data: a null `P_i` (1-based in text) or the alternative `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Regime {
    Null(usize),
    Alt,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Null(i) => write!(f, "p{}", i + 1),
            Regime::Alt => write!(f, "q"),
        }
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "q" || t == "alt" {
            return Ok(Regime::Alt);
        }
        match t.strip_prefix('p').and_then(|k| k.parse::<usize>().ok()) {
            Some(k) if k >= 1 => Ok(Regime::Null(k - 1)),
            _ => Err(Error::InvalidInput(format!("regime {s:?} is neither q nor p1, p2, ..."))),
        }
    }
}

impl TryFrom<String> for Regime {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Regime> for String {
    fn from(r: Regime) -> String {
        r.to_string()
    }
}

/// Data-generating model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Oracle(OracleSpec),
    Discrete(DiscreteHypothesis),
}

impl Model {
    fn n_null(&self) -> usize {
        match self {
            Model::Oracle(s) => s.n_null(),
            Model::Discrete(h) => h.n_null(),
        }
    }

    fn hypothesis(&self) -> Result<Option<DiscreteHypothesis>> {
        match self {
            Model::Oracle(OracleSpec::GaussShift { .. } | OracleSpec::GaussSym3) => Ok(None),
            Model::Oracle(spec) => spec.hypothesis().map(Some),
            Model::Discrete(h) => Ok(Some(h.clone())),
        }
    }
}

/// The per-step e-value: a closed form on raw data or a stored e-variable.
#[derive(Debug, Clone, PartialEq)]
pub enum Statistic {
    ClosedForm(ClosedForm),
    EVar(EVariableFn),
}

/// One simulated wealth path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthPath {
    /// `M_0, ..., M_T` with `M_0 = 1`.
    pub values: Vec<f64>,
    pub log_values: Vec<f64>,
    pub regime: Regime,
}

/// Simulation request.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub regime: Regime,
    pub horizon: usize,
    pub paths: usize,
    pub seed: u64,
}

/// Sampler for one observation of the model under one regime, returning the e-value.
struct Stepper<'a> {
    model: &'a Model,
    stat: &'a Statistic,
    regime: Regime,
    /// Discrete models: outcome cdf under the regime and likelihood ratios per outcome.
    cdf: Vec<f64>,
    rn: Vec<Option<Vec<f64>>>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a Model, stat: &'a Statistic, regime: Regime) -> Result<Self> {
        if let Regime::Null(i) = regime {
            if i >= model.n_null() {
                return Err(Error::InvalidInput(format!("regime p{} but the model has {} nulls", i + 1, model.n_null())));
            }
        }
        let (mut cdf, mut rn) = (Vec::new(), Vec::new());
        if let Some(h) = model.hypothesis()? {
            let law = match regime {
                Regime::Null(i) => &h.null[i],
                Regime::Alt => &h.alt[0],
            };
            let mut acc = 0.0;
            cdf = law.iter().map(|p| {
                acc += p;
                acc
            }).collect();
            let q = &h.alt[0];
            rn = (0..h.n_outcomes())
                .map(|k| (q[k] > 0.0).then(|| h.null.iter().map(|p| p[k] / q[k]).collect()))
                .collect();
            match stat {
                Statistic::EVar(EVariableFn::OutcomeVector { values }) if values.len() != h.n_outcomes() => {
                    return Err(Error::DimMismatch { expected: h.n_outcomes(), found: values.len() });
                }
                Statistic::ClosedForm(_) => {
                    return Err(Error::InvalidInput("closed-form statistics need a Gaussian model".into()));
                }
                _ => {}
            }
        } else if matches!(stat, Statistic::EVar(EVariableFn::OutcomeVector { .. })) {
            return Err(Error::InvalidInput("outcome-vector e-variables need a discrete model".into()));
        }
        Ok(Self { model, stat, regime, cdf, rn })
    }

    fn draw(&self, rng: &mut StreamRng) -> Result<f64> {
        match self.model {
            Model::Oracle(spec @ OracleSpec::GaussShift { n_obs }) => {
                let shift = match self.regime {
                    Regime::Null(0) => -1.0,
                    Regime::Null(_) => 1.0,
                    Regime::Alt => 0.0,
                };
                let data: Vec<f64> = (0..*n_obs).map(|_| shift + rng.normal()).collect();
                self.value_on_data(spec, &data, rng)
            }
            Model::Oracle(spec @ OracleSpec::GaussSym3) => {
                let m = match self.regime {
                    Regime::Null(i) => sym3_means()[i],
                    Regime::Alt => [0.0, 0.0],
                };
                let z1 = m[0] + rng.normal();
                let data = [z1, m[1] + rng.normal()];
                self.value_on_data(spec, &data, rng)
            }
            _ => {
                let u = rng.uniform() * self.cdf.last().copied().unwrap_or(1.0);
                let k = self.cdf.partition_point(|c| *c <= u).min(self.cdf.len() - 1);
                match self.stat {
                    Statistic::EVar(x @ EVariableFn::OutcomeVector { .. }) => x.eval_outcome(k),
                    Statistic::EVar(x) => match &self.rn[k] {
                        Some(y) => x.eval(y, rng.uniform()),
                        None => Err(Error::UnroutablePoint(vec![f64::INFINITY])),
                    },
                    Statistic::ClosedForm(_) => unreachable!("rejected in Stepper::new"),
                }
            }
        }
    }

    fn value_on_data(&self, spec: &OracleSpec, data: &[f64], rng: &mut StreamRng) -> Result<f64> {
        match self.stat {
            Statistic::ClosedForm(c) => c.eval_data(data),
            Statistic::EVar(x) => x.eval(&spec.rn_point(data)?, rng.uniform()),
        }
    }
}

/// Simulate `paths` wealth paths of length `horizon`; path `k` uses stream `(seed, k)`.
pub fn simulate(stat: &Statistic, model: &Model, cfg: &SimConfig) -> Result<Vec<WealthPath>> {
    let stepper = Stepper::new(model, stat, cfg.regime)?;
    (0..cfg.paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = StreamRng::new(cfg.seed, k as u64);
            let mut values = Vec::with_capacity(cfg.horizon + 1);
            let mut log_values = Vec::with_capacity(cfg.horizon + 1);
            let (mut m, mut lm) = (1.0, 0.0);
            values.push(m);
            log_values.push(lm);
            for _ in 0..cfg.horizon {
                let x = stepper.draw(&mut rng)?;
                m *= x;
                lm += x.ln();
                values.push(m);
                log_values.push(lm);
            }
            Ok(WealthPath { values, log_values, regime: cfg.regime })
        })
        .collect()
}

/// Sample mean and its standard error.
pub fn mean_se(xs: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = xs.into_iter().collect();
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `E[M_t]` across paths, with standard error.
pub fn wealth_at(paths: &[WealthPath], t: usize) -> (f64, f64) {
    mean_se(paths.iter().map(|p| p.values[t]))
}

/// `(log M_T)/T` across paths, with standard error.
pub fn growth_rate(paths: &[WealthPath]) -> (f64, f64) {
    mean_se(paths.iter().map(|p| {
        let t = p.values.len() - 1;
        p.log_values[t] / t as f64
    }))
}

/// `E[M_τ]` for `τ = min(first t with M_t ≥ threshold, cap)`, with standard error.
pub fn stopped_wealth(paths: &[WealthPath], threshold: f64, cap: usize) -> (f64, f64) {
    mean_se(paths.iter().map(|p| {
        let cap = cap.min(p.values.len() - 1);
        let tau = (0..=cap).find(|&t| p.values[t] >= threshold).unwrap_or(cap);
        p.values[tau]
    }))
}

/// Block-batched versus per-observation e-values on `gauss_shift(1)` data under `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub n_block: u32,
    pub blocks: usize,
    pub paths: usize,
    /// Number of (path, block) pairs with `E_block ≥ Π_i e^{1/2}/cosh(Z_i)`.
    pub dominated: usize,
    pub total: usize,
    /// Most negative `log E_block − Σ log(e^{1/2}/cosh Z_i)` observed.
    pub worst_log_ratio: f64,
    /// Mean log wealth per observation of the batched and product processes.
    pub batched_growth: f64,
    pub product_growth: f64,
}

impl BatchReport {
    pub fn dominance_fraction(&self) -> f64 {
        self.dominated as f64 / self.total.max(1) as f64
    }
}

/// Compare `E_block = e^{n/2}/cosh(Σ Z)` against the product of single-observation e-values.
pub fn batched_vs_product(n_block: u32, blocks: usize, paths: usize, seed: u64) -> Result<BatchReport> {
    if n_block == 0 {
        return Err(Error::InvalidInput("block size must be at least 1".into()));
    }
    let per_path: Vec<(usize, f64, f64, f64)> = (0..paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = StreamRng::new(seed, k as u64);
            let (mut dom, mut worst, mut lb, mut lp) = (0usize, f64::INFINITY, 0.0, 0.0);
            for _ in 0..blocks {
                let z: Vec<f64> = (0..n_block).map(|_| rng.normal()).collect();
                let batched = 0.5 * n_block as f64 - log_cosh(z.iter().sum());
                let product: f64 = z.iter().map(|&zi| 0.5 - log_cosh(zi)).sum();
                let d = batched - product;
                // rounding noise must not count as a violation when the two agree (n_block = 1)
                if d >= -1e-12 * (1.0 + product.abs()) {
                    dom += 1;
                }
                worst = worst.min(d);
                lb += batched;
                lp += product;
            }
            (dom, worst, lb, lp)
        })
        .collect();
    let obs = (blocks * n_block as usize * paths).max(1) as f64;
    Ok(BatchReport {
        n_block,
        blocks,
        paths,
        dominated: per_path.iter().map(|r| r.0).sum(),
        total: blocks * paths,
        worst_log_ratio: per_path.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        batched_growth: per_path.iter().map(|r| r.2).sum::<f64>() / obs,
        product_growth: per_path.iter().map(|r| r.3).sum::<f64>() / obs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss() -> Model {
        Model::Oracle(OracleSpec::GaussShift { n_obs: 1 })
    }

    #[test]
    fn regime_text() {
        assert_eq!("p2".parse::<Regime>().unwrap(), Regime::Null(1));
        assert_eq!("Q".parse::<Regime>().unwrap(), Regime::Alt);
        assert!("p0".parse::<Regime>().is_err());
        assert_eq!(Regime::Null(0).to_string(), "p1");
        assert_eq!(serde_json::to_string(&Regime::Alt).unwrap(), "\"q\"");
    }

    #[test]
    fn constant_one_stays_at_one() {
        let stat = Statistic::EVar(EVariableFn::constant_one(2));
        let cfg = SimConfig { regime: Regime::Null(0), horizon: 5, paths: 3, seed: 1 };
        for p in simulate(&stat, &gauss(), &cfg).unwrap() {
            assert!(p.values.iter().all(|&v| v == 1.0));
            assert!(p.log_values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn reproducible_and_martingale_under_null() {
        let stat = Statistic::ClosedForm(ClosedForm::GaussShift { n_obs: 1 });
        let cfg = SimConfig { regime: Regime::Null(1), horizon: 5, paths: 4000, seed: 9 };
        let a = simulate(&stat, &gauss(), &cfg).unwrap();
        assert_eq!(a, simulate(&stat, &gauss(), &cfg).unwrap());
        for t in 1..=5 {
            let (m, se) = wealth_at(&a, t);
            assert!((m - 1.0).abs() <= 4.0 * se, "t={t} mean {m} se {se}");
        }
        let (m, se) = stopped_wealth(&a, 2.0, 5);
        assert!(m <= 1.0 + 4.0 * se);
    }

    #[test]
    fn discrete_models() {
        let h = DiscreteHypothesis::bernoulli(&[0.1, 0.2], 0.3).unwrap();
        let stat = Statistic::EVar(EVariableFn::outcome_vector(vec![1.0, 1.0]).unwrap());
        let cfg = SimConfig { regime: Regime::Alt, horizon: 3, paths: 2, seed: 0 };
        assert!(simulate(&stat, &Model::Discrete(h.clone()), &cfg).is_ok());
        let bad = SimConfig { regime: Regime::Null(2), ..cfg.clone() };
        assert!(simulate(&stat, &Model::Discrete(h.clone()), &bad).is_err());
        let cf = Statistic::ClosedForm(ClosedForm::GaussShift { n_obs: 1 });
        assert!(simulate(&cf, &Model::Discrete(h), &cfg).is_err());
    }

    #[test]
    fn single_block_is_identical() {
        let r = batched_vs_product(1, 20, 10, 4).unwrap();
        assert_eq!(r.dominated, r.total);
        assert!(r.worst_log_ratio.abs() < 1e-12);
        assert!((r.batched_growth - r.product_growth).abs() < 1e-12);
    }

    #[test]
    fn block_of_two_can_lose_pathwise() {
        // cosh(1)^2 < cosh(2), so equal unit observations favour the product
        let batched = 1.0 - log_cosh(2.0);
        let product = 2.0 * (0.5 - log_cosh(1.0));
        assert!(batched < product);
        let r = batched_vs_product(2, 50, 50, 4).unwrap();
        assert!(r.dominated < r.total);
        assert!(r.batched_growth > r.product_growth);
    }
}
