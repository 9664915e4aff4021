//! Exact and pivotal e-values for finite composite hypotheses.
//!
//! The crate covers the whole pipeline from a description of the null and
//! alternative laws to a usable test:
//!
//! - [`measure`]: weighted particle measures and the likelihood-ratio cloud `γ`;
//! - [`convex_order`]: martingale-coupling LP for `μ ⪯cx ν` with dual witnesses;
//! - [`hypothesis`]: LP existence gates, LP e-variables, and the KKT e-power maximizer;
//! - [`hyperplane`]: separating half-spaces through diagonal points;
//! - [`shine`]: the iterated splitting tree and its diagonal measures;
//! - [`evariable`]: e-variables and randomized-rank p-variables read off a tree;
//! - [`oracles`]: closed-form Gaussian, Bernoulli and atom reference models;
//! - [`martingale`]: wealth-process simulation.

pub mod convex_order;
pub mod error;
pub mod evariable;
pub mod hyperplane;
pub mod hypothesis;
pub mod linalg;
pub mod lp;
pub mod martingale;
pub mod measure;
pub mod oracles;
pub mod quadrature;
pub mod rng;
pub mod shine;

pub use error::{Error, Result};
pub use measure::{HalfSpace, ParticleMeasure, Provenance, RNCloud};
