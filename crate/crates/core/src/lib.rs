//! Portfolio selection under ESG rating disagreement.
//!
//! Several agencies rate the same assets and rarely agree. This crate folds
//! their opinions into a single sustainability criterion, the *k-worst
//! Non-ESG score* (the sum of the `k` largest per-agency portfolio scores),
//! and optimizes it together with variance and expected return.
//!
//! The k-worst term is piecewise linear and depends on a sort, but its LP
//! dual turns every model into a convex quadratic program over
//! `(x, v, u)`. Those programs are assembled in [`ksum`] and solved by the
//! dense interior-point solver in [`qp`].
//!
//! Module map:
//!
//! - [`data`]: price ingestion, arithmetic returns, moment estimates
//! - [`scores`]: min-max normalization, Non-ESG scores, agency disagreement
//! - [`qp`]: convex QP types, interior-point solver, KKT checks, dumps
//! - [`ksum`]: the k-worst operator and the model builders
//! - [`baselines`]: GMinV, EW, RP, MDP and single-agency MV-ESG
//! - [`frontier`]: epsilon-constraint sweep of the efficient surface
//! - [`backtest`]: rolling-window out-of-sample engine
//! - [`metrics`]: out-of-sample performance measures
//! - [`synth`]: seeded synthetic markets and score panels

#![forbid(unsafe_code)]

pub mod backtest;
pub mod baselines;
pub mod data;
pub mod error;
pub mod frontier;
pub mod ksum;
pub(crate) mod linalg;
pub mod metrics;
pub mod qp;
pub mod scores;
pub mod synth;

pub use error::{Error, Result};
