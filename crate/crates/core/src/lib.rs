//! Worst-case and average-case size bounds for natural join queries.
//!
//! The crate computes fractional edge covers exactly, builds the extremal
//! instances that make the cover bounds tight, evaluates join and
//! join-project plans with per-subplan tracing, and rewrites join-project
//! plans into join plans for random databases.

pub mod bounds;
pub mod deproject;
pub mod engine;
pub mod error;
pub mod flow;
pub mod lp;
pub mod plan;
pub mod plans;
pub mod query;
pub mod rational;
pub mod stochastic;

pub use engine::{evaluate, oracle_answer, EvalTrace, Instance, Relation};
pub use error::{Error, Result};
pub use lp::{solve_cover_lp, CoverLp, CoverSolution, EdgeCover};
pub use plan::{parse_plan, Plan, PlanStats};
pub use query::{parse_query, AttrSet, JoinQuery};
pub use rational::Rational;
