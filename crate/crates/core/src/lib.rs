//! Balancing intercepts for regression-based data-generating models.
//!
//! Given covariate distributions, coefficients, a link function and a target
//! marginal mean, the solvers in [`intercept`] find the intercept `b0` such
//! that `E_X[g^-1(b0 + beta . X)]` equals the target. [`datagen`] draws
//! datasets from the resulting model and [`harness`] replicates them to
//! measure the bias of the achieved mean.

pub mod cli;
pub mod coding;
pub mod config;
pub mod datagen;
pub mod distributions;
pub mod error;
pub mod harness;
pub mod intercept;
pub mod links;
pub mod rng;

pub use coding::{categorical_expectation, cross_levels, encode, CodingScheme};
pub use config::{GridConfig, Overrides};
pub use datagen::{generate, Dataset};
pub use distributions::{mc_exp_moment, CovariateSpec, IndependentCovariates, JointSampler, McEstimate};
pub use error::{Error, Result};
pub use harness::{run_grid, run_scenario, Scenario, ScenarioResult};
pub use intercept::{
    expectation_of_mean, solve_linear_scale, solve_log_closed_form, solve_numeric, ClampPolicy, DgpSpec, Engine,
    InterceptSolution, Method, OutcomeFamily, Term, Warnings,
};
pub use links::LinkSpec;
pub use rng::RngStream;
