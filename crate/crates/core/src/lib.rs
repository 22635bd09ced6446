//! Verification laboratory for attribution methods on a two-feature
//! suppressor problem.
//!
//! The generative model draws a Rademacher label `y = z` and observes
//! `x = (z, eps*z) + eta` with correlated Gaussian noise `eta ~ N(0, Sigma)`.
//! Feature `x2` carries no marginal information about `y`, yet the
//! Bayes-optimal linear rule puts weight on it whenever the noise is
//! correlated. The crate provides
//!
//! * [`model`]: the generative process, densities and the Bayes rule,
//! * [`analytic`]: closed-form importance of every attribution method,
//! * [`empirical`]: black-box estimators of the same quantities,
//! * [`harness`]: sweeps, differential checks, verdicts, figure data and
//!   the acceptance suite,
//! * [`cli`]: the `suppressor-lab` command-line front end.

pub mod analytic;
pub mod cli;
pub mod empirical;
pub mod error;
pub mod harness;
pub mod model;
pub mod quadrature;

pub use analytic::{Attribution, CounterfactualResult, Method, Scope, Source};
pub use error::{LabError, Result};
pub use model::{BayesLinearRule, Feature, GenParams, Label, LabeledDataset, Point, Record};
