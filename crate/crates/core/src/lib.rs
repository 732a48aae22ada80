//! Estimators for two-sample summary-data Mendelian randomization.
//!
//! The starting point is the errors-in-variables view of GWAS summary
//! statistics: the observed SNP-outcome effects are regressed on noisy
//! SNP-exposure effects through the origin. Three estimators of increasing
//! robustness are provided:
//!
//! * **PS** — maximizer of the profile log-likelihood under the exact
//!   linear model ([`ps::fit_ps`]);
//! * **APS** — adjusted profile score, consistent under a normal
//!   random-effects model for pleiotropy with overdispersion `tau2`
//!   ([`aps::fit_aps`]);
//! * **RAPS** — the adjusted score robustified by a Huber or Tukey loss on
//!   standardized residuals, for data with occasional large outliers
//!   ([`raps::fit_raps`]).
//!
//! Baseline estimators (IVW, Egger, weighted median), influence and Q-Q
//! diagnostics, and a deterministic Monte Carlo harness for the six
//! benchmark protocols round out the toolkit. File ingestion and result
//! serialization live in [`io`].

pub mod aps;
pub mod baselines;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod model;
pub mod ps;
pub mod quad;
pub mod raps;
pub mod sim;
pub mod solve;
mod solve2d;
pub mod stats;

pub use error::{Error, Result};
pub use model::{FitResult, Method, SolverReport, SummaryData};
pub use solve::SolverConfig;
