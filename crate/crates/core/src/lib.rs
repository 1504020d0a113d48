//! Causal feasibility analysis for observational clinical studies.
//!
//! - [`dag`]: causal graphs, d-separation and back-door identification.
//! - [`study`]: patient tables, clinical codings and stratum filters.
//! - [`estimators`]: penalized logistic and weighted linear regression.
//! - [`positivity`]: balancing-score density overlap diagnostics.
//! - [`matching`]: seeded caliper matching and sample-size translation.
//! - [`monitoring`]: centre fixed effects and the Egger IV slope.
//! - [`scm`]: discrete structural causal models, sampling and exact
//!   interventional distributions.

pub mod dag;
pub mod estimators;
pub mod matching;
pub mod monitoring;
pub mod positivity;
pub mod scm;
pub mod study;
