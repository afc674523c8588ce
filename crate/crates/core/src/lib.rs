//! Network survival estimation of adult death rates from survey reports
//! about deaths in respondents' personal networks.
//!
//! Modules, roughly in pipeline order:
//!
//! - [`survey`]: respondent records, group schemes, CSV loading and cleaning.
//! - [`estimators`]: Horvitz-Thompson death reports, known-population degree,
//!   and the death rate estimator.
//! - [`sibling`]: sibling-history person-period rates for comparison.
//! - [`lifetable`]: 45q15 and 35q15 from rate schedules.
//! - [`bootstrap`]: rescaled bootstrap replicate weights and percentile intervals.
//! - [`sensitivity`]: adjustment factors and robustness grids.
//! - [`sim`]: synthetic worlds with exact ground truth.
//! - [`diagnostics`]: deaths per interview, hold-outs, leave-one-out degrees.
//! - [`export`]: result tables and atomic file output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bootstrap;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod export;
pub mod lifetable;
pub mod sensitivity;
pub mod sibling;
pub mod sim;
pub mod survey;

pub use error::{Error, Result};
pub use estimators::{network_survival_rate, DeathRateEstimate, GroupEstimates, PreparedSample};
pub use survey::{FrameTotals, GroupId, GroupScheme, KnownPopulationTable, RespondentRecord, Sex};
