//! Utilities and the disappointment-averse valuation of a single outcome.

pub mod gda;
pub(crate) mod kernel;
pub mod utility;

pub use gda::{
    certainty_equivalent, gda_equation_residual, gda_value, gda_value_sorted, phi, psi, GdaParams,
    OutcomeDistribution, SortedOutcomes,
};
pub use utility::{CustomUtility, Utility, UtilityKind};
