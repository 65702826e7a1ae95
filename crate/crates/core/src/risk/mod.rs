//! Fully-dynamic convex risk measures: constructions, minimal penalties and
//! consistency checks.

mod checks;
mod driver;
mod dual;
mod family;
mod penalty;

pub use driver::{DriverForm, DriverSpec};
pub use dual::{DualFamily, DualFamilyJson, DualGenerator};
pub use family::{DynamicRisk, LocalRisk, RiskFamily, RiskKind};
pub use penalty::{conjugate_penalty, exact_penalty, minimal_penalty, MinimalPenalty, PenaltyMethod};
pub(crate) use checks::{dual_base, event_patterns, Tracker};
pub use checks::{
    check_axioms, check_domination_sensitivity, check_strong_tc, check_tc_decomposition, CheckOutcome,
    DominationReport, TcReport,
};
