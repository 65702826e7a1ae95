//! No-good-deal bounds: the level schedule, per-node bounds, measure
//! membership and the checks tying them to indifference prices.

mod bounds;
mod checks;
mod schedule;

pub use bounds::{ngd_lower, ngd_membership, ngd_upper, solve_node, Membership, MembershipRow, NgdBound, NodeSolution};
pub use checks::{check_sandwich, check_theorem_ab, martingale_measure, ProbeVerdict, SandwichReport, SandwichRow, TheoremAbReport};
pub use schedule::{DeltaSchedule, DeltaScheduleJson, COMPOSITION_TOL};
