//! Finite filtered probability spaces: scenario trees, node-measurable
//! variables, measure changes and conditional expectations.

mod density;
pub mod generate;
mod tree;
mod variable;

pub use density::{
    compose_densities, cond_expect, relative_entropy, DensityChange, DensityChangeJson,
};
pub use tree::{LocalNode, LocalTree, NodeId, NodeSpec, ScenarioTree, TreeSpec, ARITH_TOL, INPUT_TOL};
pub use variable::{ess_inf_over, ess_sup_over, AdaptedProcess, NodeVariable, NodeVariableJson};
