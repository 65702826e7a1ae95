//! Strategies, gains and the seller's risk-indifference price.

mod checks;
mod decompose;
mod price;
mod strategy;

pub use checks::{check_price_operator, check_recursive, RecursiveReport};
pub use decompose::{decompose_gain, find_witness, GainSplit, SplitReport};

pub use price::{inner_infimum, price, price_with, InnerSolution, Method, NodeDiagnostics, PriceResult};
pub use strategy::{gains, GainsProcess, Strategy, StrategySpace, StrategySpaceJson};
