//! Split a claim dominated by trading gains over (0,2] into a part dominated
//! over (0,1] and a part dominated over (1,2].
//!
//! cargo run --example decompose

use dynrisk::indifference::{decompose_gain, StrategySpace};
use dynrisk::space::{NodeVariable, ScenarioTree};

fn data(name: &str) -> String {
    std::fs::read_to_string(format!("{}/examples/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn main() -> dynrisk::Result<()> {
    let tree = ScenarioTree::from_json(&data("two_period.json"))?;
    let g = NodeVariable::new(&tree, 2, vec![2.0, 0.5, -0.5, -0.75])?;
    let split = decompose_gain(&tree, &StrategySpace::Linear, &g, 0, 1, None)?;
    println!("witness positions: {:?}", split.theta.to_json(&tree));
    println!("g1 (level 1) = {:?}", split.g1.values);
    println!("g2 (level 2) = {:?}", split.g2.values);
    println!("slack: {:?}  valid: {}", split.report, split.report.holds(1e-12));
    Ok(())
}
