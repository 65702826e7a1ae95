//! Seller's indifference prices with and without trading, including a
//! replicable claim whose price is its cash part.
//!
//! cargo run --example indifference_price

use std::sync::Arc;

use dynrisk::indifference::{gains, price, Strategy, StrategySpace};
use dynrisk::risk::RiskFamily;
use dynrisk::space::{NodeVariable, ScenarioTree};

fn data(name: &str) -> String {
    std::fs::read_to_string(format!("{}/examples/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn main() -> dynrisk::Result<()> {
    let tree = Arc::new(ScenarioTree::from_json(&data("two_period.json"))?);
    let fam = RiskFamily::entropic(tree.clone(), 1.0)?;
    let call = NodeVariable::from_fn(&tree, 2, |n| (tree.assets(n)[0] - 1.0).max(0.0));

    for (name, space) in [("no trading", StrategySpace::Zero), ("linear", StrategySpace::Linear)] {
        let res = price(&fam, &space, 0, 2, &call)?;
        println!("{name:<11} x_02(call) = {:.8}  (x_12 = {:?})", res.value.values[0], price(&fam, &space, 1, 2, &call)?.value.values);
    }

    // one unit of stock held throughout, plus 0.3 in cash
    let hold = Strategy::from_fn(&tree, |_| vec![1.0]);
    let replicable = &gains(&tree, &hold, 0, 2)? + &NodeVariable::constant(&tree, 2, 0.3);
    let res = price(&fam, &StrategySpace::Linear, 0, 2, &replicable)?;
    println!("replicable claim: x_02 = {:.8} (cash part 0.3)", res.value.values[0]);
    println!("optimal position at the root: {:?}", res.theta_hat.theta[0]);
    Ok(())
}
