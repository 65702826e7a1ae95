//! Sweep delta on a one-step binomial model: the sandwich m <= x <= M on claims
//! holds exactly when the martingale measure lies in the good-deal set.
//!
//! cargo run --example characterization

use std::collections::BTreeMap;
use std::sync::Arc;

use dynrisk::good_deal::{check_theorem_ab, martingale_measure, DeltaSchedule};
use dynrisk::indifference::StrategySpace;
use dynrisk::risk::RiskFamily;
use dynrisk::space::generate::binomial_tree;
use dynrisk::space::{DensityChange, NodeVariable};

fn main() -> dynrisk::Result<()> {
    let tree = Arc::new(binomial_tree(1, 0.5, 1.0, 1.2, 0.9));
    let fam = RiskFamily::entropic(tree.clone(), 1.0)?;
    let q = martingale_measure(&tree, 0, 1)?.expect("no arbitrage");
    let probes = [q, DensityChange::reference(&tree, 0, 1)];
    let claims = vec![
        NodeVariable::new(&tree, 1, vec![1.0, 0.0])?,
        NodeVariable::new(&tree, 1, vec![-0.5, 2.0])?,
    ];
    println!("{:>6} {:>6} {:>6} {:>12}", "delta", "A", "B", "violation");
    for k in (25..=45).step_by(2) {
        let delta = k as f64 / 100.0;
        let sched = DeltaSchedule::from_table(&BTreeMap::from([((0, 1), delta)]), 1)?;
        let rep = check_theorem_ab(&fam, &StrategySpace::Linear, 0, 1, &sched, &claims, &probes, 1e-7)?;
        println!("{delta:>6.2} {:>6} {:>6} {:>12.2e}", rep.a_holds, rep.b_holds, rep.a2_max_violation.unwrap_or(f64::NAN));
    }
    println!("threshold: E[h^2] of the martingale measure is 1/9, so delta = 1/3");
    Ok(())
}
