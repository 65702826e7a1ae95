//! No-good-deal bounds from a schedule file, the binding case and measure
//! membership.
//!
//! cargo run --example good_deal_bounds

use dynrisk::good_deal::{ngd_lower, ngd_membership, ngd_upper, DeltaSchedule, DeltaScheduleJson};
use dynrisk::space::{DensityChange, NodeVariable, ScenarioTree};

fn data(name: &str) -> String {
    std::fs::read_to_string(format!("{}/examples/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn main() -> dynrisk::Result<()> {
    let tree = ScenarioTree::from_json(&data("two_period.json"))?;
    let json: DeltaScheduleJson = serde_json::from_str(&data("delta_generous.json"))?;
    let sched = DeltaSchedule::from_json(&json, tree.horizon())?;
    let x = NodeVariable::new(&tree, 2, vec![4.0, 1.0, 1.0, 0.25])?;
    for s in [1, 0] {
        let lo = ngd_lower(&tree, &x, s, &sched)?;
        let hi = ngd_upper(&tree, &x, s, &sched)?;
        println!("delta_{s}2 = {:.3}: m = {:?}  M = {:?}  binding {:?}", hi.delta, lo.value.values, hi.value.values, hi.binding);
    }

    let q = DensityChange::from_conditionals(&tree, 0, 2, |_| vec![0.75, 0.25])?;
    for d in [0.3, 0.6] {
        let sched = DeltaSchedule::from_base(1.0 + d, 1)?;
        let one = ngd_membership(&tree, &q.restrict(&tree, 0, 1), 0, 1, &sched)?;
        println!("delta {:.2}: E[h^2] = {:.4}, member {}", one.delta, one.rows[0].second_moment, one.member);
    }
    Ok(())
}
