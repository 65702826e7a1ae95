//! Evaluate the three constructions on the two-period tree and run the axiom checks.
//!
//! cargo run --example risk_measures

use std::sync::Arc;

use dynrisk::config::RiskConfig;
use dynrisk::risk::{check_axioms, DynamicRisk, RiskFamily};
use dynrisk::space::{NodeVariable, ScenarioTree};

fn data(name: &str) -> String {
    std::fs::read_to_string(format!("{}/examples/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn main() -> dynrisk::Result<()> {
    let tree = Arc::new(ScenarioTree::from_json(&data("two_period.json"))?);
    let x = NodeVariable::new(&tree, 2, vec![4.0, 1.0, 1.0, 0.25])?;

    let families: Vec<(&str, RiskFamily)> = vec![
        ("entropic", serde_json::from_str::<RiskConfig>(&data("entropic.json"))?.build(tree.clone())?),
        ("g-expectation", serde_json::from_str::<RiskConfig>(&data("gexp_abs.json"))?.build(tree.clone())?),
        ("expectation (dual, P only)", RiskFamily::dual(tree.clone(), dynrisk::risk::DualFamily::reference(&tree))?),
    ];
    let samples = vec![x.clone(), NodeVariable::new(&tree, 2, vec![-1.0, 0.5, 2.0, -0.5])?];
    for (name, fam) in &families {
        let rho12 = fam.rho(1, 2, &x)?;
        let rho02 = fam.rho(0, 2, &x)?;
        println!("{name:<28} rho_12 = {:?}  rho_02 = {:.6}", rho12.values, rho02.values[0]);
        for out in check_axioms(fam, 0, 2, &samples, 1e-9)? {
            println!("    {:<24} {} ({:.1e})", out.check, if out.pass { "ok" } else { "FAIL" }, out.max_violation);
        }
    }
    Ok(())
}
