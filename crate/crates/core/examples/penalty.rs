//! Minimal penalties: the entropic closed form, the numerical conjugate and the
//! cocycle property along (0,1] and (1,2].
//!
//! cargo run --example penalty

use std::sync::Arc;

use dynrisk::optim::OptimOptions;
use dynrisk::risk::{conjugate_penalty, minimal_penalty, RiskFamily};
use dynrisk::space::{DensityChange, ScenarioTree};

fn data(name: &str) -> String {
    std::fs::read_to_string(format!("{}/examples/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn main() -> dynrisk::Result<()> {
    let tree = Arc::new(ScenarioTree::from_json(&data("two_period.json"))?);
    let fam = RiskFamily::entropic(tree.clone(), 2.0)?;
    // tilt towards the up move at every node
    let q = DensityChange::from_conditionals(&tree, 0, 2, |_| vec![0.75, 0.25])?;

    let closed = minimal_penalty(&fam, 0, 2, &q)?.as_variable();
    let conj = conjugate_penalty(&fam, 0, 2, &q, OptimOptions::default())?.as_variable();
    println!("alpha_02(Q): closed form {:.12}  conjugate {:.12}", closed.values[0], conj.values[0]);

    let first = minimal_penalty(&fam, 0, 1, &q.restrict(&tree, 0, 1))?.as_variable();
    let second = minimal_penalty(&fam, 1, 2, &q.restrict(&tree, 1, 2))?.as_variable();
    let carried = q.cond_expect(&tree, &second, 0)?;
    println!(
        "cocycle: alpha_01 + E_Q[alpha_12] = {:.12} + {:.12} = {:.12}",
        first.values[0],
        carried.values[0],
        first.values[0] + carried.values[0]
    );
    Ok(())
}
