//! Strong time consistency against its decomposition into time consistency and
//! the shifted restriction identity, for a family that keeps it and one that loses it.
//!
//! cargo run --example time_consistency

use std::sync::Arc;

use dynrisk::config::RiskConfig;
use dynrisk::risk::check_tc_decomposition;
use dynrisk::space::generate::random_variable;
use dynrisk::space::ScenarioTree;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data(name: &str) -> String {
    std::fs::read_to_string(format!("{}/examples/data/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn main() -> dynrisk::Result<()> {
    let tree = Arc::new(ScenarioTree::from_json(&data("random_walk.json"))?);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<_> = (0..6).map(|_| random_variable(&mut rng, &tree, 3, 1.0)).collect();

    let normalized: RiskConfig = serde_json::from_str(&data("gexp_offset_normalized.json"))?;
    let RiskConfig::Normalized { base } = &normalized else { unreachable!() };
    for (name, cfg) in [("g-expectation with offsets", base.as_ref()), ("its normalization", &normalized)] {
        let fam = cfg.build(tree.clone())?;
        let rep = check_tc_decomposition(&fam, 0, 1, 3, &samples, 1e-9)?;
        println!("{name}");
        for c in [&rep.strong_tc, &rep.tc, &rep.shifted_identity, &rep.restriction] {
            println!("    {:<30} {:<5} max deviation {:.3e}", c.check, c.pass, c.max_violation);
        }
        println!("    strong TC <=> TC and shifted identity: {}", rep.equivalence_consistent);
    }
    Ok(())
}
