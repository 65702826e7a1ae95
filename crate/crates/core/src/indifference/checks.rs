use serde::Serialize;
use serde_json::json;

use super::price::price;
use super::strategy::StrategySpace;
use crate::error::Result;
use crate::risk::{check_strong_tc, event_patterns, CheckOutcome, RiskFamily, Tracker};
use crate::space::{cond_expect, NodeVariable};

/// Monotonicity, convexity, weak homogeneity, projection, `x(0) = 0` and
/// cash additivity of `x_st` on the samples.
pub fn check_price_operator(
    family: &RiskFamily,
    space: &StrategySpace,
    s: usize,
    t: usize,
    samples: &[NodeVariable],
    tol: f64,
) -> Result<Vec<CheckOutcome>> {
    let tree = family.tree_arc().clone();
    let tree = tree.as_ref();
    let x = |v: &NodeVariable| -> Result<NodeVariable> { Ok(price(family, space, s, t, v)?.value) };
    let base: Vec<NodeVariable> = samples.iter().map(x).collect::<Result<_>>()?;
    let n = samples.len();

    let mut mono = Tracker::new("monotonicity", tol);
    let mut conv = Tracker::new("convexity", tol);
    let mut homog = Tracker::new("weak_homogeneity", tol);
    let mut proj = Tracker::new("projection", tol);
    let mut zero = Tracker::new("zero_price", tol);
    let mut unit = Tracker::new("cash_additivity", tol);

    for i in 0..n {
        let j = (i + 1) % n;
        let (a, b) = (&samples[i], &samples[j]);
        let up = x(&a.max(b))?;
        mono.record_nodes(tree, &(&base[i] - &up), || json!({"samples": [i, j]}));
        let mid = x(&(&(a * 0.5) + &(b * 0.5)))?;
        let rhs = &(&base[i] * 0.5) + &(&base[j] * 0.5);
        conv.record_nodes(tree, &(&mid - &rhs), || json!({"samples": [i, j]}));

        for ev in event_patterns(tree, s).iter().skip(1).take(2) {
            let cut = x(&a.zip_with(&ev.lift(tree, t), |v, e| v * e))?;
            let diff = base[i].zip_with(&cut, |p, q| p - q).zip_with(ev, |d, e| (d * e).abs());
            homog.record_nodes(tree, &diff, || json!({"sample": i, "event": ev.values}));
        }

        let known = cond_expect(tree, a, None, s)?;
        let px = x(&known.lift(tree, t))?;
        proj.record_nodes(tree, &px.zip_with(&known, |p, k| (p - k).abs()), || json!({"sample": i}));

        let shifted = x(&a.map(|v| v + 1.0))?;
        unit.record_nodes(tree, &shifted.zip_with(&base[i], |p, q| (p - q - 1.0).abs()), || json!({"sample": i}));
    }
    let p0 = x(&NodeVariable::zeros(tree, t))?;
    zero.record_nodes(tree, &p0.map(f64::abs), || json!({}));
    Ok(vec![
        mono.finish(),
        conv.finish(),
        homog.finish(),
        proj.finish(),
        zero.finish(),
        unit.finish(),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecursiveReport {
    pub recursive: CheckOutcome,
    /// The hypothesis of the recursion theorem, checked on the same samples.
    pub strong_tc: CheckOutcome,
    pub warning: Option<String>,
}

/// `max |x_rt(x_st(X)) - x_rt(X)|` over the samples.
pub fn check_recursive(
    family: &RiskFamily,
    space: &StrategySpace,
    r: usize,
    s: usize,
    t: usize,
    samples: &[NodeVariable],
    tol: f64,
) -> Result<RecursiveReport> {
    let tree = family.tree_arc().clone();
    let tree = tree.as_ref();
    let strong_tc = check_strong_tc(family, r, s, t, samples, 1e-9)?;
    let warning = (!strong_tc.pass).then(|| {
        format!(
            "family is not strongly time-consistent on ({r},{s},{t}) (deviation {:.3e}); recursiveness is not expected",
            strong_tc.max_violation
        )
    });
    let mut tr = Tracker::new("recursiveness", tol);
    for (i, x) in samples.iter().enumerate() {
        let inner = price(family, space, s, t, x)?.value;
        let nested = price(family, space, r, t, &inner)?.value;
        let direct = price(family, space, r, t, x)?.value;
        tr.record_nodes(tree, &nested.zip_with(&direct, |a, b| (a - b).abs()), || json!({"sample": i}));
    }
    Ok(RecursiveReport {
        recursive: tr.finish(),
        strong_tc,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generate::{random_tree, random_variable, RandomTreeSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[test]
    fn entropic_linear_price_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let tree = Arc::new(random_tree(&mut rng, RandomTreeSpec { steps: 2, ..Default::default() }));
        let fam = RiskFamily::entropic(tree.clone(), 1.0).unwrap();
        let xs: Vec<_> = (0..4).map(|_| random_variable(&mut rng, &tree, 2, 1.0)).collect();
        for out in check_price_operator(&fam, &StrategySpace::Linear, 0, 2, &xs, 1e-7).unwrap() {
            assert!(out.pass, "{out:?}");
        }
        let rep = check_recursive(&fam, &StrategySpace::Linear, 0, 1, 2, &xs, 1e-6).unwrap();
        assert!(rep.recursive.pass && rep.warning.is_none(), "{rep:?}");
    }
}
