use serde::Serialize;

use super::strategy::{gains, Strategy, StrategySpace};
use crate::error::{Error, Result};
use crate::lp::{Cmp, Lp, LpOutcome};
use crate::space::{NodeVariable, ScenarioTree};

/// `g = g1 + g2` with `g1` feasible over `(r, s]` and `g2` over `(s, t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSplit {
    pub theta: Strategy,
    /// Lower bound of `Y_st(theta)` used in the split (at most 0).
    pub m: f64,
    pub g1: NodeVariable,
    pub g2: NodeVariable,
    pub report: SplitReport,
}

/// Slack of the three properties of the split; all are `<= 0` up to rounding when it is valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitReport {
    /// `max(g1 - Y_rs(theta))`
    pub first_excess: f64,
    /// `max(g2 - Y_st(theta))`
    pub second_excess: f64,
    /// `max |g - g1 - g2|`
    pub sum_error: f64,
}

impl SplitReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.first_excess <= tol && self.second_excess <= tol && self.sum_error <= tol
    }
}

/// Split a claim `g` (at level `t`) dominated by gains over `(r, t]` into
/// `g1 = min(Y_rs(theta), ||g||_inf - M)` and `g2 = g - g1`, where
/// `M = min(0, min Y_st(theta))`.
///
/// Without a witness one is found by linear programming.
pub fn decompose_gain(
    tree: &ScenarioTree,
    space: &StrategySpace,
    g: &NodeVariable,
    r: usize,
    s: usize,
    witness: Option<&Strategy>,
) -> Result<GainSplit> {
    let t = g.level;
    tree.check_levels(r, s)?;
    tree.check_levels(s, t)?;
    space.validate(tree)?;
    let theta = match witness {
        Some(th) => th.clone(),
        None => find_witness(tree, space, g, r)?,
    };
    if !theta.is_admissible(space) {
        return Err(Error::InfeasibleClaim("witness is outside the strategy space".into()));
    }
    let y_rt = gains(tree, &theta, r, t)?;
    let slack = g.values.iter().zip(&y_rt.values).fold(f64::NEG_INFINITY, |m, (a, b)| m.max(a - b));
    if slack > 1e-9 {
        return Err(Error::InfeasibleClaim(format!("witness gains fall short by {slack:.3e}")));
    }
    let y_rs = gains(tree, &theta, r, s)?;
    let y_st = gains(tree, &theta, s, t)?;
    let m = y_st.values.iter().cloned().fold(0.0, f64::min);
    let cap = g.max_abs() - m;
    let g1 = y_rs.map(|v| v.min(cap));
    let g2 = g - &g1.lift(tree, t);
    let sum = &g1.lift(tree, t) + &g2;
    let report = SplitReport {
        first_excess: (&g1 - &y_rs).values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        second_excess: (&g2 - &y_st).values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        sum_error: sum.max_abs_diff(g),
    };
    Ok(GainSplit { theta, m, g1, g2, report })
}

/// A strategy in `space` with `Y_rt(theta) >= g`, by LP.
pub fn find_witness(tree: &ScenarioTree, space: &StrategySpace, g: &NodeVariable, r: usize) -> Result<Strategy> {
    let t = g.level;
    tree.check_levels(r, t)?;
    let d = tree.dim();
    let (lo, hi) = space.bounds(d);
    let mut lp = Lp::minimize();
    // one block of d variables per node in levels r..t
    let mut index = vec![usize::MAX; tree.len()];
    for level in r..t {
        for &n in tree.nodes_at(level) {
            index[n] = lp.var(0.0, lo[0], hi[0]);
            for a in 1..d {
                lp.var(0.0, lo[a], hi[a]);
            }
        }
    }
    for (pos, &leaf) in tree.nodes_at(t).iter().enumerate() {
        let mut terms = Vec::new();
        let mut c = leaf;
        while tree.level(c) > r {
            let p = tree.parent(c).expect("below level r");
            for a in 0..d {
                terms.push((index[p] + a, tree.assets(c)[a] - tree.assets(p)[a]));
            }
            c = p;
        }
        lp.row(terms, Cmp::Ge, g.values[pos]);
    }
    match lp.solve()? {
        LpOutcome::Optimal { values, .. } => Ok(Strategy::from_fn(tree, |n| {
            if index[n] == usize::MAX {
                vec![0.0; d]
            } else {
                values[index[n]..index[n] + d].to_vec()
            }
        })),
        LpOutcome::Infeasible => Err(Error::InfeasibleClaim(format!(
            "no strategy over ({r},{t}] dominates the claim"
        ))),
        LpOutcome::Unbounded => Err(Error::Lp("feasibility LP has no objective".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generate::{random_tree, RandomTreeSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_gain_zero_strategy() {
        let tree = random_tree(&mut ChaCha8Rng::seed_from_u64(5), RandomTreeSpec::default());
        let g = NodeVariable::zeros(&tree, 3);
        let split = decompose_gain(&tree, &StrategySpace::Zero, &g, 0, 1, None).unwrap();
        assert_eq!(split.m, 0.0);
        assert!(split.g1.values.iter().all(|&v| v == 0.0));
        assert!(split.report.holds(1e-12));
    }

    #[test]
    fn random_feasible_claims_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let tree = random_tree(&mut rng, RandomTreeSpec::default());
            let theta = Strategy::from_fn(&tree, |_| vec![rng.random_range(-3.0..3.0)]);
            let y = gains(&tree, &theta, 0, 3).unwrap();
            let g = y.map(|v| v - 0.5);
            let split = decompose_gain(&tree, &StrategySpace::Linear, &g, 0, 2, None).unwrap();
            assert!(split.report.holds(1e-12), "{:?}", split.report);
            let given = decompose_gain(&tree, &StrategySpace::Linear, &y, 0, 1, Some(&theta)).unwrap();
            assert!(given.report.holds(1e-12), "{:?}", given.report);
        }
    }

    #[test]
    fn infeasible_claims_are_reported() {
        let tree = random_tree(&mut ChaCha8Rng::seed_from_u64(2), RandomTreeSpec::default());
        let g = NodeVariable::constant(&tree, 3, 1.0);
        assert!(matches!(
            decompose_gain(&tree, &StrategySpace::Linear, &g, 0, 1, None),
            Err(Error::InfeasibleClaim(_))
        ));
    }
}
