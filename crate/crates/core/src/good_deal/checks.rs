use serde::Serialize;

use super::bounds::{ngd_lower, ngd_membership, ngd_upper};
use super::schedule::DeltaSchedule;
use crate::error::{Error, Result};
use crate::indifference::{price, StrategySpace};
use crate::lp::{Cmp, Lp, LpOutcome};
use crate::risk::{minimal_penalty, RiskFamily};
use crate::space::{DensityChange, NodeId, NodeVariable, ScenarioTree};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichRow {
    pub sample: usize,
    pub node: NodeId,
    pub m: f64,
    pub x: f64,
    #[serde(rename = "M")]
    pub upper: f64,
    /// `max(0, m - x, x - M)`
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichReport {
    pub delta: f64,
    pub pass: bool,
    pub max_violation: f64,
    pub rows: Vec<SandwichRow>,
}

/// `m_st(X) <= x_st(X) <= M_st(X)` node-wise for every sample.
pub fn check_sandwich(
    family: &RiskFamily,
    space: &StrategySpace,
    s: usize,
    t: usize,
    schedule: &DeltaSchedule,
    samples: &[NodeVariable],
    tol: f64,
) -> Result<SandwichReport> {
    let tree = family.tree_arc().clone();
    let tree = tree.as_ref();
    let mut rows = Vec::new();
    for (i, x) in samples.iter().enumerate() {
        let x = x.lift(tree, t);
        let price = price(family, space, s, t, &x)?.value;
        let lo = ngd_lower(tree, &x, s, schedule)?.value;
        let hi = ngd_upper(tree, &x, s, schedule)?.value;
        for (pos, &node) in tree.nodes_at(s).iter().enumerate() {
            let (m, v, big) = (lo.values[pos], price.values[pos], hi.values[pos]);
            rows.push(SandwichRow {
                sample: i,
                node,
                m,
                x: v,
                upper: big,
                violation: (m - v).max(v - big).max(0.0),
            });
        }
    }
    let max_violation = rows.iter().map(|r| r.violation).fold(0.0, f64::max);
    Ok(SandwichReport {
        delta: schedule.delta(s, t),
        pass: max_violation <= tol,
        max_violation,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeVerdict {
    pub probe: usize,
    pub finite_penalty: bool,
    /// Bounded expected gains: no cone direction has positive drift under the probe.
    pub in_i: bool,
    /// Largest positive drift over cone directions (0 when in `I_st`).
    pub max_drift: f64,
    pub in_q: bool,
    /// Smallest `delta^2 - E[h^2 | F_s]` over the `s`-nodes.
    pub q_slack: f64,
    /// The probe lies in `(Q_st and I_st)` or outside `I_st`.
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremAbReport {
    pub delta: f64,
    /// The risk reduction available by trading is bounded.
    pub a1: bool,
    /// The sandwich holds on every claim.
    pub a2: bool,
    pub a2_max_violation: Option<f64>,
    pub a_holds: bool,
    pub probes: Vec<ProbeVerdict>,
    pub b_holds: bool,
    pub agree: bool,
}

/// Evaluate both sides of the characterization: A on the `claims`, B on the
/// `probes` (measures on `(s, t]`).
#[allow(clippy::too_many_arguments)]
pub fn check_theorem_ab(
    family: &RiskFamily,
    space: &StrategySpace,
    s: usize,
    t: usize,
    schedule: &DeltaSchedule,
    claims: &[NodeVariable],
    probes: &[DensityChange],
    tol: f64,
) -> Result<TheoremAbReport> {
    let tree = family.tree_arc().clone();
    let tree = tree.as_ref();
    let a1 = match price(family, space, s, t, &NodeVariable::zeros(tree, t)) {
        Ok(_) => true,
        Err(Error::UnboundedRiskReduction { .. }) => false,
        Err(e) => return Err(e),
    };
    let (a2, a2_max_violation) = if a1 {
        let rep = check_sandwich(family, space, s, t, schedule, claims, tol)?;
        (rep.pass, Some(rep.max_violation))
    } else {
        (false, None)
    };

    let d = tree.dim();
    let (lo, hi) = space.cone_bounds(d);
    let mut verdicts = Vec::new();
    for (i, q) in probes.iter().enumerate() {
        let q = q.restrict(tree, s, t);
        let finite_penalty = minimal_penalty(family, s, t, &q)?.is_finite();
        // drift E_R[dPi | node] at every node reached by R, against the cone
        let mut reach = vec![0.0; tree.len()];
        for &n in tree.nodes_at(s) {
            reach[n] = 1.0;
        }
        let mut max_drift = 0.0f64;
        for level in s..t {
            for &n in tree.nodes_at(level) {
                for &c in tree.children(n) {
                    reach[c] = reach[n] * q.cond_prob(tree, c);
                }
                if reach[n] == 0.0 {
                    continue;
                }
                for a in 0..d {
                    let drift: f64 = tree
                        .children(n)
                        .iter()
                        .map(|&c| q.cond_prob(tree, c) * (tree.assets(c)[a] - tree.assets(n)[a]))
                        .sum();
                    if hi[a] > 0.0 {
                        max_drift = max_drift.max(drift);
                    }
                    if lo[a] < 0.0 {
                        max_drift = max_drift.max(-drift);
                    }
                }
            }
        }
        let in_i = max_drift <= 1e-9;
        let m = ngd_membership(tree, &q, s, t, schedule)?;
        let q_slack = m.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
        verdicts.push(ProbeVerdict {
            probe: i,
            finite_penalty,
            in_i,
            max_drift,
            in_q: m.member,
            q_slack,
            ok: !finite_penalty || !in_i || m.member,
        });
    }
    let a_holds = a1 && a2;
    let b_holds = verdicts.iter().all(|v| v.ok);
    Ok(TheoremAbReport {
        delta: schedule.delta(s, t),
        a1,
        a2,
        a2_max_violation,
        a_holds,
        probes: verdicts,
        b_holds,
        agree: a_holds == b_holds,
    })
}

/// A one-step martingale measure for the assets on `(s, t]`, found node by
/// node by linear programming; `None` when some node admits arbitrage.
pub fn martingale_measure(tree: &ScenarioTree, s: usize, t: usize) -> Result<Option<DensityChange>> {
    tree.check_levels(s, t)?;
    let mut ratios = vec![1.0; tree.len()];
    for level in s..t {
        for &n in tree.nodes_at(level) {
            let kids = tree.children(n);
            let mut lp = Lp::minimize();
            let vars: Vec<usize> = kids.iter().map(|_| lp.var(0.0, 0.0, 1.0)).collect();
            lp.row(vars.iter().map(|&v| (v, 1.0)).collect(), Cmp::Eq, 1.0);
            for a in 0..tree.dim() {
                let row = vars
                    .iter()
                    .zip(kids)
                    .map(|(&v, &c)| (v, tree.assets(c)[a] - tree.assets(n)[a]))
                    .collect();
                lp.row(row, Cmp::Eq, 0.0);
            }
            match lp.solve()? {
                LpOutcome::Optimal { values, .. } => {
                    for (&c, q) in kids.iter().zip(values) {
                        ratios[c] = q.clamp(0.0, 1.0) / tree.prob(c);
                    }
                }
                _ => return Ok(None),
            }
        }
    }
    // renormalize away solver rounding before validation
    for level in s..t {
        for &n in tree.nodes_at(level) {
            let total: f64 = tree.children(n).iter().map(|&c| tree.prob(c) * ratios[c]).sum();
            for &c in tree.children(n) {
                ratios[c] /= total;
            }
        }
    }
    DensityChange::new(tree, s, t, ratios).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generate::binomial_tree;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    #[test]
    fn binomial_flip() {
        let tree = Arc::new(binomial_tree(1, 0.5, 1.0, 1.2, 0.9));
        let fam = RiskFamily::entropic(tree.clone(), 1.0).unwrap();
        let q_star = DensityChange::from_conditionals(&tree, 0, 1, |_| vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let claims = vec![
            NodeVariable::new(&tree, 1, vec![1.0, 0.0]).unwrap(),
            NodeVariable::new(&tree, 1, vec![0.0, 1.0]).unwrap(),
        ];
        for (delta, expect) in [(0.5, true), (0.3, false)] {
            let sched = DeltaSchedule::from_table(&BTreeMap::from([((0, 1), delta)]), 1).unwrap();
            let rep = check_theorem_ab(
                &fam,
                &StrategySpace::Linear,
                0,
                1,
                &sched,
                &claims,
                &[q_star.clone(), DensityChange::reference(&tree, 0, 1)],
                1e-7,
            )
            .unwrap();
            assert_eq!((rep.a_holds, rep.b_holds), (expect, expect), "{rep:?}");
            assert!(rep.probes[0].in_i && !rep.probes[1].in_i);
        }
        let found = martingale_measure(&tree, 0, 1).unwrap().unwrap();
        assert!((found.cond_prob(&tree, 1) - 1.0 / 3.0).abs() < 1e-12);
        let arb = binomial_tree(1, 0.5, 1.0, 1.2, 1.1);
        assert!(martingale_measure(&arb, 0, 1).unwrap().is_none());
    }
}
