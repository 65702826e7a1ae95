use serde::Serialize;

use super::schedule::DeltaSchedule;
use crate::error::Result;
use crate::space::{DensityChange, NodeId, NodeVariable, ScenarioTree};

/// Maximizer of `sum p_i (1 + h_i) x_i` over
/// `{h : sum p_i h_i = 0, sum p_i h_i^2 <= delta^2, h_i >= -1}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeSolution {
    pub value: f64,
    pub h: Vec<f64>,
    /// Whether any `h_i = -1` is pinned at the optimum.
    pub binding: bool,
    /// Number of pinning passes after the closed form.
    pub passes: usize,
}

/// Per-node no-good-deal upper bound. `p` are conditional probabilities
/// (summing to one), `x` the claim values on the same states.
pub fn solve_node(p: &[f64], x: &[f64], delta: f64) -> NodeSolution {
    let n = p.len();
    assert_eq!(n, x.len());
    let mean: f64 = p.iter().zip(x).map(|(p, x)| p * x).sum();
    // a conditionally constant claim is priced at face value
    if x.iter().all(|&v| v == x[0]) || delta == 0.0 {
        let value = if x.iter().all(|&v| v == x[0]) { x[0] } else { mean };
        return NodeSolution { value, h: vec![0.0; n], binding: false, passes: 0 };
    }
    let mut pinned = vec![false; n];
    let mut h = vec![0.0; n];
    let mut passes = 0;
    loop {
        let (mut p_i, mut p_j, mut m_j) = (0.0, 0.0, 0.0);
        for k in 0..n {
            if pinned[k] {
                p_i += p[k];
            } else {
                p_j += p[k];
                m_j += p[k] * x[k];
            }
        }
        m_j /= p_j;
        let first = (0..n).find(|&k| !pinned[k]).unwrap();
        // keep a conditionally constant free part exact: rounding in the mean
        // would otherwise turn into a huge slope
        let flat = (0..n).all(|k| pinned[k] || x[k] == x[first]);
        if flat {
            m_j = x[first];
        }
        let v_j: f64 = if flat {
            0.0
        } else {
            (0..n).filter(|&k| !pinned[k]).map(|k| p[k] * (x[k] - m_j).powi(2)).sum()
        };
        // the pinned mass costs p_i + p_i^2/p_j = p_i/p_j of the variance budget
        let a = p_i / p_j;
        let budget = (delta * delta - a).max(0.0);
        let slope = if v_j > 0.0 { (budget / v_j).sqrt() } else { 0.0 };
        let mut violated = false;
        for k in 0..n {
            h[k] = if pinned[k] { -1.0 } else { a + slope * (x[k] - m_j) };
            if h[k] < -1.0 {
                violated = true;
            }
        }
        if !violated {
            break;
        }
        for k in 0..n {
            if h[k] < -1.0 {
                pinned[k] = true;
            }
        }
        passes += 1;
    }
    let value = (0..n).filter(|&k| !pinned[k]).map(|k| p[k] * (1.0 + h[k]) * x[k]).sum();
    NodeSolution { value, h, binding: passes > 0, passes }
}

/// `M_st(X)` or `m_st(X)` per `s`-node, with the optimal density deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct NgdBound {
    pub delta: f64,
    pub value: NodeVariable,
    /// Optimal `h` on the level of the claim.
    pub h: NodeVariable,
    pub binding: Vec<bool>,
    pub passes: Vec<usize>,
}

/// Conditional probabilities of the `t`-descendants of `node`.
pub(crate) fn cond_probs(tree: &ScenarioTree, node: NodeId, t: usize) -> Vec<f64> {
    tree.subtree(node, t).leaf_probs()
}

/// `M_st(X) = ess sup over Q in Q_st of E_Q[X | F_s]`.
pub fn ngd_upper(tree: &ScenarioTree, x: &NodeVariable, s: usize, schedule: &DeltaSchedule) -> Result<NgdBound> {
    let t = x.level;
    tree.check_levels(s, t)?;
    let delta = schedule.delta(s, t);
    let mut value = NodeVariable::zeros(tree, s);
    let mut h = NodeVariable::zeros(tree, t);
    let (mut binding, mut passes) = (Vec::new(), Vec::new());
    for (pos, &n) in tree.nodes_at(s).iter().enumerate() {
        let span = tree.span(n, t);
        let sol = solve_node(&cond_probs(tree, n, t), &x.values[span.clone()], delta);
        value.values[pos] = sol.value;
        h.values[span].copy_from_slice(&sol.h);
        binding.push(sol.binding);
        passes.push(sol.passes);
    }
    Ok(NgdBound { delta, value, h, binding, passes })
}

/// `m_st(X) = -M_st(-X)`.
pub fn ngd_lower(tree: &ScenarioTree, x: &NodeVariable, s: usize, schedule: &DeltaSchedule) -> Result<NgdBound> {
    let mut b = ngd_upper(tree, &-x, s, schedule)?;
    b.value = -&b.value;
    Ok(b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipRow {
    pub node: NodeId,
    pub member: bool,
    /// `E[h^2 | F_s]`
    pub second_moment: f64,
    /// `delta^2 - E[h^2 | F_s]`
    pub slack: f64,
    /// `E[h | F_s]`, zero for a valid density.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Membership {
    pub delta: f64,
    pub member: bool,
    pub rows: Vec<MembershipRow>,
}

/// Membership of `Q` (its part on `(s, t]`) in the no-good-deal set `Q_st`.
pub fn ngd_membership(
    tree: &ScenarioTree,
    q: &DensityChange,
    s: usize,
    t: usize,
    schedule: &DeltaSchedule,
) -> Result<Membership> {
    tree.check_levels(s, t)?;
    q.validate(tree, crate::space::INPUT_TOL)?;
    let q = q.restrict(tree, s, t);
    let delta = schedule.delta(s, t);
    let mut rows = Vec::new();
    for &n in tree.nodes_at(s) {
        let sub = tree.subtree(n, t);
        let p = sub.leaf_probs();
        let qp = q.leaf_probs(&sub);
        let (mut m1, mut m2) = (0.0, 0.0);
        for (pi, qi) in p.iter().zip(&qp) {
            let h = qi / pi - 1.0;
            m1 += pi * h;
            m2 += pi * h * h;
        }
        let slack = delta * delta - m2;
        rows.push(MembershipRow {
            node: n,
            member: slack >= -1e-12,
            second_moment: m2,
            slack,
            residual: m1,
        });
    }
    Ok(Membership {
        delta,
        member: rows.iter().all(|r| r.member),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generate::binomial_tree;
    use std::collections::BTreeMap;

    #[test]
    fn worked_nodes() {
        let sol = solve_node(&[0.5, 0.5], &[2.0, 0.0], 0.5);
        assert!((sol.value - 1.5).abs() < 1e-15 && !sol.binding);
        let sol = solve_node(&[0.5, 0.5], &[0.0, 2.0], 2.0);
        assert!((sol.value - 2.0).abs() < 1e-15 && sol.binding);
        assert_eq!(sol.h, vec![-1.0, 1.0]);
        let sol = solve_node(&[0.2, 0.3, 0.5], &[1.25; 3], 3.0);
        assert_eq!(sol.value, 1.25);
    }

    #[test]
    fn bounds_and_membership_on_binomial() {
        let tree = binomial_tree(1, 0.5, 1.0, 1.2, 0.9);
        let sched = DeltaSchedule::from_table(&BTreeMap::from([((0, 1), 0.5)]), 1).unwrap();
        let x = NodeVariable::new(&tree, 1, vec![2.0, 0.0]).unwrap();
        let up = ngd_upper(&tree, &x, 0, &sched).unwrap();
        let lo = ngd_lower(&tree, &x, 0, &sched).unwrap();
        assert!((up.value.values[0] - 1.5).abs() < 1e-15);
        assert!((lo.value.values[0] - 0.5).abs() < 1e-15);

        let q = DensityChange::from_conditionals(&tree, 0, 1, |_| vec![0.75, 0.25]).unwrap();
        let m = ngd_membership(&tree, &q, 0, 1, &sched).unwrap();
        assert!(m.member && (m.rows[0].second_moment - 0.25).abs() < 1e-15);
        let tight = DeltaSchedule::from_table(&BTreeMap::from([((0, 1), 0.49)]), 1).unwrap();
        assert!(!ngd_membership(&tree, &q, 0, 1, &tight).unwrap().member);
        let p = DensityChange::reference(&tree, 0, 1);
        let m = ngd_membership(&tree, &p, 0, 1, &tight).unwrap();
        assert!(m.member && m.rows[0].slack == 0.49 * 0.49);
    }
}
