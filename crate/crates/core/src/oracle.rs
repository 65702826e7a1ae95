//! Slow brute-force references. Nothing here calls the main solvers; the
//! only shared piece is the risk family's own one-node evaluation, which is
//! the object under test.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::indifference::StrategySpace;
use crate::risk::{DynamicRisk, RiskFamily};
use crate::space::{DensityChange, NodeId, NodeVariable, ScenarioTree};

/// Probability of the path from the level-`s` ancestor of `leaf` down to
/// `leaf`, under Q when given.
fn path_prob(tree: &ScenarioTree, q: Option<&DensityChange>, leaf: NodeId, s: usize) -> (NodeId, f64) {
    let mut n = leaf;
    let mut prob = 1.0;
    while tree.level(n) > s {
        prob *= tree.prob(n) * q.map_or(1.0, |q| q.ratio(n));
        n = tree.parent(n).unwrap();
    }
    (n, prob)
}

/// Leaves at level `t` grouped by their level-`s` ancestor, with path probabilities.
fn paths(tree: &ScenarioTree, q: Option<&DensityChange>, s: usize, t: usize) -> BTreeMap<NodeId, Vec<(usize, f64)>> {
    let mut out: BTreeMap<NodeId, Vec<(usize, f64)>> = BTreeMap::new();
    for (pos, &leaf) in tree.nodes_at(t).iter().enumerate() {
        let (anc, prob) = path_prob(tree, q, leaf, s);
        out.entry(anc).or_default().push((pos, prob));
    }
    out
}

fn by_node(tree: &ScenarioTree, s: usize, mut f: impl FnMut(NodeId) -> f64) -> NodeVariable {
    NodeVariable {
        level: s,
        values: tree.nodes_at(s).iter().map(|&n| f(n)).collect(),
    }
}

/// `E_Q[X | F_s]` by summing over paths.
pub fn oracle_cond_expect(tree: &ScenarioTree, x: &NodeVariable, q: Option<&DensityChange>, s: usize) -> NodeVariable {
    let groups = paths(tree, q, s, x.level);
    by_node(tree, s, |n| groups[&n].iter().map(|&(pos, pr)| pr * x.values[pos]).sum())
}

/// Node-wise maximum by scanning every member.
pub fn oracle_ess_sup(family: &[NodeVariable]) -> Result<NodeVariable> {
    let first = family.first().ok_or(Error::EmptyFamily)?;
    let values = (0..first.values.len())
        .map(|i| family.iter().map(|v| v.values[i]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(NodeVariable {
        level: first.level,
        values,
    })
}

/// `(1/gamma) log E[exp(-gamma X) | F_s]` summed over paths.
pub fn oracle_entropic(tree: &ScenarioTree, gamma: f64, s: usize, x: &NodeVariable) -> NodeVariable {
    let groups = paths(tree, None, s, x.level);
    by_node(tree, s, |n| {
        let sum: f64 = groups[&n].iter().map(|&(pos, pr)| pr * (-gamma * x.values[pos]).exp()).sum();
        sum.ln() / gamma
    })
}

/// `E_Q[log dQ/dP | F_s]` over `(s, t]` from whole-path probabilities.
pub fn oracle_relative_entropy(tree: &ScenarioTree, q: &DensityChange, s: usize, t: usize) -> NodeVariable {
    let under_p = paths(tree, None, s, t);
    let under_q = paths(tree, Some(q), s, t);
    by_node(tree, s, |n| {
        under_p[&n]
            .iter()
            .zip(&under_q[&n])
            .map(|(&(_, p), &(_, qq))| if qq == 0.0 { 0.0 } else { qq * (qq / p).ln() })
            .sum()
    })
}

/// Grid specification for the strategy and claim scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    /// Points per dimension (at least 2).
    pub resolution: usize,
    /// Half width of the first box around the origin.
    pub half_width: f64,
    /// Shrink factor of the box between rounds.
    pub refine: f64,
    pub rounds: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            resolution: 21,
            half_width: 4.0,
            refine: 5.0,
            rounds: 6,
        }
    }
}

impl GridSpec {
    fn validate(&self, dims: usize) -> Result<()> {
        if self.resolution < 2 || !(self.half_width > 0.0) || !(self.refine > 1.0) || self.rounds == 0 {
            return Err(Error::InvalidGrid(format!("{self:?}")));
        }
        if (self.resolution as f64).powi(dims as i32) > 5e6 {
            return Err(Error::InvalidGrid(format!(
                "{} points per round in {dims} dimensions is too many",
                self.resolution
            )));
        }
        Ok(())
    }
}

/// Minimize `f` over a box grid with zoom rounds. Returns the best point,
/// its value, and whether the first round's minimum sat on an artificial
/// edge of the box.
fn grid_minimize(lo: &[f64], hi: &[f64], grid: &GridSpec, mut f: impl FnMut(&[f64]) -> f64) -> (Vec<f64>, f64, bool) {
    let k = lo.len();
    let mut center = vec![0.0; k];
    let mut width = grid.half_width;
    let mut best = (center.clone(), f(&center));
    let mut boundary = false;
    for round in 0..grid.rounds {
        let axes: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let (a, b) = ((center[i] - width).max(lo[i]), (center[i] + width).min(hi[i]));
                (0..grid.resolution)
                    .map(|j| a + (b - a) * j as f64 / (grid.resolution - 1) as f64)
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; k];
        let mut point = vec![0.0; k];
        let mut best_idx = None;
        loop {
            for i in 0..k {
                point[i] = axes[i][idx[i]];
            }
            let v = f(&point);
            if v < best.1 {
                best = (point.clone(), v);
                best_idx = Some(idx.clone());
            }
            // odometer increment
            let mut i = 0;
            while i < k {
                idx[i] += 1;
                if idx[i] < grid.resolution {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
            if i == k {
                break;
            }
        }
        if round == 0 {
            if let Some(bi) = &best_idx {
                boundary = (0..k).any(|i| {
                    (bi[i] == 0 && center[i] - width > lo[i]) || (bi[i] == grid.resolution - 1 && center[i] + width < hi[i])
                });
            }
        }
        center = best.0.clone();
        width /= grid.refine;
    }
    (best.0, best.1, boundary)
}

/// Strategy-grid price evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePrice {
    pub value: NodeVariable,
    pub inf_with_claim: NodeVariable,
    pub inf_without_claim: NodeVariable,
    /// Some first-round minimum sat on the grid edge: the grid may be too small.
    pub boundary: bool,
}

/// `inf_theta rho(Y(theta) - X) - inf_theta rho(Y(theta))` per `s`-node by
/// scanning the local strategy coefficients.
pub fn oracle_price_grid(
    family: &RiskFamily,
    space: &StrategySpace,
    s: usize,
    t: usize,
    x: &NodeVariable,
    grid: &GridSpec,
) -> Result<OraclePrice> {
    let tree = family.tree_arc().clone();
    let tree = tree.as_ref();
    tree.check_levels(s, t)?;
    space.validate(tree)?;
    let x = x.lift(tree, t);
    let d = tree.dim();
    let (blo, bhi) = space.bounds(d);
    let mut with = NodeVariable::zeros(tree, s);
    let mut without = NodeVariable::zeros(tree, s);
    let mut boundary = false;
    for (pos, &n) in tree.nodes_at(s).iter().enumerate() {
        let sub = tree.subtree(n, t);
        let leaves = tree.descendants(n, t);
        // one block of d coordinates per node strictly between s and t on the paths
        let mut slot: BTreeMap<NodeId, usize> = BTreeMap::new();
        for level in s..t {
            for &m in tree.descendants(n, level) {
                let next = slot.len() * d;
                slot.insert(m, next);
            }
        }
        let k = slot.len() * d;
        grid.validate(k)?;
        let lo: Vec<f64> = (0..k).map(|i| blo[i % d]).collect();
        let hi: Vec<f64> = (0..k).map(|i| bhi[i % d]).collect();
        let span = tree.span(n, t);
        let gain = |theta: &[f64], leaf: NodeId| -> f64 {
            let mut total = 0.0;
            let mut c = leaf;
            while tree.level(c) > s {
                let p = tree.parent(c).unwrap();
                for a in 0..d {
                    total += theta[slot[&p] + a] * (tree.assets(c)[a] - tree.assets(p)[a]);
                }
                c = p;
            }
            total
        };
        let scan = |claim: bool| -> Result<(f64, bool)> {
            let mut err = None;
            let (_, v, b) = grid_minimize(&lo, &hi, grid, |theta| {
                let pay: Vec<f64> = leaves
                    .iter()
                    .zip(span.clone())
                    .map(|(&l, i)| gain(theta, l) - if claim { x.values[i] } else { 0.0 })
                    .collect();
                match family.eval_local(&sub, &pay) {
                    Ok(r) => r.value,
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::INFINITY
                    }
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok((v, b)),
            }
        };
        let (v1, b1) = scan(true)?;
        let (v0, b0) = scan(false)?;
        with.values[pos] = v1;
        without.values[pos] = v0;
        boundary |= b1 || b0;
    }
    Ok(OraclePrice {
        value: &with - &without,
        inf_with_claim: with,
        inf_without_claim: without,
        boundary,
    })
}

/// Points `k / resolution` of the probability simplex on `n` states.
fn simplex_points(n: usize, resolution: usize, mut visit: impl FnMut(&[f64])) {
    fn rec(left: usize, slot: usize, n: usize, res: usize, cur: &mut Vec<f64>, visit: &mut dyn FnMut(&[f64])) {
        if slot + 1 == n {
            cur.push(left as f64 / res as f64);
            visit(cur);
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k as f64 / res as f64);
            rec(left - k, slot + 1, n, res, cur, visit);
            cur.pop();
        }
    }
    rec(resolution, 0, n, resolution, &mut Vec::with_capacity(n), &mut visit);
}

/// `max_Q (E_Q[-X | F_s] - alpha(Q))` over a simplex grid of conditional
/// leaf distributions. `penalty(node, q)` receives the `s`-node and Q's
/// probabilities of its `t`-descendants; it may return `+inf`. A lower
/// bound of the true value that converges under refinement.
pub fn oracle_rho_dual(
    tree: &ScenarioTree,
    penalty: &dyn Fn(NodeId, &[f64]) -> f64,
    s: usize,
    x: &NodeVariable,
    resolution: usize,
) -> Result<NodeVariable> {
    let t = x.level;
    tree.check_levels(s, t)?;
    if resolution == 0 {
        return Err(Error::InvalidGrid("simplex resolution must be positive".into()));
    }
    let mut values = Vec::new();
    for &n in tree.nodes_at(s) {
        let xs = &x.values[tree.span(n, t)];
        let mut best = f64::NEG_INFINITY;
        simplex_points(xs.len(), resolution, |q| {
            let a = penalty(n, q);
            if a.is_finite() {
                let v: f64 = q.iter().zip(xs).map(|(q, x)| -q * x).sum::<f64>() - a;
                best = best.max(v);
            }
        });
        if best == f64::NEG_INFINITY {
            return Err(Error::EmptyFamily);
        }
        values.push(best);
    }
    Ok(NodeVariable { level: s, values })
}

/// `sup_X (E_Q[-X | F_s] - rho_st(X))` by scanning claims on the
/// descendants of one node: a lower bound of the minimal penalty.
pub fn oracle_penalty_lower(
    risk: &dyn DynamicRisk,
    node: NodeId,
    t: usize,
    q: &[f64],
    grid: &GridSpec,
) -> Result<f64> {
    let tree = risk.tree();
    let sub = tree.subtree(node, t);
    let k = sub.n_leaves();
    grid.validate(k)?;
    let lo = vec![f64::NEG_INFINITY; k];
    let hi = vec![f64::INFINITY; k];
    let mut err = None;
    let (_, v, _) = grid_minimize(&lo, &hi, grid, |x| match risk.eval_local(&sub, x) {
        Ok(r) => r.value + q.iter().zip(x).map(|(q, x)| q * x).sum::<f64>(),
        Err(e) => {
            err.get_or_insert(e);
            f64::INFINITY
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(-v),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpOracle {
    pub value: f64,
    pub h: Vec<f64>,
    /// Number of pinned sets that produced a feasible candidate.
    pub feasible_sets: usize,
}

/// `max sum p_i (1+h_i) x_i` subject to `sum p h = 0`, `sum p h^2 <= delta^2`,
/// `h >= -1`, by trying every set of states pinned at `h = -1` and solving
/// the remaining ball problem in closed form.
pub fn oracle_qp(p: &[f64], x: &[f64], delta: f64) -> QpOracle {
    let n = p.len();
    assert!(n <= 20, "subset enumeration is limited to 20 states");
    let mut best = QpOracle {
        value: f64::NEG_INFINITY,
        h: vec![0.0; n],
        feasible_sets: 0,
    };
    for mask in 0u32..(1u32 << n) - 1 {
        let pinned = |i: usize| mask & (1 << i) != 0;
        let pi: f64 = (0..n).filter(|&i| pinned(i)).map(|i| p[i]).sum();
        let pj: f64 = (0..n).filter(|&i| !pinned(i)).map(|i| p[i]).sum();
        if pj <= 0.0 {
            continue;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !pinned(i)).collect();
        let constant = free.iter().all(|&i| x[i] == x[free[0]]);
        let mu = if constant {
            x[free[0]]
        } else {
            free.iter().map(|&i| p[i] * x[i]).sum::<f64>() / pj
        };
        let var: f64 = if constant {
            0.0
        } else {
            free.iter().map(|&i| p[i] * (x[i] - mu) * (x[i] - mu)).sum()
        };
        // mean condition fixes the level of h on the free states
        let level = pi / pj;
        let room = delta * delta - pi - level * level * pj;
        if room < -1e-15 {
            continue;
        }
        let slope = if var > 0.0 { (room.max(0.0) / var).sqrt() } else { 0.0 };
        let h: Vec<f64> = (0..n)
            .map(|i| if pinned(i) { -1.0 } else { level + slope * (x[i] - mu) })
            .collect();
        if h.iter().any(|&v| v < -1.0 - 1e-13) {
            continue;
        }
        best.feasible_sets += 1;
        let value: f64 = (0..n).map(|i| p[i] * (1.0 + h[i]) * x[i]).sum();
        if value > best.value {
            best.value = value;
            best.h = h;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generate::binomial_tree;
    use std::sync::Arc;

    #[test]
    fn worked_numbers() {
        let tree = binomial_tree(2, 0.5, 1.0, 2.0, 0.5);
        let x = NodeVariable::new(&tree, 2, vec![4.0, 1.0, 1.0, 0.25]).unwrap();
        assert_eq!(oracle_cond_expect(&tree, &x, None, 1).values, vec![2.5, 0.625]);
        assert_eq!(oracle_cond_expect(&tree, &x, None, 0).values, vec![1.5625]);

        let one = binomial_tree(1, 0.5, 1.0, 1.2, 0.9);
        let x = NodeVariable::new(&one, 1, vec![1.0, -1.0]).unwrap();
        assert!((oracle_entropic(&one, 1.0, 0, &x).values[0] - 1f64.cosh().ln()).abs() < 1e-15);

        assert!((oracle_qp(&[0.5, 0.5], &[2.0, 0.0], 0.5).value - 1.5).abs() < 1e-15);
        assert!((oracle_qp(&[0.5, 0.5], &[0.0, 2.0], 2.0).value - 2.0).abs() < 1e-15);
        assert!((oracle_qp(&[0.3, 0.7], &[1.0, 5.0], 0.0).value - 3.8).abs() < 1e-14);
    }

    #[test]
    fn entropic_penalty_net() {
        let tree = binomial_tree(1, 0.5, 1.0, 1.2, 0.9);
        let x = NodeVariable::new(&tree, 1, vec![1.0, -1.0]).unwrap();
        let kl = |_: NodeId, q: &[f64]| q.iter().map(|&q| if q == 0.0 { 0.0 } else { q * (2.0 * q).ln() }).sum::<f64>();
        let v = oracle_rho_dual(&tree, &kl, 0, &x, 200).unwrap().values[0];
        let exact = 1f64.cosh().ln();
        assert!(v <= exact + 1e-15 && exact - v < 1e-3);
    }

    #[test]
    fn grid_price_zero_space_is_exact() {
        let tree = Arc::new(binomial_tree(1, 0.5, 1.0, 1.2, 0.9));
        let fam = RiskFamily::entropic(tree.clone(), 1.0).unwrap();
        let x = NodeVariable::new(&tree, 1, vec![1.0, -1.0]).unwrap();
        let out = oracle_price_grid(&fam, &StrategySpace::Zero, 0, 1, &x, &GridSpec::default()).unwrap();
        assert!((out.value.values[0] - 1f64.cosh().ln()).abs() < 1e-15);
        assert!(!out.boundary);
    }
}
