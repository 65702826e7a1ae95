use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::family::LocalRisk;
use crate::error::{Error, Result};
use crate::lp::{Cmp, Lp, LpOutcome};
use crate::space::{DensityChange, DensityChangeJson, LocalTree, NodeId, NodeVariable, ScenarioTree, ARITH_TOL};

/// One generating measure: one-step density ratios over the whole horizon and
/// a local penalty per node, charged on the step from that node to its children.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGenerator {
    pub density: DensityChange,
    pub penalty: Vec<f64>,
}

/// `rho_st(X) = max_Q E_Q[-X | F_s] - alpha_st(Q)` over a finite generator set.
///
/// With `pasting` the maximum runs over every measure obtained by choosing a
/// generator independently at each node, with penalties added along the path
/// (a cocycle by construction). Without it only the listed generators are used
/// as whole measures, which is not stable under pasting and in general not
/// strongly time-consistent.
#[derive(Debug, Clone, PartialEq)]
pub struct DualFamily {
    pub generators: Vec<DualGenerator>,
    pub pasting: bool,
}

/// JSON form of a [`DualFamily`]; missing penalties are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualFamilyJson {
    pub generators: Vec<DensityChangeJson>,
    #[serde(default)]
    pub penalties: Vec<BTreeMap<NodeId, f64>>,
    #[serde(default = "yes")]
    pub pasting: bool,
}

fn yes() -> bool {
    true
}

impl DualFamily {
    pub fn new(tree: &ScenarioTree, generators: Vec<DualGenerator>, pasting: bool) -> Result<Self> {
        let fam = Self { generators, pasting };
        fam.validate(tree)?;
        Ok(fam)
    }

    /// A family whose only generator is P with zero penalty (`rho = E[-X | F_s]`).
    pub fn reference(tree: &ScenarioTree) -> Self {
        Self {
            generators: vec![DualGenerator {
                density: DensityChange::reference(tree, 0, tree.horizon()),
                penalty: vec![0.0; tree.len()],
            }],
            pasting: true,
        }
    }

    pub fn from_json(tree: &ScenarioTree, json: &DualFamilyJson) -> Result<Self> {
        if json.penalties.len() > json.generators.len() {
            return Err(Error::InvalidFamily("more penalty maps than generators".into()));
        }
        let mut generators = Vec::with_capacity(json.generators.len());
        for (j, g) in json.generators.iter().enumerate() {
            let density = DensityChange::from_json(tree, g)?;
            let mut penalty = vec![0.0; tree.len()];
            if let Some(map) = json.penalties.get(j) {
                for (&n, &a) in map {
                    if n >= tree.len() {
                        return Err(Error::InvalidFamily(format!("penalty for unknown node {n}")));
                    }
                    penalty[n] = a;
                }
            }
            generators.push(DualGenerator { density, penalty });
        }
        Self::new(tree, generators, json.pasting)
    }

    pub fn to_json(&self, tree: &ScenarioTree) -> DualFamilyJson {
        DualFamilyJson {
            generators: self.generators.iter().map(|g| g.density.to_json(tree)).collect(),
            penalties: self
                .generators
                .iter()
                .map(|g| {
                    g.penalty
                        .iter()
                        .enumerate()
                        .filter(|(_, &a)| a != 0.0)
                        .map(|(n, &a)| (n, a))
                        .collect()
                })
                .collect(),
            pasting: self.pasting,
        }
    }

    pub fn validate(&self, tree: &ScenarioTree) -> Result<()> {
        if self.generators.is_empty() {
            return Err(Error::EmptyFamily);
        }
        for (j, g) in self.generators.iter().enumerate() {
            if g.density.from_level() != 0 || g.density.to_level() != tree.horizon() {
                return Err(Error::InvalidFamily(format!(
                    "generator {j} must act on (0,{}], got ({},{}]",
                    tree.horizon(),
                    g.density.from_level(),
                    g.density.to_level()
                )));
            }
            g.density.validate(tree, ARITH_TOL)?;
            if g.penalty.len() != tree.len() || g.penalty.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidFamily(format!(
                    "generator {j} needs one finite penalty per node"
                )));
            }
        }
        Ok(())
    }

    /// The penalty generator `j` carries on `(s, t]` when used as a whole
    /// measure: local penalties summed along its paths.
    pub fn declared_penalty(&self, tree: &ScenarioTree, j: usize, s: usize, t: usize) -> Result<NodeVariable> {
        tree.check_levels(s, t)?;
        let g = self.generators.get(j).ok_or(Error::EmptyFamily)?;
        let mut next = NodeVariable::zeros(tree, t);
        for level in (s..t).rev() {
            let values = tree
                .nodes_at(level)
                .iter()
                .map(|&n| {
                    g.penalty[n]
                        + tree
                            .children(n)
                            .iter()
                            .map(|&c| tree.prob(c) * g.density.ratio(c) * next.get(tree, c))
                            .sum::<f64>()
                })
                .collect();
            next = NodeVariable { level, values };
        }
        Ok(next)
    }

    pub(crate) fn eval_local(&self, sub: &LocalTree, leaves: &[f64]) -> LocalRisk {
        if self.pasting {
            self.eval_pasted(sub, leaves)
        } else {
            self.eval_whole(sub, leaves)
        }
    }

    fn eval_pasted(&self, sub: &LocalTree, leaves: &[f64]) -> LocalRisk {
        let n = sub.nodes.len();
        let mut v = vec![0.0; n];
        let mut choice = vec![0usize; n];
        for (i, &x) in sub.leaves().zip(leaves) {
            v[i] = -x;
        }
        for i in sub.internal().rev() {
            let node = &sub.nodes[i];
            let mut best = f64::NEG_INFINITY;
            for (j, g) in self.generators.iter().enumerate() {
                let val = node
                    .children
                    .clone()
                    .map(|c| sub.nodes[c].prob * g.density.ratio(sub.nodes[c].global) * v[c])
                    .sum::<f64>()
                    - g.penalty[node.global];
                if val > best {
                    best = val;
                    choice[i] = j;
                }
            }
            v[i] = best;
        }
        let mut w = vec![0.0; n];
        w[0] = 1.0;
        for i in sub.internal() {
            let g = &self.generators[choice[i]];
            for c in sub.nodes[i].children.clone() {
                w[c] = w[i] * sub.nodes[c].prob * g.density.ratio(sub.nodes[c].global);
            }
        }
        LocalRisk {
            value: v[0],
            weights: w[sub.leaves()].to_vec(),
        }
    }

    fn eval_whole(&self, sub: &LocalTree, leaves: &[f64]) -> LocalRisk {
        let mut best: Option<LocalRisk> = None;
        for g in &self.generators {
            let q = g.density.leaf_probs(sub);
            let value = -q.iter().zip(leaves).map(|(q, x)| q * x).sum::<f64>() - subtree_penalty(g, sub);
            if best.as_ref().is_none_or(|b| value > b.value) {
                best = Some(LocalRisk { value, weights: q });
            }
        }
        best.expect("family is non-empty")
    }

    /// Exact minimal penalty of `q` at every atom of level `s`, by linear
    /// programming over the generators; `None` marks an infinite penalty.
    pub(crate) fn minimal_penalty(
        &self,
        tree: &ScenarioTree,
        s: usize,
        t: usize,
        q: &DensityChange,
    ) -> Result<Vec<Option<f64>>> {
        if self.pasting {
            // one-step hull penalties summed by the cocycle rule
            let mut next: Vec<Option<f64>> = vec![Some(0.0); tree.width(t)];
            for level in (s..t).rev() {
                let mut cur = Vec::with_capacity(tree.width(level));
                for &n in tree.nodes_at(level) {
                    let kids = tree.children(n);
                    let target: Vec<f64> = kids.iter().map(|&c| tree.prob(c) * q.ratio(c)).collect();
                    let columns: Vec<Vec<f64>> = self
                        .generators
                        .iter()
                        .map(|g| kids.iter().map(|&c| tree.prob(c) * g.density.ratio(c)).collect())
                        .collect();
                    let costs: Vec<f64> = self.generators.iter().map(|g| g.penalty[n]).collect();
                    let local = hull_penalty(&columns, &costs, &target)?;
                    let mut total = local;
                    for (&c, &qc) in kids.iter().zip(&target) {
                        if qc == 0.0 {
                            continue;
                        }
                        total = match (total, next[tree.position(c)]) {
                            (Some(a), Some(b)) => Some(a + qc * b),
                            _ => None,
                        };
                    }
                    cur.push(total);
                }
                next = cur;
            }
            Ok(next)
        } else {
            let mut out = Vec::with_capacity(tree.width(s));
            for &n in tree.nodes_at(s) {
                let sub = tree.subtree(n, t);
                let target = q.leaf_probs(&sub);
                let columns: Vec<Vec<f64>> = self.generators.iter().map(|g| g.density.leaf_probs(&sub)).collect();
                let costs: Vec<f64> = self.generators.iter().map(|g| subtree_penalty(g, &sub)).collect();
                out.push(hull_penalty(&columns, &costs, &target)?);
            }
            Ok(out)
        }
    }
}

/// Penalty of generator `g` accumulated over a local tree.
fn subtree_penalty(g: &DualGenerator, sub: &LocalTree) -> f64 {
    let mut acc = vec![0.0; sub.nodes.len()];
    for i in sub.internal().rev() {
        let node = &sub.nodes[i];
        acc[i] = g.penalty[node.global]
            + node
                .children
                .clone()
                .map(|c| sub.nodes[c].prob * g.density.ratio(sub.nodes[c].global) * acc[c])
                .sum::<f64>();
    }
    acc[0]
}

/// `min sum_j l_j c_j` over convex weights with `sum_j l_j col_j = target`.
fn hull_penalty(columns: &[Vec<f64>], costs: &[f64], target: &[f64]) -> Result<Option<f64>> {
    let mut lp = Lp::minimize();
    let lambda: Vec<usize> = costs.iter().map(|&c| lp.var(c, 0.0, f64::INFINITY)).collect();
    lp.row(lambda.iter().map(|&l| (l, 1.0)).collect(), Cmp::Eq, 1.0);
    for (i, &q) in target.iter().enumerate() {
        lp.row(
            lambda.iter().zip(columns).map(|(&l, col)| (l, col[i])).collect(),
            Cmp::Eq,
            q,
        );
    }
    match lp.solve()? {
        LpOutcome::Optimal { objective, .. } => Ok(Some(objective)),
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::Lp("penalty LP cannot be unbounded".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{DynamicRisk, RiskFamily};
    use crate::space::generate::binomial_tree;
    use std::sync::Arc;

    fn two_generators(tree: &ScenarioTree, pasting: bool) -> DualFamily {
        let up = DensityChange::from_conditionals(tree, 0, tree.horizon(), |_| vec![0.75, 0.25]).unwrap();
        let down = DensityChange::from_conditionals(tree, 0, tree.horizon(), |_| vec![0.25, 0.75]).unwrap();
        DualFamily::new(
            tree,
            vec![
                DualGenerator { density: up, penalty: vec![0.1; tree.len()] },
                DualGenerator { density: down, penalty: vec![0.0; tree.len()] },
            ],
            pasting,
        )
        .unwrap()
    }

    #[test]
    fn one_step_max_of_affine() {
        let tree = Arc::new(binomial_tree(1, 0.5, 1.0, 1.1, 0.9));
        let fam = RiskFamily::dual(tree.clone(), two_generators(&tree, true)).unwrap();
        let x = NodeVariable { level: 1, values: vec![-1.0, 1.0] };
        // up: 0.75 - 0.25 - 0.1 = 0.4; down: 0.25 - 0.75 = -0.5
        assert!((fam.rho(0, 1, &x).unwrap().values[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn pasting_dominates_whole_measures() {
        let tree = Arc::new(binomial_tree(2, 0.5, 1.0, 1.1, 0.9));
        let pasted = RiskFamily::dual(tree.clone(), two_generators(&tree, true)).unwrap();
        let whole = RiskFamily::dual(tree.clone(), two_generators(&tree, false)).unwrap();
        // worst case switches direction between the two level-1 nodes
        let x = NodeVariable { level: 2, values: vec![-1.0, 1.0, 1.0, -1.0] };
        let a = pasted.rho(0, 2, &x).unwrap().values[0];
        let b = whole.rho(0, 2, &x).unwrap().values[0];
        assert!(a > b + 0.1, "{a} vs {b}");
    }

    #[test]
    fn declared_penalty_sums_along_paths() {
        let tree = binomial_tree(2, 0.5, 1.0, 1.1, 0.9);
        let fam = two_generators(&tree, true);
        let a = fam.declared_penalty(&tree, 0, 0, 2).unwrap();
        assert!((a.values[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn exact_penalty_of_generators_and_mixtures() {
        let tree = binomial_tree(2, 0.5, 1.0, 1.1, 0.9);
        for pasting in [true, false] {
            let fam = two_generators(&tree, pasting);
            let up = &fam.generators[0].density;
            let got = fam.minimal_penalty(&tree, 0, 2, up).unwrap();
            assert!((got[0].unwrap() - 0.2).abs() < 1e-9);
            // P mixes the generators evenly at every node, which only pasting reaches
            let p = DensityChange::reference(&tree, 0, 2);
            let got = fam.minimal_penalty(&tree, 0, 2, &p).unwrap();
            if pasting {
                assert!((got[0].unwrap() - 0.1).abs() < 1e-9);
            } else {
                assert_eq!(got[0], None);
            }
            let outside = DensityChange::from_conditionals(&tree, 0, 2, |_| vec![0.9, 0.1]).unwrap();
            assert_eq!(fam.minimal_penalty(&tree, 0, 2, &outside).unwrap()[0], None);
        }
    }
}
