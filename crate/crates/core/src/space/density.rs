use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tree::{LocalTree, NodeId, ScenarioTree, ARITH_TOL, INPUT_TOL};
use super::variable::NodeVariable;
use crate::error::{Error, Result};

/// A measure Q << P described by one-step density ratios.
///
/// `ratios[n]` is the ratio q/p on the transition from the parent of `n`
/// into `n`. Ratios of nodes outside `(from, to]` are 1, so Q agrees with P
/// on the atoms at `from` and conditionally after `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityChange {
    from: usize,
    to: usize,
    ratios: Vec<f64>,
}

/// JSON form: `{"from": s, "to": t, "ratios": {"node_id": r, ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityChangeJson {
    pub from: usize,
    pub to: usize,
    #[serde(default)]
    pub ratios: BTreeMap<NodeId, f64>,
}

impl DensityChange {
    /// The reference measure P, viewed as a change on `(from, to]`.
    pub fn reference(tree: &ScenarioTree, from: usize, to: usize) -> Self {
        Self {
            from,
            to,
            ratios: vec![1.0; tree.len()],
        }
    }

    /// Build from ratios indexed by node id.
    pub fn new(tree: &ScenarioTree, from: usize, to: usize, ratios: Vec<f64>) -> Result<Self> {
        tree.check_levels(from, to)?;
        if ratios.len() != tree.len() {
            return Err(Error::Config(format!(
                "density needs {} ratios, got {}",
                tree.len(),
                ratios.len()
            )));
        }
        let q = Self { from, to, ratios };
        q.validate(tree, INPUT_TOL)?;
        Ok(q)
    }

    /// Build from conditional probabilities: `cond(parent)` returns Q's
    /// transition probabilities to the children of `parent`, in child order.
    pub fn from_conditionals(
        tree: &ScenarioTree,
        from: usize,
        to: usize,
        mut cond: impl FnMut(NodeId) -> Vec<f64>,
    ) -> Result<Self> {
        tree.check_levels(from, to)?;
        let mut ratios = vec![1.0; tree.len()];
        for level in from..to {
            for &n in tree.nodes_at(level) {
                let q = cond(n);
                let kids = tree.children(n);
                if q.len() != kids.len() {
                    return Err(Error::InvalidDensity {
                        node: n,
                        reason: format!("expected {} probabilities, got {}", kids.len(), q.len()),
                    });
                }
                for (&c, &qc) in kids.iter().zip(&q) {
                    ratios[c] = qc / tree.prob(c);
                }
            }
        }
        Self::new(tree, from, to, ratios)
    }

    pub fn from_json(tree: &ScenarioTree, json: &DensityChangeJson) -> Result<Self> {
        let mut ratios = vec![1.0; tree.len()];
        for (&id, &r) in &json.ratios {
            if id >= tree.len() {
                return Err(Error::Config(format!("density lists unknown node {id}")));
            }
            ratios[id] = r;
        }
        Self::new(tree, json.from, json.to, ratios)
    }

    pub fn to_json(&self, tree: &ScenarioTree) -> DensityChangeJson {
        let ratios = (self.from + 1..=self.to)
            .flat_map(|k| tree.nodes_at(k).iter().copied())
            .map(|n| (n, self.ratios[n]))
            .collect();
        DensityChangeJson {
            from: self.from,
            to: self.to,
            ratios,
        }
    }

    pub fn from_level(&self) -> usize {
        self.from
    }

    pub fn to_level(&self) -> usize {
        self.to
    }

    pub fn ratio(&self, id: NodeId) -> f64 {
        self.ratios[id]
    }

    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    /// Q's conditional probability of moving from the parent into `id`.
    pub fn cond_prob(&self, tree: &ScenarioTree, id: NodeId) -> f64 {
        tree.prob(id) * self.ratios[id]
    }

    /// True when every ratio is strictly positive (Q equivalent to P).
    pub fn is_equivalent(&self) -> bool {
        self.ratios.iter().all(|&r| r > 0.0)
    }

    pub fn validate(&self, tree: &ScenarioTree, tol: f64) -> Result<()> {
        if self.ratios.len() != tree.len() {
            return Err(Error::Config("density built for a different tree".into()));
        }
        for (id, &r) in self.ratios.iter().enumerate() {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::InvalidDensity {
                    node: id,
                    reason: format!("ratio {r} must be finite and non-negative"),
                });
            }
            let level = tree.level(id);
            let inside = level > self.from && level <= self.to;
            if !inside && (r - 1.0).abs() > tol {
                return Err(Error::InvalidDensity {
                    node: id,
                    reason: format!("ratio {r} outside ({}, {}] must be 1", self.from, self.to),
                });
            }
        }
        for level in self.from..self.to {
            for &n in tree.nodes_at(level) {
                let total: f64 = tree
                    .children(n)
                    .iter()
                    .map(|&c| tree.prob(c) * self.ratios[c])
                    .sum();
                if (total - 1.0).abs() > tol {
                    return Err(Error::InvalidDensity {
                        node: n,
                        reason: format!("conditional mass {total}, expected 1"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Q's conditional probabilities of the leaves of a local tree.
    pub fn leaf_probs(&self, sub: &LocalTree) -> Vec<f64> {
        let mut path = vec![1.0; sub.nodes.len()];
        for (i, node) in sub.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                path[i] = path[p] * node.prob * self.ratios[node.global];
            }
        }
        path[sub.leaves()].to_vec()
    }

    /// `E_Q[X | F_s]` for `X` measurable at level `t >= s`.
    pub fn cond_expect(&self, tree: &ScenarioTree, x: &NodeVariable, s: usize) -> Result<NodeVariable> {
        cond_expect(tree, x, Some(self), s)
    }

    /// Paste `self` on `(r, s]` with `next` on `(s, t]`.
    pub fn compose(&self, next: &DensityChange) -> Result<DensityChange> {
        if self.to != next.from || self.ratios.len() != next.ratios.len() {
            return Err(Error::NonAdjacent {
                r: self.from,
                s: self.to,
                s2: next.from,
                t: next.to,
            });
        }
        // levels in (r,s] come from self, levels in (s,t] from next; the
        // other factor is 1 there, so the product picks the right one
        let ratios = self
            .ratios
            .iter()
            .zip(&next.ratios)
            .map(|(a, b)| a * b)
            .collect();
        Ok(DensityChange {
            from: self.from,
            to: next.to,
            ratios,
        })
    }

    /// Keep the ratios on `(from, to]` only.
    pub fn restrict(&self, tree: &ScenarioTree, from: usize, to: usize) -> DensityChange {
        let ratios = self
            .ratios
            .iter()
            .enumerate()
            .map(|(id, &r)| {
                let level = tree.level(id);
                if level > from && level <= to {
                    r
                } else {
                    1.0
                }
            })
            .collect();
        DensityChange { from, to, ratios }
    }

    /// Relative entropy `H(Q|P)` on `(from, to]`, conditional on each atom at `from`.
    pub fn relative_entropy(&self, tree: &ScenarioTree) -> NodeVariable {
        // backward recursion: H(n) = sum_c p_c r_c (log r_c + H(c)); 0 log 0 = 0
        let mut next = NodeVariable::zeros(tree, self.to);
        for level in (self.from..self.to).rev() {
            let values = tree
                .nodes_at(level)
                .iter()
                .map(|&n| {
                    tree.children(n)
                        .iter()
                        .map(|&c| {
                            let r = self.ratios[c];
                            if r == 0.0 {
                                0.0
                            } else {
                                tree.prob(c) * r * (r.ln() + next.get(tree, c))
                            }
                        })
                        .sum()
                })
                .collect();
            next = NodeVariable { level, values };
        }
        next
    }
}

/// `E_Q[X | F_s]`; `None` means the reference measure.
pub fn cond_expect(
    tree: &ScenarioTree,
    x: &NodeVariable,
    q: Option<&DensityChange>,
    s: usize,
) -> Result<NodeVariable> {
    let t = x.level;
    tree.check_levels(s, t)?;
    if x.len() != tree.width(t) {
        return Err(Error::LevelMismatch {
            expected: t,
            found: x.level,
        });
    }
    if let Some(q) = q {
        q.validate(tree, ARITH_TOL)?;
    }
    let ratio = |c: NodeId| q.map_or(1.0, |q| q.ratios[c]);
    let mut cur = x.clone();
    for level in (s..t).rev() {
        let values = tree
            .nodes_at(level)
            .iter()
            .map(|&n| {
                tree.children(n)
                    .iter()
                    .map(|&c| tree.prob(c) * ratio(c) * cur.get(tree, c))
                    .sum()
            })
            .collect();
        cur = NodeVariable { level, values };
    }
    Ok(cur)
}

/// Relative entropy of `q` on its domain, per atom at `q.from_level()`.
pub fn relative_entropy(tree: &ScenarioTree, q: &DensityChange) -> Result<NodeVariable> {
    q.validate(tree, ARITH_TOL)?;
    Ok(q.relative_entropy(tree))
}

/// Paste two adjacent density changes.
pub fn compose_densities(first: &DensityChange, second: &DensityChange) -> Result<DensityChange> {
    first.compose(second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generate::binomial_tree;

    #[test]
    fn constant_is_invariant() {
        let tree = binomial_tree(3, 0.3, 1.0, 1.2, 0.9);
        let x = NodeVariable::constant(&tree, 3, 2.5);
        let e = cond_expect(&tree, &x, None, 1).unwrap();
        assert!(e.values.iter().all(|v| (v - 2.5).abs() < 1e-15));
    }

    #[test]
    fn one_step_mean() {
        let tree = binomial_tree(1, 0.5, 1.0, 1.1, 0.9);
        let x = NodeVariable { level: 1, values: vec![2.0, 0.0] };
        let q = DensityChange::reference(&tree, 0, 1);
        assert_eq!(q.cond_expect(&tree, &x, 0).unwrap().values, vec![1.0]);
    }

    #[test]
    fn identity_when_levels_agree() {
        let tree = binomial_tree(2, 0.5, 1.0, 1.1, 0.9);
        let x = NodeVariable { level: 2, values: vec![4.0, 1.0, 1.0, 0.25] };
        assert_eq!(cond_expect(&tree, &x, None, 2).unwrap(), x);
    }

    #[test]
    fn rejects_bad_levels_and_densities() {
        let tree = binomial_tree(2, 0.5, 1.0, 1.1, 0.9);
        let x = NodeVariable::zeros(&tree, 1);
        assert!(cond_expect(&tree, &x, None, 2).is_err());

        let mut ratios = vec![1.0; tree.len()];
        ratios[1] = 1.5;
        assert!(matches!(
            DensityChange::new(&tree, 0, 1, ratios),
            Err(Error::InvalidDensity { node: 0, .. })
        ));
        let mut ratios = vec![1.0; tree.len()];
        ratios[3] = 1.5;
        ratios[4] = 0.5;
        // a non-trivial ratio outside the declared domain
        assert!(DensityChange::new(&tree, 0, 1, ratios).is_err());
    }

    #[test]
    fn compose_requires_adjacency() {
        let tree = binomial_tree(3, 0.5, 1.0, 1.1, 0.9);
        let a = DensityChange::reference(&tree, 0, 1);
        let b = DensityChange::reference(&tree, 2, 3);
        assert!(matches!(a.compose(&b), Err(Error::NonAdjacent { .. })));
        let c = DensityChange::reference(&tree, 1, 3);
        let pasted = a.compose(&c).unwrap();
        assert_eq!(pasted, DensityChange::reference(&tree, 0, 3));
    }

    #[test]
    fn left_identity_keeps_second_ratios() {
        let tree = binomial_tree(2, 0.5, 1.0, 1.1, 0.9);
        let p = DensityChange::reference(&tree, 0, 1);
        let q = DensityChange::from_conditionals(&tree, 1, 2, |_| vec![0.75, 0.25]).unwrap();
        let pasted = p.compose(&q).unwrap();
        for id in 0..tree.len() {
            let expected = if tree.level(id) == 2 { q.ratio(id) } else { 1.0 };
            assert_eq!(pasted.ratio(id), expected);
        }
        pasted.validate(&tree, ARITH_TOL).unwrap();
    }

    #[test]
    fn entropy_of_reference_is_zero_and_zero_ratio_is_finite() {
        let tree = binomial_tree(2, 0.5, 1.0, 1.1, 0.9);
        let p = DensityChange::reference(&tree, 0, 2);
        assert!(relative_entropy(&tree, &p).unwrap().values.iter().all(|&h| h == 0.0));

        let q = DensityChange::from_conditionals(&tree, 0, 1, |_| vec![1.0, 0.0]).unwrap();
        let h = relative_entropy(&tree, &q).unwrap();
        assert!((h.values[0] - 2f64.ln()).abs() < 1e-15);
    }
}
