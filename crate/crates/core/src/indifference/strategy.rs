use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{LocalTree, NodeId, NodeVariable, ScenarioTree};

/// Admissible trading strategies: convex, containing 0 and stable under pasting.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategySpace {
    /// No trading.
    Zero,
    /// Any position in every asset.
    Linear,
    /// Positions within per-asset bounds (infinite bounds allowed).
    Box { lower: Vec<f64>, upper: Vec<f64> },
}

/// JSON form: `{"kind":"zero"}`, `{"kind":"linear"}` or
/// `{"kind":"box","lower":[-1,null],"upper":[1,2]}` with `null` for an
/// infinite bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StrategySpaceJson {
    Zero,
    Linear,
    Box {
        lower: Vec<Option<f64>>,
        upper: Vec<Option<f64>>,
    },
}

impl StrategySpace {
    pub fn from_json(tree: &ScenarioTree, json: &StrategySpaceJson) -> Result<Self> {
        let space = match json {
            StrategySpaceJson::Zero => Self::Zero,
            StrategySpaceJson::Linear => Self::Linear,
            StrategySpaceJson::Box { lower, upper } => Self::Box {
                lower: lower.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
                upper: upper.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
            },
        };
        space.validate(tree)?;
        Ok(space)
    }

    pub fn to_json(&self) -> StrategySpaceJson {
        let finite = |v: &f64| v.is_finite().then_some(*v);
        match self {
            Self::Zero => StrategySpaceJson::Zero,
            Self::Linear => StrategySpaceJson::Linear,
            Self::Box { lower, upper } => StrategySpaceJson::Box {
                lower: lower.iter().map(finite).collect(),
                upper: upper.iter().map(finite).collect(),
            },
        }
    }

    pub fn validate(&self, tree: &ScenarioTree) -> Result<()> {
        if let Self::Box { lower, upper } = self {
            let d = tree.dim();
            if lower.len() != d || upper.len() != d {
                return Err(Error::InvalidStrategySpace(format!(
                    "box needs {d} bounds per side, got {} and {}",
                    lower.len(),
                    upper.len()
                )));
            }
            for (a, (&lo, &hi)) in lower.iter().zip(upper).enumerate() {
                if lo.is_nan() || hi.is_nan() || lo > 0.0 || hi < 0.0 {
                    return Err(Error::InvalidStrategySpace(format!(
                        "bounds for asset {a} must satisfy lower <= 0 <= upper, got [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per-coordinate bounds for one node's position vector.
    pub fn bounds(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            Self::Zero => (vec![0.0; dim], vec![0.0; dim]),
            Self::Linear => (vec![f64::NEG_INFINITY; dim], vec![f64::INFINITY; dim]),
            Self::Box { lower, upper } => (lower.clone(), upper.clone()),
        }
    }

    /// Bounds of the recession cone of the per-node set.
    pub fn cone_bounds(&self, dim: usize) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.bounds(dim);
        (
            lo.iter().map(|&v| if v.is_finite() { 0.0 } else { f64::NEG_INFINITY }).collect(),
            hi.iter().map(|&v| if v.is_finite() { 0.0 } else { f64::INFINITY }).collect(),
        )
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        let (lo, hi) = self.bounds(theta.len());
        theta.iter().zip(lo.iter().zip(&hi)).all(|(v, (l, h))| v >= l && v <= h)
    }
}

/// A predictable strategy: the position `theta[n]` is chosen at node `n` and
/// held over the step to its children. Terminal nodes carry zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub theta: Vec<Vec<f64>>,
}

impl Strategy {
    pub fn zero(tree: &ScenarioTree) -> Self {
        Self {
            theta: vec![vec![0.0; tree.dim()]; tree.len()],
        }
    }

    pub fn from_fn(tree: &ScenarioTree, mut f: impl FnMut(NodeId) -> Vec<f64>) -> Self {
        let theta = (0..tree.len())
            .map(|n| {
                if tree.level(n) < tree.horizon() {
                    f(n)
                } else {
                    vec![0.0; tree.dim()]
                }
            })
            .collect();
        Self { theta }
    }

    pub fn to_json(&self, tree: &ScenarioTree) -> BTreeMap<NodeId, Vec<f64>> {
        (0..tree.len())
            .filter(|&n| tree.level(n) < tree.horizon())
            .map(|n| (n, self.theta[n].clone()))
            .collect()
    }

    pub fn is_admissible(&self, space: &StrategySpace) -> bool {
        self.theta.iter().all(|th| space.contains(th))
    }
}

/// Gains `Y_su(theta) = sum_{k=s+1}^{u} theta_{k-1} . (Pi_k - Pi_{k-1})` as a
/// variable at level `u`.
pub fn gains(tree: &ScenarioTree, theta: &Strategy, s: usize, u: usize) -> Result<NodeVariable> {
    tree.check_levels(s, u)?;
    let mut cur = NodeVariable::zeros(tree, s);
    for level in s..u {
        let mut next = NodeVariable::zeros(tree, level + 1);
        for &n in tree.nodes_at(level) {
            let base = cur.get(tree, n);
            for &c in tree.children(n) {
                let step: f64 = theta.theta[n]
                    .iter()
                    .zip(tree.assets(c).iter().zip(tree.assets(n)))
                    .map(|(th, (pc, pn))| th * (pc - pn))
                    .sum();
                next.values[tree.position(c)] = base + step;
            }
        }
        cur = next;
    }
    Ok(cur)
}

/// The whole gains process `Y_su(theta)` for `u = s..=t`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainsProcess {
    pub s: usize,
    pub values: Vec<NodeVariable>,
}

impl GainsProcess {
    pub fn new(tree: &ScenarioTree, theta: &Strategy, s: usize, t: usize) -> Result<Self> {
        tree.check_levels(s, t)?;
        let values = (s..=t).map(|u| gains(tree, theta, s, u)).collect::<Result<_>>()?;
        Ok(Self { s, values })
    }

    pub fn at(&self, u: usize) -> &NodeVariable {
        &self.values[u - self.s]
    }
}

/// Gains on the leaves of a local tree as affine maps of the local strategy
/// vector: `coef[leaf][i * d + a]` multiplies `theta[i][a]` for internal
/// local node `i`.
pub(crate) fn local_gain_coefficients(tree: &ScenarioTree, sub: &LocalTree) -> Vec<Vec<f64>> {
    let d = tree.dim();
    let n_params = sub.internal().len() * d;
    let mut coef = vec![vec![0.0; n_params]; sub.nodes.len()];
    for i in sub.internal() {
        let node = &sub.nodes[i];
        let pn = tree.assets(node.global);
        for c in node.children.clone() {
            let mut row = coef[i].clone();
            let pc = tree.assets(sub.nodes[c].global);
            for a in 0..d {
                row[i * d + a] += pc[a] - pn[a];
            }
            coef[c] = row;
        }
    }
    coef[sub.leaves()].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generate::{random_tree, RandomTreeSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gains_telescope() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tree = random_tree(&mut rng, RandomTreeSpec { dim: 2, ..Default::default() });
        let theta = Strategy::from_fn(&tree, |_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]);
        let rt = gains(&tree, &theta, 0, 3).unwrap();
        let rs = gains(&tree, &theta, 0, 1).unwrap();
        let st = gains(&tree, &theta, 1, 3).unwrap();
        let sum = &rs.lift(&tree, 3) + &st;
        assert!(rt.max_abs_diff(&sum) < 1e-14);
        assert!(gains(&tree, &theta, 2, 2).unwrap().values.iter().all(|&v| v == 0.0));
        let process = GainsProcess::new(&tree, &theta, 1, 3).unwrap();
        assert_eq!(process.at(3), &st);
    }

    #[test]
    fn box_json_uses_null_for_infinite() {
        let tree = random_tree(&mut ChaCha8Rng::seed_from_u64(1), RandomTreeSpec { dim: 2, ..Default::default() });
        let json: StrategySpaceJson = serde_json::from_str(r#"{"kind":"box","lower":[-1,null],"upper":[1,2]}"#).unwrap();
        let space = StrategySpace::from_json(&tree, &json).unwrap();
        assert_eq!(space.cone_bounds(2), (vec![0.0, f64::NEG_INFINITY], vec![0.0, 0.0]));
        assert_eq!(space.to_json(), json);
        let bad: StrategySpaceJson = serde_json::from_str(r#"{"kind":"box","lower":[0.5,-1],"upper":[1,1]}"#).unwrap();
        assert!(StrategySpace::from_json(&tree, &bad).is_err());
    }
}
