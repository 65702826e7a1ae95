use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use super::tree::{NodeId, ScenarioTree};
use crate::error::{Error, Result};

/// A random variable measurable with respect to the atoms at `level`.
///
/// Values are stored by position within the level (see
/// [`ScenarioTree::position`]); use [`NodeVariable::get`] for lookup by id.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeVariable {
    pub level: usize,
    pub values: Vec<f64>,
}

impl NodeVariable {
    pub fn new(tree: &ScenarioTree, level: usize, values: Vec<f64>) -> Result<Self> {
        if level >= tree.levels() {
            return Err(Error::InvalidLevels {
                s: level,
                t: level,
                levels: tree.levels(),
            });
        }
        if values.len() != tree.width(level) {
            return Err(Error::Config(format!(
                "level {level} has {} nodes, got {} values",
                tree.width(level),
                values.len()
            )));
        }
        Ok(Self { level, values })
    }

    pub fn constant(tree: &ScenarioTree, level: usize, c: f64) -> Self {
        Self {
            level,
            values: vec![c; tree.width(level)],
        }
    }

    pub fn zeros(tree: &ScenarioTree, level: usize) -> Self {
        Self::constant(tree, level, 0.0)
    }

    pub fn from_fn(tree: &ScenarioTree, level: usize, mut f: impl FnMut(NodeId) -> f64) -> Self {
        Self {
            level,
            values: tree.nodes_at(level).iter().map(|&n| f(n)).collect(),
        }
    }

    /// Price of asset `i` at `level`.
    pub fn asset(tree: &ScenarioTree, level: usize, i: usize) -> Self {
        Self::from_fn(tree, level, |n| tree.assets(n)[i])
    }

    pub fn get(&self, tree: &ScenarioTree, id: NodeId) -> f64 {
        debug_assert_eq!(tree.level(id), self.level);
        self.values[tree.position(id)]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            level: self.level,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.level, other.level, "level mismatch");
        Self {
            level: self.level,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn max(&self, other: &Self) -> Self {
        self.zip_with(other, f64::max)
    }

    pub fn min(&self, other: &Self) -> Self {
        self.zip_with(other, f64::min)
    }

    /// View the variable as measurable at a later level (constant on atoms).
    pub fn lift(&self, tree: &ScenarioTree, level: usize) -> Self {
        assert!(level >= self.level, "cannot lift to an earlier level");
        let mut values = vec![0.0; tree.width(level)];
        for (pos, &n) in tree.nodes_at(self.level).iter().enumerate() {
            values[tree.span(n, level)].fill(self.values[pos]);
        }
        Self { level, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.level, other.level, "level mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Unconditional expectation under the reference measure.
    pub fn expectation(&self, tree: &ScenarioTree) -> f64 {
        tree.nodes_at(self.level)
            .iter()
            .zip(&self.values)
            .map(|(&n, v)| tree.uncond_prob(n) * v)
            .sum()
    }

    /// L2 norm under the reference measure.
    pub fn l2_norm(&self, tree: &ScenarioTree) -> f64 {
        self.map(|v| v * v).expectation(tree).sqrt()
    }

    pub fn to_json(&self, tree: &ScenarioTree) -> NodeVariableJson {
        NodeVariableJson {
            level: self.level,
            values: tree
                .nodes_at(self.level)
                .iter()
                .zip(&self.values)
                .map(|(&n, &v)| (n, v))
                .collect(),
        }
    }

    pub fn from_json(tree: &ScenarioTree, json: &NodeVariableJson) -> Result<Self> {
        let level = json.level;
        if level >= tree.levels() {
            return Err(Error::InvalidLevels {
                s: level,
                t: level,
                levels: tree.levels(),
            });
        }
        let mut values = Vec::with_capacity(tree.width(level));
        for &n in tree.nodes_at(level) {
            match json.values.get(&n) {
                Some(&v) => values.push(v),
                None => {
                    return Err(Error::Config(format!(
                        "variable at level {level} is missing node {n}"
                    )))
                }
            }
        }
        if json.values.len() != values.len() {
            return Err(Error::Config(format!(
                "variable at level {level} lists nodes outside that level"
            )));
        }
        Ok(Self { level, values })
    }
}

/// JSON form: `{"level": k, "values": {"node_id": value, ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeVariableJson {
    pub level: usize,
    pub values: BTreeMap<NodeId, f64>,
}

impl Add for &NodeVariable {
    type Output = NodeVariable;
    fn add(self, rhs: Self) -> NodeVariable {
        self.zip_with(rhs, |a, b| a + b)
    }
}

impl Sub for &NodeVariable {
    type Output = NodeVariable;
    fn sub(self, rhs: Self) -> NodeVariable {
        self.zip_with(rhs, |a, b| a - b)
    }
}

impl Neg for &NodeVariable {
    type Output = NodeVariable;
    fn neg(self) -> NodeVariable {
        self.map(|v| -v)
    }
}

impl Mul<f64> for &NodeVariable {
    type Output = NodeVariable;
    fn mul(self, rhs: f64) -> NodeVariable {
        self.map(|v| v * rhs)
    }
}

/// One variable per level `0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    pub variables: Vec<NodeVariable>,
}

impl AdaptedProcess {
    pub fn new(tree: &ScenarioTree, variables: Vec<NodeVariable>) -> Result<Self> {
        if variables.len() != tree.levels() {
            return Err(Error::Config(format!(
                "process needs {} components, got {}",
                tree.levels(),
                variables.len()
            )));
        }
        for (k, v) in variables.iter().enumerate() {
            if v.level != k {
                return Err(Error::LevelMismatch {
                    expected: k,
                    found: v.level,
                });
            }
            if v.len() != tree.width(k) {
                return Err(Error::Config(format!("component {k} has wrong width")));
            }
        }
        Ok(Self { variables })
    }

    /// The price process of asset `i`.
    pub fn asset(tree: &ScenarioTree, i: usize) -> Self {
        Self {
            variables: (0..tree.levels())
                .map(|k| NodeVariable::asset(tree, k, i))
                .collect(),
        }
    }

    pub fn at(&self, level: usize) -> &NodeVariable {
        &self.variables[level]
    }
}

/// Node-wise maximum of a family of variables at a common level.
pub fn ess_sup_over(family: &[NodeVariable]) -> Result<NodeVariable> {
    fold_family(family, f64::max)
}

/// Node-wise minimum of a family of variables at a common level.
pub fn ess_inf_over(family: &[NodeVariable]) -> Result<NodeVariable> {
    fold_family(family, f64::min)
}

fn fold_family(family: &[NodeVariable], f: fn(f64, f64) -> f64) -> Result<NodeVariable> {
    let (first, rest) = family.split_first().ok_or(Error::EmptyFamily)?;
    let mut acc = first.clone();
    for v in rest {
        if v.level != acc.level {
            return Err(Error::LevelMismatch {
                expected: acc.level,
                found: v.level,
            });
        }
        if v.len() != acc.len() {
            return Err(Error::Config("family members differ in width".into()));
        }
        for (a, &b) in acc.values.iter_mut().zip(&v.values) {
            *a = f(*a, b);
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generate::binomial_tree;

    #[test]
    fn ess_sup_examples() {
        let a = NodeVariable { level: 1, values: vec![1.0, 3.0] };
        let b = NodeVariable { level: 1, values: vec![2.0, 2.0] };
        assert_eq!(ess_sup_over(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(ess_sup_over(&[a.clone(), b.clone()]).unwrap().values, vec![2.0, 3.0]);
        assert_eq!(ess_inf_over(&[a, b]).unwrap().values, vec![1.0, 2.0]);
        assert!(matches!(ess_sup_over(&[]), Err(Error::EmptyFamily)));
    }

    #[test]
    fn ess_sup_rejects_mixed_levels() {
        let a = NodeVariable { level: 1, values: vec![1.0, 3.0] };
        let b = NodeVariable { level: 2, values: vec![2.0, 2.0] };
        assert!(matches!(ess_sup_over(&[a, b]), Err(Error::LevelMismatch { .. })));
    }

    #[test]
    fn lift_is_constant_on_atoms() {
        let tree = binomial_tree(3, 0.5, 1.0, 1.1, 0.9);
        let x = NodeVariable { level: 1, values: vec![7.0, -1.0] };
        let lifted = x.lift(&tree, 3);
        assert_eq!(lifted.values, vec![7.0, 7.0, 7.0, 7.0, -1.0, -1.0, -1.0, -1.0]);
    }

    #[test]
    fn json_round_trip_by_node_id() {
        let tree = binomial_tree(2, 0.5, 1.0, 1.1, 0.9);
        let x = NodeVariable { level: 2, values: vec![4.0, 1.0, 1.0, 0.25] };
        let json = serde_json::to_string(&x.to_json(&tree)).unwrap();
        let parsed: NodeVariableJson = serde_json::from_str(&json).unwrap();
        assert_eq!(NodeVariable::from_json(&tree, &parsed).unwrap(), x);
    }
}
