use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Tolerance for probability normalization checks on input data.
pub const INPUT_TOL: f64 = 1e-12;
/// Tolerance for normalization checks after arithmetic.
pub const ARITH_TOL: f64 = 1e-10;

/// One node of the JSON tree format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub level: usize,
    pub prob: f64,
    #[serde(default)]
    pub assets: Vec<f64>,
}

/// Serialized form of a [`ScenarioTree`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub levels: usize,
    pub nodes: Vec<NodeSpec>,
}

/// A finite filtered probability space given as an explicit tree.
///
/// Nodes at a level are the atoms of the sigma-algebra at that time. Within
/// each level nodes are kept in breadth-first order so that the descendants
/// of any node at any later level form a contiguous block of positions.
#[derive(Debug, Clone)]
pub struct ScenarioTree {
    nodes: Vec<NodeSpec>,
    children: Vec<Vec<NodeId>>,
    by_level: Vec<Vec<NodeId>>,
    position: Vec<usize>,
    uncond: Vec<f64>,
    // spans[n][k] = positions at level(n) + k covered by the descendants of n
    spans: Vec<Vec<Range<usize>>>,
    dim: usize,
}

fn invalid(node: Option<NodeId>, reason: impl Into<String>) -> Error {
    Error::InvalidTree {
        node,
        reason: reason.into(),
    }
}

impl ScenarioTree {
    pub fn from_spec(spec: TreeSpec) -> Result<Self> {
        let TreeSpec { levels, nodes } = spec;
        if levels == 0 {
            return Err(invalid(None, "tree must have at least one level"));
        }
        let m = nodes.len();
        if m == 0 {
            return Err(invalid(None, "tree has no nodes"));
        }
        let mut slots: Vec<Option<NodeSpec>> = vec![None; m];
        for node in nodes {
            let id = node.id;
            if id >= m {
                return Err(invalid(Some(id), format!("node ids must be dense in 0..{m}")));
            }
            if slots[id].is_some() {
                return Err(invalid(Some(id), "duplicate node id"));
            }
            slots[id] = Some(node);
        }
        let nodes: Vec<NodeSpec> = slots.into_iter().map(|n| n.unwrap()).collect();

        let dim = nodes[0].assets.len();
        let mut root = None;
        let mut children = vec![Vec::new(); m];
        for node in &nodes {
            if node.level >= levels {
                return Err(invalid(
                    Some(node.id),
                    format!("level {} outside 0..{levels}", node.level),
                ));
            }
            if node.assets.len() != dim {
                return Err(invalid(
                    Some(node.id),
                    format!("expected {dim} asset prices, found {}", node.assets.len()),
                ));
            }
            if node.assets.iter().any(|a| !a.is_finite()) {
                return Err(invalid(Some(node.id), "asset prices must be finite"));
            }
            match node.parent {
                None => {
                    if node.level != 0 {
                        return Err(invalid(Some(node.id), "only the root may lack a parent"));
                    }
                    if root.replace(node.id).is_some() {
                        return Err(invalid(Some(node.id), "more than one root"));
                    }
                }
                Some(p) => {
                    if p >= m {
                        return Err(invalid(Some(node.id), format!("unknown parent {p}")));
                    }
                    if nodes[p].level + 1 != node.level {
                        return Err(invalid(
                            Some(node.id),
                            "parent must sit at the previous level",
                        ));
                    }
                    if !(node.prob > 0.0 && node.prob <= 1.0) {
                        return Err(invalid(
                            Some(node.id),
                            format!("branch probability {} outside (0,1]", node.prob),
                        ));
                    }
                    children[p].push(node.id);
                }
            }
        }
        let root = root.ok_or_else(|| invalid(None, "no root at level 0"))?;

        for (id, kids) in children.iter().enumerate() {
            let level = nodes[id].level;
            if kids.is_empty() {
                if level + 1 < levels {
                    return Err(invalid(
                        Some(id),
                        format!("node at level {level} has no children before the horizon"),
                    ));
                }
                continue;
            }
            let total: f64 = kids.iter().map(|&c| nodes[c].prob).sum();
            if (total - 1.0).abs() > INPUT_TOL {
                return Err(invalid(
                    Some(id),
                    format!("children probabilities sum to {total}, expected 1"),
                ));
            }
        }

        let mut by_level = vec![vec![root]];
        for _ in 1..levels {
            let next: Vec<NodeId> = by_level
                .last()
                .unwrap()
                .iter()
                .flat_map(|&n| children[n].iter().copied())
                .collect();
            by_level.push(next);
        }
        let reached: usize = by_level.iter().map(Vec::len).sum();
        if reached != m {
            return Err(invalid(None, "some nodes are not reachable from the root"));
        }

        let mut position = vec![0; m];
        for level in &by_level {
            for (pos, &n) in level.iter().enumerate() {
                position[n] = pos;
            }
        }

        let mut uncond = vec![0.0; m];
        uncond[root] = 1.0;
        for level in &by_level {
            for &n in level {
                for &c in &children[n] {
                    uncond[c] = uncond[n] * nodes[c].prob;
                }
            }
        }
        for (k, level) in by_level.iter().enumerate() {
            let total: f64 = level.iter().map(|&n| uncond[n]).sum();
            if (total - 1.0).abs() > ARITH_TOL {
                return Err(invalid(
                    None,
                    format!("probabilities at level {k} sum to {total}"),
                ));
            }
        }

        let mut spans = vec![Vec::new(); m];
        for (k, level) in by_level.iter().enumerate() {
            for &n in level {
                let mut span = Vec::with_capacity(levels - k);
                span.push(position[n]..position[n] + 1);
                for row in &by_level[k..levels - 1] {
                    let cur = span.last().unwrap().clone();
                    let first = row[cur.start];
                    let last = row[cur.end - 1];
                    let start = position[*children[first].first().unwrap()];
                    let end = position[*children[last].last().unwrap()] + 1;
                    span.push(start..end);
                }
                spans[n] = span;
            }
        }

        Ok(Self {
            nodes,
            children,
            by_level,
            position,
            uncond,
            spans,
            dim,
        })
    }

    pub fn to_spec(&self) -> TreeSpec {
        TreeSpec {
            levels: self.levels(),
            nodes: self.nodes.clone(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("tree spec serializes")
    }

    /// Number of time indices, i.e. horizon + 1.
    pub fn levels(&self) -> usize {
        self.by_level.len()
    }

    pub fn horizon(&self) -> usize {
        self.levels() - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> NodeId {
        self.by_level[0][0]
    }

    /// Number of assets carried by every node.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nodes_at(&self, level: usize) -> &[NodeId] {
        &self.by_level[level]
    }

    pub fn width(&self, level: usize) -> usize {
        self.by_level[level].len()
    }

    pub fn node(&self, id: NodeId) -> &NodeSpec {
        &self.nodes[id]
    }

    pub fn level(&self, id: NodeId) -> usize {
        self.nodes[id].level
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.nodes[id].parent
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id]
    }

    /// Conditional probability of reaching `id` from its parent.
    pub fn prob(&self, id: NodeId) -> f64 {
        self.nodes[id].prob
    }

    pub fn uncond_prob(&self, id: NodeId) -> f64 {
        self.uncond[id]
    }

    pub fn assets(&self, id: NodeId) -> &[f64] {
        &self.nodes[id].assets
    }

    /// Position of `id` within its level.
    pub fn position(&self, id: NodeId) -> usize {
        self.position[id]
    }

    /// Positions at `level` occupied by the descendants of `id`.
    pub fn span(&self, id: NodeId, level: usize) -> Range<usize> {
        let own = self.level(id);
        assert!(level >= own, "span requested above the node");
        self.spans[id][level - own].clone()
    }

    pub fn descendants(&self, id: NodeId, level: usize) -> &[NodeId] {
        &self.by_level[level][self.span(id, level)]
    }

    pub fn ancestor_at(&self, id: NodeId, level: usize) -> NodeId {
        let mut n = id;
        while self.level(n) > level {
            n = self.parent(n).expect("non-root node has a parent");
        }
        n
    }

    pub(crate) fn check_levels(&self, s: usize, t: usize) -> Result<()> {
        if s > t || t >= self.levels() {
            return Err(Error::InvalidLevels {
                s,
                t,
                levels: self.levels(),
            });
        }
        Ok(())
    }
}

/// The part of a tree hanging below one node, down to a fixed level.
///
/// Local nodes are stored level by level in the same order as the global
/// tree, so the leaves line up with `tree.span(root, t)`.
#[derive(Debug, Clone)]
pub struct LocalTree {
    pub nodes: Vec<LocalNode>,
    /// Local index ranges, one per depth.
    pub depths: Vec<Range<usize>>,
    pub root_level: usize,
}

#[derive(Debug, Clone)]
pub struct LocalNode {
    pub global: NodeId,
    pub parent: Option<usize>,
    pub prob: f64,
    pub children: Range<usize>,
}

impl LocalTree {
    pub fn leaf_level(&self) -> usize {
        self.root_level + self.depths.len() - 1
    }

    pub fn leaves(&self) -> Range<usize> {
        self.depths.last().unwrap().clone()
    }

    pub fn n_leaves(&self) -> usize {
        self.leaves().len()
    }

    /// Local indices of nodes that have children inside the subtree.
    pub fn internal(&self) -> Range<usize> {
        0..self.leaves().start
    }

    /// Conditional probabilities of each leaf given the root.
    pub fn leaf_probs(&self) -> Vec<f64> {
        let mut path = vec![1.0; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                path[i] = path[p] * node.prob;
            }
        }
        path[self.leaves()].to_vec()
    }
}

impl ScenarioTree {
    pub fn subtree(&self, root: NodeId, t: usize) -> LocalTree {
        let root_level = self.level(root);
        assert!(t >= root_level && t < self.levels());
        let mut nodes = Vec::new();
        let mut depths = Vec::new();
        nodes.push(LocalNode {
            global: root,
            parent: None,
            prob: 1.0,
            children: 0..0,
        });
        depths.push(0..1);
        for _ in root_level..t {
            let cur = depths.last().unwrap().clone();
            let start = nodes.len();
            for i in cur {
                let first = nodes.len();
                let g = nodes[i].global;
                for &c in &self.children[g] {
                    nodes.push(LocalNode {
                        global: c,
                        parent: Some(i),
                        prob: self.prob(c),
                        children: 0..0,
                    });
                }
                nodes[i].children = first..nodes.len();
            }
            depths.push(start..nodes.len());
        }
        LocalTree {
            nodes,
            depths,
            root_level,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_period() -> ScenarioTree {
        let spec = TreeSpec {
            levels: 3,
            nodes: vec![
                NodeSpec { id: 0, parent: None, level: 0, prob: 1.0, assets: vec![1.0] },
                NodeSpec { id: 1, parent: Some(0), level: 1, prob: 0.5, assets: vec![2.0] },
                NodeSpec { id: 2, parent: Some(0), level: 1, prob: 0.5, assets: vec![0.5] },
                NodeSpec { id: 3, parent: Some(1), level: 2, prob: 0.5, assets: vec![4.0] },
                NodeSpec { id: 4, parent: Some(1), level: 2, prob: 0.5, assets: vec![1.0] },
                NodeSpec { id: 5, parent: Some(2), level: 2, prob: 0.5, assets: vec![1.0] },
                NodeSpec { id: 6, parent: Some(2), level: 2, prob: 0.5, assets: vec![0.25] },
            ],
        };
        ScenarioTree::from_spec(spec).unwrap()
    }

    #[test]
    fn spans_are_contiguous() {
        let tree = two_period();
        assert_eq!(tree.span(1, 2), 0..2);
        assert_eq!(tree.span(2, 2), 2..4);
        assert_eq!(tree.span(0, 2), 0..4);
        assert_eq!(tree.descendants(2, 2), &[5, 6]);
        assert_eq!(tree.ancestor_at(6, 1), 2);
        assert!((tree.uncond_prob(6) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_probabilities() {
        let mut spec = two_period().to_spec();
        spec.nodes[4].prob = 0.4;
        let err = ScenarioTree::from_spec(spec).unwrap_err();
        match err {
            Error::InvalidTree { node, .. } => assert_eq!(node, Some(1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_zero_probability_branch() {
        let mut spec = two_period().to_spec();
        spec.nodes[3].prob = 0.0;
        spec.nodes[4].prob = 1.0;
        assert!(ScenarioTree::from_spec(spec).is_err());
    }

    #[test]
    fn rejects_two_roots_and_missing_parents() {
        let mut spec = two_period().to_spec();
        spec.nodes[1].parent = None;
        assert!(ScenarioTree::from_spec(spec).is_err());

        let mut spec = two_period().to_spec();
        spec.nodes[3].parent = Some(0);
        assert!(ScenarioTree::from_spec(spec).is_err());
    }

    #[test]
    fn rejects_early_leaves() {
        let mut spec = two_period().to_spec();
        spec.nodes.retain(|n| n.parent != Some(2));
        assert!(ScenarioTree::from_spec(spec).is_err());
    }

    #[test]
    fn json_round_trip() {
        let tree = two_period();
        let back = ScenarioTree::from_json(&tree.to_json()).unwrap();
        assert_eq!(back.to_spec(), tree.to_spec());
    }

    #[test]
    fn subtree_matches_spans() {
        let tree = two_period();
        let sub = tree.subtree(0, 2);
        assert_eq!(sub.n_leaves(), 4);
        let globals: Vec<_> = sub.leaves().map(|i| sub.nodes[i].global).collect();
        assert_eq!(globals, tree.descendants(0, 2));
        let probs = sub.leaf_probs();
        assert!(probs.iter().all(|p| (p - 0.25).abs() < 1e-15));
        assert_eq!(sub.internal(), 0..3);
    }
}
