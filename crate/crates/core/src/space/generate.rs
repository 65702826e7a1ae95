//! Tree builders and seeded random instances.

use rand::seq::SliceRandom;
use rand::Rng;

use super::density::DensityChange;
use super::tree::{NodeSpec, ScenarioTree, TreeSpec};
use super::variable::NodeVariable;

/// A non-recombining binomial tree with `steps` periods and one asset.
///
/// Child order is (up, down); `p` is the probability of the up move.
pub fn binomial_tree(steps: usize, p: f64, s0: f64, up: f64, down: f64) -> ScenarioTree {
    let mut nodes = vec![NodeSpec {
        id: 0,
        parent: None,
        level: 0,
        prob: 1.0,
        assets: vec![s0],
    }];
    let mut frontier = vec![0];
    for level in 1..=steps {
        let mut next = Vec::with_capacity(frontier.len() * 2);
        for &parent in &frontier {
            let s = nodes[parent].assets[0];
            for (prob, factor) in [(p, up), (1.0 - p, down)] {
                let id = nodes.len();
                nodes.push(NodeSpec {
                    id,
                    parent: Some(parent),
                    level,
                    prob,
                    assets: vec![s * factor],
                });
                next.push(id);
            }
        }
        frontier = next;
    }
    ScenarioTree::from_spec(TreeSpec {
        levels: steps + 1,
        nodes,
    })
    .expect("binomial tree is valid")
}

/// A symmetric binary tree whose asset is a scaled random walk `sigma * W`
/// with increments `+-sqrt(dt)`; the filtration of the discrete g-expectation.
pub fn random_walk_tree(steps: usize, dt: f64, sigma: f64) -> ScenarioTree {
    let mut nodes = vec![NodeSpec {
        id: 0,
        parent: None,
        level: 0,
        prob: 1.0,
        assets: vec![0.0],
    }];
    let mut frontier = vec![0];
    let dw = dt.sqrt();
    for level in 1..=steps {
        let mut next = Vec::new();
        for &parent in &frontier {
            let w = nodes[parent].assets[0];
            for sign in [1.0, -1.0] {
                let id = nodes.len();
                nodes.push(NodeSpec {
                    id,
                    parent: Some(parent),
                    level,
                    prob: 0.5,
                    assets: vec![w + sign * sigma * dw],
                });
                next.push(id);
            }
        }
        frontier = next;
    }
    ScenarioTree::from_spec(TreeSpec {
        levels: steps + 1,
        nodes,
    })
    .expect("random walk tree is valid")
}

/// Options for [`random_tree`].
#[derive(Debug, Clone, Copy)]
pub struct RandomTreeSpec {
    pub steps: usize,
    pub min_children: usize,
    pub max_children: usize,
    /// Number of assets (1 or 2).
    pub dim: usize,
}

impl Default for RandomTreeSpec {
    fn default() -> Self {
        Self {
            steps: 3,
            min_children: 2,
            max_children: 3,
            dim: 1,
        }
    }
}

fn random_probs<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let head: f64 = probs[..k - 1].iter().sum();
    probs[k - 1] = 1.0 - head;
    probs
}

/// Increments around a parent price that leave no arbitrage: the origin
/// lies strictly inside the convex hull of the moves.
fn arbitrage_free_moves<R: Rng + ?Sized>(rng: &mut R, k: usize, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    match dim {
        0 => vec![Vec::new(); k],
        1 => {
            let mut moves: Vec<f64> = (0..k)
                .map(|i| match i {
                    0 => rng.random_range(0.05..0.3),
                    1 => -rng.random_range(0.05..0.3),
                    _ => rng.random_range(-0.3..0.3),
                })
                .collect();
            moves.shuffle(rng);
            moves.into_iter().map(|m| vec![m * scale]).collect()
        }
        _ => {
            if k >= 3 {
                let base = rng.random_range(0.0..std::f64::consts::TAU);
                let mut moves: Vec<Vec<f64>> = (0..k)
                    .map(|i| {
                        let step = std::f64::consts::TAU / k as f64;
                        let angle = base + step * i as f64 + rng.random_range(-0.2..0.2) * step;
                        let len = rng.random_range(0.05..0.3) * scale;
                        let mut v = vec![len * angle.cos(), len * angle.sin()];
                        v.resize(dim, 0.0);
                        v
                    })
                    .collect();
                moves.shuffle(rng);
                moves
            } else {
                // two children: colinear opposite moves (second asset redundant)
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let a = rng.random_range(0.05..0.3) * scale;
                let b = rng.random_range(0.05..0.3) * scale;
                let dir = [angle.cos(), angle.sin()];
                let mut up = vec![a * dir[0], a * dir[1]];
                let mut down = vec![-b * dir[0], -b * dir[1]];
                up.resize(dim, 0.0);
                down.resize(dim, 0.0);
                vec![up, down]
            }
        }
    }
}

/// A random tree with arbitrage-free asset moves at every node.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, spec: RandomTreeSpec) -> ScenarioTree {
    let min_children = spec.min_children.max(1);
    let max_children = spec.max_children.max(min_children);
    let mut nodes = vec![NodeSpec {
        id: 0,
        parent: None,
        level: 0,
        prob: 1.0,
        assets: vec![1.0; spec.dim],
    }];
    let mut frontier = vec![0];
    for level in 1..=spec.steps {
        let mut next = Vec::new();
        for &parent in &frontier {
            let k = rng.random_range(min_children..=max_children);
            let probs = random_probs(rng, k);
            let moves = arbitrage_free_moves(rng, k, spec.dim, 1.0);
            let base = nodes[parent].assets.clone();
            for (prob, mv) in probs.into_iter().zip(moves) {
                let id = nodes.len();
                let assets = base.iter().zip(&mv).map(|(b, m)| b + m).collect();
                nodes.push(NodeSpec {
                    id,
                    parent: Some(parent),
                    level,
                    prob,
                    assets,
                });
                next.push(id);
            }
        }
        frontier = next;
    }
    ScenarioTree::from_spec(TreeSpec {
        levels: spec.steps + 1,
        nodes,
    })
    .expect("random tree is valid")
}

pub fn random_variable<R: Rng + ?Sized>(
    rng: &mut R,
    tree: &ScenarioTree,
    level: usize,
    scale: f64,
) -> NodeVariable {
    NodeVariable {
        level,
        values: (0..tree.width(level))
            .map(|_| rng.random_range(-scale..scale))
            .collect(),
    }
}

/// A random equivalent measure change on `(from, to]`.
pub fn random_density<R: Rng + ?Sized>(
    rng: &mut R,
    tree: &ScenarioTree,
    from: usize,
    to: usize,
) -> DensityChange {
    DensityChange::from_conditionals(tree, from, to, |n| random_probs(rng, tree.children(n).len()))
        .expect("random conditionals are normalized")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_trees_are_valid_and_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for dim in [1, 2] {
            let spec = RandomTreeSpec { dim, ..Default::default() };
            let t1 = random_tree(&mut a, spec);
            let t2 = random_tree(&mut b, spec);
            assert_eq!(t1.to_spec(), t2.to_spec());
            assert_eq!(t1.dim(), dim);
        }
    }

    #[test]
    fn one_dimensional_moves_straddle_parent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tree = random_tree(&mut rng, RandomTreeSpec::default());
        for level in 0..tree.horizon() {
            for &n in tree.nodes_at(level) {
                let s = tree.assets(n)[0];
                let kids = tree.children(n);
                assert!(kids.iter().any(|&c| tree.assets(c)[0] > s));
                assert!(kids.iter().any(|&c| tree.assets(c)[0] < s));
            }
        }
    }
}
