use serde::Serialize;

use super::strategy::{local_gain_coefficients, StrategySpace, Strategy};
use crate::error::{Error, Result};
use crate::lp::{Cmp, Lp, LpOutcome};
use crate::optim::{bfgs, spg, OptimOptions, Status};
use crate::risk::{dual_base, DualFamily, DynamicRisk, RiskFamily};
use crate::space::{LocalTree, NodeId, NodeVariable, ScenarioTree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Nothing to optimize (zero strategy space).
    Direct,
    Bfgs,
    ProjectedGradient,
    LinearProgram,
}

/// `inf_theta rho_st(Y_st(theta) - X)` at one atom of `F_s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InnerSolution {
    pub value: f64,
    /// Local positions, `d` per internal node of the subtree (breadth-first).
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub method: Method,
    pub status: Option<Status>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeDiagnostics {
    pub node: NodeId,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub method: Method,
}

/// The seller's risk-indifference price with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceResult {
    pub value: NodeVariable,
    /// `inf_theta rho_st(Y_st(theta) - X)` per atom.
    pub inf_with_claim: NodeVariable,
    /// `inf_theta rho_st(Y_st(theta))` per atom.
    pub inf_without_claim: NodeVariable,
    /// Minimizer of the problem with the claim, pasted over the atoms of `s`.
    pub theta_hat: Strategy,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub nodes: Vec<NodeDiagnostics>,
}

/// `x_st(X) = inf_theta rho_st(Y_st(theta) - X) - inf_theta rho_st(Y_st(theta))`.
///
/// `x` may sit at any level in `s..=t`; it is read as a payoff at `t`.
pub fn price(family: &RiskFamily, space: &StrategySpace, s: usize, t: usize, x: &NodeVariable) -> Result<PriceResult> {
    price_with(family, space, s, t, x, OptimOptions::default())
}

pub fn price_with(
    family: &RiskFamily,
    space: &StrategySpace,
    s: usize,
    t: usize,
    x: &NodeVariable,
    opts: OptimOptions,
) -> Result<PriceResult> {
    let tree = family.tree();
    tree.check_levels(s, t)?;
    if x.level < s || x.level > t {
        return Err(Error::LevelMismatch { expected: t, found: x.level });
    }
    space.validate(tree)?;
    let x = x.lift(tree, t);
    let d = tree.dim();
    let mut theta_hat = Strategy::zero(tree);
    let mut with = Vec::new();
    let mut without = Vec::new();
    let mut nodes = Vec::new();
    let mut iterations = 0;
    let mut grad = 0.0f64;
    for &n in tree.nodes_at(s) {
        let sub = tree.subtree(n, t);
        let claim = &x.values[tree.span(n, t)];
        let a = inner_infimum(family, space, &sub, claim, opts)?;
        let b = inner_infimum(family, space, &sub, &vec![0.0; claim.len()], opts)?;
        for (k, i) in sub.internal().enumerate() {
            theta_hat.theta[sub.nodes[i].global] = a.theta[k * d..(k + 1) * d].to_vec();
        }
        iterations += a.iterations + b.iterations;
        grad = grad.max(a.final_gradient_norm).max(b.final_gradient_norm);
        nodes.push(NodeDiagnostics {
            node: n,
            iterations: a.iterations + b.iterations,
            final_gradient_norm: a.final_gradient_norm.max(b.final_gradient_norm),
            method: a.method,
        });
        with.push(a.value);
        without.push(b.value);
    }
    let value = with.iter().zip(&without).map(|(a, b)| a - b).collect();
    Ok(PriceResult {
        value: NodeVariable { level: s, values: value },
        inf_with_claim: NodeVariable { level: s, values: with },
        inf_without_claim: NodeVariable { level: s, values: without },
        theta_hat,
        iterations,
        final_gradient_norm: grad,
        nodes,
    })
}

/// Minimize `theta -> rho(Y(theta) - X)` over one subtree.
pub fn inner_infimum(
    family: &RiskFamily,
    space: &StrategySpace,
    sub: &LocalTree,
    claim: &[f64],
    opts: OptimOptions,
) -> Result<InnerSolution> {
    let tree = family.tree();
    let d = tree.dim();
    let n_params = sub.internal().len() * d;
    if matches!(space, StrategySpace::Zero) || n_params == 0 {
        let neg: Vec<f64> = claim.iter().map(|v| -v).collect();
        return Ok(InnerSolution {
            value: family.eval_local(sub, &neg)?.value,
            theta: vec![0.0; n_params],
            iterations: 0,
            final_gradient_norm: 0.0,
            method: Method::Direct,
            status: None,
        });
    }
    let coef = local_gain_coefficients(tree, sub);
    if let Some(dual) = dual_base(family.kind()) {
        let zeros = vec![0.0; claim.len()];
        let offset = family.eval_local(sub, &zeros)?.value - dual.eval_local(sub, &zeros).value;
        return dual_infimum(tree, dual, space, sub, &coef, claim, offset);
    }
    if let Some(direction) = recession_direction(tree, space, sub, &coef)? {
        return Err(Error::UnboundedRiskReduction { node: sub.nodes[0].global, direction });
    }

    let mut failure = None;
    let objective = |theta: &[f64], grad: &mut [f64]| -> f64 {
        let pos: Vec<f64> = coef
            .iter()
            .zip(claim)
            .map(|(row, x)| row.iter().zip(theta).map(|(c, t)| c * t).sum::<f64>() - x)
            .collect();
        match family.eval_local(sub, &pos) {
            Ok(r) => {
                // d rho / d theta_k = -sum_leaf w_leaf coef[leaf][k]
                grad.iter_mut().for_each(|g| *g = 0.0);
                for (row, w) in coef.iter().zip(&r.weights) {
                    for (g, c) in grad.iter_mut().zip(row) {
                        *g -= w * c;
                    }
                }
                r.value
            }
            Err(e) => {
                failure.get_or_insert(e);
                grad.iter_mut().for_each(|g| *g = 0.0);
                f64::NAN
            }
        }
    };
    let x0 = vec![0.0; n_params];
    let (result, method) = match space {
        StrategySpace::Linear => (bfgs(objective, &x0, opts), Method::Bfgs),
        _ => {
            let (lo, hi) = space.bounds(d);
            let lower: Vec<f64> = (0..n_params).map(|k| lo[k % d]).collect();
            let upper: Vec<f64> = (0..n_params).map(|k| hi[k % d]).collect();
            (spg(objective, &x0, &lower, &upper, opts), Method::ProjectedGradient)
        }
    };
    if let Some(e) = failure {
        return Err(e);
    }
    if result.status == Status::Unbounded {
        let norm = result.x.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        return Err(Error::UnboundedRiskReduction {
            node: sub.nodes[0].global,
            direction: result.x.iter().map(|v| v / norm).collect(),
        });
    }
    Ok(InnerSolution {
        value: result.value,
        theta: result.x,
        iterations: result.iterations,
        final_gradient_norm: result.grad_norm,
        method,
        status: Some(result.status),
    })
}

/// A direction in the strategy cone whose gains are at least 1 on every leaf
/// of the subtree: along it every monotone, cash-additive risk diverges.
pub(crate) fn recession_direction(
    tree: &ScenarioTree,
    space: &StrategySpace,
    sub: &LocalTree,
    coef: &[Vec<f64>],
) -> Result<Option<Vec<f64>>> {
    let d = tree.dim();
    let (lo, hi) = space.cone_bounds(d);
    if lo.iter().chain(&hi).all(|&v| v == 0.0) {
        return Ok(None);
    }
    let n_params = sub.internal().len() * d;
    let mut lp = Lp::minimize();
    let vars: Vec<usize> = (0..n_params).map(|k| lp.var(0.0, lo[k % d], hi[k % d])).collect();
    for row in coef {
        lp.row(vars.iter().zip(row).map(|(&v, &c)| (v, c)).collect(), Cmp::Ge, 1.0);
    }
    Ok(match lp.solve()? {
        LpOutcome::Optimal { values, .. } => Some(values),
        _ => None,
    })
}

/// Exact infimum for dual families: the max-of-affine risk makes the problem
/// a linear program in the positions and node values.
fn dual_infimum(
    tree: &ScenarioTree,
    dual: &DualFamily,
    space: &StrategySpace,
    sub: &LocalTree,
    coef: &[Vec<f64>],
    claim: &[f64],
    offset: f64,
) -> Result<InnerSolution> {
    let d = tree.dim();
    let n_int = sub.internal().len();
    let (lo, hi) = space.bounds(d);
    let mut lp = Lp::minimize();
    let theta: Vec<usize> = (0..n_int * d).map(|k| lp.var(0.0, lo[k % d], hi[k % d])).collect();
    let leaf0 = sub.leaves().start;
    // node value = X_leaf - gains_leaf on leaves; free variables inside
    let add_child = |terms: &mut Vec<(usize, f64)>, rhs: &mut f64, c: usize, weight: f64, values: &[usize]| {
        if c >= leaf0 {
            let k = c - leaf0;
            *rhs += weight * claim[k];
            for (&v, &cf) in theta.iter().zip(&coef[k]) {
                if cf != 0.0 {
                    terms.push((v, weight * cf));
                }
            }
        } else {
            terms.push((values[c], -weight));
        }
    };
    if dual.pasting {
        let values: Vec<usize> = (0..n_int)
            .map(|i| lp.var(if i == 0 { 1.0 } else { 0.0 }, f64::NEG_INFINITY, f64::INFINITY))
            .collect();
        for i in sub.internal() {
            let node = &sub.nodes[i];
            for g in &dual.generators {
                let mut terms = vec![(values[i], 1.0)];
                let mut rhs = -g.penalty[node.global];
                for c in node.children.clone() {
                    let w = sub.nodes[c].prob * g.density.ratio(sub.nodes[c].global);
                    add_child(&mut terms, &mut rhs, c, w, &values);
                }
                lp.row(terms, Cmp::Ge, rhs);
            }
        }
    } else {
        let root = lp.var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        for g in &dual.generators {
            let q = g.density.leaf_probs(sub);
            let zero = vec![0.0; claim.len()];
            // the generator's accumulated penalty is -(its value at X = 0)
            let penalty = -single_generator_value(dual, g, sub, &zero);
            let mut terms = vec![(root, 1.0)];
            let mut rhs = -penalty;
            for (k, &w) in q.iter().enumerate() {
                add_child(&mut terms, &mut rhs, leaf0 + k, w, &[]);
            }
            lp.row(terms, Cmp::Ge, rhs);
        }
    }
    match lp.solve()? {
        LpOutcome::Optimal { objective, values } => Ok(InnerSolution {
            value: objective + offset,
            theta: values[..theta.len()].to_vec(),
            iterations: 0,
            final_gradient_norm: 0.0,
            method: Method::LinearProgram,
            status: None,
        }),
        LpOutcome::Unbounded => Err(Error::UnboundedRiskReduction {
            node: sub.nodes[0].global,
            direction: recession_direction(tree, space, sub, coef)?.unwrap_or_default(),
        }),
        LpOutcome::Infeasible => Err(Error::Lp("risk LP is always feasible".into())),
    }
}

fn single_generator_value(dual: &DualFamily, g: &crate::risk::DualGenerator, sub: &LocalTree, leaves: &[f64]) -> f64 {
    let single = DualFamily {
        generators: vec![g.clone()],
        pasting: dual.pasting,
    };
    single.eval_local(sub, leaves).value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::indifference::gains;
    use crate::risk::{DriverSpec, DualGenerator};
    use crate::space::DensityChange;
    use crate::space::generate::{binomial_tree, random_walk_tree};
    use std::sync::Arc;

    #[test]
    fn zero_space_entropic_log_cosh() {
        let tree = Arc::new(binomial_tree(1, 0.5, 1.0, 1.1, 0.9));
        let fam = RiskFamily::entropic(tree.clone(), 1.0).unwrap();
        let x = NodeVariable { level: 1, values: vec![1.0, -1.0] };
        let p = price(&fam, &StrategySpace::Zero, 0, 1, &x).unwrap();
        assert!((p.value.values[0] - 1f64.cosh().ln()).abs() < 1e-14);
    }

    #[test]
    fn attainable_claims_cost_nothing() {
        let tree = Arc::new(binomial_tree(3, 0.4, 1.0, 1.15, 0.9));
        let fam = RiskFamily::entropic(tree.clone(), 1.5).unwrap();
        let star = Strategy::from_fn(&tree, |n| vec![0.5 + 0.1 * n as f64]);
        let x = gains(&tree, &star, 0, 3).unwrap();
        let p = price(&fam, &StrategySpace::Linear, 0, 3, &x).unwrap();
        assert!(p.value.values[0].abs() < 1e-9, "{:?}", p.value);
    }

    fn martingale_and_p(tree: &ScenarioTree) -> DualFamily {
        let q = DensityChange::from_conditionals(tree, 0, 2, |_| vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        DualFamily::new(
            tree,
            vec![
                DualGenerator { density: q, penalty: vec![0.0; tree.len()] },
                DualGenerator { density: DensityChange::reference(tree, 0, 2), penalty: vec![0.1; tree.len()] },
            ],
            true,
        )
        .unwrap()
    }

    #[test]
    fn complete_market_price_is_martingale_expectation() {
        let tree = Arc::new(binomial_tree(2, 0.5, 1.0, 1.2, 0.9));
        let x = NodeVariable { level: 2, values: vec![1.0, 0.0, 0.3, -0.5] };
        // q = 1/3 at every node
        let q = [1.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 4.0 / 9.0];
        let expected: f64 = q.iter().zip(&x.values).map(|(a, b)| a * b).sum();
        let g = DriverSpec::abs_linear(0.3).unwrap();
        let walk = Arc::new(random_walk_tree(2, 1.0, 1.0));
        let fams = [
            RiskFamily::entropic(tree.clone(), 2.0).unwrap(),
            RiskFamily::dual(tree.clone(), martingale_and_p(&tree)).unwrap(),
        ];
        for fam in &fams {
            let p = price(fam, &StrategySpace::Linear, 0, 2, &x).unwrap();
            assert!((p.value.values[0] - expected).abs() < 1e-8, "{:?}", fam.kind());
        }
        // symmetric random walk: the martingale measure is P itself
        let gfam = RiskFamily::g_expectation(walk.clone(), g, 1.0).unwrap();
        let xw = NodeVariable { level: 2, values: vec![1.0, 0.0, 0.3, -0.5] };
        let p = price(&gfam, &StrategySpace::Linear, 0, 2, &xw).unwrap();
        assert!((p.value.values[0] - 0.2).abs() < 1e-6, "{:?}", p.value);
    }

    #[test]
    fn arbitrage_is_unbounded() {
        // both children above the parent
        let tree = Arc::new(binomial_tree(1, 0.5, 1.0, 1.2, 1.1));
        let fam = RiskFamily::entropic(tree.clone(), 1.0).unwrap();
        let x = NodeVariable { level: 1, values: vec![0.0, 0.0] };
        match price(&fam, &StrategySpace::Linear, 0, 1, &x) {
            Err(Error::UnboundedRiskReduction { node: 0, direction }) => assert!(direction[0] > 0.0),
            other => panic!("{other:?}"),
        }
        let dual = RiskFamily::dual(tree.clone(), DualFamily::reference(&tree)).unwrap();
        assert!(matches!(
            price(&dual, &StrategySpace::Linear, 0, 1, &x),
            Err(Error::UnboundedRiskReduction { .. })
        ));
        // a bounded box keeps the problem finite
        let boxed = StrategySpace::Box { lower: vec![-1.0], upper: vec![1.0] };
        assert!(price(&fam, &boxed, 0, 1, &x).is_ok());
    }

    #[test]
    fn box_lies_between_zero_and_linear() {
        let tree = Arc::new(binomial_tree(2, 0.5, 1.0, 1.2, 0.9));
        let fam = RiskFamily::entropic(tree.clone(), 1.0).unwrap();
        let x = NodeVariable { level: 2, values: vec![2.0, 0.0, 0.5, -1.0] };
        let sub = tree.subtree(0, 2);
        let inf = |space: &StrategySpace| inner_infimum(&fam, space, &sub, &x.values, OptimOptions::default()).unwrap();
        let zero = inf(&StrategySpace::Zero).value;
        let boxed = inf(&StrategySpace::Box { lower: vec![-0.5], upper: vec![0.5] });
        let lin = inf(&StrategySpace::Linear).value;
        assert!(lin <= boxed.value + 1e-12 && boxed.value <= zero + 1e-12);
        assert!(boxed.theta.iter().all(|t| t.abs() <= 0.5));
    }
}
