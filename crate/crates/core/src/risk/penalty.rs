use serde::Serialize;

use super::family::{DynamicRisk, RiskFamily, RiskKind};
use crate::error::Result;
use crate::optim::{bfgs, OptimOptions, Status};
use crate::space::{DensityChange, NodeVariable, ScenarioTree, ARITH_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyMethod {
    ClosedForm,
    LinearProgram,
    Conjugate,
}

/// `alpha_st(Q)` per atom of level `s`. Infinite entries are `+inf` in
/// `values` and flagged in `infinite`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalPenalty {
    pub level: usize,
    pub values: Vec<f64>,
    pub infinite: Vec<bool>,
    pub method: PenaltyMethod,
    /// Optimizer iterations summed over nodes (conjugate method only).
    pub iterations: usize,
}

impl MinimalPenalty {
    fn from_options(level: usize, values: Vec<Option<f64>>, method: PenaltyMethod) -> Self {
        Self {
            level,
            infinite: values.iter().map(Option::is_none).collect(),
            values: values.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
            method,
            iterations: 0,
        }
    }

    pub fn as_variable(&self) -> NodeVariable {
        NodeVariable {
            level: self.level,
            values: self.values.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        !self.infinite.iter().any(|&b| b)
    }
}

/// The minimal penalty of `q` for `rho_st`: closed form or exact LP when the
/// construction admits one, otherwise the numerical conjugate.
pub fn minimal_penalty(family: &RiskFamily, s: usize, t: usize, q: &DensityChange) -> Result<MinimalPenalty> {
    match exact_penalty(family, s, t, q)? {
        Some(p) => Ok(p),
        None => conjugate_penalty(family, s, t, q, OptimOptions::default()),
    }
}

/// Closed-form (entropic) or LP (dual) penalty, `None` for other kinds.
pub fn exact_penalty(family: &RiskFamily, s: usize, t: usize, q: &DensityChange) -> Result<Option<MinimalPenalty>> {
    let tree = family.tree();
    tree.check_levels(s, t)?;
    q.validate(tree, ARITH_TOL)?;
    let q = q.restrict(tree, s, t);
    exact_kind(family, tree, family.kind(), s, t, &q)
}

fn exact_kind(
    family: &RiskFamily,
    tree: &ScenarioTree,
    kind: &RiskKind,
    s: usize,
    t: usize,
    q: &DensityChange,
) -> Result<Option<MinimalPenalty>> {
    Ok(match kind {
        RiskKind::Entropic { gamma } => {
            let h = q.relative_entropy(tree);
            Some(MinimalPenalty::from_options(
                s,
                h.values.iter().map(|v| Some(v / gamma)).collect(),
                PenaltyMethod::ClosedForm,
            ))
        }
        RiskKind::DualPenalty(dual) => Some(MinimalPenalty::from_options(
            s,
            dual.minimal_penalty(tree, s, t, q)?,
            PenaltyMethod::LinearProgram,
        )),
        RiskKind::GExpectation { .. } => None,
        // alpha(rho - c) = alpha(rho) + c for X-independent c
        RiskKind::Normalized(base) => exact_kind(family, tree, base, s, t, q)?.map(|mut p| {
            let zero = NodeVariable::zeros(tree, t);
            let base_family = RiskFamily::new(family.tree_arc().clone(), (**base).clone())
                .expect("base of a valid family is valid");
            let r0 = base_family.rho(s, t, &zero).expect("levels checked");
            for (v, c) in p.values.iter_mut().zip(&r0.values) {
                *v += c;
            }
            p
        }),
        RiskKind::Shifted { base, rate, power } => exact_kind(family, tree, base, s, t, q)?.map(|mut p| {
            if t > s {
                let shift = rate * ((t - s) as f64).powf(*power);
                p.values.iter_mut().for_each(|v| *v -= shift);
            }
            p
        }),
    })
}

/// `sup_X E_Q[-X | F_s] - rho_st(X)` per atom, by BFGS on the leaf values.
///
/// A supremum beyond `-opts.floor` is reported as infinite.
pub fn conjugate_penalty(
    family: &dyn DynamicRisk,
    s: usize,
    t: usize,
    q: &DensityChange,
    opts: OptimOptions,
) -> Result<MinimalPenalty> {
    let tree = family.tree();
    tree.check_levels(s, t)?;
    q.validate(tree, ARITH_TOL)?;
    let mut values = Vec::with_capacity(tree.width(s));
    let mut iterations = 0;
    for &n in tree.nodes_at(s) {
        let sub = tree.subtree(n, t);
        let qp = q.leaf_probs(&sub);
        let mut failure = None;
        let result = bfgs(
            |x, g| match family.eval_local(&sub, x) {
                Ok(r) => {
                    for i in 0..x.len() {
                        g[i] = qp[i] - r.weights[i];
                    }
                    qp.iter().zip(x).map(|(q, x)| q * x).sum::<f64>() + r.value
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    g.iter_mut().for_each(|v| *v = 0.0);
                    f64::NAN
                }
            },
            &vec![0.0; sub.n_leaves()],
            opts,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        iterations += result.iterations;
        values.push(if result.status == Status::Unbounded {
            None
        } else {
            Some(-result.value)
        });
    }
    let mut out = MinimalPenalty::from_options(s, values, PenaltyMethod::Conjugate);
    out.iterations = iterations;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{DriverSpec, DualFamily};
    use crate::space::generate::{binomial_tree, random_walk_tree};
    use std::sync::Arc;

    #[test]
    fn entropic_closed_form_and_conjugate_agree() {
        let tree = Arc::new(binomial_tree(1, 0.5, 1.0, 1.1, 0.9));
        let fam = RiskFamily::entropic(tree.clone(), 2.0).unwrap();
        let q = DensityChange::from_conditionals(&tree, 0, 1, |_| vec![0.75, 0.25]).unwrap();
        let closed = minimal_penalty(&fam, 0, 1, &q).unwrap();
        assert_eq!(closed.method, PenaltyMethod::ClosedForm);
        assert!((closed.values[0] - 0.065406018).abs() < 1e-9);
        let numeric = conjugate_penalty(&fam, 0, 1, &q, OptimOptions::default()).unwrap();
        assert!((numeric.values[0] - closed.values[0]).abs() < 1e-10);
    }

    #[test]
    fn reference_measure_has_zero_entropic_penalty() {
        let tree = Arc::new(binomial_tree(3, 0.4, 1.0, 1.1, 0.9));
        let fam = RiskFamily::entropic(tree.clone(), 1.0).unwrap();
        let p = DensityChange::reference(&tree, 0, 3);
        let a = minimal_penalty(&fam, 1, 3, &p).unwrap();
        assert!(a.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn g_expectation_conjugate_detects_infinite_penalty() {
        let tree = Arc::new(random_walk_tree(1, 1.0, 1.0));
        let fam = RiskFamily::g_expectation(tree.clone(), DriverSpec::abs_linear(0.5).unwrap(), 1.0).unwrap();
        // E_Q[-X] - rho(X) = (q - 1/2)(x_down - x_up) - 0.25 |x_up - x_down|:
        // zero inside |q - 1/2| <= 1/4, unbounded outside
        let inside = DensityChange::from_conditionals(&tree, 0, 1, |_| vec![0.7, 0.3]).unwrap();
        let outside = DensityChange::from_conditionals(&tree, 0, 1, |_| vec![0.9, 0.1]).unwrap();
        let a = minimal_penalty(&fam, 0, 1, &inside).unwrap();
        assert!(a.values[0].abs() < 1e-8 && !a.infinite[0]);
        let b = minimal_penalty(&fam, 0, 1, &outside).unwrap();
        assert!(b.infinite[0]);
    }

    #[test]
    fn wrappers_shift_the_penalty() {
        let tree = Arc::new(random_walk_tree(2, 0.25, 1.0));
        let fam = RiskFamily::dual(tree.clone(), DualFamily::reference(&tree)).unwrap();
        let shifted = fam.shifted(0.3, 1.0).unwrap();
        let p = DensityChange::reference(&tree, 0, 2);
        let a = minimal_penalty(&shifted, 0, 2, &p).unwrap();
        assert!((a.values[0] + 0.6).abs() < 1e-12);
        let back = minimal_penalty(&shifted.normalized(), 0, 2, &p).unwrap();
        assert!(back.values[0].abs() < 1e-12);
    }
}
