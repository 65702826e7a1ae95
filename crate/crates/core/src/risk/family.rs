use std::sync::Arc;

use super::driver::DriverSpec;
use super::dual::DualFamily;
use crate::error::{Error, Result};
use crate::space::{LocalTree, NodeVariable, ScenarioTree};

/// Value of `rho_st` at one atom of `F_s`, with its dual weights.
///
/// `weights[i] = -d rho / d X_i` over the leaves of the local tree. For a
/// monotone, translation-invariant risk measure these are the conditional
/// probabilities of a measure attaining the dual representation.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRisk {
    pub value: f64,
    pub weights: Vec<f64>,
}

/// A fully-dynamic risk measure `(rho_st)_{s <= t}` on a scenario tree.
pub trait DynamicRisk {
    fn tree(&self) -> &ScenarioTree;

    /// Evaluate `rho_st` at the root of `sub` for a position paying `leaves`
    /// on the leaves of `sub` (level `t = sub.leaf_level()`).
    fn eval_local(&self, sub: &LocalTree, leaves: &[f64]) -> Result<LocalRisk>;

    /// `rho_st(X)` as a variable at level `s`.
    fn rho(&self, s: usize, t: usize, x: &NodeVariable) -> Result<NodeVariable> {
        let tree = self.tree();
        tree.check_levels(s, t)?;
        if x.level != t {
            return Err(Error::LevelMismatch {
                expected: t,
                found: x.level,
            });
        }
        let mut values = Vec::with_capacity(tree.width(s));
        for &n in tree.nodes_at(s) {
            let sub = tree.subtree(n, t);
            let leaves = &x.values[tree.span(n, t)];
            values.push(self.eval_local(&sub, leaves)?.value);
        }
        Ok(NodeVariable { level: s, values })
    }
}

/// The construction behind a [`RiskFamily`].
#[derive(Debug, Clone, PartialEq)]
pub enum RiskKind {
    /// `rho_st(X) = 1/gamma log E[exp(-gamma X) | F_s]`
    Entropic { gamma: f64 },
    /// Discrete BSDE on a binary tree with step `dt`.
    GExpectation { driver: DriverSpec, dt: f64 },
    /// Esssup over a finite set of measures minus their penalties.
    DualPenalty(DualFamily),
    /// `rho_st(X) - rho_st(0)`
    Normalized(Box<RiskKind>),
    /// `rho_st(X) + rate * (t - s)^power`
    Shifted {
        base: Box<RiskKind>,
        rate: f64,
        power: f64,
    },
}

/// A risk family bound to its scenario tree.
#[derive(Debug, Clone)]
pub struct RiskFamily {
    tree: Arc<ScenarioTree>,
    kind: RiskKind,
}

impl RiskFamily {
    pub fn new(tree: Arc<ScenarioTree>, kind: RiskKind) -> Result<Self> {
        validate_kind(&tree, &kind)?;
        Ok(Self { tree, kind })
    }

    pub fn entropic(tree: Arc<ScenarioTree>, gamma: f64) -> Result<Self> {
        Self::new(tree, RiskKind::Entropic { gamma })
    }

    pub fn g_expectation(tree: Arc<ScenarioTree>, driver: DriverSpec, dt: f64) -> Result<Self> {
        Self::new(tree, RiskKind::GExpectation { driver, dt })
    }

    pub fn dual(tree: Arc<ScenarioTree>, family: DualFamily) -> Result<Self> {
        Self::new(tree, RiskKind::DualPenalty(family))
    }

    /// The normalized family `rho_st(X) - rho_st(0)`.
    pub fn normalized(&self) -> Self {
        Self {
            tree: self.tree.clone(),
            kind: RiskKind::Normalized(Box::new(self.kind.clone())),
        }
    }

    /// Add the deterministic cost `rate * (t - s)^power` to every `rho_st`.
    pub fn shifted(&self, rate: f64, power: f64) -> Result<Self> {
        Self::new(
            self.tree.clone(),
            RiskKind::Shifted {
                base: Box::new(self.kind.clone()),
                rate,
                power,
            },
        )
    }

    pub fn kind(&self) -> &RiskKind {
        &self.kind
    }

    pub fn tree_arc(&self) -> &Arc<ScenarioTree> {
        &self.tree
    }
}

fn validate_kind(tree: &ScenarioTree, kind: &RiskKind) -> Result<()> {
    match kind {
        RiskKind::Entropic { gamma } => {
            if !(gamma.is_finite() && *gamma > 0.0) {
                return Err(Error::InvalidFamily(format!(
                    "entropic risk aversion must be > 0, got {gamma}"
                )));
            }
        }
        RiskKind::GExpectation { driver, dt } => {
            if !(dt.is_finite() && *dt > 0.0) {
                return Err(Error::InvalidFamily(format!("dt must be > 0, got {dt}")));
            }
            let driver = driver.clone().validated()?;
            let value = driver.lipschitz() * dt.sqrt();
            if value > 1.0 + 1e-12 {
                return Err(Error::NonMonotoneDriver {
                    node: tree.root(),
                    value,
                    bound: 1.0,
                });
            }
            for level in 0..tree.horizon() {
                for &n in tree.nodes_at(level) {
                    let kids = tree.children(n);
                    if kids.len() != 2 {
                        return Err(Error::NotBinary {
                            node: n,
                            children: kids.len(),
                        });
                    }
                    let p = tree.prob(kids[0]);
                    let bound = (p.min(1.0 - p) / p.max(1.0 - p)).sqrt();
                    if value > bound + 1e-12 {
                        return Err(Error::NonMonotoneDriver { node: n, value, bound });
                    }
                }
            }
        }
        RiskKind::DualPenalty(family) => family.validate(tree)?,
        RiskKind::Normalized(base) => validate_kind(tree, base)?,
        RiskKind::Shifted { base, rate, power } => {
            if !rate.is_finite() || !power.is_finite() || *power < 0.0 {
                return Err(Error::InvalidFamily("shift needs finite rate and power >= 0".into()));
            }
            validate_kind(tree, base)?;
        }
    }
    Ok(())
}

impl DynamicRisk for RiskFamily {
    fn tree(&self) -> &ScenarioTree {
        &self.tree
    }

    fn eval_local(&self, sub: &LocalTree, leaves: &[f64]) -> Result<LocalRisk> {
        eval_kind(&self.tree, &self.kind, sub, leaves)
    }
}

fn eval_kind(tree: &ScenarioTree, kind: &RiskKind, sub: &LocalTree, leaves: &[f64]) -> Result<LocalRisk> {
    debug_assert_eq!(leaves.len(), sub.n_leaves());
    match kind {
        RiskKind::Entropic { gamma } => Ok(entropic_local(sub, leaves, *gamma)),
        RiskKind::GExpectation { driver, dt } => Ok(g_expectation_local(tree, sub, leaves, driver, *dt)),
        RiskKind::DualPenalty(family) => Ok(family.eval_local(sub, leaves)),
        RiskKind::Normalized(base) => {
            let mut out = eval_kind(tree, base, sub, leaves)?;
            let zero = vec![0.0; leaves.len()];
            out.value -= eval_kind(tree, base, sub, &zero)?.value;
            Ok(out)
        }
        RiskKind::Shifted { base, rate, power } => {
            let mut out = eval_kind(tree, base, sub, leaves)?;
            let span = sub.leaf_level() - sub.root_level;
            if span > 0 {
                out.value += rate * (span as f64).powf(*power);
            }
            Ok(out)
        }
    }
}

fn entropic_local(sub: &LocalTree, leaves: &[f64], gamma: f64) -> LocalRisk {
    let probs = sub.leaf_probs();
    // log-sum-exp of -gamma X under the conditional leaf probabilities
    let exponents: Vec<f64> = leaves.iter().map(|x| -gamma * x).collect();
    let top = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<f64> = probs
        .iter()
        .zip(&exponents)
        .map(|(p, e)| p * (e - top).exp())
        .collect();
    let total: f64 = terms.iter().sum();
    LocalRisk {
        value: (top + total.ln()) / gamma,
        weights: terms.iter().map(|w| w / total).collect(),
    }
}

fn g_expectation_local(
    tree: &ScenarioTree,
    sub: &LocalTree,
    leaves: &[f64],
    driver: &DriverSpec,
    dt: f64,
) -> LocalRisk {
    let n = sub.nodes.len();
    let mut y = vec![0.0; n];
    // sensitivities of each node's value to its (up, down) children
    let mut sens = vec![(0.0, 0.0); n];
    for (i, &x) in sub.leaves().zip(leaves) {
        y[i] = -x;
    }
    for i in sub.internal().rev() {
        let node = &sub.nodes[i];
        let up = node.children.start;
        let down = up + 1;
        let p = sub.nodes[up].prob;
        let q = 1.0 - p;
        let root_pq = (p * q).sqrt();
        let z = root_pq / dt.sqrt() * (y[up] - y[down]);
        let asset = tree.assets(node.global).first().copied().unwrap_or(0.0);
        y[i] = p * y[up] + q * y[down] + driver.value(asset, z) * dt;
        let dg = driver.derivative(z) * root_pq * dt.sqrt();
        sens[i] = (p + dg, q - dg);
    }
    let mut w = vec![0.0; n];
    w[0] = 1.0;
    for i in sub.internal() {
        let up = sub.nodes[i].children.start;
        w[up] = w[i] * sens[i].0;
        w[up + 1] = w[i] * sens[i].1;
    }
    LocalRisk {
        value: y[0],
        weights: w[sub.leaves()].to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generate::{binomial_tree, random_walk_tree};

    fn one_step() -> Arc<ScenarioTree> {
        Arc::new(binomial_tree(1, 0.5, 1.0, 1.1, 0.9))
    }

    #[test]
    fn entropic_log_cosh() {
        let fam = RiskFamily::entropic(one_step(), 1.0).unwrap();
        let x = NodeVariable { level: 1, values: vec![1.0, -1.0] };
        let r = fam.rho(0, 1, &x).unwrap();
        assert!((r.values[0] - 0.4337808304830271).abs() < 1e-12);
    }

    #[test]
    fn g_expectation_abs_driver_one_step() {
        let g = DriverSpec::abs_linear(0.1).unwrap();
        let fam = RiskFamily::g_expectation(one_step(), g, 1.0).unwrap();
        let x = NodeVariable { level: 1, values: vec![1.0, -1.0] };
        let r = fam.rho(0, 1, &x).unwrap();
        assert!((r.values[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn constants_are_translated() {
        let tree = Arc::new(random_walk_tree(3, 0.25, 1.0));
        let fams = [
            RiskFamily::entropic(tree.clone(), 2.0).unwrap(),
            RiskFamily::g_expectation(tree.clone(), DriverSpec::zero(), 0.25).unwrap(),
            RiskFamily::g_expectation(tree.clone(), DriverSpec::abs_linear(0.5).unwrap(), 0.25).unwrap(),
        ];
        for fam in &fams {
            let c = NodeVariable::constant(&tree, 3, 1.75);
            let r = fam.rho(1, 3, &c).unwrap();
            assert!(r.values.iter().all(|v| (v + 1.75).abs() < 1e-12));
        }
    }

    #[test]
    fn g_expectation_guards() {
        let tree = one_step();
        let steep = DriverSpec::abs_linear(1.5).unwrap();
        assert!(matches!(
            RiskFamily::g_expectation(tree.clone(), steep, 1.0),
            Err(Error::NonMonotoneDriver { .. })
        ));
        let skewed = Arc::new(binomial_tree(1, 0.2, 1.0, 1.1, 0.9));
        // C sqrt(dt) = 0.9 passes the symmetric guard but not the p = 0.2 one
        assert!(RiskFamily::g_expectation(skewed, DriverSpec::abs_linear(0.9).unwrap(), 1.0).is_err());

        let tri = Arc::new(
            ScenarioTree::from_json(
                r#"{"levels":2,"nodes":[
                {"id":0,"parent":null,"level":0,"prob":1.0,"assets":[1.0]},
                {"id":1,"parent":0,"level":1,"prob":0.25,"assets":[1.2]},
                {"id":2,"parent":0,"level":1,"prob":0.5,"assets":[1.0]},
                {"id":3,"parent":0,"level":1,"prob":0.25,"assets":[0.8]}]}"#,
            )
            .unwrap(),
        );
        assert!(matches!(
            RiskFamily::g_expectation(tri, DriverSpec::zero(), 1.0),
            Err(Error::NotBinary { node: 0, children: 3 })
        ));
    }

    #[test]
    fn weights_match_finite_differences() {
        let tree = Arc::new(random_walk_tree(3, 0.25, 1.0));
        let g = DriverSpec::quadratic(1.0, 1.5).unwrap().with_offset(0.1, 0.3).unwrap();
        let fams = [
            RiskFamily::entropic(tree.clone(), 1.5).unwrap(),
            RiskFamily::g_expectation(tree.clone(), g, 0.25).unwrap(),
        ];
        let leaves = [0.3, -0.2, 0.9, 0.1, -0.4, 0.25, 0.0, 0.6];
        let sub = tree.subtree(tree.root(), 3);
        for fam in &fams {
            let base = fam.eval_local(&sub, &leaves).unwrap();
            let total: f64 = base.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            for i in 0..leaves.len() {
                let h = 1e-6;
                let mut up = leaves;
                up[i] += h;
                let mut dn = leaves;
                dn[i] -= h;
                let fd = (fam.eval_local(&sub, &up).unwrap().value
                    - fam.eval_local(&sub, &dn).unwrap().value)
                    / (2.0 * h);
                assert!((fd + base.weights[i]).abs() < 1e-7, "leaf {i}: {fd} vs {}", base.weights[i]);
            }
        }
    }

    #[test]
    fn normalized_and_shifted_wrappers() {
        let tree = Arc::new(random_walk_tree(2, 0.25, 1.0));
        let g = DriverSpec::abs_linear(0.4).unwrap().with_offset(0.3, 0.0).unwrap();
        let fam = RiskFamily::g_expectation(tree.clone(), g, 0.25).unwrap();
        let zero = NodeVariable::zeros(&tree, 2);
        // constant driver offset accumulates over two steps of length 0.25
        let r0 = fam.rho(0, 2, &zero).unwrap();
        assert!((r0.values[0] - 0.15).abs() < 1e-15);
        assert_eq!(fam.normalized().rho(0, 2, &zero).unwrap().values[0], 0.0);
        let shifted = fam.shifted(0.5, 2.0).unwrap();
        assert!((shifted.rho(0, 2, &zero).unwrap().values[0] - 2.15).abs() < 1e-15);
    }
}
