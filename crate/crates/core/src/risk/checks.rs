use serde::Serialize;
use serde_json::{json, Value};

use super::family::{DynamicRisk, RiskFamily, RiskKind};
use super::penalty::minimal_penalty;
use crate::error::Result;
use crate::space::{DensityChange, NodeVariable, ScenarioTree};

/// Outcome of one property check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub check: String,
    pub pass: bool,
    pub max_violation: f64,
    pub witness: Option<Value>,
}

/// Running maximum of a violation, remembering where it happened.
pub(crate) struct Tracker {
    name: String,
    tol: f64,
    worst: f64,
    witness: Option<Value>,
}

impl Tracker {
    pub fn new(name: &str, tol: f64) -> Self {
        Self {
            name: name.to_string(),
            tol,
            worst: 0.0,
            witness: None,
        }
    }

    pub fn record(&mut self, violation: f64, witness: impl FnOnce() -> Value) {
        // NaN counts as a failure
        if !(violation <= self.worst) {
            self.worst = if violation.is_nan() { f64::INFINITY } else { violation };
            self.witness = Some(witness());
        }
    }

    /// Record node-wise `excess` (positive = violation).
    pub fn record_nodes(&mut self, tree: &ScenarioTree, excess: &NodeVariable, extra: impl Fn() -> Value) {
        for (pos, &v) in excess.values.iter().enumerate() {
            let node = tree.nodes_at(excess.level)[pos];
            self.record(v, || json!({"node": node, "detail": extra()}));
        }
    }

    pub fn finish(self) -> CheckOutcome {
        CheckOutcome {
            check: self.name,
            pass: self.worst < self.tol,
            max_violation: self.worst,
            witness: if self.worst > 0.0 { self.witness } else { None },
        }
    }
}

/// Deterministic F_s-measurable weights in [0, 1].
pub(crate) fn lambda_patterns(tree: &ScenarioTree, s: usize) -> Vec<NodeVariable> {
    let w = tree.width(s);
    let golden = 0.5 * (5f64.sqrt() - 1.0);
    vec![
        NodeVariable { level: s, values: (0..w).map(|i| (golden * (i + 1) as f64).fract()).collect() },
        NodeVariable { level: s, values: (0..w).map(|i| (golden * (i + 3) as f64).fract().powi(2)).collect() },
    ]
}

/// Indicators of a few events of F_s: everything, each single atom (up to
/// four) and every other atom.
pub(crate) fn event_patterns(tree: &ScenarioTree, s: usize) -> Vec<NodeVariable> {
    let w = tree.width(s);
    let mut out = vec![NodeVariable { level: s, values: vec![1.0; w] }];
    for k in 0..w.min(4) {
        out.push(NodeVariable { level: s, values: (0..w).map(|i| f64::from(u8::from(i == k))).collect() });
    }
    if w > 2 {
        out.push(NodeVariable { level: s, values: (0..w).map(|i| f64::from(u8::from(i % 2 == 0))).collect() });
    }
    out
}

fn shift_pattern(tree: &ScenarioTree, s: usize) -> NodeVariable {
    NodeVariable {
        level: s,
        values: (0..tree.width(s)).map(|i| 2.0 * ((0.7548776662 * (i + 1) as f64).fract() - 0.5)).collect(),
    }
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).map(move |i| (i, (i + 1) % n))
}

/// Monotonicity, convexity, Lambda-convexity, translation invariance and weak
/// homogeneity of `rho_st` on the given samples (all at level `t`).
pub fn check_axioms(
    family: &dyn DynamicRisk,
    s: usize,
    t: usize,
    samples: &[NodeVariable],
    tol: f64,
) -> Result<Vec<CheckOutcome>> {
    let tree = family.tree();
    tree.check_levels(s, t)?;
    let rho = |x: &NodeVariable| family.rho(s, t, x);
    let base: Vec<NodeVariable> = samples.iter().map(rho).collect::<Result<_>>()?;

    let mut mono = Tracker::new("monotonicity", tol);
    let mut conv = Tracker::new("convexity", tol);
    let mut lconv = Tracker::new("lambda_convexity", tol);
    let mut trans = Tracker::new("translation_invariance", tol);
    let mut homog = Tracker::new("weak_homogeneity", tol);

    let lambdas = lambda_patterns(tree, s);
    let events = event_patterns(tree, s);
    let shift = shift_pattern(tree, s);

    for (i, j) in pairs(samples.len()) {
        let (a, b) = (&samples[i], &samples[j]);
        let up = rho(&a.max(b))?;
        mono.record_nodes(tree, &(&up - &base[i]), || json!({"samples": [i, j]}));

        for lam in [0.25, 0.5, 0.75] {
            let mix = &(a * lam) + &(b * (1.0 - lam));
            let lhs = rho(&mix)?;
            let rhs = &(&base[i] * lam) + &(&base[j] * (1.0 - lam));
            conv.record_nodes(tree, &(&lhs - &rhs), || json!({"samples": [i, j], "lambda": lam}));
        }

        for lam in lambdas.iter().chain(&events) {
            let big = lam.lift(tree, t);
            let mix = &a.zip_with(&big, |x, l| x * l) + &b.zip_with(&big, |x, l| x * (1.0 - l));
            let lhs = rho(&mix)?;
            let rhs = &base[i].zip_with(lam, |r, l| r * l) + &base[j].zip_with(lam, |r, l| r * (1.0 - l));
            lconv.record_nodes(tree, &(&lhs - &rhs), || json!({"samples": [i, j], "lambda": lam.values}));
        }
    }

    for (i, a) in samples.iter().enumerate() {
        for scale in [1.0, -3.0] {
            let f = &shift * scale;
            let lhs = rho(&(a + &f.lift(tree, t)))?;
            let rhs = &base[i] - &f;
            trans.record_nodes(tree, &lhs.zip_with(&rhs, |x, y| (x - y).abs()), || json!({"sample": i, "shift": f.values}));
        }
        for ev in &events {
            let big = ev.lift(tree, t);
            let lhs = base[i].zip_with(ev, |r, e| r * e);
            let rhs = rho(&a.zip_with(&big, |x, e| x * e))?.zip_with(ev, |r, e| r * e);
            homog.record_nodes(tree, &lhs.zip_with(&rhs, |x, y| (x - y).abs()), || json!({"sample": i, "event": ev.values}));
        }
    }
    Ok(vec![mono.finish(), conv.finish(), lconv.finish(), trans.finish(), homog.finish()])
}

/// `max |rho_rt(X) - rho_rs(-rho_st(X))|` over the samples.
pub fn check_strong_tc(
    family: &dyn DynamicRisk,
    r: usize,
    s: usize,
    t: usize,
    samples: &[NodeVariable],
    tol: f64,
) -> Result<CheckOutcome> {
    let tree = family.tree();
    tree.check_levels(r, s)?;
    tree.check_levels(s, t)?;
    let mut tr = Tracker::new("strong_time_consistency", tol);
    for (i, x) in samples.iter().enumerate() {
        let direct = family.rho(r, t, x)?;
        let inner = family.rho(s, t, x)?;
        let nested = family.rho(r, s, &(-&inner))?;
        tr.record_nodes(tree, &direct.zip_with(&nested, |a, b| (a - b).abs()), || json!({"sample": i}));
    }
    Ok(tr.finish())
}

/// Verdicts of the time-consistency decomposition on one `(r, s, t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TcReport {
    pub strong_tc: CheckOutcome,
    /// Order preservation: `rho_st(X) >= rho_st(Y)` implies `rho_rt(X) >= rho_rt(Y)`.
    pub tc: CheckOutcome,
    /// `rho_rt(Y) = rho_rs(Y - rho_st(0))` for `Y` measurable at `s`.
    pub shifted_identity: CheckOutcome,
    /// `rho_rt(Y) = rho_rs(Y)` for `Y` measurable at `s`.
    pub restriction: CheckOutcome,
    /// Strong TC holds exactly when TC and the shifted identity both hold.
    pub equivalence_consistent: bool,
}

pub fn check_tc_decomposition(
    family: &dyn DynamicRisk,
    r: usize,
    s: usize,
    t: usize,
    samples: &[NodeVariable],
    tol: f64,
) -> Result<TcReport> {
    let tree = family.tree();
    let strong_tc = check_strong_tc(family, r, s, t, samples, tol)?;

    // For each pair build Y with rho_st(Y) = rho_st(X_i) exactly (by
    // translation), and Y + c with rho_st(Y + c) <= rho_st(X_i); TC forces
    // rho_rt(Y) = rho_rt(X_i) and rho_rt(Y + c) <= rho_rt(X_i).
    let mut tc = Tracker::new("time_consistency", tol);
    for (i, j) in pairs(samples.len()) {
        let (xi, xj) = (&samples[i], &samples[j]);
        let gap = &family.rho(s, t, xj)? - &family.rho(s, t, xi)?;
        let y = xj + &gap.lift(tree, t);
        let ri = family.rho(r, t, xi)?;
        let ry = family.rho(r, t, &y)?;
        tc.record_nodes(tree, &ry.zip_with(&ri, |a, b| (a - b).abs()), || json!({"samples": [i, j], "form": "equal"}));
        let bumped = y.map(|v| v + 0.5);
        let rb = family.rho(r, t, &bumped)?;
        tc.record_nodes(tree, &(&rb - &ri), || json!({"samples": [i, j], "form": "order"}));
    }
    let tc = tc.finish();

    let zero_st = family.rho(s, t, &NodeVariable::zeros(tree, t))?;
    let mut ident = Tracker::new("shifted_restriction_identity", tol);
    let mut restr = Tracker::new("restriction", tol);
    for (i, x) in samples.iter().enumerate() {
        // an F_s-measurable position derived from the sample
        let y = crate::space::cond_expect(tree, x, None, s)?;
        let lhs = family.rho(r, t, &y.lift(tree, t))?;
        let shifted = family.rho(r, s, &(&y - &zero_st))?;
        ident.record_nodes(tree, &lhs.zip_with(&shifted, |a, b| (a - b).abs()), || json!({"sample": i}));
        let plain = family.rho(r, s, &y)?;
        restr.record_nodes(tree, &lhs.zip_with(&plain, |a, b| (a - b).abs()), || json!({"sample": i}));
    }
    let shifted_identity = ident.finish();
    let restriction = restr.finish();
    let equivalence_consistent = strong_tc.pass == (tc.pass && shifted_identity.pass);
    Ok(TcReport {
        strong_tc,
        tc,
        shifted_identity,
        restriction,
        equivalence_consistent,
    })
}

/// Domination constants and a sensitivity witness for `rho_0T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominationReport {
    /// Smallest `K` with `rho_0T(X) <= K ||X||_2 + C` over the probe set.
    pub k: f64,
    /// `C = rho_0T(0)`.
    pub c: f64,
    pub probes: usize,
    pub sensitive: bool,
    /// Label of an equivalent measure with finite penalty.
    pub witness: Option<String>,
    pub witness_penalty: Option<f64>,
}

pub fn check_domination_sensitivity(family: &RiskFamily) -> Result<DominationReport> {
    let tree = family.tree();
    let big_t = tree.horizon();
    let c = family.rho(0, big_t, &NodeVariable::zeros(tree, big_t))?.values[0];
    let mut probes = Vec::new();
    for scale in [1.0, -1.0, 10.0, -10.0] {
        probes.push(NodeVariable::constant(tree, big_t, scale));
        for k in 0..tree.width(big_t) {
            let mut v = NodeVariable::zeros(tree, big_t);
            v.values[k] = scale;
            probes.push(v);
        }
    }
    let mut k = 0.0f64;
    for x in &probes {
        let value = family.rho(0, big_t, x)?.values[0];
        k = k.max((value - c) / x.l2_norm(tree));
    }

    let mut candidates = vec![("P".to_string(), DensityChange::reference(tree, 0, big_t))];
    if let Some(dual) = dual_base(family.kind()) {
        for (j, g) in dual.generators.iter().enumerate() {
            candidates.push((format!("generator {j}"), g.density.clone()));
        }
        let n = dual.generators.len() as f64;
        let mixed = DensityChange::from_conditionals(tree, 0, big_t, |parent| {
            tree.children(parent)
                .iter()
                .map(|&ch| {
                    tree.prob(ch) * dual.generators.iter().map(|g| g.density.ratio(ch)).sum::<f64>() / n
                })
                .collect()
        })?;
        candidates.push(("generator mixture".to_string(), mixed));
    }
    let mut witness = None;
    let mut witness_penalty = None;
    for (label, q) in candidates {
        if !q.is_equivalent() {
            continue;
        }
        let a = minimal_penalty(family, 0, big_t, &q)?;
        if a.is_finite() {
            witness = Some(label);
            witness_penalty = Some(a.values[0]);
            break;
        }
    }
    Ok(DominationReport {
        k,
        c,
        probes: probes.len(),
        sensitive: witness.is_some(),
        witness,
        witness_penalty,
    })
}

pub(crate) fn dual_base(kind: &RiskKind) -> Option<&super::dual::DualFamily> {
    match kind {
        RiskKind::DualPenalty(d) => Some(d),
        RiskKind::Normalized(b) | RiskKind::Shifted { base: b, .. } => dual_base(b),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{DriverSpec, DualFamily, DualGenerator, LocalRisk};
    use crate::space::generate::{binomial_tree, random_variable, random_walk_tree};
    use crate::space::LocalTree;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn samples(tree: &ScenarioTree, seed: u64) -> Vec<NodeVariable> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..6).map(|_| random_variable(&mut rng, tree, tree.horizon(), 2.0)).collect()
    }

    /// `min` instead of `max` over generators: monotone and cash-additive but concave.
    struct BestCase(RiskFamily, DualFamily);

    impl DynamicRisk for BestCase {
        fn tree(&self) -> &ScenarioTree {
            self.0.tree()
        }
        fn eval_local(&self, sub: &LocalTree, leaves: &[f64]) -> Result<LocalRisk> {
            let mut best: Option<LocalRisk> = None;
            for g in &self.1.generators {
                let q = g.density.leaf_probs(sub);
                let value = -q.iter().zip(leaves).map(|(q, x)| q * x).sum::<f64>();
                if best.as_ref().is_none_or(|b| value < b.value) {
                    best = Some(LocalRisk { value, weights: q });
                }
            }
            Ok(best.unwrap())
        }
    }

    fn tilted_pair(tree: &ScenarioTree, pasting: bool, penalty: f64) -> DualFamily {
        let up = DensityChange::from_conditionals(tree, 0, tree.horizon(), |_| vec![0.7, 0.3]).unwrap();
        let down = DensityChange::from_conditionals(tree, 0, tree.horizon(), |_| vec![0.3, 0.7]).unwrap();
        DualFamily::new(
            tree,
            vec![
                DualGenerator { density: up, penalty: vec![penalty; tree.len()] },
                DualGenerator { density: down, penalty: vec![0.0; tree.len()] },
            ],
            pasting,
        )
        .unwrap()
    }

    #[test]
    fn entropic_axioms_hold() {
        let tree = Arc::new(random_walk_tree(3, 0.25, 1.0));
        let fam = RiskFamily::entropic(tree.clone(), 1.3).unwrap();
        for out in check_axioms(&fam, 1, 3, &samples(&tree, 1), 1e-10).unwrap() {
            assert!(out.pass, "{out:?}");
        }
    }

    #[test]
    fn concave_mix_is_flagged() {
        let tree = Arc::new(binomial_tree(2, 0.5, 1.0, 1.1, 0.9));
        let fam = RiskFamily::entropic(tree.clone(), 1.0).unwrap();
        let bad = BestCase(fam, tilted_pair(&tree, false, 0.0));
        let out = check_axioms(&bad, 0, 2, &samples(&tree, 2), 1e-10).unwrap();
        let conv = out.iter().find(|o| o.check == "convexity").unwrap();
        assert!(!conv.pass && conv.max_violation > 1e-3);
        assert!(out.iter().find(|o| o.check == "monotonicity").unwrap().pass);
    }

    #[test]
    fn strong_tc_by_construction() {
        let tree = Arc::new(random_walk_tree(3, 0.25, 1.0));
        let g = DriverSpec::quadratic(1.0, 1.5).unwrap().with_offset(0.1, 0.4).unwrap();
        let fams = [
            RiskFamily::entropic(tree.clone(), 0.7).unwrap(),
            RiskFamily::g_expectation(tree.clone(), g, 0.25).unwrap(),
            RiskFamily::dual(tree.clone(), tilted_pair(&tree, true, 0.05)).unwrap(),
        ];
        for fam in &fams {
            let out = check_strong_tc(fam, 0, 1, 3, &samples(&tree, 3), 1e-9).unwrap();
            assert!(out.pass, "{:?}: {out:?}", fam.kind());
        }
        let whole = RiskFamily::dual(tree.clone(), tilted_pair(&tree, false, 0.05)).unwrap();
        assert!(!check_strong_tc(&whole, 0, 1, 3, &samples(&tree, 3), 1e-9).unwrap().pass);
    }

    #[test]
    fn normalization_breaks_strong_tc_but_not_tc() {
        let tree = Arc::new(random_walk_tree(3, 0.25, 1.0));
        let g = DriverSpec::quadratic(1.0, 1.5).unwrap().with_offset(0.1, 0.8).unwrap();
        let fam = RiskFamily::g_expectation(tree.clone(), g, 0.25).unwrap();
        let xs = samples(&tree, 4);
        let rep = check_tc_decomposition(&fam, 0, 1, 3, &xs, 1e-9).unwrap();
        assert!(rep.strong_tc.pass && rep.tc.pass && rep.shifted_identity.pass);
        assert!(!rep.restriction.pass);
        let norm = check_tc_decomposition(&fam.normalized(), 0, 1, 3, &xs, 1e-9).unwrap();
        assert!(!norm.strong_tc.pass && norm.tc.pass && !norm.shifted_identity.pass);
        assert!(rep.equivalence_consistent && norm.equivalence_consistent);
    }

    #[test]
    fn normalized_entropic_has_restriction() {
        let tree = Arc::new(random_walk_tree(3, 0.25, 1.0));
        let fam = RiskFamily::entropic(tree.clone(), 2.0).unwrap().normalized();
        let rep = check_tc_decomposition(&fam, 0, 2, 3, &samples(&tree, 5), 1e-9).unwrap();
        assert!(rep.strong_tc.pass && rep.tc.pass && rep.restriction.pass);
    }

    #[test]
    fn domination_and_sensitivity() {
        let tree = Arc::new(binomial_tree(2, 0.5, 1.0, 1.1, 0.9));
        let rep = check_domination_sensitivity(&RiskFamily::entropic(tree.clone(), 1.0).unwrap()).unwrap();
        assert_eq!(rep.witness.as_deref(), Some("P"));
        assert_eq!(rep.witness_penalty, Some(0.0));
        assert!(rep.k >= 1.0);

        // generators vanish on alternate branches; P is not listed but is their mixture
        let a = DensityChange::from_conditionals(&tree, 0, 2, |_| vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let corner = DensityChange::from_conditionals(&tree, 0, 2, |_| vec![0.0, 1.0]).unwrap();
        let dual = DualFamily::new(
            &tree,
            vec![
                DualGenerator { density: a, penalty: vec![0.0; tree.len()] },
                DualGenerator { density: corner, penalty: vec![0.0; tree.len()] },
            ],
            true,
        )
        .unwrap();
        let rep = check_domination_sensitivity(&RiskFamily::dual(tree.clone(), dual).unwrap()).unwrap();
        assert!(rep.sensitive);

        let only_corner = DualFamily::new(
            &tree,
            vec![DualGenerator {
                density: DensityChange::from_conditionals(&tree, 0, 2, |_| vec![0.0, 1.0]).unwrap(),
                penalty: vec![0.0; tree.len()],
            }],
            true,
        )
        .unwrap();
        let rep = check_domination_sensitivity(&RiskFamily::dual(tree.clone(), only_corner).unwrap()).unwrap();
        assert!(!rep.sensitive && rep.witness.is_none());
    }
}
