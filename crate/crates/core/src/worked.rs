//! The worked numbers of the documentation, each computed twice: by the
//! brute-force oracle and by the main code path.

use std::sync::Arc;

use serde::Serialize;

use crate::error::Result;
use crate::good_deal::{ngd_lower, ngd_membership, ngd_upper, DeltaSchedule};
use crate::indifference::{price, StrategySpace};
use crate::optim::OptimOptions;
use crate::oracle::{
    oracle_cond_expect, oracle_entropic, oracle_penalty_lower, oracle_price_grid, oracle_qp, oracle_relative_entropy,
    oracle_rho_dual, GridSpec,
};
use crate::risk::{conjugate_penalty, minimal_penalty, DriverSpec, DualFamily, DualFamilyJson, DynamicRisk, RiskFamily};
use crate::space::generate::binomial_tree;
use crate::space::{cond_expect, relative_entropy, DensityChange, NodeVariable};

/// Which side the oracle value must fall on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Equal,
    /// The oracle is a lower bound of the main value.
    Below,
    /// The oracle is an upper bound of the main value.
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkedExample {
    pub name: &'static str,
    pub expected: Option<f64>,
    pub oracle: f64,
    pub main: f64,
    pub side: Side,
    /// Allowed `|oracle - main|`.
    pub tol: f64,
    pub agree: bool,
}

fn row(name: &'static str, expected: Option<f64>, oracle: f64, main: f64, side: Side, tol: f64) -> WorkedExample {
    let gap = oracle - main;
    let sided = match side {
        Side::Equal => true,
        Side::Below => gap <= 1e-12,
        Side::Above => gap >= -1e-12,
    };
    // expected values are quoted to six decimals
    let quoted = expected.is_none_or(|e| (main - e).abs() <= 1e-6);
    WorkedExample {
        name,
        expected,
        oracle,
        main,
        side,
        tol,
        agree: gap.abs() <= tol && sided && quoted,
    }
}

fn var(tree: &crate::space::ScenarioTree, level: usize, v: &[f64]) -> Result<NodeVariable> {
    NodeVariable::new(tree, level, v.to_vec())
}

/// Run every worked example.
pub fn worked_examples() -> Result<Vec<WorkedExample>> {
    let mut out = Vec::new();

    // two-period conditional expectations
    let two = binomial_tree(2, 0.5, 1.0, 2.0, 0.5);
    let x = var(&two, 2, &[4.0, 1.0, 1.0, 0.25])?;
    let (o1, m1) = (oracle_cond_expect(&two, &x, None, 1), cond_expect(&two, &x, None, 1)?);
    let (o0, m0) = (oracle_cond_expect(&two, &x, None, 0), cond_expect(&two, &x, None, 0)?);
    out.push(row("cond_expect_up", Some(2.5), o1.values[0], m1.values[0], Side::Equal, 1e-15));
    out.push(row("cond_expect_down", Some(0.625), o1.values[1], m1.values[1], Side::Equal, 1e-15));
    out.push(row("cond_expect_root", Some(1.5625), o0.values[0], m0.values[0], Side::Equal, 1e-15));

    let one = Arc::new(binomial_tree(1, 0.5, 1.0, 1.2, 0.9));
    let q = DensityChange::from_conditionals(&one, 0, 1, |_| vec![0.75, 0.25])?;
    out.push(row(
        "relative_entropy",
        Some(0.130812),
        oracle_relative_entropy(&one, &q, 0, 1).values[0],
        relative_entropy(&one, &q)?.values[0],
        Side::Equal,
        1e-15,
    ));

    // one-step risk values of X = (1, -1)
    let x = var(&one, 1, &[1.0, -1.0])?;
    let ent = RiskFamily::entropic(one.clone(), 1.0)?;
    let rho = ent.rho(0, 1, &x)?.values[0];
    out.push(row("entropic_log_cosh", Some(0.433781), oracle_entropic(&one, 1.0, 0, &x).values[0], rho, Side::Equal, 1e-14));
    let kl = |_: usize, q: &[f64]| q.iter().map(|&q| if q == 0.0 { 0.0 } else { q * (2.0 * q).ln() }).sum::<f64>();
    out.push(row(
        "entropic_dual_net",
        Some(0.433781),
        oracle_rho_dual(&one, &kl, 0, &x, 200)?.values[0],
        rho,
        Side::Below,
        1e-3,
    ));
    let g = RiskFamily::g_expectation(one.clone(), DriverSpec::abs_linear(0.1)?, 1.0)?;
    // one step by hand: rho = E[-X] + g(Z) dt with Z = sqrt(p(1-p)/dt)(-X_up + X_down)
    let z = (0.25f64).sqrt() * (-1.0 - 1.0);
    out.push(row("g_expectation_abs", Some(0.1), 0.0 + 0.1 * z.abs(), g.rho(0, 1, &x)?.values[0], Side::Equal, 1e-15));

    // penalties
    let ent2 = RiskFamily::entropic(one.clone(), 2.0)?;
    let closed = minimal_penalty(&ent2, 0, 1, &q)?.values[0];
    let conj = conjugate_penalty(&ent2, 0, 1, &q, OptimOptions::default())?.values[0];
    let direct = oracle_relative_entropy(&one, &q, 0, 1).values[0] / 2.0;
    out.push(row("entropic_penalty_closed_form", Some(0.065406), direct, closed, Side::Equal, 1e-15));
    out.push(row("entropic_penalty_conjugate", Some(0.065406), closed, conj, Side::Equal, 1e-8));
    let json: DualFamilyJson = serde_json::from_str(
        r#"{"generators": [{"from": 0, "to": 1, "ratios": {"1": 1.2, "2": 0.8}},
                           {"from": 0, "to": 1, "ratios": {"1": 0.6, "2": 1.4}}],
            "penalties": [{"0": 0.05}, {"0": 0.1}]}"#,
    )?;
    let dual = RiskFamily::dual(one.clone(), DualFamily::from_json(&one, &json)?)?;
    let g1 = DensityChange::from_conditionals(&one, 0, 1, |_| vec![0.6, 0.4])?;
    let lower = oracle_penalty_lower(&dual, 0, 1, &[0.6, 0.4], &GridSpec::default())?;
    out.push(row(
        "dual_penalty_exposed_generator",
        Some(0.05),
        lower,
        minimal_penalty(&dual, 0, 1, &g1)?.values[0],
        Side::Below,
        1e-9,
    ));

    // no-good-deal bounds
    let sched = |d: f64| DeltaSchedule::from_table(&[((0, 1), d)].into(), 1);
    let x20 = var(&one, 1, &[2.0, 0.0])?;
    let s05 = sched(0.5)?;
    let up = oracle_qp(&[0.5, 0.5], &[2.0, 0.0], 0.5).value;
    let lo = -oracle_qp(&[0.5, 0.5], &[-2.0, 0.0], 0.5).value;
    out.push(row("ngd_upper", Some(1.5), up, ngd_upper(&one, &x20, 0, &s05)?.value.values[0], Side::Equal, 1e-7));
    out.push(row("ngd_lower", Some(0.5), lo, ngd_lower(&one, &x20, 0, &s05)?.value.values[0], Side::Equal, 1e-7));
    let x02 = var(&one, 1, &[0.0, 2.0])?;
    out.push(row(
        "ngd_upper_binding",
        Some(2.0),
        oracle_qp(&[0.5, 0.5], &[0.0, 2.0], 2.0).value,
        ngd_upper(&one, &x02, 0, &sched(2.0)?)?.value.values[0],
        Side::Equal,
        1e-7,
    ));
    let h: [f64; 2] = [0.75 / 0.5 - 1.0, 0.25 / 0.5 - 1.0];
    out.push(row(
        "ngd_membership_second_moment",
        Some(0.25),
        0.5 * h[0] * h[0] + 0.5 * h[1] * h[1],
        ngd_membership(&one, &q, 0, 1, &s05)?.rows[0].second_moment,
        Side::Equal,
        1e-15,
    ));

    // prices
    let grid = GridSpec::default();
    let zero = oracle_price_grid(&ent, &StrategySpace::Zero, 0, 1, &x, &grid)?;
    out.push(row(
        "price_zero_space",
        Some(0.433781),
        zero.value.values[0],
        price(&ent, &StrategySpace::Zero, 0, 1, &x)?.value.values[0],
        Side::Equal,
        1e-12,
    ));
    // 2 (S_1 - S_0) is replicated by holding two units
    let attainable = var(&one, 1, &[0.4, -0.2])?;
    let scan = oracle_price_grid(&ent, &StrategySpace::Linear, 0, 1, &attainable, &grid)?;
    let main = price(&ent, &StrategySpace::Linear, 0, 1, &attainable)?;
    out.push(row(
        "price_attainable",
        Some(0.0),
        scan.value.values[0],
        main.value.values[0],
        Side::Equal,
        1e-6,
    ));
    out.push(row(
        "price_attainable_inner_infimum",
        None,
        scan.inf_with_claim.values[0],
        main.inf_with_claim.values[0],
        Side::Above,
        1e-6,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_worked_examples_agree() {
        for ex in worked_examples().unwrap() {
            assert!(ex.agree, "{ex:?}");
        }
    }
}
