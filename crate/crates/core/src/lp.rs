//! Thin wrapper over `microlp` for the small dense LPs used here.

use std::collections::BTreeMap;

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cmp {
    #[cfg_attr(not(test), allow(dead_code))]
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { objective: f64, values: Vec<f64> },
    Infeasible,
    Unbounded,
}

/// A linear program in "sparse rows" form.
type Row = (Vec<(usize, f64)>, Cmp, f64);

#[derive(Debug, Default)]
pub(crate) struct Lp {
    maximize: bool,
    vars: Vec<(f64, f64, f64)>,
    rows: Vec<Row>,
}

impl Lp {
    pub fn minimize() -> Self {
        Self::default()
    }

    #[cfg(test)]
    pub fn maximize() -> Self {
        Self {
            maximize: true,
            ..Self::default()
        }
    }

    /// Add a variable with objective coefficient and bounds; returns its index.
    pub fn var(&mut self, obj: f64, lo: f64, hi: f64) -> usize {
        self.vars.push((obj, lo, hi));
        self.vars.len() - 1
    }

    pub fn row(&mut self, terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.rows.push((terms, cmp, rhs));
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let dir = if self.maximize {
            OptimizationDirection::Maximize
        } else {
            OptimizationDirection::Minimize
        };
        let mut problem = Problem::new(dir);
        // microlp mishandles variables without a lower bound, so every
        // variable is rewritten as offset + sum of non-negative parts
        let mut parts: Vec<(f64, Vec<(microlp::Variable, f64)>)> = Vec::with_capacity(self.vars.len());
        for &(obj, lo, hi) in &self.vars {
            let inf = f64::INFINITY;
            parts.push(if lo.is_finite() {
                (lo, vec![(problem.add_var(obj, (0.0, hi - lo)), 1.0)])
            } else if hi.is_finite() {
                (hi, vec![(problem.add_var(-obj, (0.0, inf)), -1.0)])
            } else {
                let a = problem.add_var(obj, (0.0, inf));
                let b = problem.add_var(-obj, (0.0, inf));
                (0.0, vec![(a, 1.0), (b, -1.0)])
            });
        }
        let mut all_vars: Vec<microlp::Variable> = parts.iter().flat_map(|p| p.1.iter().map(|t| t.0)).collect();
        all_vars.sort_by_key(|v| v.idx());
        let constant: f64 = self.vars.iter().zip(&parts).map(|(v, p)| v.0 * p.0).sum();
        for (terms, cmp, rhs) in &self.rows {
            let op = match cmp {
                Cmp::Le => ComparisonOp::Le,
                Cmp::Ge => ComparisonOp::Ge,
                Cmp::Eq => ComparisonOp::Eq,
            };
            // microlp wants each variable at most once, in index order
            let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
            let mut shift = 0.0;
            for &(i, c) in terms {
                shift += c * parts[i].0;
                for &(v, k) in &parts[i].1 {
                    *merged.entry(v.idx()).or_insert(0.0) += c * k;
                }
            }
            let expr: Vec<_> = merged
                .into_iter()
                .filter(|&(_, c)| c != 0.0)
                .map(|(i, c)| (all_vars[i], c))
                .collect();
            problem.add_constraint(expr, op, rhs - shift);
        }
        match problem.solve() {
            Ok(outcome) => {
                let sol = outcome
                    .into_solution()
                    .map_err(|_| Error::Lp("solver interrupted".into()))?;
                Ok(LpOutcome::Optimal {
                    objective: sol.objective() + constant,
                    values: parts
                        .iter()
                        .map(|(off, terms)| off + terms.iter().map(|&(v, k)| k * sol.var_value(v)).sum::<f64>())
                        .collect(),
                })
            }
            Err(microlp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
            Err(microlp::Error::Unbounded) => Ok(LpOutcome::Unbounded),
            Err(e) => Err(Error::Lp(e.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_programs() {
        let mut lp = Lp::maximize();
        let x = lp.var(1.0, 0.0, f64::INFINITY);
        let y = lp.var(2.0, 0.0, f64::INFINITY);
        lp.row(vec![(x, 1.0), (y, 1.0)], Cmp::Le, 4.0);
        lp.row(vec![(y, 1.0)], Cmp::Le, 1.0);
        match lp.solve().unwrap() {
            LpOutcome::Optimal { objective, values } => {
                assert!((objective - 5.0).abs() < 1e-9);
                assert!((values[0] - 3.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }

        let mut lp = Lp::minimize();
        let x = lp.var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.row(vec![(x, 1.0)], Cmp::Le, 0.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Unbounded);

        // free variables, one of them absent from the objective
        let mut lp = Lp::minimize();
        let th = lp.var(0.0, f64::NEG_INFINITY, f64::INFINITY);
        let v = lp.var(1.0, f64::NEG_INFINITY, f64::INFINITY);
        lp.row(vec![(v, 1.0)], Cmp::Ge, 0.0);
        lp.row(vec![(th, -0.05), (v, 1.0)], Cmp::Ge, -0.1);
        match lp.solve().unwrap() {
            LpOutcome::Optimal { objective, .. } => assert!(objective.abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        let mut lp = Lp::maximize();
        let x = lp.var(-1.0, f64::NEG_INFINITY, 3.0);
        lp.row(vec![(x, 1.0)], Cmp::Ge, -2.0);
        match lp.solve().unwrap() {
            LpOutcome::Optimal { objective, values } => {
                assert!((objective - 2.0).abs() < 1e-12 && (values[0] + 2.0).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }

        let mut lp = Lp::minimize();
        let x = lp.var(1.0, 0.0, 1.0);
        lp.row(vec![(x, 1.0)], Cmp::Ge, 2.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Infeasible);
    }
}
