use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for the composition rule `1 + d_rt = (1 + d_rs)(1 + d_st)`.
pub const COMPOSITION_TOL: f64 = 1e-12;

/// No-good-deal levels `delta(s, t)` for `s <= t` on a tree with `horizon` steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSchedule {
    horizon: usize,
    base: Option<f64>,
    // delta[s][t - s]
    delta: Vec<Vec<f64>>,
}

/// `{"delta_base": 1.05}` or `{"table": {"(0,1)": 0.05, ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaScheduleJson {
    Base { delta_base: f64 },
    Table { table: BTreeMap<String, f64> },
}

impl DeltaSchedule {
    /// `delta(s, t) = base^(t-s) - 1`.
    pub fn from_base(base: f64, horizon: usize) -> Result<Self> {
        if !(base.is_finite() && base > 1.0) {
            return Err(Error::InvalidSchedule(format!("delta_base must be finite and > 1, got {base}")));
        }
        let delta = (0..=horizon)
            .map(|s| (0..=horizon - s).map(|k| base.powi(k as i32) - 1.0).collect())
            .collect();
        Ok(Self {
            horizon,
            base: Some(base),
            delta,
        })
    }

    /// Build from explicit entries. Every one-step pair `(s, s+1)` must be
    /// present; longer pairs default to the composed value and, when given,
    /// must agree with it.
    pub fn from_table(table: &BTreeMap<(usize, usize), f64>, horizon: usize) -> Result<Self> {
        for (&(s, t), &v) in table {
            if s > t || t > horizon {
                return Err(Error::InvalidSchedule(format!("pair ({s},{t}) is outside 0..={horizon}")));
            }
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidSchedule(format!("delta({s},{t}) = {v} must be finite and >= 0")));
            }
        }
        let mut delta: Vec<Vec<f64>> = (0..=horizon).map(|s| vec![0.0; horizon - s + 1]).collect();
        for (s, row) in delta.iter_mut().enumerate().take(horizon) {
            let one = *table
                .get(&(s, s + 1))
                .ok_or_else(|| Error::InvalidSchedule(format!("missing one-step level ({s},{})", s + 1)))?;
            row[1] = one;
        }
        for s in 0..=horizon {
            for t in s + 2..=horizon {
                let (a, b) = (delta[s][t - s - 1], delta[t - 1][1]);
                delta[s][t - s] = a * b + a + b;
            }
        }
        for (&(s, t), &given) in table {
            let composed = delta[s][t - s];
            if (given - composed).abs() > COMPOSITION_TOL * (1.0 + composed) {
                return Err(Error::InvalidSchedule(format!(
                    "delta({s},{t}) = {given} violates the composition rule (composed value {composed})"
                )));
            }
            delta[s][t - s] = given;
        }
        Ok(Self {
            horizon,
            base: None,
            delta,
        })
    }

    pub fn from_json(json: &DeltaScheduleJson, horizon: usize) -> Result<Self> {
        match json {
            DeltaScheduleJson::Base { delta_base } => Self::from_base(*delta_base, horizon),
            DeltaScheduleJson::Table { table } => {
                let parsed = table
                    .iter()
                    .map(|(k, &v)| Ok((parse_pair(k)?, v)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                Self::from_table(&parsed, horizon)
            }
        }
    }

    pub fn to_json(&self) -> DeltaScheduleJson {
        match self.base {
            Some(delta_base) => DeltaScheduleJson::Base { delta_base },
            None => DeltaScheduleJson::Table {
                table: (0..self.horizon)
                    .map(|s| (format!("({s},{})", s + 1), self.delta[s][1]))
                    .collect(),
            },
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn delta(&self, s: usize, t: usize) -> f64 {
        assert!(s <= t && t <= self.horizon, "delta({s},{t}) outside the schedule");
        self.delta[s][t - s]
    }

    /// Largest relative composition residual over all `r <= s <= t`.
    pub fn composition_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..=self.horizon {
            for s in r..=self.horizon {
                for t in s..=self.horizon {
                    let lhs = 1.0 + self.delta(r, t);
                    let rhs = (1.0 + self.delta(r, s)) * (1.0 + self.delta(s, t));
                    worst = worst.max((lhs - rhs).abs() / lhs);
                }
            }
        }
        worst
    }
}

fn parse_pair(key: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidSchedule(format!("table key {key:?} is not of the form \"(s,t)\""));
    let inner = key.trim().strip_prefix('(').and_then(|k| k.strip_suffix(')')).ok_or_else(bad)?;
    let (s, t) = inner.split_once(',').ok_or_else(bad)?;
    Ok((s.trim().parse().map_err(|_| bad())?, t.trim().parse().map_err(|_| bad())?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_schedule_composes() {
        let d = DeltaSchedule::from_base(1.05, 4).unwrap();
        assert_eq!(d.delta(2, 2), 0.0);
        assert!((d.delta(0, 2) - (1.05f64 * 1.05 - 1.0)).abs() < 1e-15);
        assert!(d.composition_residual() < 1e-15);
        assert!(DeltaSchedule::from_base(1.0, 2).is_err());
    }

    #[test]
    fn table_schedule() {
        let json: DeltaScheduleJson = serde_json::from_str(r#"{"table": {"(0,1)": 0.5, "(1,2)": 0.2}}"#).unwrap();
        let d = DeltaSchedule::from_json(&json, 2).unwrap();
        assert!((d.delta(0, 2) - (0.5 * 0.2 + 0.5 + 0.2)).abs() < 1e-15);
        assert_eq!(DeltaSchedule::from_json(&d.to_json(), 2).unwrap(), d);

        let bad: DeltaScheduleJson =
            serde_json::from_str(r#"{"table": {"(0,1)": 0.5, "(1,2)": 0.2, "(0,2)": 0.801}}"#).unwrap();
        assert!(matches!(DeltaSchedule::from_json(&bad, 2), Err(Error::InvalidSchedule(_))));
        let missing: DeltaScheduleJson = serde_json::from_str(r#"{"table": {"(0,1)": 0.5}}"#).unwrap();
        assert!(DeltaSchedule::from_json(&missing, 2).is_err());
        let garbled: DeltaScheduleJson = serde_json::from_str(r#"{"table": {"0-1": 0.5}}"#).unwrap();
        assert!(DeltaSchedule::from_json(&garbled, 1).is_err());
    }
}
