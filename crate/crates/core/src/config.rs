//! JSON inputs: risk families, claims and the files referenced by a run.

use std::path::Path;
use std::sync::Arc;

use serde::{de, Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::risk::{DriverSpec, DualFamily, DualFamilyJson, RiskFamily};
use crate::space::{NodeVariable, NodeVariableJson, ScenarioTree};

/// A risk family description.
///
/// ```json
/// {"kind": "entropic", "gamma": 1.0}
/// {"kind": "gexpectation", "driver": {"form": "abslinear", "mu": 0.1}, "dt": 1.0}
/// {"kind": "dual", "generators": [...], "penalties": [...], "pasting": true}
/// {"kind": "normalized", "base": {...}}
/// {"kind": "shifted", "base": {...}, "rate": 0.1, "power": 1.0}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RiskConfig {
    Entropic {
        gamma: f64,
    },
    #[serde(rename = "gexpectation")]
    GExpectation {
        driver: DriverSpec,
        dt: f64,
    },
    Dual(DualFamilyJson),
    Normalized {
        base: Box<RiskConfig>,
    },
    Shifted {
        base: Box<RiskConfig>,
        rate: f64,
        #[serde(default = "one")]
        power: f64,
    },
}

fn one() -> f64 {
    1.0
}

// The internally tagged derive buffers the input and loses integer map keys,
// so the dual variant is routed through a `Value` instead.
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Tagged {
    Entropic {
        gamma: f64,
    },
    #[serde(rename = "gexpectation")]
    GExpectation {
        driver: DriverSpec,
        dt: f64,
    },
    Normalized {
        base: Box<RiskConfig>,
    },
    Shifted {
        base: Box<RiskConfig>,
        rate: f64,
        #[serde(default = "one")]
        power: f64,
    },
}

impl<'de> Deserialize<'de> for RiskConfig {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let mut value = serde_json::Value::deserialize(d)?;
        if value.get("kind").and_then(|k| k.as_str()) == Some("dual") {
            if let Some(obj) = value.as_object_mut() {
                obj.remove("kind");
            }
            return serde_json::from_value(value).map(Self::Dual).map_err(de::Error::custom);
        }
        Ok(match serde_json::from_value(value).map_err(de::Error::custom)? {
            Tagged::Entropic { gamma } => Self::Entropic { gamma },
            Tagged::GExpectation { driver, dt } => Self::GExpectation { driver, dt },
            Tagged::Normalized { base } => Self::Normalized { base },
            Tagged::Shifted { base, rate, power } => Self::Shifted { base, rate, power },
        })
    }
}

impl RiskConfig {
    pub fn build(&self, tree: Arc<ScenarioTree>) -> Result<RiskFamily> {
        match self {
            Self::Entropic { gamma } => RiskFamily::entropic(tree, *gamma),
            Self::GExpectation { driver, dt } => RiskFamily::g_expectation(tree, driver.clone().validated()?, *dt),
            Self::Dual(json) => {
                let fam = DualFamily::from_json(&tree, json)?;
                RiskFamily::dual(tree, fam)
            }
            Self::Normalized { base } => Ok(base.build(tree)?.normalized()),
            Self::Shifted { base, rate, power } => base.build(tree)?.shifted(*rate, *power),
        }
    }
}

/// Claims file: one `{"level": t, "values": {...}}` object or a list of them.
pub fn parse_claims(tree: &ScenarioTree, text: &str) -> Result<Vec<NodeVariable>> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let list: Vec<NodeVariableJson> = match value {
        serde_json::Value::Array(_) => serde_json::from_value(value)?,
        other => vec![serde_json::from_value(other)?],
    };
    list.iter().map(|c| NodeVariable::from_json(tree, c)).collect()
}

/// Read a file, naming it in the error.
pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

/// Parse JSON, naming the file in the error.
pub fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::generate::binomial_tree;

    #[test]
    fn nested_configs_parse() {
        let tree = Arc::new(binomial_tree(2, 0.5, 1.0, 1.1, 0.9));
        let text = r#"{"kind": "shifted", "rate": 0.2, "base":
            {"kind": "normalized", "base": {"kind": "gexpectation", "dt": 1.0,
             "driver": {"form": "abslinear", "mu": 0.1, "offset": 0.05}}}}"#;
        let cfg: RiskConfig = serde_json::from_str(text).unwrap();
        cfg.build(tree.clone()).unwrap();
        let dual = r#"{"kind": "shifted", "rate": 0.1, "base": {"kind": "dual",
            "generators": [{"from": 0, "to": 2, "ratios": {"1": 1.2, "2": 0.8}}], "penalties": [{"0": 0.05}]}}"#;
        let cfg: RiskConfig = serde_json::from_str(dual).unwrap();
        cfg.build(tree.clone()).unwrap();
        let back: RiskConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let cfg: RiskConfig = serde_json::from_str(r#"{"kind": "entropic", "gamma": -1}"#).unwrap();
        assert!(cfg.build(tree.clone()).is_err());
        let one = parse_claims(&tree, r#"{"level": 1, "values": {"1": 1.0, "2": 0.0}}"#).unwrap();
        assert_eq!(one[0].values, vec![1.0, 0.0]);
        let two = r#"[{"level": 1, "values": {"1": 1.0, "2": 0.0}}, {"level": 1, "values": {"1": 2.0, "2": 0.5}}]"#;
        assert_eq!(parse_claims(&tree, two).unwrap().len(), 2);
        let partial = r#"[{"level": 2, "values": {"3": 1.0}}]"#;
        assert!(parse_claims(&tree, partial).is_err());
    }
}
