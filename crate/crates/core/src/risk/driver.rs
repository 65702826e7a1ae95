use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the driver `g(z)` in its `z` argument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum DriverForm {
    Zero,
    /// `g(z) = mu * z`
    Linear { mu: f64 },
    /// `g(z) = mu * |z|`, `mu >= 0`
    AbsLinear { mu: f64 },
    /// `g(z) = gamma/2 * z^2` on `|z| <= C/gamma`, continued linearly beyond,
    /// where `C` is the driver's `lipschitz_bound`.
    Quadratic { gamma: f64 },
    /// Piecewise-linear interpolation of `(z, g)` knots, extended linearly.
    Custom { knots: Vec<(f64, f64)> },
}

/// A convex, Lipschitz driver `g(n, z) = offset + offset_asset * S_n + form(z)`
/// where `S_n` is the first asset price at the node where the step starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverSpec {
    #[serde(flatten)]
    pub form: DriverForm,
    #[serde(default)]
    pub lipschitz_bound: Option<f64>,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub offset_asset: f64,
}

impl DriverSpec {
    pub fn new(form: DriverForm) -> Result<Self> {
        Self {
            form,
            lipschitz_bound: None,
            offset: 0.0,
            offset_asset: 0.0,
        }
        .validated()
    }

    pub fn zero() -> Self {
        Self::new(DriverForm::Zero).expect("zero driver is valid")
    }

    pub fn abs_linear(mu: f64) -> Result<Self> {
        Self::new(DriverForm::AbsLinear { mu })
    }

    pub fn quadratic(gamma: f64, lipschitz_bound: f64) -> Result<Self> {
        Self {
            form: DriverForm::Quadratic { gamma },
            lipschitz_bound: Some(lipschitz_bound),
            offset: 0.0,
            offset_asset: 0.0,
        }
        .validated()
    }

    pub fn with_offset(mut self, offset: f64, offset_asset: f64) -> Result<Self> {
        self.offset = offset;
        self.offset_asset = offset_asset;
        self.validated()
    }

    /// Check convexity, finiteness and the Lipschitz bound.
    pub fn validated(self) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidDriver(msg));
        if !self.offset.is_finite() || !self.offset_asset.is_finite() {
            return bad("offsets must be finite".into());
        }
        match &self.form {
            DriverForm::Zero => {}
            DriverForm::Linear { mu } => {
                if !mu.is_finite() {
                    return bad("mu must be finite".into());
                }
            }
            DriverForm::AbsLinear { mu } => {
                if !(mu.is_finite() && *mu >= 0.0) {
                    return bad(format!("abslinear needs mu >= 0, got {mu}"));
                }
            }
            DriverForm::Quadratic { gamma } => {
                if !(gamma.is_finite() && *gamma > 0.0) {
                    return bad(format!("quadratic needs gamma > 0, got {gamma}"));
                }
                match self.lipschitz_bound {
                    Some(c) if c.is_finite() && c > 0.0 => {}
                    _ => return bad("quadratic driver needs a positive lipschitz_bound".into()),
                }
            }
            DriverForm::Custom { knots } => {
                if knots.len() < 2 {
                    return bad("custom driver needs at least two knots".into());
                }
                if knots.iter().any(|(z, g)| !z.is_finite() || !g.is_finite()) {
                    return bad("custom knots must be finite".into());
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return bad("custom knots must be strictly increasing in z".into());
                }
                let slopes = custom_slopes(knots);
                if slopes.windows(2).any(|w| w[1] < w[0] - 1e-12) {
                    return bad("custom driver is not convex: slopes must be non-decreasing".into());
                }
            }
        }
        if let Some(c) = self.lipschitz_bound {
            if !(c.is_finite() && c >= 0.0) {
                return bad(format!("lipschitz_bound must be >= 0, got {c}"));
            }
            if !matches!(self.form, DriverForm::Quadratic { .. }) && self.form_lipschitz() > c + 1e-12 {
                return bad(format!(
                    "declared lipschitz_bound {c} is below the driver's slope {}",
                    self.form_lipschitz()
                ));
            }
        }
        Ok(self)
    }

    fn form_lipschitz(&self) -> f64 {
        match &self.form {
            DriverForm::Zero => 0.0,
            DriverForm::Linear { mu } => mu.abs(),
            DriverForm::AbsLinear { mu } => *mu,
            DriverForm::Quadratic { .. } => self.lipschitz_bound.unwrap_or(f64::INFINITY),
            DriverForm::Custom { knots } => custom_slopes(knots)
                .into_iter()
                .fold(0.0, |m, s| m.max(s.abs())),
        }
    }

    /// Lipschitz constant of `z -> g(n, z)`.
    pub fn lipschitz(&self) -> f64 {
        self.form_lipschitz()
    }

    /// `g(n, z)` given the node's first asset price.
    pub fn value(&self, asset: f64, z: f64) -> f64 {
        self.offset + self.offset_asset * asset + self.form_value(z)
    }

    fn form_value(&self, z: f64) -> f64 {
        match &self.form {
            DriverForm::Zero => 0.0,
            DriverForm::Linear { mu } => mu * z,
            DriverForm::AbsLinear { mu } => mu * z.abs(),
            DriverForm::Quadratic { gamma } => {
                let c = self.lipschitz_bound.unwrap_or(f64::INFINITY);
                let zc = c / gamma;
                if z.abs() <= zc {
                    0.5 * gamma * z * z
                } else {
                    c * z.abs() - 0.5 * c * zc
                }
            }
            DriverForm::Custom { knots } => {
                let slopes = custom_slopes(knots);
                let last = knots.len() - 1;
                if z <= knots[0].0 {
                    return knots[0].1 + slopes[0] * (z - knots[0].0);
                }
                if z >= knots[last].0 {
                    return knots[last].1 + slopes[last - 1] * (z - knots[last].0);
                }
                let i = knots.partition_point(|k| k.0 <= z) - 1;
                knots[i].1 + slopes[i] * (z - knots[i].0)
            }
        }
    }

    /// A subgradient of `z -> g(n, z)`; at kinks the mean of the one-sided slopes.
    pub fn derivative(&self, z: f64) -> f64 {
        match &self.form {
            DriverForm::Zero => 0.0,
            DriverForm::Linear { mu } => *mu,
            DriverForm::AbsLinear { mu } => {
                if z > 0.0 {
                    *mu
                } else if z < 0.0 {
                    -mu
                } else {
                    0.0
                }
            }
            DriverForm::Quadratic { gamma } => {
                let c = self.lipschitz_bound.unwrap_or(f64::INFINITY);
                (gamma * z).clamp(-c, c)
            }
            DriverForm::Custom { knots } => {
                let slopes = custom_slopes(knots);
                let last = knots.len() - 1;
                if z < knots[0].0 {
                    return slopes[0];
                }
                if z > knots[last].0 {
                    return slopes[last - 1];
                }
                match knots.iter().position(|k| k.0 == z) {
                    Some(0) => slopes[0],
                    Some(i) if i == last => slopes[last - 1],
                    Some(i) => 0.5 * (slopes[i - 1] + slopes[i]),
                    None => slopes[knots.partition_point(|k| k.0 <= z) - 1],
                }
            }
        }
    }

    /// True when `g(n, 0) = 0` at every node.
    pub fn is_normalized(&self) -> bool {
        self.offset == 0.0 && self.offset_asset == 0.0 && self.form_value(0.0) == 0.0
    }
}

fn custom_slopes(knots: &[(f64, f64)]) -> Vec<f64> {
    knots
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_huberized() {
        let g = DriverSpec::quadratic(2.0, 1.0).unwrap();
        assert_eq!(g.value(0.0, 0.25), 0.0625);
        // beyond |z| = 0.5 the slope is capped at 1
        assert!((g.value(0.0, 1.5) - (1.5 - 0.25)).abs() < 1e-15);
        assert_eq!(g.derivative(3.0), 1.0);
        assert_eq!(g.lipschitz(), 1.0);
        assert!(DriverSpec::new(DriverForm::Quadratic { gamma: 1.0 }).is_err());
    }

    #[test]
    fn custom_must_be_convex() {
        let ok = DriverSpec::new(DriverForm::Custom {
            knots: vec![(-1.0, 0.5), (0.0, 0.0), (1.0, 0.2)],
        })
        .unwrap();
        assert!((ok.value(0.0, -2.0) - 1.0).abs() < 1e-15);
        assert!((ok.value(0.0, 0.5) - 0.1).abs() < 1e-15);
        assert_eq!(ok.lipschitz(), 0.5);
        assert_eq!(ok.derivative(0.0), -0.15);
        let bad = DriverSpec::new(DriverForm::Custom {
            knots: vec![(-1.0, -0.5), (0.0, 0.0), (1.0, -0.2)],
        });
        assert!(bad.is_err());
    }

    #[test]
    fn offsets_enter_additively() {
        let g = DriverSpec::abs_linear(0.1).unwrap().with_offset(0.2, 0.5).unwrap();
        assert!((g.value(2.0, -1.0) - (0.2 + 1.0 + 0.1)).abs() < 1e-15);
        assert!(!g.is_normalized());
        assert!(DriverSpec::abs_linear(0.1).unwrap().is_normalized());
        assert!(DriverSpec::abs_linear(-0.1).is_err());
    }

    #[test]
    fn json_shape() {
        let g: DriverSpec = serde_json::from_str(r#"{"form":"abslinear","mu":0.1}"#).unwrap();
        assert_eq!(g, DriverSpec::abs_linear(0.1).unwrap());
    }
}
