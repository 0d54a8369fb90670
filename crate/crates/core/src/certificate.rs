//! Result records binding bound values to the guarantee they carry.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// `values = [lower, upper, empirical]`.
    CvarInterval,
    /// `values = [bound, empirical mean]`.
    PerfUpper,
    /// `values = [bound, empirical mean]`.
    PerfLower,
    /// `values = theta`.
    SupportSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Guarantee {
    /// Probability with which the bound holds.
    pub confidence: f64,
    pub n_samples: usize,
    pub seed: u64,
    /// Radii and corrections used (`eps1`, `eps2`, `eps3`, `zeta`, ...).
    pub radii: BTreeMap<String, f64>,
    /// Other inputs (`alpha`, `beta`, `lipschitz`, `rho`, ...).
    pub parameters: BTreeMap<String, f64>,
    /// Confidence under `1 - max(beta1, beta2)`, reported for comparison only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_beta_confidence: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub values: Vec<f64>,
    pub guarantee: Guarantee,
    pub warnings: Vec<String>,
}

impl Certificate {
    pub fn new(kind: CertificateKind, values: Vec<f64>, confidence: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            kind,
            values,
            guarantee: Guarantee {
                confidence,
                n_samples,
                seed,
                radii: BTreeMap::new(),
                parameters: BTreeMap::new(),
                max_beta_confidence: None,
            },
            warnings: Vec::new(),
        }
    }

    pub fn with_radius(mut self, name: &str, value: f64) -> Self {
        self.guarantee.radii.insert(name.into(), value);
        self
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.guarantee.parameters.insert(name.into(), value);
        self
    }

    pub fn with_warnings(mut self, warnings: impl IntoIterator<Item = String>) -> Self {
        for w in warnings {
            if !self.warnings.contains(&w) {
                self.warnings.push(w);
            }
        }
        self
    }

    /// First value: the bound itself for perf certificates, the lower end for
    /// intervals.
    pub fn bound(&self) -> f64 {
        self.values[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_is_exact() {
        let c = Certificate::new(CertificateKind::CvarInterval, vec![0.1 + 0.2, 1.0 / 3.0, 2e-300], 0.95, 10, 3)
            .with_radius("eps2", std::f64::consts::PI)
            .with_param("alpha", 0.25)
            .with_warnings(["w".to_string(), "w".to_string()]);
        assert_eq!(c.warnings.len(), 1);
        let back: Certificate = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
