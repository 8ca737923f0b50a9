//! Gluing blueprint: layer count, scaled gaps ℓ_k, phase differences ψ_k and
//! lattice data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Cyclic stack closing up in a 3-torus.
    #[serde(rename = "TPMS")]
    Tpms,
    /// Linear stack with free ends at the top and bottom.
    #[serde(rename = "DPMS")]
    Dpms,
}

/// The configuration document. JSON field names: `n`, `ell`, `psi`,
/// `theta`, `Lambda1`, `Lambda2`, `mode`, and optionally `Psi1`, `Psi2`
/// (checked against the sums of `psi` when present) and `directions`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub n: usize,
    pub ell: Vec<f64>,
    pub psi: Vec<f64>,
    pub theta: f64,
    #[serde(rename = "Psi1", default, skip_serializing_if = "Option::is_none")]
    pub psi1: Option<f64>,
    #[serde(rename = "Psi2", default, skip_serializing_if = "Option::is_none")]
    pub psi2: Option<f64>,
    #[serde(rename = "Lambda1", default)]
    pub lambda1: f64,
    #[serde(rename = "Lambda2", default)]
    pub lambda2: f64,
    pub mode: Mode,
    /// Optional per-gap end directions (radians) for lattices beyond the
    /// two-direction case; when absent the ends alternate between T₁ and T₂.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<f64>>,
}

pub const SUM_TOL: f64 = 1e-12;

/// Parity class ς(k) ∈ {1, 2} of a 1-based layer index.
pub fn parity(k: usize) -> usize {
    if k % 2 == 1 {
        1
    } else {
        2
    }
}

impl Configuration {
    pub fn tpms(ell: Vec<f64>, psi: Vec<f64>, theta: f64, lambda1: f64, lambda2: f64) -> Result<Self> {
        let c = Self {
            n: ell.len(),
            ell,
            psi,
            theta,
            psi1: None,
            psi2: None,
            lambda1,
            lambda2,
            mode: Mode::Tpms,
            directions: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn dpms(n: usize, ell: Vec<f64>, psi: Vec<f64>, theta: f64) -> Result<Self> {
        let c = Self {
            n,
            ell,
            psi,
            theta,
            psi1: None,
            psi2: None,
            lambda1: 0.0,
            lambda2: 0.0,
            mode: Mode::Dpms,
            directions: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// Number of nodes between consecutive layers.
    pub fn node_count(&self) -> usize {
        match self.mode {
            Mode::Tpms => self.n,
            Mode::Dpms => self.n.saturating_sub(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(format!("theta = {} not in (0, pi/2)", self.theta)));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be positive".into()));
        }
        if self.mode == Mode::Tpms && self.n % 2 != 0 {
            return Err(Error::Config(format!("n = {} must be even", self.n)));
        }
        let m = self.node_count();
        if self.ell.len() != m || self.psi.len() != m {
            return Err(Error::Config(format!(
                "expected {m} gaps and phases, got {} and {}",
                self.ell.len(),
                self.psi.len()
            )));
        }
        if self.ell.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::Config("gaps must be positive".into()));
        }
        if self.mode == Mode::Tpms {
            let s: f64 = self.ell.iter().sum();
            if (s - 1.0).abs() > SUM_TOL {
                return Err(Error::Config(format!("gaps sum to {s}, expected 1")));
            }
        }
        if let Some(d) = &self.directions {
            if d.len() != m || d.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("expected {m} finite directions, got {}", d.len())));
            }
        }
        let (p1, p2) = self.phase_sums();
        for (given, sum, name) in [(self.psi1, p1, "Psi1"), (self.psi2, p2, "Psi2")] {
            if let Some(g) = given {
                if (g - sum).abs() > 1e-9 {
                    return Err(Error::Config(format!("{name} = {g} but phases sum to {sum}")));
                }
            }
        }
        Ok(())
    }

    /// (Ψ₁, Ψ₂): sums of odd-indexed and even-indexed phases.
    pub fn phase_sums(&self) -> (f64, f64) {
        let mut s = (0.0, 0.0);
        for (i, &p) in self.psi.iter().enumerate() {
            if parity(i + 1) == 1 {
                s.0 += p;
            } else {
                s.1 += p;
            }
        }
        s
    }

    pub fn t_vec(&self, j: usize) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        if j == 1 {
            [c, s]
        } else {
            [-c, s]
        }
    }

    /// Anticlockwise rotation of T_j by π/2.
    pub fn t_perp(&self, j: usize) -> [f64; 2] {
        let t = self.t_vec(j);
        [-t[1], t[0]]
    }

    pub fn t3(&self) -> [f64; 2] {
        let (a, b) = self.phase_sums();
        let (t1, t2) = (self.t_vec(1), self.t_vec(2));
        [a * t1[0] + b * t2[0], a * t1[1] + b * t2[1]]
    }

    pub fn lambda(&self, j: usize) -> f64 {
        if j == 1 {
            self.lambda1
        } else {
            self.lambda2
        }
    }

    pub fn ell_max(&self) -> f64 {
        self.ell.iter().cloned().fold(0.0, f64::max)
    }

    pub fn tau_max(&self, epsilon: f64) -> f64 {
        (-self.ell_max() / (epsilon * epsilon)).exp()
    }

    /// Whether gap k (1-based) attains the maximum.
    pub fn is_max_gap(&self, k: usize) -> bool {
        (self.ell[k - 1] - self.ell_max()).abs() <= SUM_TOL
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let c = Configuration::tpms(vec![0.5, 0.5], vec![0.0, 3.0], 0.7, 1.0, -1.0).unwrap();
        let back = Configuration::from_json(&c.to_json()).unwrap();
        assert_eq!(c, back);
        let doc = r#"{"n":2,"ell":[0.5,0.5],"psi":[0,0],"theta":0.785,"Lambda1":0,"Lambda2":0,"mode":"TPMS"}"#;
        assert!(Configuration::from_json(doc).is_ok());
    }

    #[test]
    fn validation() {
        assert!(Configuration::tpms(vec![0.5, 0.6], vec![0.0, 0.0], 0.7, 0.0, 0.0).is_err());
        assert!(Configuration::tpms(vec![1.0], vec![0.0], 0.7, 0.0, 0.0).is_err());
        assert!(Configuration::dpms(3, vec![0.4, 2.0], vec![0.0, 0.0], 0.7).is_ok());
        let bad = r#"{"n":2,"ell":[0.5,0.5],"psi":[1,2],"theta":0.7,"Psi1":2,"mode":"TPMS"}"#;
        assert!(Configuration::from_json(bad).is_err());
    }

    #[test]
    fn derived_vectors() {
        let c = Configuration::tpms(vec![0.25; 4], vec![0.1, 0.2, 0.3, 0.4], 0.6, 0.0, 0.0).unwrap();
        let (a, b) = c.phase_sums();
        assert!((a - 0.4).abs() < 1e-15 && (b - 0.6).abs() < 1e-15);
        let t1 = c.t_vec(1);
        let p1 = c.t_perp(1);
        assert!((t1[0] * p1[0] + t1[1] * p1[1]).abs() < 1e-15);
        assert!((t1[0] * p1[1] - t1[1] * p1[0] - 1.0).abs() < 1e-15);
        assert_eq!(parity(3), 1);
        assert_eq!(parity(4), 2);
    }
}
