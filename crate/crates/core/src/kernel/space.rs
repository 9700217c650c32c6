//! Finite probability spaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric;

/// A finite space: atom labels plus their probabilities. Probabilities must
/// be nonnegative, finite, and sum to 1 within 1e-12.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct DiscreteSpace {
    atoms: Vec<String>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceRepr {
    atoms: Vec<String>,
    probs: Vec<f64>,
}

impl TryFrom<SpaceRepr> for DiscreteSpace {
    type Error = Error;

    fn try_from(repr: SpaceRepr) -> Result<Self> {
        DiscreteSpace::new(repr.atoms, repr.probs)
    }
}

impl From<DiscreteSpace> for SpaceRepr {
    fn from(s: DiscreteSpace) -> Self {
        SpaceRepr {
            atoms: s.atoms,
            probs: s.probs,
        }
    }
}

impl DiscreteSpace {
    pub fn new(atoms: Vec<String>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument(
                "a discrete space needs at least one atom".into(),
            ));
        }
        if atoms.len() != probs.len() {
            return Err(Error::Mismatch(format!(
                "{} atoms but {} probabilities",
                atoms.len(),
                probs.len()
            )));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(
                "probabilities must be finite and nonnegative".into(),
            ));
        }
        let total = numeric::sum_compensated(probs.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, expected 1 within 1e-12"
            )));
        }
        Ok(Self { atoms, probs })
    }

    /// Uniform distribution over the given labels.
    pub fn uniform(atoms: Vec<String>) -> Result<Self> {
        let p = 1.0 / atoms.len() as f64;
        let probs = vec![p; atoms.len()];
        Self::new(atoms, probs)
    }

    /// The two-point space {-1, +1} with equal mass.
    pub fn rademacher() -> Self {
        Self::new(vec!["-1".into(), "+1".into()], vec![0.5, 0.5])
            .expect("valid by construction")
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, atom: usize) -> f64 {
        self.probs[atom]
    }

    /// Inverse-CDF draw; consumes one uniform variate.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> usize {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for (idx, &p) in self.probs.iter().enumerate() {
            cum += p;
            if u < cum {
                return idx;
            }
        }
        self.probs.len() - 1
    }
}
