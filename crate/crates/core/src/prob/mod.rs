//! Finite discrete probability objects and the information measures built on
//! them. All logarithms are base 2.

pub(crate) mod channel;
mod joint;
pub mod json;
mod measures;

pub use channel::Channel;
pub use joint::{IidView, JointPmf, MATERIALIZE_LIMIT};
pub use measures::{
    bc_covariance, channel_dispersion, conditional_information, density_covariance, entropy,
    information_density, mutual_information, total_variation, wiretap_variances,
    DispersionConditioning,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of every pmf built by this crate.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// A labelled finite set `{0, .., size-1}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    name: String,
    size: usize,
}

impl Alphabet {
    pub fn new(name: impl Into<String>, size: usize) -> Result<Self> {
        let name = name.into();
        if size == 0 {
            return Err(Error::EmptyAlphabet(name));
        }
        Ok(Self { name, size })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            size: self.size,
        }
    }
}

/// Checks entries are finite and non-negative and that they sum to one.
pub(crate) fn validate_probs(probs: &[f64], row: Option<usize>) -> Result<()> {
    for (index, &value) in probs.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidEntry { index, value });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { row, sum });
    }
    Ok(())
}

/// A pmf on a single alphabet.
#[derive(Clone, Debug, PartialEq)]
pub struct Pmf {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.size() {
            return Err(Error::ShapeMismatch {
                expected: alphabet.size(),
                found: probs.len(),
            });
        }
        validate_probs(&probs, None)?;
        Ok(Self { alphabet, probs })
    }

    /// Convenience constructor with an anonymous alphabet named `name`.
    pub fn from_probs(name: &str, probs: Vec<f64>) -> Result<Self> {
        let alphabet = Alphabet::new(name, probs.len())?;
        Self::new(alphabet, probs)
    }

    /// Wraps non-negative weights already normalised up to rounding.
    pub(crate) fn renormalized(alphabet: Alphabet, mut probs: Vec<f64>) -> Self {
        let s: f64 = probs.iter().sum();
        for v in probs.iter_mut() {
            *v /= s;
        }
        Self { alphabet, probs }
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let k = alphabet.size();
        Self {
            alphabet,
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn point_mass(alphabet: Alphabet, symbol: usize) -> Result<Self> {
        if symbol >= alphabet.size() {
            return Err(Error::InvalidArgument(format!(
                "symbol {symbol} outside alphabet of size {}",
                alphabet.size()
            )));
        }
        let mut probs = vec![0.0; alphabet.size()];
        probs[symbol] = 1.0;
        Ok(Self { alphabet, probs })
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, symbol: usize) -> f64 {
        self.probs[symbol]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.log2())
            .sum()
    }

    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Symmetric 2x2 positive semidefinite matrix (bits squared, per letter).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovMatrix2 {
    entries: [[f64; 2]; 2],
}

impl CovMatrix2 {
    pub const PSD_TOL: f64 = 1e-10;

    pub fn new(entries: [[f64; 2]; 2]) -> Result<Self> {
        let scale = entries[0][1].abs().max(entries[1][0].abs()).max(1.0);
        if (entries[0][1] - entries[1][0]).abs() > 1e-12 * scale {
            return Err(Error::InvalidArgument(
                "covariance matrix is not symmetric".into(),
            ));
        }
        let m = Self { entries };
        let min_eigenvalue = m.eigenvalues().0;
        if !(min_eigenvalue >= -Self::PSD_TOL) {
            return Err(Error::NotPsd { min_eigenvalue });
        }
        Ok(m)
    }

    pub fn diagonal(a: f64, b: f64) -> Result<Self> {
        Self::new([[a, 0.0], [0.0, b]])
    }

    pub fn zero() -> Self {
        Self {
            entries: [[0.0; 2]; 2],
        }
    }

    pub fn entries(&self) -> [[f64; 2]; 2] {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let [[a, b], [_, d]] = self.entries;
        let mean = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        (mean - disc, mean + disc)
    }

    /// Correlation coefficient, or `None` when either variance is zero.
    pub fn correlation(&self) -> Option<f64> {
        let [[a, b], [_, d]] = self.entries;
        if a <= 0.0 || d <= 0.0 {
            return None;
        }
        Some((b / (a * d).sqrt()).clamp(-1.0, 1.0))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut entries = self.entries;
        for row in entries.iter_mut() {
            for v in row.iter_mut() {
                *v *= factor;
            }
        }
        Self { entries }
    }

    pub fn as_rows(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|r| r.to_vec()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_rejects_bad_mass() {
        let a = Alphabet::new("X", 2).unwrap();
        assert!(matches!(
            Pmf::new(a.clone(), vec![0.5, 0.48]),
            Err(Error::NotNormalized { row: None, .. })
        ));
        assert!(matches!(
            Pmf::new(a.clone(), vec![1.5, -0.5]),
            Err(Error::InvalidEntry { index: 1, .. })
        ));
        assert!(Pmf::new(a, vec![0.5, 0.5 + 1e-13]).is_ok());
    }

    #[test]
    fn empty_alphabet_rejected() {
        assert!(matches!(
            Alphabet::new("Z", 0),
            Err(Error::EmptyAlphabet(_))
        ));
    }

    #[test]
    fn cov_matrix_checks() {
        assert!(CovMatrix2::new([[1.0, 2.0], [2.0, 1.0]]).is_err());
        assert!(CovMatrix2::new([[1.0, 0.5], [0.4, 1.0]]).is_err());
        let m = CovMatrix2::new([[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let (lo, hi) = m.eigenvalues();
        assert!((lo - 1.0).abs() < 1e-15 && (hi - 3.0).abs() < 1e-15);
        assert_eq!(m.correlation(), Some(0.5));
        assert_eq!(CovMatrix2::zero().correlation(), None);
    }

    #[test]
    fn uniform_entropy() {
        let u = Pmf::uniform(Alphabet::new("X", 8).unwrap());
        assert!((u.entropy() - 3.0).abs() < 1e-12);
    }
}
