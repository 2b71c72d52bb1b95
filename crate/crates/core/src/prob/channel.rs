use rand::Rng;

use super::{validate_probs, Alphabet};
use crate::error::{Error, Result};

/// Discrete memoryless channel `q(outputs | input)`. Each row is a pmf over
/// the row-major product of the output alphabets.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    input: Alphabet,
    outputs: Vec<Alphabet>,
    rows: Vec<Vec<f64>>,
}

impl Channel {
    pub fn new(input: Alphabet, outputs: Vec<Alphabet>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if outputs.is_empty() {
            return Err(Error::InvalidArgument("channel needs an output".into()));
        }
        if rows.len() != input.size() {
            return Err(Error::ShapeMismatch {
                expected: input.size(),
                found: rows.len(),
            });
        }
        let width: usize = outputs.iter().map(Alphabet::size).product();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::ShapeMismatch {
                    expected: width,
                    found: row.len(),
                });
            }
            validate_probs(row, Some(r))?;
        }
        Ok(Self {
            input,
            outputs,
            rows,
        })
    }

    /// Single-output channel from a row-stochastic matrix.
    pub fn from_matrix(input: &str, output: &str, rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        Self::new(
            Alphabet::new(input, rows.len())?,
            vec![Alphabet::new(output, width)?],
            rows,
        )
    }

    /// Binary symmetric channel `X -> Y` with crossover `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfDomain {
                name: "crossover",
                value: p,
            });
        }
        Self::from_matrix("X", "Y", vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// Identity channel on `k` symbols.
    pub fn noiseless(k: usize) -> Result<Self> {
        let rows = (0..k)
            .map(|x| (0..k).map(|y| if x == y { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_matrix("X", "Y", rows)
    }

    /// Two outputs generated independently given the input.
    pub fn independent_pair(first: &Channel, second: &Channel) -> Result<Self> {
        if first.input.size() != second.input.size() {
            return Err(Error::ShapeMismatch {
                expected: first.input.size(),
                found: second.input.size(),
            });
        }
        let mut outputs = first.outputs.clone();
        outputs.extend(second.outputs.iter().cloned());
        let rows = first
            .rows
            .iter()
            .zip(&second.rows)
            .map(|(a, b)| {
                a.iter()
                    .flat_map(|&u| b.iter().map(move |&v| u * v))
                    .collect()
            })
            .collect();
        Self::new(first.input.clone(), outputs, rows)
    }

    /// Cascade: feeds this channel's (flattened) output into `next`.
    pub fn then(&self, next: &Channel) -> Result<Self> {
        if self.output_size() != next.input.size() {
            return Err(Error::ShapeMismatch {
                expected: self.output_size(),
                found: next.input.size(),
            });
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut out = vec![0.0; next.output_size()];
                for (mid, &w) in row.iter().enumerate() {
                    for (o, &v) in next.rows[mid].iter().enumerate() {
                        out[o] += w * v;
                    }
                }
                out
            })
            .collect();
        Ok(Self {
            input: self.input.clone(),
            outputs: next.outputs.clone(),
            rows,
        })
    }

    pub fn with_names(&self, input: &str, outputs: &[&str]) -> Result<Self> {
        if outputs.len() != self.outputs.len() {
            return Err(Error::ShapeMismatch {
                expected: self.outputs.len(),
                found: outputs.len(),
            });
        }
        Ok(Self {
            input: self.input.renamed(input),
            outputs: self
                .outputs
                .iter()
                .zip(outputs)
                .map(|(a, n)| a.renamed(*n))
                .collect(),
            rows: self.rows.clone(),
        })
    }

    pub fn input(&self) -> &Alphabet {
        &self.input
    }

    pub fn outputs(&self) -> &[Alphabet] {
        &self.outputs
    }

    pub fn output_size(&self) -> usize {
        self.outputs.iter().map(Alphabet::size).product()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn transition(&self, x: usize, y: usize) -> f64 {
        self.rows[x][y]
    }

    /// Marginal channel onto output `k`.
    pub fn output_marginal(&self, k: usize) -> Result<Self> {
        if k >= self.outputs.len() {
            return Err(Error::InvalidArgument(format!(
                "channel has {} outputs",
                self.outputs.len()
            )));
        }
        let sizes: Vec<usize> = self.outputs.iter().map(Alphabet::size).collect();
        let stride: usize = sizes[k + 1..].iter().product();
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut m = vec![0.0; sizes[k]];
                for (y, &w) in row.iter().enumerate() {
                    m[(y / stride) % sizes[k]] += w;
                }
                m
            })
            .collect();
        Ok(Self {
            input: self.input.clone(),
            outputs: vec![self.outputs[k].clone()],
            rows,
        })
    }

    /// Draws a (flattened) output symbol for input `x`.
    pub fn sample<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        sample_index(&self.rows[x], rng)
    }

    /// True when every row is a point mass.
    pub fn is_deterministic(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.iter().filter(|&&w| w > 0.0).count() == 1)
    }
}

/// Inverse-CDF draw from a weight vector summing to (about) one.
pub(crate) fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_row_with_index() {
        let err = Channel::from_matrix("X", "Y", vec![vec![0.5, 0.5], vec![0.6, 0.3]]);
        assert!(matches!(err, Err(Error::NotNormalized { row: Some(1), .. })));
    }

    #[test]
    fn pair_and_marginal_roundtrip() {
        let a = Channel::bsc(0.1).unwrap();
        let b = Channel::bsc(0.3).unwrap().with_names("X", &["Z"]).unwrap();
        let pair = Channel::independent_pair(&a, &b).unwrap();
        assert_eq!(pair.output_size(), 4);
        let ma = pair.output_marginal(0).unwrap();
        let mb = pair.output_marginal(1).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert!((ma.transition(x, y) - a.transition(x, y)).abs() < 1e-15);
                assert!((mb.transition(x, y) - b.transition(x, y)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cascade_of_bscs() {
        let a = Channel::bsc(0.1).unwrap();
        let c = a.then(&Channel::bsc(0.2).unwrap()).unwrap();
        // 0.1*0.8 + 0.9*0.2
        assert!((c.transition(0, 1) - 0.26).abs() < 1e-15);
    }
}
