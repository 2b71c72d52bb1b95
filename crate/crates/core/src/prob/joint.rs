use std::collections::HashSet;

use super::{validate_probs, Alphabet, Channel, Pmf};
use crate::error::{Error, Result};

/// Largest table `iid_extend` will materialize.
pub const MATERIALIZE_LIMIT: usize = 1 << 24;

/// Dense joint pmf over an ordered list of labelled axes, stored row-major
/// (last axis varies fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct JointPmf {
    axes: Vec<Alphabet>,
    probs: Vec<f64>,
    strides: Vec<usize>,
}

fn strides_for(axes: &[Alphabet]) -> Vec<usize> {
    let mut strides = vec![1; axes.len()];
    for i in (0..axes.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * axes[i + 1].size();
    }
    strides
}

fn check_unique(axes: &[Alphabet]) -> Result<()> {
    let mut seen = HashSet::new();
    for a in axes {
        if !seen.insert(a.name()) {
            return Err(Error::DuplicateAxis(a.name().to_string()));
        }
    }
    Ok(())
}

impl JointPmf {
    pub fn new(axes: Vec<Alphabet>, probs: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidArgument("joint pmf needs at least one axis".into()));
        }
        check_unique(&axes)?;
        let expected: usize = axes.iter().map(Alphabet::size).product();
        if probs.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                found: probs.len(),
            });
        }
        validate_probs(&probs, None)?;
        let strides = strides_for(&axes);
        Ok(Self {
            axes,
            probs,
            strides,
        })
    }

    /// Builds a joint pmf from sizes, naming axes by `names`.
    pub fn from_sizes(names: &[&str], sizes: &[usize], probs: Vec<f64>) -> Result<Self> {
        if names.len() != sizes.len() {
            return Err(Error::ShapeMismatch {
                expected: sizes.len(),
                found: names.len(),
            });
        }
        let axes = names
            .iter()
            .zip(sizes)
            .map(|(n, &s)| Alphabet::new(*n, s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes, probs)
    }

    pub fn from_pmf(pmf: &Pmf) -> Self {
        let axes = vec![pmf.alphabet().clone()];
        Self {
            strides: strides_for(&axes),
            axes,
            probs: pmf.probs().to_vec(),
        }
    }

    /// `p(x) q(outputs | x)` with axes `[x, outputs..]`.
    pub fn from_input_and_channel(input: &Pmf, channel: &Channel) -> Result<Self> {
        let base = Self::from_pmf(&Pmf::new(channel.input().clone(), input.probs().to_vec())?);
        base.with_channel(channel.input().name(), channel)
    }

    /// Product of independent joint pmfs; axes of `self` come first.
    pub fn independent_product(&self, other: &JointPmf) -> Result<Self> {
        let mut axes = self.axes.clone();
        axes.extend(other.axes.iter().cloned());
        check_unique(&axes)?;
        let mut probs = Vec::with_capacity(self.probs.len() * other.probs.len());
        for &a in &self.probs {
            for &b in &other.probs {
                probs.push(a * b);
            }
        }
        Ok(Self {
            strides: strides_for(&axes),
            axes,
            probs,
        })
    }

    /// Appends the outputs of `channel`, fed by the axis `input_axis`.
    pub fn with_channel(&self, input_axis: &str, channel: &Channel) -> Result<Self> {
        let input = self.axis_index(input_axis)?;
        if self.axes[input].size() != channel.input().size() {
            return Err(Error::ShapeMismatch {
                expected: self.axes[input].size(),
                found: channel.input().size(),
            });
        }
        let mut axes = self.axes.clone();
        axes.extend(channel.outputs().iter().cloned());
        check_unique(&axes)?;
        let out = channel.output_size();
        let mut probs = Vec::with_capacity(self.probs.len() * out);
        for (cell, &p) in self.probs.iter().enumerate() {
            let x = (cell / self.strides[input]) % self.axes[input].size();
            probs.extend(channel.row(x).iter().map(|&w| p * w));
        }
        Ok(Self {
            strides: strides_for(&axes),
            axes,
            probs,
        })
    }

    pub fn axes(&self) -> &[Alphabet] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Alphabet::size).collect()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn axis_index(&self, label: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name() == label)
            .ok_or_else(|| Error::UnknownAxis(label.to_string()))
    }

    pub fn axis_indices(&self, labels: &[&str]) -> Result<Vec<usize>> {
        labels.iter().map(|l| self.axis_index(l)).collect()
    }

    /// Returns a copy with the axes relabelled.
    pub fn relabeled(&self, names: &[&str]) -> Result<Self> {
        if names.len() != self.axes.len() {
            return Err(Error::ShapeMismatch {
                expected: self.axes.len(),
                found: names.len(),
            });
        }
        let axes: Vec<Alphabet> = self
            .axes
            .iter()
            .zip(names)
            .map(|(a, n)| a.renamed(*n))
            .collect();
        check_unique(&axes)?;
        Ok(Self {
            axes,
            probs: self.probs.clone(),
            strides: self.strides.clone(),
        })
    }

    pub fn flat_index(&self, point: &[usize]) -> usize {
        debug_assert_eq!(point.len(), self.axes.len());
        point.iter().zip(&self.strides).map(|(v, s)| v * s).sum()
    }

    pub fn unflatten(&self, mut index: usize, point: &mut [usize]) {
        for (i, a) in self.axes.iter().enumerate().rev() {
            point[i] = index % a.size();
            index /= a.size();
        }
    }

    /// Probability of a full point (one symbol per axis).
    pub fn prob(&self, point: &[usize]) -> f64 {
        self.probs[self.flat_index(point)]
    }

    fn check_point(&self, point: &[usize]) -> Result<()> {
        if point.len() != self.axes.len() {
            return Err(Error::ShapeMismatch {
                expected: self.axes.len(),
                found: point.len(),
            });
        }
        for (v, a) in point.iter().zip(&self.axes) {
            if *v >= a.size() {
                return Err(Error::InvalidArgument(format!(
                    "symbol {v} outside axis `{}` of size {}",
                    a.name(),
                    a.size()
                )));
            }
        }
        Ok(())
    }

    pub fn checked_prob(&self, point: &[usize]) -> Result<f64> {
        self.check_point(point)?;
        Ok(self.prob(point))
    }

    /// Calls `f(point, p)` on every cell in row-major order.
    pub fn for_each_cell(&self, mut f: impl FnMut(&[usize], f64)) {
        let mut point = vec![0usize; self.axes.len()];
        for &p in &self.probs {
            f(&point, p);
            for i in (0..point.len()).rev() {
                point[i] += 1;
                if point[i] < self.axes[i].size() {
                    break;
                }
                point[i] = 0;
            }
        }
    }

    /// Marginal onto the axes at positions `keep`, in that order.
    pub fn marginal_by_index(&self, keep: &[usize]) -> JointPmf {
        let axes: Vec<Alphabet> = keep.iter().map(|&i| self.axes[i].clone()).collect();
        let strides = strides_for(&axes);
        let mut probs = vec![0.0; axes.iter().map(Alphabet::size).product()];
        self.for_each_cell(|point, p| {
            let idx: usize = keep
                .iter()
                .zip(&strides)
                .map(|(&k, s)| point[k] * s)
                .sum();
            probs[idx] += p;
        });
        JointPmf {
            axes,
            probs,
            strides,
        }
    }

    /// Sums out every axis not named in `keep`; the result's axes follow the
    /// order of `keep`.
    pub fn marginalize(&self, keep: &[&str]) -> Result<JointPmf> {
        let idx = self.axis_indices(keep)?;
        let mut seen = HashSet::new();
        for l in keep {
            if !seen.insert(*l) {
                return Err(Error::DuplicateAxis(l.to_string()));
            }
        }
        Ok(self.marginal_by_index(&idx))
    }

    /// Total mass of cells matching every `(axis position, symbol)` pair.
    pub fn mass_where(&self, fixed: &[(usize, usize)]) -> f64 {
        let mut total = 0.0;
        self.for_each_cell(|point, p| {
            if fixed.iter().all(|&(a, v)| point[a] == v) {
                total += p;
            }
        });
        total
    }

    pub(crate) fn resolve_point(&self, point: &[(&str, usize)]) -> Result<Vec<(usize, usize)>> {
        point
            .iter()
            .map(|&(label, v)| {
                let a = self.axis_index(label)?;
                if v >= self.axes[a].size() {
                    return Err(Error::InvalidArgument(format!(
                        "symbol {v} outside axis `{label}`"
                    )));
                }
                Ok((a, v))
            })
            .collect()
    }

    /// `p(target | given)` as a pmf over the product alphabet of `target`
    /// (flattened row-major in the order given).
    pub fn condition(&self, target: &[&str], given: &[(&str, usize)]) -> Result<Pmf> {
        let fixed = self.resolve_point(given)?;
        let target_idx = self.axis_indices(target)?;
        if target_idx.iter().any(|t| fixed.iter().any(|(a, _)| a == t)) {
            return Err(Error::InvalidArgument(
                "target and conditioning axes overlap".into(),
            ));
        }
        let sizes: Vec<usize> = target_idx.iter().map(|&i| self.axes[i].size()).collect();
        let tstrides = {
            let mut s = vec![1; sizes.len()];
            for i in (0..sizes.len().saturating_sub(1)).rev() {
                s[i] = s[i + 1] * sizes[i + 1];
            }
            s
        };
        let mut probs = vec![0.0; sizes.iter().product()];
        let mut norm = 0.0;
        self.for_each_cell(|point, p| {
            if fixed.iter().all(|&(a, v)| point[a] == v) {
                let idx: usize = target_idx
                    .iter()
                    .zip(&tstrides)
                    .map(|(&t, s)| point[t] * s)
                    .sum();
                probs[idx] += p;
                norm += p;
            }
        });
        if norm <= 0.0 {
            return Err(Error::ZeroProbabilityCondition);
        }
        for v in probs.iter_mut() {
            *v /= norm;
        }
        let alphabet = Alphabet::new(target.join(","), probs.len())?;
        Ok(Pmf::renormalized(alphabet, probs))
    }

    /// Materializes the n-fold product pmf. Axis `A` of letter `i` is named
    /// `A_i` (1-based); letters are laid out consecutively.
    pub fn iid_extend(&self, n: usize) -> Result<JointPmf> {
        if n == 0 {
            return Err(Error::OutOfDomain {
                name: "n",
                value: 0.0,
            });
        }
        let cells = (self.probs.len() as f64).powi(n as i32);
        if cells > MATERIALIZE_LIMIT as f64 {
            return Err(Error::GuardExceeded {
                what: "iid extension cells",
                requested: cells,
                limit: MATERIALIZE_LIMIT as f64,
            });
        }
        if n == 1 {
            return Ok(self.clone());
        }
        let mut axes = Vec::with_capacity(self.axes.len() * n);
        for i in 1..=n {
            for a in &self.axes {
                axes.push(a.renamed(format!("{}_{i}", a.name())));
            }
        }
        let mut probs = vec![1.0];
        for _ in 0..n {
            let mut next = Vec::with_capacity(probs.len() * self.probs.len());
            for &a in &probs {
                for &b in &self.probs {
                    next.push(a * b);
                }
            }
            probs = next;
        }
        Ok(JointPmf {
            strides: strides_for(&axes),
            axes,
            probs,
        })
    }

    /// Lazy n-fold product, evaluated letter by letter.
    pub fn iid_view(&self, n: usize) -> IidView<'_> {
        IidView { base: self, n }
    }
}

/// Unmaterialized view of `p^n`.
#[derive(Clone, Copy, Debug)]
pub struct IidView<'a> {
    base: &'a JointPmf,
    n: usize,
}

impl IidView<'_> {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Probability of a sequence of per-letter points.
    pub fn eval(&self, sequence: &[Vec<usize>]) -> Result<f64> {
        if sequence.len() != self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n,
                found: sequence.len(),
            });
        }
        sequence
            .iter()
            .try_fold(1.0, |acc, letter| Ok(acc * self.base.checked_prob(letter)?))
    }

    pub fn log2_eval(&self, sequence: &[Vec<usize>]) -> Result<f64> {
        if sequence.len() != self.n {
            return Err(Error::ShapeMismatch {
                expected: self.n,
                found: sequence.len(),
            });
        }
        sequence
            .iter()
            .try_fold(0.0, |acc, letter| Ok(acc + self.base.checked_prob(letter)?.log2()))
    }
}
