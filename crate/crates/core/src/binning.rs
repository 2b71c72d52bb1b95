//! Distributed uniform random binning of a finite source `(X_1, .., X_k, Z)`,
//! the induced bin pmf, the uniformity bound with its typical-set condition,
//! and exact/Monte Carlo oracles for the expected total variation.
//!
//! Source pmfs carry the parts `X_1..X_k` as their first `k` axes and the side
//! variable `Z` as the last axis (use a size-1 `Z` when there is none). Bins
//! are 0-based.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Alphabet, JointPmf, Pmf};
use crate::rng::{self, McEstimate, MeanAcc};

/// Largest number of assignments (or table cells) an exact oracle will
/// enumerate.
pub const ENUMERATION_LIMIT: f64 = 1e6;

const CHUNK: usize = 4096;

/// Alphabet and bin count of each binned part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    parts: Vec<(Alphabet, usize)>,
}

impl BinningSpec {
    pub fn new(parts: Vec<(Alphabet, usize)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("binning needs at least one part".into()));
        }
        if parts.len() > 16 {
            return Err(Error::GuardExceeded {
                what: "binned parts",
                requested: parts.len() as f64,
                limit: 16.0,
            });
        }
        for (a, m) in &parts {
            if *m == 0 {
                return Err(Error::InvalidArgument(format!(
                    "part `{}` has zero bins",
                    a.name()
                )));
            }
        }
        Ok(Self { parts })
    }

    /// Parts named `X1, X2, ..` from `(alphabet size, bins)` pairs.
    pub fn from_sizes(parts: &[(usize, usize)]) -> Result<Self> {
        let parts = parts
            .iter()
            .enumerate()
            .map(|(i, &(size, m))| Ok((Alphabet::new(format!("X{}", i + 1), size)?, m)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(parts)
    }

    pub fn parts(&self) -> &[(Alphabet, usize)] {
        &self.parts
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    pub fn alphabet_size(&self, v: usize) -> usize {
        self.parts[v].0.size()
    }

    pub fn bins(&self, v: usize) -> usize {
        self.parts[v].1
    }

    /// `M_V`, the number of joint bin tuples.
    pub fn total_bins(&self) -> usize {
        self.parts.iter().map(|p| p.1).product()
    }

    /// `sum_{v in S} log2 M_v` for the part subset encoded by `mask`.
    pub fn log2_bins(&self, mask: u32) -> f64 {
        self.parts
            .iter()
            .enumerate()
            .filter(|(v, _)| mask >> v & 1 == 1)
            .map(|(_, p)| (p.1 as f64).log2())
            .sum()
    }

    /// `prod_v M_v^{|X_v|}`, as a float since it overflows quickly.
    pub fn assignment_count(&self) -> f64 {
        self.parts
            .iter()
            .map(|(a, m)| (*m as f64).powi(a.size() as i32))
            .product()
    }

    pub fn check_enumerable(&self) -> Result<usize> {
        let count = self.assignment_count();
        if count > ENUMERATION_LIMIT {
            return Err(Error::GuardExceeded {
                what: "binning assignments",
                requested: count,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(count as usize)
    }

    /// Checks that `source` has axes `(X_1, .., X_k, Z)` matching this spec.
    pub fn check_source(&self, source: &JointPmf) -> Result<()> {
        let k = self.parts.len();
        if source.num_axes() != k + 1 {
            return Err(Error::ShapeMismatch {
                expected: k + 1,
                found: source.num_axes(),
            });
        }
        for (v, (a, _)) in self.parts.iter().enumerate() {
            if source.axes()[v].size() != a.size() {
                return Err(Error::ShapeMismatch {
                    expected: a.size(),
                    found: source.axes()[v].size(),
                });
            }
        }
        if source.len() as f64 > ENUMERATION_LIMIT {
            return Err(Error::GuardExceeded {
                what: "source table cells",
                requested: source.len() as f64,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(())
    }

    /// Flat index of a bin tuple (first part slowest).
    pub fn flat_bin(&self, bins: &[usize]) -> usize {
        bins.iter()
            .zip(&self.parts)
            .fold(0, |acc, (b, p)| acc * p.1 + b)
    }
}

/// One realisation of the bin maps: `maps[v][x]` is the bin of symbol `x` of
/// part `v`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinningAssignment {
    maps: Vec<Vec<usize>>,
}

impl BinningAssignment {
    pub fn new(spec: &BinningSpec, maps: Vec<Vec<usize>>) -> Result<Self> {
        if maps.len() != spec.num_parts() {
            return Err(Error::ShapeMismatch {
                expected: spec.num_parts(),
                found: maps.len(),
            });
        }
        for (v, map) in maps.iter().enumerate() {
            if map.len() != spec.alphabet_size(v) {
                return Err(Error::ShapeMismatch {
                    expected: spec.alphabet_size(v),
                    found: map.len(),
                });
            }
            if let Some(&b) = map.iter().find(|&&b| b >= spec.bins(v)) {
                return Err(Error::InvalidArgument(format!(
                    "bin {b} out of range for part {v} with {} bins",
                    spec.bins(v)
                )));
            }
        }
        Ok(Self { maps })
    }

    pub fn maps(&self) -> &[Vec<usize>] {
        &self.maps
    }

    pub fn bin(&self, v: usize, x: usize) -> usize {
        self.maps[v][x]
    }

    /// Bin tuple of the part symbols `x` (only the first `k` entries are read).
    pub fn bins_of(&self, x: &[usize]) -> Vec<usize> {
        self.maps.iter().zip(x).map(|(m, &s)| m[s]).collect()
    }

    /// Flat bin index of the part symbols `x`.
    pub fn flat_bin_of(&self, spec: &BinningSpec, x: &[usize]) -> usize {
        self.maps
            .iter()
            .zip(x)
            .zip(spec.parts())
            .fold(0, |acc, ((m, &s), p)| acc * p.1 + m[s])
    }

    /// The `index`-th assignment in enumeration order: a mixed-radix counter
    /// whose fastest digit is symbol 0 of part 0, then symbol 1 of part 0, and
    /// so on through the parts.
    pub fn from_index(spec: &BinningSpec, mut index: usize) -> Self {
        let maps = spec
            .parts()
            .iter()
            .map(|(a, m)| {
                (0..a.size())
                    .map(|_| {
                        let d = index % m;
                        index /= m;
                        d
                    })
                    .collect()
            })
            .collect();
        Self { maps }
    }
}

/// Each symbol of each part gets an independent uniform bin.
pub fn sample_binning<R: Rng + ?Sized>(spec: &BinningSpec, rng: &mut R) -> BinningAssignment {
    let maps = spec
        .parts()
        .iter()
        .map(|(a, m)| (0..a.size()).map(|_| rng.random_range(0..*m)).collect())
        .collect();
    BinningAssignment { maps }
}

/// All assignments in enumeration order, each carrying weight
/// `1 / assignment_count`.
pub fn enumerate_assignments(
    spec: &BinningSpec,
) -> Result<impl Iterator<Item = BinningAssignment> + '_> {
    let count = spec.check_enumerable()?;
    Ok((0..count).map(move |i| BinningAssignment::from_index(spec, i)))
}

/// Deterministic parallel mean of `f` over every assignment: fixed chunks,
/// summed in order.
fn enumeration_mean(spec: &BinningSpec, f: impl Fn(&BinningAssignment) -> f64 + Sync) -> Result<f64> {
    let count = spec.check_enumerable()?;
    let chunks = count.div_ceil(CHUNK);
    let parts: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            (c * CHUNK..((c + 1) * CHUNK).min(count))
                .map(|i| f(&BinningAssignment::from_index(spec, i)))
                .sum()
        })
        .collect();
    Ok(parts.iter().sum::<f64>() / count as f64)
}

/// Table `P(z, b)` laid out as `z * M_V + flat_bin`.
fn induced_table(source: &JointPmf, spec: &BinningSpec, a: &BinningAssignment) -> Vec<f64> {
    let k = spec.num_parts();
    let mv = spec.total_bins();
    let mut table = vec![0.0; source.axes()[k].size() * mv];
    source.for_each_cell(|point, p| {
        if p > 0.0 {
            table[point[k] * mv + a.flat_bin_of(spec, point)] += p;
        }
    });
    table
}

/// `P(z, b_V) = sum_x p(x_V, z) prod_v 1{B_v(x_v) = b_v}` with axes
/// `(Z, B1, .., Bk)`.
pub fn induced_bin_pmf(source: &JointPmf, spec: &BinningSpec, a: &BinningAssignment) -> Result<JointPmf> {
    spec.check_source(source)?;
    let k = spec.num_parts();
    let mut axes = vec![source.axes()[k].clone()];
    for v in 0..k {
        axes.push(Alphabet::new(format!("B{}", v + 1), spec.bins(v))?);
    }
    let probs = induced_table(source, spec, a);
    let total: f64 = probs.iter().sum();
    JointPmf::new(axes, probs.iter().map(|p| p / total).collect())
}

fn tv_to_uniform(table: &[f64], p_z: &[f64], mv: usize) -> f64 {
    let mut s = 0.0;
    for (z, &pz) in p_z.iter().enumerate() {
        let target = pz / mv as f64;
        for &p in &table[z * mv..(z + 1) * mv] {
            s += (p - target).abs();
        }
    }
    0.5 * s
}

fn z_marginal(source: &JointPmf, spec: &BinningSpec) -> Vec<f64> {
    source.marginal_by_index(&[spec.num_parts()]).probs().to_vec()
}

/// Total variation between the induced bin pmf of one assignment and
/// `p^U(b) p(z)`.
pub fn assignment_tv(source: &JointPmf, spec: &BinningSpec, a: &BinningAssignment) -> Result<f64> {
    spec.check_source(source)?;
    Ok(tv_to_uniform(
        &induced_table(source, spec, a),
        &z_marginal(source, spec),
        spec.total_bins(),
    ))
}

/// Exact expectation of [`assignment_tv`] over all assignments.
pub fn exact_expected_tv(source: &JointPmf, spec: &BinningSpec) -> Result<f64> {
    spec.check_source(source)?;
    let p_z = z_marginal(source, spec);
    let mv = spec.total_bins();
    enumeration_mean(spec, |a| tv_to_uniform(&induced_table(source, spec, a), &p_z, mv))
}

/// Monte Carlo estimate of the expected TV over `trials` sampled
/// assignments, with a 99% half-width.
pub fn mc_expected_tv(source: &JointPmf, spec: &BinningSpec, trials: u64, seed: u64) -> Result<McEstimate> {
    spec.check_source(source)?;
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least two trials".into()));
    }
    let p_z = z_marginal(source, spec);
    let mv = spec.total_bins();
    let parts = rng::par_blocks(seed, 0xb1, trials, |r, count| {
        let mut acc = MeanAcc::default();
        for _ in 0..count {
            let a = sample_binning(spec, r);
            acc.push(tv_to_uniform(&induced_table(source, spec, &a), &p_z, mv));
        }
        acc
    });
    let mut est = rng::reduce(parts);
    if est.half_width.is_nan() {
        est.half_width = 0.0;
    }
    Ok(est)
}

/// Which exponent the additive term of the uniformity bound uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thm1Exponent {
    /// `2^{(|V| - gamma)/2 - 1}`
    #[default]
    Primary,
    /// `2^{(|V| - 1 - gamma)/2}`
    Alternate,
}

impl Thm1Exponent {
    pub fn term(self, parts: usize, gamma: f64) -> f64 {
        let v = parts as f64;
        match self {
            Self::Primary => ((v - gamma) / 2.0 - 1.0).exp2(),
            Self::Alternate => ((v - 1.0 - gamma) / 2.0).exp2(),
        }
    }
}

/// Inputs of the uniformity bound.
#[derive(Clone, Debug, PartialEq)]
pub struct SGamma1Params {
    pub source: JointPmf,
    pub t_z: Pmf,
    pub spec: BinningSpec,
    pub gamma: f64,
    pub exponent: Thm1Exponent,
}

impl SGamma1Params {
    pub fn new(source: JointPmf, t_z: Pmf, spec: BinningSpec, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::OutOfDomain {
                name: "gamma",
                value: gamma,
            });
        }
        spec.check_source(&source)?;
        let z_size = source.axes()[spec.num_parts()].size();
        if t_z.len() != z_size {
            return Err(Error::ShapeMismatch {
                expected: z_size,
                found: t_z.len(),
            });
        }
        Ok(Self {
            source,
            t_z,
            spec,
            gamma,
            exponent: Thm1Exponent::default(),
        })
    }

    /// Uses the source's own `Z` marginal as `t_Z`.
    pub fn with_marginal_t(source: JointPmf, spec: BinningSpec, gamma: f64) -> Result<Self> {
        spec.check_source(&source)?;
        let k = spec.num_parts();
        let t = Pmf::renormalized(
            source.axes()[k].clone(),
            source.marginal_by_index(&[k]).probs().to_vec(),
        );
        Self::new(source, t, spec, gamma)
    }

    pub fn with_exponent(mut self, exponent: Thm1Exponent) -> Self {
        self.exponent = exponent;
        self
    }
}

/// Marginal tables `p(x_S, z)` for every nonempty part subset `S`.
pub(crate) struct SubsetMarginals {
    pub(crate) tables: Vec<(u32, Vec<usize>, JointPmf)>,
}

impl SubsetMarginals {
    pub(crate) fn new(joint: &JointPmf, k: usize, with_z: bool) -> Self {
        let tables = (1u32..1 << k)
            .map(|mask| {
                let mut keep: Vec<usize> = (0..k).filter(|v| mask >> v & 1 == 1).collect();
                if with_z {
                    keep.push(k);
                }
                let m = joint.marginal_by_index(&keep);
                (mask, keep, m)
            })
            .collect();
        Self { tables }
    }

    /// Iterates `(mask, p(x_S, z))` at the full point `point`.
    pub(crate) fn at<'a>(&'a self, point: &'a [usize]) -> impl Iterator<Item = (u32, f64)> + 'a {
        self.tables.iter().map(move |(mask, keep, m)| {
            let sub: Vec<usize> = keep.iter().map(|&i| point[i]).collect();
            (*mask, m.prob(&sub))
        })
    }
}

fn sgamma1_point(params: &SGamma1Params, marg: &SubsetMarginals, point: &[usize], p: f64) -> bool {
    if p <= 0.0 {
        return false;
    }
    let k = params.spec.num_parts();
    let tz = params.t_z.prob(point[k]);
    if tz <= 0.0 {
        return false;
    }
    let h_t = -tz.log2();
    marg.at(point).all(|(mask, pxs)| {
        -pxs.log2() - h_t - params.spec.log2_bins(mask) > params.gamma
    })
}

/// Whether `(x_V, z)` lies in the uniformity set: for every nonempty `S`,
/// `h_p(x_S, z) - h_t(z) - sum_{v in S} log2 M_v > gamma`. Zero-mass points
/// are never members.
pub fn sgamma1_membership(params: &SGamma1Params, x_v: &[usize], z: usize) -> Result<bool> {
    let k = params.spec.num_parts();
    let mut point = x_v.to_vec();
    point.push(z);
    let p = params.source.checked_prob(&point)?;
    if point.len() != k + 1 {
        return Err(Error::ShapeMismatch {
            expected: k,
            found: x_v.len(),
        });
    }
    let marg = SubsetMarginals::new(&params.source, k, true);
    Ok(sgamma1_point(params, &marg, &point, p))
}

/// `p(S_gamma^c)` by exact summation.
pub fn sgamma1_complement_mass(params: &SGamma1Params) -> f64 {
    let marg = SubsetMarginals::new(&params.source, params.spec.num_parts(), true);
    let mut outside = 0.0;
    params.source.for_each_cell(|point, p| {
        if p > 0.0 && !sgamma1_point(params, &marg, point, p) {
            outside += p;
        }
    });
    outside
}

/// `p(S_gamma^c) + 2^{(|V| - gamma)/2 - 1}` (or the alternative exponent).
pub fn thm1_bound(params: &SGamma1Params) -> f64 {
    sgamma1_complement_mass(params) + params.exponent.term(params.spec.num_parts(), params.gamma)
}

/// Exact variance over all assignments of the restricted bin mass
/// `P^(z, b) = sum_{x : (x, z) in S_gamma} p(x, z) 1{B(x) = b}`, together with
/// the bound `M_V^{-2} 2^{|V| - gamma} p(z) t(z)`.
pub fn variance_diagnostic(params: &SGamma1Params, z: usize, b_v: &[usize]) -> Result<(f64, f64)> {
    let spec = &params.spec;
    let k = spec.num_parts();
    if b_v.len() != k || b_v.iter().enumerate().any(|(v, &b)| b >= spec.bins(v)) {
        return Err(Error::InvalidArgument("bin tuple does not match the spec".into()));
    }
    let z_size = params.source.axes()[k].size();
    if z >= z_size {
        return Err(Error::InvalidArgument(format!("z = {z} out of range")));
    }
    let marg = SubsetMarginals::new(&params.source, k, true);
    let mut members: Vec<(Vec<usize>, f64)> = Vec::new();
    params.source.for_each_cell(|point, p| {
        if point[k] == z && sgamma1_point(params, &marg, point, p) {
            members.push((point[..k].to_vec(), p));
        }
    });
    let target = spec.flat_bin(b_v);
    let restricted = |a: &BinningAssignment| -> f64 {
        members
            .iter()
            .filter(|(x, _)| a.flat_bin_of(spec, x) == target)
            .map(|(_, p)| p)
            .sum()
    };
    let mean = enumeration_mean(spec, restricted)?;
    let var = enumeration_mean(spec, |a| (restricted(a) - mean).powi(2))?;
    let mv = spec.total_bins() as f64;
    let p_z = params.source.marginal_by_index(&[k]).probs()[z];
    let bound = (k as f64 - params.gamma).exp2() * p_z * params.t_z.prob(z) / (mv * mv);
    Ok((var, bound))
}
