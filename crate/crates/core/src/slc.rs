//! The stochastic likelihood coder (SLC) for binned sources: posterior
//! sampling inside the observed bin under a possibly mismatched metric `t`,
//! the lower bound on expected correct decoding, its weakened error form, and
//! exact/Monte Carlo oracles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binning::{sample_binning, BinningAssignment, BinningSpec, SubsetMarginals, ENUMERATION_LIMIT};
use crate::error::{Error, Result};
use crate::prob::channel::sample_index;
use crate::prob::{Alphabet, JointPmf, Pmf};
use crate::rng::{self, McEstimate, MeanAcc};

fn check_metric(t_joint: &JointPmf, spec: &BinningSpec) -> Result<()> {
    spec.check_source(t_joint)
}

fn same_axes(p: &JointPmf, t: &JointPmf) -> Result<()> {
    if p.shape() != t.shape() {
        return Err(Error::AxisMismatch);
    }
    Ok(())
}

/// Mismatched SLC for one fixed assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct SlcDecoder {
    t_joint: JointPmf,
    spec: BinningSpec,
    assignment: BinningAssignment,
    deterministic: bool,
}

impl SlcDecoder {
    pub fn new(t_joint: JointPmf, spec: BinningSpec, assignment: BinningAssignment) -> Result<Self> {
        check_metric(&t_joint, &spec)?;
        BinningAssignment::new(&spec, assignment.maps().to_vec())?;
        Ok(Self {
            t_joint,
            spec,
            assignment,
            deterministic: false,
        })
    }

    /// Decode to the posterior argmax (lowest flat index on ties) instead of
    /// sampling. Only for reproducible tests.
    pub fn with_deterministic_mode(mut self, on: bool) -> Self {
        self.deterministic = on;
        self
    }

    pub fn spec(&self) -> &BinningSpec {
        &self.spec
    }

    pub fn assignment(&self) -> &BinningAssignment {
        &self.assignment
    }

    fn part_shape(&self) -> Vec<usize> {
        (0..self.spec.num_parts()).map(|v| self.spec.alphabet_size(v)).collect()
    }

    /// Unnormalised posterior weights over the flattened `X_V` product.
    fn weights(&self, z: usize, b_v: &[usize]) -> Result<Vec<f64>> {
        let k = self.spec.num_parts();
        if b_v.len() != k {
            return Err(Error::ShapeMismatch {
                expected: k,
                found: b_v.len(),
            });
        }
        let z_size = self.t_joint.axes()[k].size();
        if z >= z_size {
            return Err(Error::InvalidArgument(format!("z = {z} out of range")));
        }
        let shape = self.part_shape();
        let cells: usize = shape.iter().product();
        let mut x = vec![0usize; k + 1];
        x[k] = z;
        let mut w = Vec::with_capacity(cells);
        for flat in 0..cells {
            unflatten(flat, &shape, &mut x[..k]);
            let in_bin = (0..k).all(|v| self.assignment.bin(v, x[v]) == b_v[v]);
            w.push(if in_bin { self.t_joint.prob(&x) } else { 0.0 });
        }
        if w.iter().all(|&v| v <= 0.0) {
            return Err(Error::EmptyBin);
        }
        Ok(w)
    }
}

fn unflatten(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for i in (0..shape.len()).rev() {
        out[i] = flat % shape[i];
        flat /= shape[i];
    }
}

/// `T(x | z, b) ∝ t(x | z) 1{B(x) = b}` as a pmf over the flattened part
/// product (first part slowest).
pub fn slc_posterior(dec: &SlcDecoder, z: usize, b_v: &[usize]) -> Result<Pmf> {
    let w = dec.weights(z, b_v)?;
    let alphabet = Alphabet::new("X_V", w.len())?;
    Ok(Pmf::renormalized(alphabet, w))
}

/// One draw from [`slc_posterior`] (or its argmax in deterministic mode).
pub fn slc_decode<R: Rng + ?Sized>(dec: &SlcDecoder, z: usize, b_v: &[usize], rng: &mut R) -> Result<Vec<usize>> {
    let w = dec.weights(z, b_v)?;
    let flat = if dec.deterministic {
        let mut best = 0;
        for (i, &v) in w.iter().enumerate() {
            if v > w[best] {
                best = i;
            }
        }
        best
    } else {
        sample_index(&w, rng)
    };
    let shape = dec.part_shape();
    let mut x = vec![0; shape.len()];
    unflatten(flat, &shape, &mut x);
    Ok(x)
}

/// `E_p [ 1 / (1 + sum_{S != ∅} M_S^{-1} 2^{h_t(x_S | x_{S^c}, z)}) ]`,
/// computed as `t(x, z) / sum_{S ⊆ V} M_S^{-1} t(x_{S^c}, z)`. Points where
/// `t(x, z) = 0` contribute nothing.
pub fn thm2_lower_bound(p_joint: &JointPmf, t_joint: &JointPmf, spec: &BinningSpec) -> Result<f64> {
    check_metric(t_joint, spec)?;
    same_axes(p_joint, t_joint)?;
    let k = spec.num_parts();
    let full = (1u32 << k) - 1;
    // t(x_{S^c}, z) tables indexed by the complement mask; mask 0 is t(z)
    let comp = SubsetMarginals::new(t_joint, k, true);
    let t_z = t_joint.marginal_by_index(&[k]);
    let mut total = 0.0;
    p_joint.for_each_cell(|point, p| {
        if p <= 0.0 {
            return;
        }
        let txz = t_joint.prob(point);
        if txz <= 0.0 {
            return;
        }
        // S = V term: t(z) / M_V
        let mut denom = t_z.prob(&point[k..]) / spec.log2_bins(full).exp2();
        for (mask_c, t_c) in comp.at(point) {
            let s = full & !mask_c;
            denom += t_c / spec.log2_bins(s).exp2();
        }
        total += p * txz / denom;
    });
    Ok(total)
}

/// Which conditional entropy defines the weakened-bound set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SGamma2Form {
    /// `sum_{v in S} log2 M_v - h_t(x_S | x_{S^c}, z) > gamma`; the form the
    /// weakening argument uses.
    #[default]
    Conditional,
    /// `sum_{v in S} log2 M_v - h_t(x_S | z) > gamma`, the form stated
    /// with the bound. Identical to `Conditional` for a single part.
    Marginal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SGamma2Params {
    pub t_joint: JointPmf,
    pub spec: BinningSpec,
    pub gamma: f64,
    pub form: SGamma2Form,
}

impl SGamma2Params {
    pub fn new(t_joint: JointPmf, spec: BinningSpec, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::OutOfDomain {
                name: "gamma",
                value: gamma,
            });
        }
        check_metric(&t_joint, &spec)?;
        Ok(Self {
            t_joint,
            spec,
            gamma,
            form: SGamma2Form::default(),
        })
    }

    pub fn with_form(mut self, form: SGamma2Form) -> Self {
        self.form = form;
        self
    }
}

struct SGamma2Tables {
    /// `t(x_S, z)` per nonempty `S`
    with_s: SubsetMarginals,
    t_z: JointPmf,
}

impl SGamma2Tables {
    fn new(params: &SGamma2Params) -> Self {
        let k = params.spec.num_parts();
        Self {
            with_s: SubsetMarginals::new(&params.t_joint, k, true),
            t_z: params.t_joint.marginal_by_index(&[k]),
        }
    }

    fn member(&self, params: &SGamma2Params, point: &[usize]) -> bool {
        let k = params.spec.num_parts();
        let full = (1u32 << k) - 1;
        let txz = params.t_joint.prob(point);
        if txz <= 0.0 {
            return false;
        }
        let tz = self.t_z.prob(&point[k..]);
        let marg: Vec<(u32, f64)> = self.with_s.at(point).collect();
        let lookup = |mask: u32| -> f64 {
            if mask == 0 {
                tz
            } else {
                marg.iter().find(|(m, _)| *m == mask).map(|x| x.1).unwrap_or(0.0)
            }
        };
        marg.iter().all(|&(s, t_s)| {
            let h = match params.form {
                // log2 t(x_{S^c}, z) / t(x_V, z)
                SGamma2Form::Conditional => (lookup(full & !s) / txz).log2(),
                // log2 t(z) / t(x_S, z)
                SGamma2Form::Marginal => (tz / t_s).log2(),
            };
            params.spec.log2_bins(s) - h > params.gamma
        })
    }
}

/// Membership in the weakened-bound set; points with `t(x, z) = 0` are never
/// members.
pub fn sgamma2_membership(params: &SGamma2Params, x_v: &[usize], z: usize) -> Result<bool> {
    let mut point = x_v.to_vec();
    point.push(z);
    params.t_joint.checked_prob(&point)?;
    Ok(SGamma2Tables::new(params).member(params, &point))
}

/// `p(S_gamma(t))` by exact summation.
pub fn sgamma2_mass(p_joint: &JointPmf, params: &SGamma2Params) -> Result<f64> {
    same_axes(p_joint, &params.t_joint)?;
    let tables = SGamma2Tables::new(params);
    let mut inside = 0.0;
    p_joint.for_each_cell(|point, p| {
        if p > 0.0 && tables.member(params, point) {
            inside += p;
        }
    });
    Ok(inside)
}

/// `p(S_gamma(t)^c) + (2^{|V|} - 1) 2^{-gamma}`.
pub fn thm2_upper_bound(p_joint: &JointPmf, params: &SGamma2Params) -> Result<f64> {
    let inside = sgamma2_mass(p_joint, params)?;
    let k = params.spec.num_parts() as i32;
    Ok((1.0 - inside).max(0.0) + (2f64.powi(k) - 1.0) * (-params.gamma).exp2())
}

/// `p(S_gamma(t)) / (1 + (2^{|V|} - 1) 2^{-gamma})`, the intermediate step
/// between the two bounds.
pub fn thm2_weakened_lower(p_joint: &JointPmf, params: &SGamma2Params) -> Result<f64> {
    let inside = sgamma2_mass(p_joint, params)?;
    let k = params.spec.num_parts() as i32;
    Ok(inside / (1.0 + (2f64.powi(k) - 1.0) * (-params.gamma).exp2()))
}

/// Probability that one assignment's SLC returns the true `x_V`.
pub fn assignment_correct(p_joint: &JointPmf, t_joint: &JointPmf, spec: &BinningSpec, a: &BinningAssignment) -> f64 {
    let k = spec.num_parts();
    let mv = spec.total_bins();
    let z_size = t_joint.axes()[k].size();
    // bin mass of the metric per (z, bin)
    let mut mass = vec![0.0; z_size * mv];
    t_joint.for_each_cell(|point, t| {
        mass[point[k] * mv + a.flat_bin_of(spec, point)] += t;
    });
    let mut correct = 0.0;
    p_joint.for_each_cell(|point, p| {
        if p <= 0.0 {
            return;
        }
        let t = t_joint.prob(point);
        if t > 0.0 {
            correct += p * t / mass[point[k] * mv + a.flat_bin_of(spec, point)];
        }
    });
    correct
}

/// Exact `E P[C]` over all assignments.
pub fn exact_expected_correct(p_joint: &JointPmf, t_joint: &JointPmf, spec: &BinningSpec) -> Result<f64> {
    check_metric(t_joint, spec)?;
    same_axes(p_joint, t_joint)?;
    let count = spec.check_enumerable()?;
    let mut total = 0.0;
    for i in 0..count {
        total += assignment_correct(p_joint, t_joint, spec, &BinningAssignment::from_index(spec, i));
    }
    Ok(total / count as f64)
}

/// Monte Carlo error rate of the full chain: sample an assignment and a
/// source draw, bin it, decode by posterior sampling. An empty bin counts as
/// an error.
pub fn mc_error_prob(
    p_joint: &JointPmf,
    t_joint: &JointPmf,
    spec: &BinningSpec,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    check_metric(t_joint, spec)?;
    same_axes(p_joint, t_joint)?;
    if trials < 2 {
        return Err(Error::InvalidArgument("need at least two trials".into()));
    }
    let k = spec.num_parts();
    let parts = rng::par_blocks(seed, 0x51c, trials, |r, count| {
        let mut acc = MeanAcc::default();
        let mut point = vec![0; k + 1];
        for _ in 0..count {
            let a = sample_binning(spec, r);
            p_joint.unflatten(sample_index(p_joint.probs(), r), &mut point);
            let dec = SlcDecoder {
                t_joint: t_joint.clone(),
                spec: spec.clone(),
                assignment: a,
                deterministic: false,
            };
            let b = dec.assignment.bins_of(&point[..k]);
            let err = match slc_decode(&dec, point[k], &b, r) {
                Ok(x) => x[..] != point[..k],
                Err(_) => true,
            };
            acc.push(if err { 1.0 } else { 0.0 });
        }
        acc
    });
    let mut est = rng::reduce(parts);
    if est.half_width.is_nan() {
        est.half_width = 0.0;
    }
    Ok(est)
}

/// Two receivers, each binning its own variable and decoding it from its own
/// observation. `joint` has axes `(U1, U2, Y1, Y2)`; `t1` is a metric on
/// `(U1, Y1)` and `t2` on `(U2, Y2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoDecoderSetup {
    pub joint: JointPmf,
    pub t1: JointPmf,
    pub t2: JointPmf,
    pub f1: usize,
    pub f2: usize,
}

/// Additive constant for the two-decoder error bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma1Constant {
    /// `4 * 2^{-gamma}`
    #[default]
    Four,
    /// `3 * 2^{-gamma}`, the general bound at two parts
    Three,
}

impl TwoDecoderSetup {
    fn check(&self) -> Result<()> {
        let s = self.joint.shape();
        if s.len() != 4 {
            return Err(Error::ShapeMismatch {
                expected: 4,
                found: s.len(),
            });
        }
        if self.t1.shape() != [s[0], s[2]] || self.t2.shape() != [s[1], s[3]] {
            return Err(Error::AxisMismatch);
        }
        if self.f1 == 0 || self.f2 == 0 {
            return Err(Error::InvalidArgument("bin counts must be positive".into()));
        }
        Ok(())
    }

    fn spec(&self, j: usize) -> Result<BinningSpec> {
        let s = self.joint.shape();
        let f = if j == 0 { self.f1 } else { self.f2 };
        BinningSpec::from_sizes(&[(s[j], f)])
    }
}

/// `p(S^c) + c 2^{-gamma}` with `S` requiring
/// `log2 F_j - h_{t_j}(u_j | y_j) > gamma` for both receivers.
pub fn lemma1_error_bound(setup: &TwoDecoderSetup, gamma: f64, constant: Lemma1Constant) -> Result<f64> {
    setup.check()?;
    let h = |t: &JointPmf, u: usize, y: usize| -> f64 {
        let ty = t.marginal_by_index(&[1]).probs()[y];
        let tu = t.prob(&[u, y]);
        if tu <= 0.0 {
            f64::INFINITY
        } else {
            (ty / tu).log2()
        }
    };
    let (l1, l2) = ((setup.f1 as f64).log2(), (setup.f2 as f64).log2());
    let mut outside = 0.0;
    setup.joint.for_each_cell(|pt, p| {
        if p <= 0.0 {
            return;
        }
        let ok = l1 - h(&setup.t1, pt[0], pt[2]) > gamma && l2 - h(&setup.t2, pt[1], pt[3]) > gamma;
        if !ok {
            outside += p;
        }
    });
    let c = match constant {
        Lemma1Constant::Four => 4.0,
        Lemma1Constant::Three => 3.0,
    };
    Ok(outside + c * (-gamma).exp2())
}

/// Exact expected union error `P(û1 != u1 or û2 != u2)` over both binnings.
/// The two decoders use independent bin maps, so the expected joint
/// correctness factorises per point.
pub fn exact_two_decoder_error(setup: &TwoDecoderSetup) -> Result<f64> {
    setup.check()?;
    let mut correct_tables = Vec::new();
    for j in 0..2 {
        let spec = setup.spec(j)?;
        let t = if j == 0 { &setup.t1 } else { &setup.t2 };
        let count = spec.check_enumerable()?;
        let (nu, ny) = (t.shape()[0], t.shape()[1]);
        let mut c = vec![0.0; nu * ny];
        for i in 0..count {
            let a = BinningAssignment::from_index(&spec, i);
            for y in 0..ny {
                let mut mass = vec![0.0; spec.total_bins()];
                for u in 0..nu {
                    mass[a.bin(0, u)] += t.prob(&[u, y]);
                }
                for u in 0..nu {
                    let tu = t.prob(&[u, y]);
                    if tu > 0.0 {
                        c[u * ny + y] += tu / mass[a.bin(0, u)] / count as f64;
                    }
                }
            }
        }
        correct_tables.push((c, ny));
    }
    if correct_tables.iter().map(|(c, _)| c.len() as f64).product::<f64>() > ENUMERATION_LIMIT {
        return Err(Error::GuardExceeded {
            what: "two-decoder table",
            requested: ENUMERATION_LIMIT + 1.0,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut err = 0.0;
    setup.joint.for_each_cell(|pt, p| {
        if p > 0.0 {
            let (c1, n1) = &correct_tables[0];
            let (c2, n2) = &correct_tables[1];
            err += p * (1.0 - c1[pt[0] * n1 + pt[2]] * c2[pt[1] * n2 + pt[3]]);
        }
    });
    Ok(err)
}
