//! Types (empirical distributions) of length-`n` sequences and the uniform
//! distribution on a type class.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::prob::Pmf;

/// Symbol counts of a length-`n` sequence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "NTypeJson", into = "NTypeJson")]
pub struct NType {
    n: usize,
    counts: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct NTypeJson {
    n: usize,
    counts: Vec<usize>,
}

impl TryFrom<NTypeJson> for NType {
    type Error = Error;

    fn try_from(j: NTypeJson) -> Result<Self> {
        let t = NType::new(j.counts)?;
        if t.n != j.n {
            return Err(Error::InvalidArgument(format!(
                "counts sum to {} but n = {}",
                t.n, j.n
            )));
        }
        Ok(t)
    }
}

impl From<NType> for NTypeJson {
    fn from(t: NType) -> Self {
        Self {
            n: t.n,
            counts: t.counts,
        }
    }
}

impl NType {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyAlphabet("type".into()));
        }
        let n = counts.iter().sum();
        if n == 0 {
            return Err(Error::InvalidArgument("type of length 0".into()));
        }
        Ok(Self { n, counts })
    }

    /// Type of a sequence over an alphabet of size `k`.
    pub fn of_sequence(seq: &[usize], k: usize) -> Result<Self> {
        let mut counts = vec![0; k];
        for &s in seq {
            if s >= k {
                return Err(Error::InvalidArgument(format!(
                    "symbol {s} outside alphabet of size {k}"
                )));
            }
            counts[s] += 1;
        }
        Self::new(counts)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn alphabet_size(&self) -> usize {
        self.counts.len()
    }

    pub fn probs(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    pub fn to_pmf(&self, name: &str) -> Pmf {
        Pmf::from_probs(name, self.probs()).expect("type frequencies sum to one")
    }

    /// Per-letter entropy of the type, in bits.
    pub fn entropy(&self) -> f64 {
        let n = self.n as f64;
        self.counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    }

    /// `max_i |counts_i / n - q_i|`.
    pub fn sup_distance(&self, q: &[f64]) -> f64 {
        self.probs()
            .iter()
            .zip(q)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// An `n`-type within `1/n` of `q` in sup norm: floors of `n q_i`, then the
/// leftover units go to the largest fractional parts (lowest index on ties).
pub fn nearest_ntype(q: &Pmf, n: usize) -> Result<NType> {
    if n == 0 {
        return Err(Error::OutOfDomain {
            name: "n",
            value: 0.0,
        });
    }
    let scaled: Vec<f64> = q.probs().iter().map(|&p| p * n as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|s| s.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    // rounding in p * n can leave assigned slightly above n
    if assigned <= n {
        for &i in order.iter().take(n - assigned) {
            counts[i] += 1;
        }
    } else {
        let mut excess = assigned - n;
        for &i in order.iter().rev() {
            if excess == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                excess -= 1;
            }
        }
    }
    NType::new(counts)
}

/// `log2 |T|`, the exact log-size of the type class.
pub fn type_class_log_size(t: &NType) -> f64 {
    let mut ln = ln_gamma(t.n as f64 + 1.0);
    for &c in t.counts.iter().filter(|&&c| c > 1) {
        ln -= ln_gamma(c as f64 + 1.0);
    }
    (ln / std::f64::consts::LN_2).max(0.0)
}

/// Self-information of any member under the uniform distribution on its
/// type class.
pub fn type_log_mass(t: &NType) -> f64 {
    type_class_log_size(t)
}

/// Uniform draw from the type class: a shuffle of the multiset.
pub fn sample_from_type<R: Rng + ?Sized>(t: &NType, rng: &mut R) -> Vec<usize> {
    let mut seq = Vec::with_capacity(t.n);
    for (s, &c) in t.counts.iter().enumerate() {
        seq.extend(std::iter::repeat_n(s, c));
    }
    seq.shuffle(rng);
    seq
}

/// `L = |alphabet| - 1`, from the `(n+1)^{|X|-1}` bound on the number of types.
pub fn type_constant_l(alphabet_size: usize) -> Result<f64> {
    if alphabet_size == 0 {
        return Err(Error::EmptyAlphabet("type constant".into()));
    }
    Ok((alphabet_size - 1) as f64)
}

/// Uniform distribution over one type class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeClassDist {
    ntype: NType,
}

impl TypeClassDist {
    pub fn new(ntype: NType) -> Self {
        Self { ntype }
    }

    pub fn ntype(&self) -> &NType {
        &self.ntype
    }

    pub fn log_size(&self) -> f64 {
        type_class_log_size(&self.ntype)
    }

    pub fn contains(&self, seq: &[usize]) -> bool {
        NType::of_sequence(seq, self.ntype.alphabet_size()).is_ok_and(|t| t == self.ntype)
    }

    /// `-log2 p(seq)`: `log2 |T|` on the class, `+inf` off it.
    pub fn self_information(&self, seq: &[usize]) -> f64 {
        if self.contains(seq) {
            self.log_size()
        } else {
            f64::INFINITY
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        sample_from_type(&self.ntype, rng)
    }

    /// All members in lexicographic order. Only for small classes.
    pub fn members(&self, limit: usize) -> Result<Vec<Vec<usize>>> {
        let size = self.log_size().exp2();
        if size > limit as f64 {
            return Err(Error::GuardExceeded {
                what: "type class members",
                requested: size,
                limit: limit as f64,
            });
        }
        let mut out = Vec::new();
        let mut remaining = self.ntype.counts.clone();
        let mut cur = Vec::with_capacity(self.ntype.n);
        enumerate_members(&mut remaining, &mut cur, self.ntype.n, &mut out);
        Ok(out)
    }
}

fn enumerate_members(
    remaining: &mut [usize],
    cur: &mut Vec<usize>,
    n: usize,
    out: &mut Vec<Vec<usize>>,
) {
    if cur.len() == n {
        out.push(cur.clone());
        return;
    }
    for s in 0..remaining.len() {
        if remaining[s] > 0 {
            remaining[s] -= 1;
            cur.push(s);
            enumerate_members(remaining, cur, n, out);
            cur.pop();
            remaining[s] += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;

    fn binom(n: u64, k: u64) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
    }

    #[test]
    fn nearest_examples() {
        let half = Pmf::from_probs("X", vec![0.5, 0.5]).unwrap();
        assert_eq!(nearest_ntype(&half, 4).unwrap().counts(), &[2, 2]);
        let third = Pmf::from_probs("X", vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        let t = nearest_ntype(&third, 3).unwrap();
        assert_eq!(t.counts(), &[1, 2]);
        assert!(t.sup_distance(third.probs()) < 1e-15);
        let q = Pmf::from_probs("X", vec![0.4, 0.6]).unwrap();
        let t = nearest_ntype(&q, 5).unwrap();
        assert_eq!(t.counts(), &[2, 3]);
        // exhaustive: (2,3) is the unique minimiser over compositions of 5
        let best = (0..=5)
            .map(|a| {
                let c = NType::new(vec![a, 5 - a]).unwrap();
                (c.sup_distance(q.probs()), a)
            })
            .min_by(|x, y| x.0.total_cmp(&y.0))
            .unwrap();
        assert_eq!(best.1, 2);
    }

    #[test]
    fn nearest_tie_goes_to_lowest_index() {
        let q = Pmf::from_probs("X", vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        assert_eq!(nearest_ntype(&q, 2).unwrap().counts(), &[1, 1, 0, 0]);
        assert!(nearest_ntype(&q, 0).is_err());
    }

    #[test]
    fn class_sizes() {
        assert_eq!(type_class_log_size(&NType::new(vec![7, 0, 0]).unwrap()), 0.0);
        let t = NType::new(vec![2, 2]).unwrap();
        assert!((type_class_log_size(&t) - binom(4, 2).log2()).abs() < 1e-12);
        assert!((type_log_mass(&t) - 2.584_962_500_721_156).abs() < 1e-12);
        let t = NType::new(vec![2, 3]).unwrap();
        assert!((type_class_log_size(&t) - 10f64.log2()).abs() < 1e-12);
        // large-n accuracy against a direct log-sum
        let t = NType::new(vec![300_000, 700_000]).unwrap();
        let (mut direct, mut carry) = (0.0f64, 0.0f64);
        for i in 1..=300_000u64 {
            let y = ((700_000 + i) as f64 / i as f64).log2() - carry;
            let t = direct + y;
            carry = (t - direct) - y;
            direct = t;
        }
        assert!((type_class_log_size(&t) - direct).abs() < 1e-8);
    }

    #[test]
    fn members_and_self_information() {
        let d = TypeClassDist::new(NType::new(vec![2, 1]).unwrap());
        let m = d.members(100).unwrap();
        assert_eq!(m, vec![vec![0, 0, 1], vec![0, 1, 0], vec![1, 0, 0]]);
        assert!((d.self_information(&[0, 1, 0]) - 3f64.log2()).abs() < 1e-12);
        assert_eq!(d.self_information(&[1, 1, 0]), f64::INFINITY);
    }

    #[test]
    fn constant_l() {
        assert_eq!(type_constant_l(2).unwrap(), 1.0);
        assert_eq!(type_constant_l(1).unwrap(), 0.0);
        assert!(type_constant_l(0).is_err());
    }

    #[test]
    fn binary_class_size_sandwich_exhaustive() {
        let l = type_constant_l(2).unwrap();
        for n in 1..=200usize {
            for k in 0..=n {
                let t = NType::new(vec![k, n - k]).unwrap();
                let nh = n as f64 * t.entropy();
                let s = type_class_log_size(&t);
                assert!(s <= nh + 1e-9, "n={n} k={k}");
                assert!(nh - s <= l * (n as f64).log2() + 1e-9, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn sampler_degenerate_and_uniform() {
        let mut rng = substream(11, 0, 0);
        let t = NType::new(vec![5, 0]).unwrap();
        assert_eq!(sample_from_type(&t, &mut rng), vec![0; 5]);

        let t = NType::new(vec![1, 1]).unwrap();
        let draws = 100_000;
        let first: usize = (0..draws)
            .filter(|_| sample_from_type(&t, &mut rng)[0] == 0)
            .count();
        let sd = (draws as f64 * 0.25).sqrt();
        assert!((first as f64 - draws as f64 / 2.0).abs() < 3.0 * sd);
    }

    #[test]
    fn sampler_frequency_matches_log_mass() {
        let t = NType::new(vec![2, 2]).unwrap();
        let target = vec![0, 1, 1, 0];
        let draws = 1_000_000u64;
        let mut rng = substream(5, 1, 0);
        let hits = (0..draws)
            .filter(|_| sample_from_type(&t, &mut rng) == target)
            .count() as f64;
        let p = (-type_log_mass(&t)).exp2();
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - draws as f64 * p).abs() < 3.0 * sd);
    }

    #[test]
    fn serde_shape() {
        let t = NType::new(vec![1, 3]).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"n":4,"counts":[1,3]}"#);
        assert_eq!(serde_json::from_str::<NType>(&s).unwrap(), t);
        assert!(serde_json::from_str::<NType>(r#"{"n":5,"counts":[1,3]}"#).is_err());
    }

    fn pmf_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 1..=6).prop_filter_map("zero mass", |w| {
            let s: f64 = w.iter().sum();
            (s > 1e-9).then(|| w.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn nearest_within_one_over_n(w in pmf_strategy(), n in 1usize..=1000) {
            let q = Pmf::from_probs("X", w).unwrap();
            let t = nearest_ntype(&q, n).unwrap();
            prop_assert_eq!(t.n(), n);
            prop_assert!(t.sup_distance(q.probs()) <= 1.0 / n as f64 + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn sandwich_sampled(counts in prop::collection::vec(0usize..400, 2..=6)) {
            prop_assume!(counts.iter().sum::<usize>() > 1);
            let t = NType::new(counts).unwrap();
            let l = type_constant_l(t.alphabet_size()).unwrap();
            let nh = t.n() as f64 * t.entropy();
            let s = type_class_log_size(&t);
            prop_assert!(s <= nh + 1e-8);
            prop_assert!(nh - s <= l * (t.n() as f64).log2() + 1e-8);
        }

        #[test]
        fn samples_have_exact_type(counts in prop::collection::vec(0usize..20, 1..=5), seed in any::<u64>()) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let t = NType::new(counts).unwrap();
            let s = sample_from_type(&t, &mut substream(seed, 0, 0));
            prop_assert_eq!(NType::of_sequence(&s, t.alphabet_size()).unwrap(), t);
        }
    }
}
