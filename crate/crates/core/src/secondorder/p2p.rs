//! Point-to-point rate with a constant-composition input and the product
//! metric `t = q_X^n q_{Y|X}^n` at the decoder.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gaussian::std_q_inv;
use crate::prob::{Channel, Pmf};
use crate::typeclass::{nearest_ntype, NType};

use super::{check_common, gauss_term, LogTermPolicy, RateResult};

#[derive(Clone, Debug, PartialEq)]
pub struct P2PSetup {
    pub input: Pmf,
    pub channel: Channel,
    pub n: u64,
    pub eps: f64,
}

impl P2PSetup {
    pub fn new(input: Pmf, channel: Channel, n: u64, eps: f64) -> Result<Self> {
        check_common(n, &[("eps", eps)])?;
        if channel.outputs().len() != 1 {
            return Err(Error::ShapeMismatch {
                expected: 1,
                found: channel.outputs().len(),
            });
        }
        if input.len() != channel.input().size() {
            return Err(Error::ShapeMismatch {
                expected: channel.input().size(),
                found: input.len(),
            });
        }
        Ok(Self { input, channel, n, eps })
    }

    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.input.clone(), self.channel.clone(), self.n, eps)
    }

    pub fn with_n(&self, n: u64) -> Result<Self> {
        Self::new(self.input.clone(), self.channel.clone(), n, self.eps)
    }

    pub fn ntype(&self) -> Result<NType> {
        let n = usize::try_from(self.n).map_err(|_| Error::OutOfDomain {
            name: "n",
            value: self.n as f64,
        })?;
        nearest_ntype(&self.input, n)
    }
}

/// Per-letter quantities under the composition `Phi`.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LetterStats {
    pub h_phi: f64,
    /// `E_Phi E[h_q(X|Y) | X]`
    pub mean_h: f64,
    /// `E_Phi Var[i_q(X;Y) | X]`
    pub var: f64,
}

pub(crate) fn letter_stats(setup: &P2PSetup) -> Result<LetterStats> {
    let phi = setup.ntype()?;
    let q = setup.input.probs();
    let ch = &setup.channel;
    let ny = ch.output_size();
    let q_y: Vec<f64> = (0..ny)
        .map(|y| q.iter().enumerate().map(|(x, &qx)| qx * ch.transition(x, y)).sum())
        .collect();
    let (mut mean_h, mut var) = (0.0, 0.0);
    for (x, w) in phi.probs().into_iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let (mut m1, mut m2) = (0.0, 0.0);
        for (y, &qy) in q_y.iter().enumerate() {
            let wyx = ch.transition(x, y);
            if wyx > 0.0 {
                let h = (qy / (q[x] * wyx)).log2();
                m1 += wyx * h;
                m2 += wyx * h * h;
            }
        }
        mean_h += w * m1;
        var += w * (m2 - m1 * m1).max(0.0);
    }
    Ok(LetterStats {
        h_phi: phi.entropy(),
        mean_h,
        var,
    })
}

/// The total binning budget `n R̃` in bits and its pieces.
#[derive(Clone, Debug, PartialEq)]
pub struct Rtilde {
    pub total: f64,
    /// `n E_Phi E[h_q(X|Y) | X]`
    pub mean_bits: f64,
    /// `sqrt(n V_Phi) Q^{-1}(eps_dec)`
    pub dispersion_bits: f64,
    pub log_bits: f64,
    pub eps_dec: f64,
    pub q_inv: f64,
    pub dispersion: f64,
}

pub fn p2p_rtilde(setup: &P2PSetup, policy: &LogTermPolicy) -> Result<Rtilde> {
    policy.validate()?;
    let s = letter_stats(setup)?;
    let eps_dec = policy.budget(setup.eps, setup.n)?;
    let q_inv = std_q_inv(eps_dec)?;
    let n = setup.n as f64;
    let mean_bits = n * s.mean_h;
    let dispersion_bits = gauss_term(n * s.var, q_inv);
    let log_bits = policy.dec_bits(setup.n);
    Ok(Rtilde {
        total: mean_bits + dispersion_bits + log_bits,
        mean_bits,
        dispersion_bits,
        log_bits,
        eps_dec,
        q_inv,
        dispersion: s.var,
    })
}

/// `R = [n H_Phi(X) - apx_bits - n R̃] / n`, clamped at zero.
pub fn p2p_rate(setup: &P2PSetup, policy: &LogTermPolicy) -> Result<RateResult> {
    let rt = p2p_rtilde(setup, policy)?;
    let s = letter_stats(setup)?;
    let n = setup.n as f64;
    let l = policy.type_constant_for(setup.input.len())?;
    let apx = policy.apx_bits(setup.n, l);
    let information = s.h_phi - s.mean_h;
    let dispersion_term = -rt.dispersion_bits / n;
    let log_term = -(apx + rt.log_bits) / n;
    let components = BTreeMap::from([
        ("n".to_string(), n),
        ("h_phi".to_string(), s.h_phi),
        ("mean_cond_entropy".to_string(), s.mean_h),
        ("information".to_string(), information),
        ("dispersion".to_string(), s.var),
        ("eps_dec".to_string(), rt.eps_dec),
        ("q_inv".to_string(), rt.q_inv),
        ("type_constant".to_string(), l),
        ("apx_bits".to_string(), apx),
        ("dec_bits".to_string(), rt.log_bits),
        ("n_rtilde".to_string(), rt.total),
    ]);
    Ok(RateResult::assemble(information, dispersion_term, log_term, components))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{channel_dispersion, mutual_information};
    use crate::prob::{Alphabet, JointPmf};
    use crate::typeclass::type_constant_l;
    use proptest::prelude::*;

    fn uniform_bit() -> Pmf {
        Pmf::uniform(Alphabet::new("X", 2).unwrap())
    }

    fn bsc_setup(p: f64, n: u64, eps: f64) -> P2PSetup {
        P2PSetup::new(uniform_bit(), Channel::bsc(p).unwrap(), n, eps).unwrap()
    }

    fn h2(p: f64) -> f64 {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    #[test]
    fn half_eps_has_no_gaussian_term() {
        let s = bsc_setup(0.11, 1000, 0.5);
        let abs = LogTermPolicy::absorbed();
        let r = p2p_rtilde(&s, &abs).unwrap();
        assert_eq!(r.dispersion_bits, 0.0);
        assert!((r.total - 1000.0 * h2(0.11) - 0.5 * 1000f64.log2()).abs() < 1e-9);
        let rate = p2p_rate(&s, &abs).unwrap();
        let info = 1.0 - h2(0.11);
        assert!((rate.unclamped - (info - 3.5 * 1000f64.log2() / 1000.0)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_channel_is_log_terms_only() {
        let s = P2PSetup::new(uniform_bit(), Channel::noiseless(2).unwrap(), 64, 0.2).unwrap();
        let r = p2p_rtilde(&s, &LogTermPolicy::default()).unwrap();
        assert_eq!(r.dispersion, 0.0);
        assert_eq!(r.total, 3.0);
    }

    /// The `n R̃` pieces rebuilt from joint-pmf primitives.
    #[test]
    fn rtilde_second_path() {
        let (p, n, eps) = (0.11, 2000u64, 1e-3);
        let s = bsc_setup(p, n, eps);
        let policy = LogTermPolicy::absorbed();
        let r = p2p_rtilde(&s, &policy).unwrap();
        let joint = JointPmf::from_input_and_channel(&uniform_bit(), &Channel::bsc(p).unwrap()).unwrap();
        let h_x_given_y = crate::prob::entropy(&joint, &[joint.axes()[0].name()], &[joint.axes()[1].name()]).unwrap();
        let v = channel_dispersion(&uniform_bit(), &Channel::bsc(p).unwrap()).unwrap();
        let nf = n as f64;
        let expect = nf * h_x_given_y + (nf * v).sqrt() * std_q_inv(eps).unwrap() + 0.5 * nf.log2();
        assert!((r.total - expect).abs() < 1e-9, "{} vs {expect}", r.total);
        let info = mutual_information(&joint, &[joint.axes()[0].name()], &[joint.axes()[1].name()]).unwrap();
        let rate = p2p_rate(&s, &policy).unwrap();
        let l = type_constant_l(2).unwrap();
        let expect_rate = 1.0 - (l + 2.0) * nf.log2() / nf - expect / nf;
        assert!((rate.rate - expect_rate).abs() < 1e-12);
        assert!((rate.component("information") - info).abs() < 1e-12);
    }

    #[test]
    fn rate_limit() {
        let s = bsc_setup(0.11, 100_000_000, 1e-3);
        let r = p2p_rate(&s, &LogTermPolicy::default()).unwrap();
        assert!((r.rate - (1.0 - h2(0.11))).abs() < 1e-3);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            p2p_rate(&bsc_setup(0.11, 100, 0.05), &LogTermPolicy::default()),
            Err(Error::SlackExhausted { .. })
        ));
        assert!(P2PSetup::new(uniform_bit(), Channel::bsc(0.1).unwrap(), 1, 0.1).is_err());
        assert!(P2PSetup::new(uniform_bit(), Channel::bsc(0.1).unwrap(), 10, 1.0).is_err());
        let clamped = p2p_rate(&bsc_setup(0.4, 50, 0.3), &LogTermPolicy::default()).unwrap();
        assert!(clamped.clamped && clamped.rate == 0.0 && clamped.unclamped < 0.0);
    }

    #[test]
    fn decomposition_adds_up() {
        let s = bsc_setup(0.2, 5000, 0.05);
        let r = p2p_rate(&s, &LogTermPolicy::default()).unwrap();
        let sum = r.component("information") + r.dispersion_term + r.log_term;
        assert!((sum - r.unclamped).abs() < 1e-14);
    }

    #[test]
    fn monotone_in_n_and_eps() {
        let policy = LogTermPolicy::default();
        for p in [0.01, 0.11, 0.25] {
            // even n keeps the uniform composition exact
            let ns = [200u64, 300, 500, 1000, 2000, 5000, 10_000, 100_000, 1_000_000];
            let mut prev = f64::NEG_INFINITY;
            for n in ns {
                let r = p2p_rate(&bsc_setup(p, n, 0.1), &policy).unwrap().unclamped;
                assert!(r >= prev - 1e-12);
                prev = r;
            }
            let mut prev = f64::NEG_INFINITY;
            for eps in [0.11, 0.15, 0.2, 0.3, 0.4, 0.45] {
                let r = p2p_rate(&bsc_setup(p, 1000, eps), &policy).unwrap().unclamped;
                assert!(r >= prev - 1e-12);
                prev = r;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn below_information_for_small_eps(
            w in proptest::collection::vec(0.05f64..1.0, 3),
            rows in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 2), 3),
            n in 100u64..100_000,
            eps in 0.11f64..0.49,
        ) {
            let s: f64 = w.iter().sum();
            let input = Pmf::from_probs("X", w.iter().map(|v| v / s).collect()).unwrap();
            let rows: Vec<Vec<f64>> = rows.iter().map(|r| { let t: f64 = r.iter().sum(); r.iter().map(|v| v / t).collect() }).collect();
            let ch = Channel::from_matrix("X", "Y", rows).unwrap();
            let joint = JointPmf::from_input_and_channel(&input, &ch).unwrap();
            let i_q = mutual_information(&joint, &[joint.axes()[0].name()], &[joint.axes()[1].name()]).unwrap();
            let setup = P2PSetup::new(input, ch, n, eps).unwrap();
            let r = p2p_rate(&setup, &LogTermPolicy::default()).unwrap();
            prop_assert!(r.unclamped <= r.component("information") + 1e-12);
            // the composition differs from q by at most 1/n per letter
            prop_assert!(r.unclamped <= i_q + 3.0 * 2.0 * (n as f64).log2() / n as f64);
        }
    }
}
