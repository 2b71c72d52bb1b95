//! Secrecy rate for the wiretap channel under the total-variation secrecy
//! metric, with a constant-composition auxiliary.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gaussian::std_q_inv;
use crate::prob::DispersionConditioning;
use crate::prob::{Channel, JointPmf, Pmf};
use crate::typeclass::{nearest_ntype, NType};

use super::{check_common, gauss_term, LogTermPolicy, RateResult};

#[derive(Clone, Debug, PartialEq)]
pub struct WiretapSetup {
    /// Axes read positionally as `(U, X)`.
    pub q_ux: JointPmf,
    /// `X -> (Y, Z)`: legitimate receiver first, eavesdropper second.
    pub channel: Channel,
    pub n: u64,
    pub eps_r: f64,
    pub eps_sec: f64,
    pub theta: f64,
    pub conditioning: DispersionConditioning,
}

impl WiretapSetup {
    pub fn new(q_ux: JointPmf, channel: Channel, n: u64, eps_r: f64, eps_sec: f64, theta: f64) -> Result<Self> {
        check_common(n, &[("eps_r", eps_r), ("eps_sec", eps_sec)])?;
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::OutOfDomain {
                name: "theta",
                value: theta,
            });
        }
        if q_ux.num_axes() != 2 {
            return Err(Error::ShapeMismatch {
                expected: 2,
                found: q_ux.num_axes(),
            });
        }
        if channel.outputs().len() != 2 {
            return Err(Error::ShapeMismatch {
                expected: 2,
                found: channel.outputs().len(),
            });
        }
        if q_ux.shape()[1] != channel.input().size() {
            return Err(Error::ShapeMismatch {
                expected: channel.input().size(),
                found: q_ux.shape()[1],
            });
        }
        Ok(Self {
            q_ux,
            channel,
            n,
            eps_r,
            eps_sec,
            theta,
            conditioning: DispersionConditioning::default(),
        })
    }

    pub fn with_conditioning(mut self, c: DispersionConditioning) -> Self {
        self.conditioning = c;
        self
    }

    pub fn with_n(&self, n: u64) -> Result<Self> {
        let mut s = Self::new(self.q_ux.clone(), self.channel.clone(), n, self.eps_r, self.eps_sec, self.theta)?;
        s.conditioning = self.conditioning;
        Ok(s)
    }

    pub(crate) fn q_u(&self) -> Pmf {
        let m = self.q_ux.marginal_by_index(&[0]);
        Pmf::renormalized(self.q_ux.axes()[0].clone(), m.probs().to_vec())
    }

    /// `q(x | u)`, rows indexed by `u`; rows with `q(u) = 0` are uniform.
    pub(crate) fn x_given_u(&self) -> Vec<Vec<f64>> {
        let s = self.q_ux.shape();
        (0..s[0])
            .map(|u| {
                let row: Vec<f64> = (0..s[1]).map(|x| self.q_ux.prob(&[u, x])).collect();
                let t: f64 = row.iter().sum();
                if t > 0.0 {
                    row.iter().map(|v| v / t).collect()
                } else {
                    vec![1.0 / s[1] as f64; s[1]]
                }
            })
            .collect()
    }

    /// The channel from `U` to output `k` (0 for `Y`, 1 for `Z`).
    pub(crate) fn composite(&self, k: usize) -> Result<Channel> {
        let marg = self.channel.output_marginal(k)?;
        let xu = self.x_given_u();
        let out = marg.output_size();
        let rows = xu
            .iter()
            .map(|row| {
                (0..out)
                    .map(|y| row.iter().enumerate().map(|(x, &w)| w * marg.transition(x, y)).sum())
                    .collect()
            })
            .collect();
        Channel::from_matrix("U", if k == 0 { "Y" } else { "Z" }, rows)
    }

    pub fn ntype(&self) -> Result<NType> {
        let n = usize::try_from(self.n).map_err(|_| Error::OutOfDomain {
            name: "n",
            value: self.n as f64,
        })?;
        nearest_ntype(&self.q_u(), n)
    }
}

/// `(E_Phi E[i_q(U;out) | U], E_Phi Var[i_q(U;out) | cond])` for output `k`.
fn density_stats(setup: &WiretapSetup, phi: &[f64], k: usize) -> Result<(f64, f64)> {
    let q_u = setup.q_u();
    let comp = setup.composite(k)?;
    let marg = setup.channel.output_marginal(k)?;
    let xu = setup.x_given_u();
    let out = comp.output_size();
    let q_out: Vec<f64> = (0..out)
        .map(|y| (0..q_u.len()).map(|u| q_u.prob(u) * comp.transition(u, y)).sum())
        .collect();
    let dens = |u: usize, y: usize| (comp.transition(u, y) / q_out[y]).log2();
    let (mut mean, mut var) = (0.0, 0.0);
    for (u, &w) in phi.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let moments = |probs: &dyn Fn(usize) -> f64| {
            let (mut m1, mut m2) = (0.0, 0.0);
            for y in 0..out {
                let p = probs(y);
                if p > 0.0 {
                    let d = dens(u, y);
                    m1 += p * d;
                    m2 += p * d * d;
                }
            }
            (m1, (m2 - m1 * m1).max(0.0))
        };
        let (m1, v_aux) = moments(&|y| comp.transition(u, y));
        mean += w * m1;
        var += w * match setup.conditioning {
            DispersionConditioning::Auxiliary => v_aux,
            DispersionConditioning::InputPair => xu[u]
                .iter()
                .enumerate()
                .filter(|(_, &px)| px > 0.0)
                .map(|(x, &px)| px * moments(&|y| marg.transition(x, y)).1)
                .sum(),
        };
    }
    Ok((mean, var))
}

/// Bits spent on the error side, `n R̃`, and its Gaussian quantile.
pub(crate) struct WiretapBudget {
    pub n_rtilde: f64,
    pub rate: RateResult,
}

pub(crate) fn wiretap_budget(setup: &WiretapSetup, policy: &LogTermPolicy) -> Result<WiretapBudget> {
    policy.validate()?;
    let th = setup.theta;
    if !(th > 0.0 && th < 1.0) {
        // Q^{-1}(0) is infinite at either endpoint
        return Err(Error::OutOfDomain {
            name: "theta",
            value: th,
        });
    }
    let n = setup.n;
    let nf = n as f64;
    let eps_r = policy.budget(th * setup.eps_r, n)?;
    let eps_s = policy.budget((1.0 - th) * setup.eps_sec, n)?;
    let q_r = std_q_inv(eps_r)?;
    let q_s = std_q_inv(eps_s)?;
    let phi = setup.ntype()?;
    let phi_p = phi.probs();
    let q_u = setup.q_u();
    // E_Phi [-log2 q(U)]
    let cross: f64 = phi_p
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(u, &w)| -w * q_u.prob(u).log2())
        .sum();
    let (info_y, v_y) = density_stats(setup, &phi_p, 0)?;
    let (info_z, v_z) = density_stats(setup, &phi_p, 1)?;
    let l = policy.type_constant_for(q_u.len())?;
    let apx = policy.apx_bits(n, l);
    let dec = policy.dec_bits(n);
    let disp_y = gauss_term(nf * v_y, q_r);
    let disp_z = gauss_term(nf * v_z, q_s);
    let n_rtilde = nf * (cross - info_y) + disp_y + dec;
    // n (R + R̃) = n H_Phi - n I_Z - sqrt(n V_Z) Q^{-1} - apx
    let h_phi = phi.entropy();
    let information = h_phi - cross + info_y - info_z;
    let dispersion_term = -(disp_y + disp_z) / nf;
    let log_term = -(apx + dec) / nf;
    let components = BTreeMap::from([
        ("n".to_string(), nf),
        ("h_phi".to_string(), h_phi),
        ("cross_entropy".to_string(), cross),
        ("info_y".to_string(), info_y),
        ("info_z".to_string(), info_z),
        ("information".to_string(), information),
        ("v_y".to_string(), v_y),
        ("v_z".to_string(), v_z),
        ("eps_r_budget".to_string(), eps_r),
        ("eps_sec_budget".to_string(), eps_s),
        ("q_inv_r".to_string(), q_r),
        ("q_inv_sec".to_string(), q_s),
        ("type_constant".to_string(), l),
        ("apx_bits".to_string(), apx),
        ("dec_bits".to_string(), dec),
        ("n_rtilde".to_string(), n_rtilde),
    ]);
    Ok(WiretapBudget {
        n_rtilde,
        rate: RateResult::assemble(information, dispersion_term, log_term, components),
    })
}

/// `R = I(U;Y) - I(U;Z) - sqrt(V_Y/n) Q^{-1}(theta eps_r) - sqrt(V_Z/n)
/// Q^{-1}((1-theta) eps_sec) - log terms`, under the composition nearest to
/// `q_U`, clamped at zero.
pub fn wiretap_rate(setup: &WiretapSetup, policy: &LogTermPolicy) -> Result<RateResult> {
    Ok(wiretap_budget(setup, policy)?.rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{mutual_information, wiretap_variances};
    use crate::prob::Alphabet;
    use crate::secondorder::p2p::{p2p_rate, P2PSetup};

    pub(crate) fn diag(q: &[f64]) -> JointPmf {
        let k = q.len();
        let mut p = vec![0.0; k * k];
        for (i, &v) in q.iter().enumerate() {
            p[i * k + i] = v;
        }
        JointPmf::from_sizes(&["U", "X"], &[k, k], p).unwrap()
    }

    fn degraded(pm: f64, pe: f64) -> Channel {
        let main = Channel::bsc(pm).unwrap();
        let extra = Channel::bsc((pe - pm) / (1.0 - 2.0 * pm)).unwrap();
        let rows: Vec<Vec<f64>> = (0..2)
            .map(|x| {
                let mut r = vec![0.0; 4];
                for y in 0..2 {
                    for z in 0..2 {
                        r[y * 2 + z] = main.transition(x, y) * extra.transition(y, z);
                    }
                }
                r
            })
            .collect();
        Channel::new(
            Alphabet::new("X", 2).unwrap(),
            vec![Alphabet::new("Y", 2).unwrap(), Alphabet::new("Z", 2).unwrap()],
            rows,
        )
        .unwrap()
    }

    fn constant_z(main: &Channel) -> Channel {
        let rows = main.rows().to_vec();
        Channel::new(
            main.input().clone(),
            vec![Alphabet::new("Y", main.output_size()).unwrap(), Alphabet::new("Z", 1).unwrap()],
            rows,
        )
        .unwrap()
    }

    #[test]
    fn constant_eavesdropper_reduces_to_p2p() {
        let policy = LogTermPolicy::default();
        for (q, n) in [(vec![0.5, 0.5], 1000u64), (vec![0.3, 0.7], 777), (vec![0.2, 0.3, 0.5], 4321)] {
            let k = q.len();
            let rows: Vec<Vec<f64>> = (0..k)
                .map(|x| (0..k).map(|y| if x == y { 0.8 } else { 0.2 / (k - 1) as f64 }).collect())
                .collect();
            let main = Channel::from_matrix("X", "Y", rows).unwrap();
            let theta = 0.6;
            let w = WiretapSetup::new(diag(&q), constant_z(&main), n, 0.2, 0.3, theta).unwrap();
            let r = wiretap_rate(&w, &policy).unwrap();
            let p = P2PSetup::new(Pmf::from_probs("X", q.clone()).unwrap(), main, n, theta * 0.2).unwrap();
            let rp = p2p_rate(&p, &policy).unwrap();
            assert!((r.unclamped - rp.unclamped).abs() < 1e-12, "{} vs {}", r.unclamped, rp.unclamped);
            assert_eq!(r.component("v_z"), 0.0);
        }
    }

    /// Second path: mutual informations and variances from the joint-pmf
    /// primitives, then the rate assembled from the two budget equations.
    #[test]
    fn degraded_binary_second_path() {
        let (n, eps, theta) = (10_000u64, 1e-2, 0.5);
        let ch = degraded(0.1, 0.3);
        let w = WiretapSetup::new(diag(&[0.5, 0.5]), ch.clone(), n, eps, eps, theta).unwrap();
        // theta * eps = 1/sqrt(n) here, so the slack must be absorbed
        assert!(matches!(wiretap_rate(&w, &LogTermPolicy::default()), Err(Error::SlackExhausted { .. })));
        let policy = LogTermPolicy::absorbed();
        let r = wiretap_rate(&w, &policy).unwrap();

        let joint = JointPmf::from_input_and_channel(&Pmf::from_probs("X", vec![0.5, 0.5]).unwrap(), &ch).unwrap();
        let iy = mutual_information(&joint, &["X"], &["Y"]).unwrap();
        let iz = mutual_information(&joint, &["X"], &["Z"]).unwrap();
        let (vy, vz) = wiretap_variances(&diag(&[0.5, 0.5]), &ch, DispersionConditioning::InputPair).unwrap();
        let nf = n as f64;
        let qr = std_q_inv(theta * eps).unwrap();
        let qs = std_q_inv((1.0 - theta) * eps).unwrap();
        let hx = 1.0;
        // error side: n R̃ = n H(X|Y) + sqrt(n V_Y) Q^{-1} + gamma_dec
        let n_rt = nf * (hx - iy) + (nf * vy).sqrt() * qr + 0.5 * nf.log2();
        // secrecy side: n (R + R̃) = n H(X|Z) - sqrt(n V_Z) Q^{-1} - (L + 2) log2 n
        let n_sum = nf * (hx - iz) - (nf * vz).sqrt() * qs - 3.0 * nf.log2();
        let expect = (n_sum - n_rt) / nf;
        assert!((r.rate - expect).abs() < 1e-12, "{} vs {expect}", r.rate);
        assert!(r.rate > 0.0 && r.rate < iy - iz);
    }

    #[test]
    fn theta_endpoints_rejected() {
        let ch = degraded(0.1, 0.3);
        for th in [0.0, 1.0] {
            let w = WiretapSetup::new(diag(&[0.5, 0.5]), ch.clone(), 1000, 0.1, 0.1, th).unwrap();
            assert!(matches!(wiretap_rate(&w, &LogTermPolicy::default()), Err(Error::OutOfDomain { .. })));
        }
        let w = WiretapSetup::new(diag(&[0.5, 0.5]), ch, 100, 0.1, 0.1, 0.5).unwrap();
        assert!(matches!(wiretap_rate(&w, &LogTermPolicy::default()), Err(Error::SlackExhausted { .. })));
    }

    #[test]
    fn never_above_p2p_on_same_main_channel() {
        let policy = LogTermPolicy::default();
        for (pm, pe) in [(0.05, 0.2), (0.1, 0.3), (0.2, 0.4), (0.01, 0.45)] {
            for n in [2000u64, 10_000, 100_000] {
                for theta in [0.25, 0.5, 0.75] {
                    let w = WiretapSetup::new(diag(&[0.5, 0.5]), degraded(pm, pe), n, 0.1, 0.1, theta).unwrap();
                    let r = wiretap_rate(&w, &policy).unwrap();
                    let p = P2PSetup::new(
                        Pmf::from_probs("X", vec![0.5, 0.5]).unwrap(),
                        Channel::bsc(pm).unwrap(),
                        n,
                        theta * 0.1,
                    )
                    .unwrap();
                    assert!(r.unclamped <= p2p_rate(&p, &policy).unwrap().unclamped + 1e-12);
                }
            }
        }
    }

    #[test]
    fn conditioning_variants_coincide_when_u_is_x() {
        let ch = degraded(0.1, 0.3);
        let a = WiretapSetup::new(diag(&[0.4, 0.6]), ch.clone(), 5000, 0.1, 0.1, 0.5).unwrap();
        let b = a.clone().with_conditioning(DispersionConditioning::Auxiliary);
        let p = LogTermPolicy::default();
        assert!((wiretap_rate(&a, &p).unwrap().unclamped - wiretap_rate(&b, &p).unwrap().unclamped).abs() < 1e-12);
    }

    #[test]
    fn auxiliary_variances_match_primitives() {
        // U -> X through a BSC(0.1) prefix: the two conditionings differ
        let q = JointPmf::from_sizes(&["U", "X"], &[2, 2], vec![0.45, 0.05, 0.05, 0.45]).unwrap();
        let ch = degraded(0.1, 0.3);
        let n = 1000u64;
        for c in [DispersionConditioning::InputPair, DispersionConditioning::Auxiliary] {
            let w = WiretapSetup::new(q.clone(), ch.clone(), n, 0.2, 0.2, 0.5).unwrap().with_conditioning(c);
            let r = wiretap_rate(&w, &LogTermPolicy::default()).unwrap();
            let (vy, vz) = wiretap_variances(&q, &ch, c).unwrap();
            assert!((r.component("v_y") - vy).abs() < 1e-12);
            assert!((r.component("v_z") - vz).abs() < 1e-12);
        }
    }
}
