//! Finite-blocklength rate calculators and protocol simulators for the
//! point-to-point, broadcast and wiretap channels.
//!
//! Second-order terms enter at per-use scale as `-sqrt(V/n) Q^{-1}(eps)`.
//! Every calculator reports its Gaussian and logarithmic contributions
//! separately so the effect of the `O(log n / n)` constants is visible.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::typeclass::type_constant_l;

pub mod bc;
pub mod p2p;
pub mod sim;
pub mod wiretap;

pub use bc::{bc_region_boundary, bc_region_membership, BCSetup, BcConstants, BcRegion, BcSearch};
pub use p2p::{p2p_rate, p2p_rtilde, P2PSetup, Rtilde};
pub use sim::{p2p_simulate, simulate_protocol, wiretap_simulate_secrecy, P2PSimReport, SimMethod, WiretapSimReport};
pub use wiretap::{wiretap_rate, WiretapSetup};

/// How a threshold `gamma` scales with the blocklength.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    /// `log2 n`
    LogN,
    /// `log2 n / 2`
    HalfLogN,
    /// A fixed number of bits.
    Bits(f64),
}

impl GammaRule {
    pub fn bits(&self, n: u64) -> f64 {
        let l = (n as f64).log2();
        match *self {
            GammaRule::LogN => l,
            GammaRule::HalfLogN => 0.5 * l,
            GammaRule::Bits(b) => b,
        }
    }
}

/// Bookkeeping for the terms hidden in `O(log n)` and `O(1/sqrt n)`.
///
/// Defaults: the approximation side costs `(L + 1) log2 n + gamma_apx` bits
/// with `gamma_apx = log2 n` (so `(L + 2) log2 n` in total), the decoding side
/// costs `gamma_dec = log2 n / 2` bits, all scaled by `c_multiplier = 1`.
/// The error target loses `eps_slack / sqrt n` before the Gaussian quantile
/// is taken.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogTermPolicy {
    pub c_multiplier: f64,
    /// `None` uses `|alphabet| - 1` of the relevant alphabet.
    pub type_constant: Option<f64>,
    pub gamma_apx: GammaRule,
    pub gamma_dec: GammaRule,
    pub eps_slack: f64,
}

impl Default for LogTermPolicy {
    fn default() -> Self {
        Self {
            c_multiplier: 1.0,
            type_constant: None,
            gamma_apx: GammaRule::LogN,
            gamma_dec: GammaRule::HalfLogN,
            eps_slack: 1.0,
        }
    }
}

impl LogTermPolicy {
    /// The default policy with the `1/sqrt n` error slack folded into the
    /// `O(1/sqrt n)` remainder instead of being subtracted from `eps`.
    pub fn absorbed() -> Self {
        Self {
            eps_slack: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, value: f64| Err(Error::OutOfDomain { name, value });
        if !(self.c_multiplier >= 0.0) || !self.c_multiplier.is_finite() {
            return bad("c_multiplier", self.c_multiplier);
        }
        if !(self.eps_slack >= 0.0) || !self.eps_slack.is_finite() {
            return bad("eps_slack", self.eps_slack);
        }
        if let Some(l) = self.type_constant {
            if !(l >= 0.0) || !l.is_finite() {
                return bad("type_constant", l);
            }
        }
        for g in [self.gamma_apx, self.gamma_dec] {
            if let GammaRule::Bits(b) = g {
                if !(b >= 0.0) || !b.is_finite() {
                    return bad("gamma", b);
                }
            }
        }
        Ok(())
    }

    pub fn type_constant_for(&self, alphabet_size: usize) -> Result<f64> {
        match self.type_constant {
            Some(l) => Ok(l),
            None => type_constant_l(alphabet_size),
        }
    }

    /// `c ((L + 1) log2 n + gamma_apx)` bits.
    pub fn apx_bits(&self, n: u64, l: f64) -> f64 {
        self.c_multiplier * ((l + 1.0) * (n as f64).log2() + self.gamma_apx.bits(n))
    }

    /// `c gamma_dec` bits.
    pub fn dec_bits(&self, n: u64) -> f64 {
        self.c_multiplier * self.gamma_dec.bits(n)
    }

    pub fn slack(&self, n: u64) -> f64 {
        self.eps_slack / (n as f64).sqrt()
    }

    /// `eps - slack`, which must stay positive.
    pub fn budget(&self, eps: f64, n: u64) -> Result<f64> {
        let slack = self.slack(n);
        if eps - slack <= 0.0 {
            return Err(Error::SlackExhausted { budget: eps, slack });
        }
        Ok(eps - slack)
    }
}

/// A per-use rate with its decomposition. `rate = max(unclamped, 0)` and
/// `unclamped = information + dispersion_term + log_term`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateResult {
    pub rate: f64,
    pub unclamped: f64,
    pub clamped: bool,
    pub dispersion_term: f64,
    pub log_term: f64,
    pub components: BTreeMap<String, f64>,
}

impl RateResult {
    pub(crate) fn assemble(information: f64, dispersion_term: f64, log_term: f64, components: BTreeMap<String, f64>) -> Self {
        let unclamped = information + dispersion_term + log_term;
        Self {
            rate: unclamped.max(0.0),
            unclamped,
            clamped: unclamped < 0.0,
            dispersion_term,
            log_term,
            components,
        }
    }

    pub fn component(&self, key: &str) -> f64 {
        self.components.get(key).copied().unwrap_or(f64::NAN)
    }
}

pub(crate) fn check_common(n: u64, eps: &[(&'static str, f64)]) -> Result<()> {
    if n < 2 {
        return Err(Error::OutOfDomain {
            name: "n",
            value: n as f64,
        });
    }
    for &(name, value) in eps {
        if !(value > 0.0 && value < 1.0) {
            return Err(Error::OutOfDomain { name, value });
        }
    }
    Ok(())
}

/// `sqrt(V) * q` with the convention that a zero variance kills the term
/// whatever the quantile.
pub(crate) fn gauss_term(variance: f64, q_inv: f64) -> f64 {
    if variance <= 0.0 {
        0.0
    } else {
        variance.sqrt() * q_inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_defaults() {
        let p = LogTermPolicy::default();
        let n = 1024;
        assert_eq!(p.apx_bits(n, 1.0), 30.0);
        assert_eq!(p.dec_bits(n), 5.0);
        assert_eq!(p.slack(n), 1.0 / 32.0);
        assert!(matches!(p.budget(0.01, n), Err(Error::SlackExhausted { .. })));
        assert_eq!(LogTermPolicy::absorbed().budget(0.01, n).unwrap(), 0.01);
        let mut bad = p.clone();
        bad.eps_slack = -1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn policy_json_round_trip() {
        let p = LogTermPolicy {
            gamma_apx: GammaRule::Bits(3.0),
            ..LogTermPolicy::default()
        };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<LogTermPolicy>(&s).unwrap(), p);
        let partial: LogTermPolicy = serde_json::from_str(r#"{"eps_slack": 0}"#).unwrap();
        assert_eq!(partial, LogTermPolicy::absorbed());
    }
}
