//! Experiment configuration files.
//!
//! ```json
//! {"kind": "p2p", "seed": 7, "workers": 2, "output_path": "out.csv",
//!  "payload": {...}}
//! ```
//!
//! `seed` is mandatory. `workers` and `output_path` do not enter the config
//! hash, so they cannot change the emitted rows.

use std::path::PathBuf;

use osrb_core::prob::json::{ChannelJson, JointJson};
use osrb_core::prob::DispersionConditioning;
use osrb_core::secondorder::{BcSearch, LogTermPolicy, SimMethod};
use osrb_core::slc::SGamma2Form;
use osrb_core::binning::Thm1Exponent;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Thm1,
    Thm2,
    P2p,
    Bc,
    Wiretap,
}

impl Kind {
    pub const ALL: [Kind; 5] = [Kind::Thm1, Kind::Thm2, Kind::P2p, Kind::Bc, Kind::Wiretap];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Thm1 => "thm1",
            Kind::Thm2 => "thm2",
            Kind::P2p => "p2p",
            Kind::Bc => "bc",
            Kind::Wiretap => "wiretap",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    pub payload: Value,
}

fn one() -> usize {
    1
}

/// `"marginal"`, `"uniform"` or an explicit pmf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TzSel {
    Named(String),
    Probs(Vec<f64>),
}

/// `"match"`, `"iid_marginals"`, `"uniform"` or an explicit joint pmf.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TSel {
    Named(String),
    Joint(JointJson),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm1Payload {
    /// One explicit source. Needs `spec`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<JointJson>,
    /// `[[alphabet size, bins], ..]`, one pair per binned part.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<Vec<[usize; 2]>>,
    /// Random sources per shape of the standard grid, instead of `source`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_sweep: Option<usize>,
    pub gamma_grid: Vec<f64>,
    /// Defaults to both named choices.
    #[serde(default)]
    pub t_z: Vec<TzSel>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub exponent: Thm1Exponent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thm2Payload {
    /// One explicit source. Needs `spec`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<JointJson>,
    /// `[[alphabet size, bins], ..]`, one pair per binned part.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<Vec<[usize; 2]>>,
    /// Random sources per shape of the standard grid, instead of `source`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_sweep: Option<usize>,
    pub gamma_grid: Vec<f64>,
    /// Defaults to all three named choices.
    #[serde(default)]
    pub t_joint: Vec<TSel>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub form: SGamma2Form,
}

fn default_trials() -> u64 {
    10_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct P2pSim {
    /// Simulated rate is `p2p_rate - backoff`.
    pub backoff: f64,
    pub trials: u64,
    #[serde(default)]
    pub method: SimMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct P2pPayload {
    pub input: Vec<f64>,
    pub channel: ChannelJson,
    pub n_grid: Vec<u64>,
    pub eps: f64,
    #[serde(default)]
    pub policy: LogTermPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<P2pSim>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcPayload {
    /// Axes `(U1, U2, X)`.
    pub q_u1u2x: JointJson,
    /// `X -> (Y1, Y2)`
    pub channel: ChannelJson,
    pub n: u64,
    pub eps: f64,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default)]
    pub search: BcSearch,
    #[serde(default)]
    pub policy: LogTermPolicy,
}

fn default_directions() -> usize {
    33
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WiretapSim {
    pub backoff: f64,
    /// Sampled `(binning, f)` pairs.
    pub scan: u64,
    #[serde(default = "default_draws")]
    pub decode_draws: u64,
}

fn default_draws() -> u64 {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WiretapPayload {
    /// Axes `(U, X)`.
    pub q_ux: JointJson,
    /// `X -> (Y, Z)`
    pub channel: ChannelJson,
    pub n_grid: Vec<u64>,
    pub eps_r: f64,
    pub eps_sec: f64,
    pub theta_grid: Vec<f64>,
    #[serde(default)]
    pub conditioning: DispersionConditioning,
    #[serde(default)]
    pub policy: LogTermPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<WiretapSim>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Thm1(Thm1Payload),
    Thm2(Thm2Payload),
    P2p(P2pPayload),
    Bc(BcPayload),
    Wiretap(WiretapPayload),
}

impl Payload {
    pub fn parse(kind: Kind, v: &Value) -> serde_json::Result<Self> {
        let v = v.clone();
        Ok(match kind {
            Kind::Thm1 => Payload::Thm1(serde_json::from_value(v)?),
            Kind::Thm2 => Payload::Thm2(serde_json::from_value(v)?),
            Kind::P2p => Payload::P2p(serde_json::from_value(v)?),
            Kind::Bc => Payload::Bc(serde_json::from_value(v)?),
            Kind::Wiretap => Payload::Wiretap(serde_json::from_value(v)?),
        })
    }

    pub fn to_value(&self) -> Value {
        match self {
            Payload::Thm1(p) => serde_json::to_value(p),
            Payload::Thm2(p) => serde_json::to_value(p),
            Payload::P2p(p) => serde_json::to_value(p),
            Payload::Bc(p) => serde_json::to_value(p),
            Payload::Wiretap(p) => serde_json::to_value(p),
        }
        .expect("payloads serialize")
    }
}

/// First 16 hex digits of the SHA-256 of the canonical `(kind, seed,
/// payload)` JSON. Object keys are sorted, so field order in the file does
/// not matter.
pub fn config_hash(kind: Kind, seed: u64, payload: &Value) -> String {
    let canon = serde_json::json!({ "kind": kind, "seed": seed, "payload": payload });
    let digest = Sha256::digest(canon.to_string().as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
