//! JSON forms of the distribution types.
//!
//! Channel: `{"input_size": k, "output_sizes": [..], "rows": [[..], ..]}`.
//! Joint pmf: `{"axis_sizes": [..], "probs": [..], "axis_names": [..]}`, with
//! `axis_names` optional (defaults to `A0, A1, ..`).

use serde::{Deserialize, Serialize};

use super::{Alphabet, Channel, JointPmf};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelJson {
    pub input_size: usize,
    pub output_sizes: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_names: Option<Vec<String>>,
}

impl ChannelJson {
    pub fn to_channel(&self) -> Result<Channel> {
        let input = Alphabet::new(self.input_name.as_deref().unwrap_or("X"), self.input_size)?;
        let names: Vec<String> = match &self.output_names {
            Some(n) if n.len() != self.output_sizes.len() => {
                return Err(Error::ShapeMismatch {
                    expected: self.output_sizes.len(),
                    found: n.len(),
                })
            }
            Some(n) => n.clone(),
            None => (0..self.output_sizes.len()).map(|i| format!("Y{i}")).collect(),
        };
        let outputs = names
            .iter()
            .zip(&self.output_sizes)
            .map(|(n, &s)| Alphabet::new(n.as_str(), s))
            .collect::<Result<Vec<_>>>()?;
        Channel::new(input, outputs, self.rows.clone())
    }

    pub fn from_channel(ch: &Channel) -> Self {
        Self {
            input_size: ch.input().size(),
            output_sizes: ch.outputs().iter().map(Alphabet::size).collect(),
            rows: ch.rows().to_vec(),
            input_name: Some(ch.input().name().to_string()),
            output_names: Some(ch.outputs().iter().map(|a| a.name().to_string()).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointJson {
    pub axis_sizes: Vec<usize>,
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_names: Option<Vec<String>>,
}

impl JointJson {
    pub fn to_joint(&self) -> Result<JointPmf> {
        let names: Vec<String> = match &self.axis_names {
            Some(n) => n.clone(),
            None => (0..self.axis_sizes.len()).map(|i| format!("A{i}")).collect(),
        };
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        JointPmf::from_sizes(&refs, &self.axis_sizes, self.probs.clone())
    }

    pub fn from_joint(j: &JointPmf) -> Self {
        Self {
            axis_sizes: j.shape(),
            probs: j.probs().to_vec(),
            axis_names: Some(j.axes().iter().map(|a| a.name().to_string()).collect()),
        }
    }
}
