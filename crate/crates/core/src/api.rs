//! JSON bodies exchanged with the HTTP service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::color_seq::{ColorSequence, SequenceError};
use crate::pir::ClientView;

/// A sequence given either as `"4,5,5"` / `"4:1,5:2,5:3"` or as the JSON
/// entry list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SequenceInput {
    Text(String),
    Entries(ColorSequence),
}

impl SequenceInput {
    pub fn resolve(self) -> Result<ColorSequence, SequenceError> {
        match self {
            SequenceInput::Text(s) => s.parse(),
            SequenceInput::Entries(s) => Ok(s),
        }
    }
}

impl From<&str> for SequenceInput {
    fn from(s: &str) -> Self {
        SequenceInput::Text(s.to_string())
    }
}

impl From<ColorSequence> for SequenceInput {
    fn from(s: ColorSequence) -> Self {
        SequenceInput::Entries(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceRequest {
    pub sequence: SequenceInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeasibleResponse {
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
}

/// Colors `sequence`, or the balanced sequence of height `h` when no
/// sequence is given.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ColorRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceInput>,
    #[serde(default)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubIndexRequest {
    pub h: u32,
    /// Heap index of the leaf.
    pub leaf: u64,
    /// Defaults to the balanced sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceInput>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlainRequest {
    pub target: u64,
}

/// What a replica publishes about its deployment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentMeta {
    #[serde(flatten)]
    pub view: ClientView,
    /// Sub-database size per color id.
    pub sizes: BTreeMap<u16, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub deployment: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
