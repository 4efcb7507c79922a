//! Labeled source scripts.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Binary class label. Malicious is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Benign, Label::Malicious];

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Benign => 0,
            Label::Malicious => 1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Malicious
    }

    /// Regression target for a sigmoid output.
    pub fn target(self) -> f64 {
        f64::from(self.as_u8())
    }
}

impl TryFrom<u8> for Label {
    type Error = InvalidLabel;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Label::Benign),
            1 => Ok(Label::Malicious),
            other => Err(InvalidLabel(other.to_string())),
        }
    }
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        label.as_u8()
    }
}

impl std::str::FromStr for Label {
    type Err = InvalidLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "0" => Ok(Label::Benign),
            "1" => Ok(Label::Malicious),
            other => Err(InvalidLabel(other.to_string())),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid label {0:?}, expected 0 (benign) or 1 (malicious)")]
pub struct InvalidLabel(pub String);

/// A script as read from disk or produced by the generator. The text is
/// only ever lexed and parsed, never evaluated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceScript {
    pub id: String,
    pub text: String,
    pub label: Option<Label>,
    pub origin: String,
}

impl SourceScript {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let id = id.into();
        SourceScript {
            origin: id.clone(),
            id,
            text: text.into(),
            label: None,
        }
    }

    pub fn labeled(id: impl Into<String>, text: impl Into<String>, label: Label) -> Self {
        SourceScript {
            label: Some(label),
            ..SourceScript::new(id, text)
        }
    }

    /// Decodes raw bytes leniently: invalid UTF-8 sequences become U+FFFD.
    pub fn from_bytes(id: impl Into<String>, bytes: &[u8], label: Option<Label>) -> Self {
        SourceScript {
            label,
            ..SourceScript::new(id, String::from_utf8_lossy(bytes).into_owned())
        }
    }

    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = origin.into();
        self
    }
}
