use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Annotation outcome for a single tweet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Misinfo,
    NotMisinfo,
    Uncertain,
}

impl Label {
    /// The binary class used for training, or `None` for `Uncertain`.
    pub fn as_class(self) -> Option<bool> {
        match self {
            Label::Misinfo => Some(true),
            Label::NotMisinfo => Some(false),
            Label::Uncertain => None,
        }
    }

    pub fn from_class(positive: bool) -> Self {
        if positive {
            Label::Misinfo
        } else {
            Label::NotMisinfo
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Misinfo => "misinfo",
            Label::NotMisinfo => "not_misinfo",
            Label::Uncertain => "uncertain",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseLabelError(pub String);

impl fmt::Display for ParseLabelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown label {:?} (expected misinfo, not_misinfo or uncertain)",
            self.0
        )
    }
}

impl std::error::Error for ParseLabelError {}

impl FromStr for Label {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "misinfo" | "m" | "1" | "true" => Ok(Label::Misinfo),
            "not_misinfo" | "n" | "0" | "false" => Ok(Label::NotMisinfo),
            "uncertain" | "u" => Ok(Label::Uncertain),
            other => Err(ParseLabelError(other.to_owned())),
        }
    }
}
