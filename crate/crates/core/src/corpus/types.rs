use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Tourist,
    Guide,
}

impl Role {
    pub const ALL: [Role; 2] = [Role::Tourist, Role::Guide];

    pub fn other(self) -> Role {
        match self {
            Role::Tourist => Role::Guide,
            Role::Guide => Role::Tourist,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Role::Tourist => 0,
            Role::Guide => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Tourist => "tourist",
            Role::Guide => "guide",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tourist" => Ok(Role::Tourist),
            "guide" => Ok(Role::Guide),
            other => Err(format!("unknown speaker role `{other}`")),
        }
    }
}

/// One utterance with its speaker and gold intent labels (`ACT_ATTRIBUTE`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub speaker: Role,
    pub transcript: String,
    pub tokens: Vec<String>,
    pub intents: BTreeSet<String>,
}

impl Turn {
    pub fn new(speaker: Role, transcript: impl Into<String>, intents: impl IntoIterator<Item = String>) -> Self {
        let transcript = transcript.into();
        Turn {
            speaker,
            tokens: super::tokenize(&transcript),
            transcript,
            intents: intents.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub session_id: String,
    pub turns: Vec<Turn>,
}
