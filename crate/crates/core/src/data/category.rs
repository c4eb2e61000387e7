use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Ternary news label. Index order matches the expert order of the MoE layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Real,
    HumanCrafted,
    AiSynthesized,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Real, Category::HumanCrafted, Category::AiSynthesized];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Real => "real",
            Category::HumanCrafted => "human_crafted",
            Category::AiSynthesized => "ai_synthesized",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Category> {
        Category::ALL.get(i).copied()
    }

    /// Case-insensitive match against the category names.
    pub fn parse_loose(s: &str) -> Option<Category> {
        let s = s.trim();
        Category::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::parse_loose(s).ok_or_else(|| Error::Data(format!("unknown category {s:?}")))
    }
}
