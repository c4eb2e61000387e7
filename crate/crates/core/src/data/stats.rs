use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Category, NewsSample};
use crate::error::{Error, Result};

/// Published OmniFake category totals.
pub const OMNIFAKE_REAL: usize = 49_034;
pub const OMNIFAKE_HUMAN_CRAFTED: usize = 24_726;
pub const OMNIFAKE_TOTAL: usize = 127_283;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub real: usize,
    pub human_crafted: usize,
    pub ai_synthesized: usize,
    pub total: usize,
    #[serde(default)]
    pub kinds: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn from_samples(samples: &[NewsSample]) -> Self {
        let mut s = CorpusStats::default();
        for x in samples {
            match x.label {
                Category::Real => s.real += 1,
                Category::HumanCrafted => s.human_crafted += 1,
                Category::AiSynthesized => s.ai_synthesized += 1,
            }
            *s.kinds.entry(x.manipulation.kind.as_str().to_string()).or_default() += 1;
        }
        s.total = samples.len();
        s
    }

    pub fn count(&self, c: Category) -> usize {
        match c {
            Category::Real => self.real,
            Category::HumanCrafted => self.human_crafted,
            Category::AiSynthesized => self.ai_synthesized,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.real + self.human_crafted + self.ai_synthesized == self.total
    }
}

/// Result of checking a stats file against the published OmniFake totals.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OmniFakeAccounting {
    pub real: usize,
    pub human_crafted: usize,
    pub ai_synthesized: usize,
    pub total: usize,
}

impl std::fmt::Display for OmniFakeAccounting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} + {} + {} = {}",
            self.real, self.human_crafted, self.ai_synthesized, self.total
        )
    }
}

/// Confirms the three category totals of a full OmniFake corpus. The
/// AI-synthesized count is implied by the published total.
pub fn verify_omnifake(stats: &CorpusStats) -> Result<OmniFakeAccounting> {
    let implied_ai = OMNIFAKE_TOTAL - OMNIFAKE_REAL - OMNIFAKE_HUMAN_CRAFTED;
    let checks = [
        ("real", stats.real, OMNIFAKE_REAL),
        ("human_crafted", stats.human_crafted, OMNIFAKE_HUMAN_CRAFTED),
        ("ai_synthesized", stats.ai_synthesized, implied_ai),
        ("total", stats.total, OMNIFAKE_TOTAL),
    ];
    for (name, got, want) in checks {
        if got != want {
            return Err(Error::Data(format!("OmniFake {name} count is {got}, expected {want}")));
        }
    }
    if !stats.is_consistent() {
        return Err(Error::Data("category counts do not sum to total".into()));
    }
    Ok(OmniFakeAccounting {
        real: stats.real,
        human_crafted: stats.human_crafted,
        ai_synthesized: stats.ai_synthesized,
        total: stats.total,
    })
}
