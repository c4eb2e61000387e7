//! Gazetteer lookup plus a capitalization heuristic for meta-entity extraction.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_GAZETTEER: &str = include_str!("../../resources/gazetteer.tsv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Person,
    Location,
    Organization,
    EventTime,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Person => "person",
            EntityKind::Location => "location",
            EntityKind::Organization => "organization",
            EntityKind::EventTime => "event_time",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "person" => Some(EntityKind::Person),
            "location" => Some(EntityKind::Location),
            "organization" => Some(EntityKind::Organization),
            "event_time" => Some(EntityKind::EventTime),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub surface: String,
    pub kind: EntityKind,
}

/// Meta entities of a text plus a short description per entity surface.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySet {
    pub entities: Vec<Entity>,
    pub descriptions: BTreeMap<String, String>,
}

impl EntitySet {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn surfaces(&self) -> Vec<String> {
        self.entities.iter().map(|e| e.surface.clone()).collect()
    }

    pub fn contains_surface(&self, s: &str) -> bool {
        self.entities.iter().any(|e| e.surface.eq_ignore_ascii_case(s))
    }
}

#[derive(Clone, Debug)]
struct GazetteerEntry {
    words: Vec<String>,
    kind: EntityKind,
    description: String,
}

/// Surface → (kind, description) dictionary, matched case-insensitively on
/// whole words, longest entry first.
#[derive(Clone, Debug)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
}

impl Default for Gazetteer {
    fn default() -> Self {
        Gazetteer::parse(DEFAULT_GAZETTEER).expect("bundled gazetteer is valid")
    }
}

/// A word of a text with its byte span.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordSpan<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

pub fn words(text: &str) -> Vec<WordSpan<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (is_word_char(c), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(WordSpan { text: &text[s..i], start: s, end: i });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(WordSpan { text: &text[s..], start: s, end: text.len() });
    }
    out
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "in", "on", "at", "of", "and", "but", "or", "to", "for", "with", "by", "from", "as", "is",
    "it", "its", "this", "that", "these", "those", "after", "before", "over", "under", "new", "why", "how", "what",
    "who", "when", "where", "i", "we", "you", "they", "he", "she", "not", "no", "breaking",
];

const MONTHS_DAYS: &[&str] = &[
    "january", "february", "march", "april", "may", "june", "july", "august", "september", "october", "november",
    "december", "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday",
];

fn is_capitalized(w: &str) -> bool {
    w.chars().next().is_some_and(char::is_uppercase)
}

fn is_year(w: &str) -> bool {
    w.len() == 4 && w.chars().all(|c| c.is_ascii_digit()) && (w.starts_with("19") || w.starts_with("20"))
}

fn sentence_initial(text: &str, start: usize) -> bool {
    let before = text[..start].trim_end();
    before.is_empty() || before.ends_with(['.', '!', '?', ':', ']', '>', '"', '\n'])
}

impl Gazetteer {
    /// `surface<TAB>kind<TAB>description` per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(surface), Some(kind)) = (cols.next(), cols.next()) else {
                return Err(Error::Data(format!("gazetteer line {}: expected surface<TAB>kind", lineno + 1)));
            };
            let kind = EntityKind::parse(kind.trim())
                .ok_or_else(|| Error::Data(format!("gazetteer line {}: unknown kind {kind:?}", lineno + 1)))?;
            let description = cols.next().unwrap_or("").trim().to_string();
            let words: Vec<String> = words(surface).iter().map(|w| w.text.to_lowercase()).collect();
            if words.is_empty() {
                return Err(Error::Data(format!("gazetteer line {}: empty surface", lineno + 1)));
            }
            entries.push(GazetteerEntry { words, kind, description });
        }
        entries.sort_by(|a, b| b.words.len().cmp(&a.words.len()));
        Ok(Gazetteer { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn from_entries<'a>(items: impl IntoIterator<Item = (&'a str, EntityKind, &'a str)>) -> Self {
        let mut entries: Vec<GazetteerEntry> = items
            .into_iter()
            .map(|(s, kind, d)| GazetteerEntry {
                words: words(s).iter().map(|w| w.text.to_lowercase()).collect(),
                kind,
                description: d.to_string(),
            })
            .filter(|e| !e.words.is_empty())
            .collect();
        entries.sort_by(|a, b| b.words.len().cmp(&a.words.len()));
        Gazetteer { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Original-cased surfaces of every entry, in file order after length sort.
    pub fn surfaces(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| {
                e.words
                    .iter()
                    .map(|w| {
                        let mut c = w.chars();
                        match c.next() {
                            Some(f) if w.len() <= 5 && w.chars().all(|ch| ch.is_alphabetic()) && w.len() > 3 => {
                                f.to_uppercase().collect::<String>() + c.as_str()
                            }
                            Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
                            None => String::new(),
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect()
    }

    fn match_at(&self, ws: &[WordSpan<'_>], i: usize) -> Option<(usize, &GazetteerEntry)> {
        self.entries.iter().find_map(|e| {
            let n = e.words.len();
            (i + n <= ws.len() && (0..n).all(|k| ws[i + k].text.to_lowercase() == e.words[k])).then_some((n, e))
        })
    }
}

/// Extracts meta entities from `text`: gazetteer matches first, then runs of
/// capitalized non-sentence-initial words (skipped for mostly title-cased text).
/// Result is deduplicated case-insensitively in order of first mention.
pub fn extract_entities(text: &str, gazetteer: &Gazetteer) -> EntitySet {
    let ws = words(text);
    let mut found: Vec<(Entity, String)> = Vec::new();
    let alpha: Vec<&WordSpan<'_>> = ws.iter().filter(|w| w.text.chars().any(char::is_alphabetic)).collect();
    let caps = alpha.iter().filter(|w| is_capitalized(w.text)).count();
    let title_case = alpha.len() >= 4 && caps * 10 >= alpha.len() * 6;

    let mut i = 0;
    while i < ws.len() {
        if let Some((n, e)) = gazetteer.match_at(&ws, i) {
            let surface = &text[ws[i].start..ws[i + n - 1].end];
            found.push((
                Entity {
                    surface: surface.to_string(),
                    kind: e.kind,
                },
                e.description.clone(),
            ));
            i += n;
            continue;
        }
        let w = &ws[i];
        if is_year(w.text) {
            found.push((
                Entity {
                    surface: w.text.to_string(),
                    kind: EntityKind::EventTime,
                },
                String::new(),
            ));
            i += 1;
            continue;
        }
        let candidate = |w: &WordSpan<'_>| {
            is_capitalized(w.text) && !STOPWORDS.contains(&w.text.to_lowercase().as_str())
        };
        if !title_case && candidate(w) && !sentence_initial(text, w.start) {
            let mut j = i + 1;
            while j < ws.len()
                && candidate(&ws[j])
                && text[ws[j - 1].end..ws[j].start].chars().all(|c| c == ' ')
                && gazetteer.match_at(&ws, j).is_none()
            {
                j += 1;
            }
            let surface = &text[w.start..ws[j - 1].end];
            let kind = if MONTHS_DAYS.contains(&surface.to_lowercase().as_str()) {
                EntityKind::EventTime
            } else if surface.len() >= 2 && surface.chars().all(|c| c.is_uppercase() || !c.is_alphabetic()) {
                EntityKind::Organization
            } else {
                EntityKind::Person
            };
            found.push((
                Entity {
                    surface: surface.to_string(),
                    kind,
                },
                String::new(),
            ));
            i = j;
            continue;
        }
        i += 1;
    }

    let mut set = EntitySet::default();
    for (e, desc) in found {
        if set.contains_surface(&e.surface) {
            continue;
        }
        let desc = if desc.is_empty() {
            format!("{} ({}) named in the text", e.surface, e.kind.as_str().replace('_', " "))
        } else {
            desc
        };
        set.descriptions.insert(e.surface.clone(), desc);
        set.entities.push(e);
    }
    set
}

/// Byte ranges of every whole-word, case-insensitive occurrence of the
/// entity surfaces in `text`, sorted and non-overlapping.
pub fn entity_spans(text: &str, entities: &EntitySet) -> Vec<(usize, usize)> {
    let ws = words(text);
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for e in &entities.entities {
        let ew: Vec<String> = words(&e.surface).iter().map(|w| w.text.to_lowercase()).collect();
        if ew.is_empty() {
            continue;
        }
        for i in 0..ws.len() {
            if i + ew.len() <= ws.len() && (0..ew.len()).all(|k| ws[i + k].text.to_lowercase() == ew[k]) {
                spans.push((ws[i].start, ws[i + ew.len() - 1].end));
            }
        }
    }
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in spans {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    merged
}
