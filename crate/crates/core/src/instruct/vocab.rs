use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::data::Category;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const THINK_OPEN: usize = 4;
pub const THINK_CLOSE: usize = 5;
pub const ANS_OPEN: usize = 6;
pub const ANS_CLOSE: usize = 7;
pub const CITE_IMAGE: usize = 8;
pub const CITE_TEXT: usize = 9;

/// Reserved tokens, indexed by id.
pub const RESERVED: [&str; 10] = [
    "<pad>", "<bos>", "<eos>", "<unk>", "<think>", "</think>", "<answer>", "</answer>", "[image]", "[text]",
];

/// Literal markers recognized atomically in raw text (ids 4..=9).
const MARKERS: &[(&str, usize)] = &[
    ("</think>", THINK_CLOSE),
    ("<think>", THINK_OPEN),
    ("</answer>", ANS_CLOSE),
    ("<answer>", ANS_OPEN),
    ("[image]", CITE_IMAGE),
    ("[text]", CITE_TEXT),
];

pub const DEFAULT_MIN_COUNT: usize = 2;
pub const DEFAULT_MAX_TYPES: usize = 8192;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\''
}

/// One segmented piece of text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Piece {
    Marker(usize),
    Word(String),
}

/// Lowercased whitespace + punctuation segmentation with atomic markers.
pub fn segment(text: &str) -> Vec<Piece> {
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    let mut rest = lower.as_str();
    'outer: while let Some(c) = rest.chars().next() {
        if c.is_whitespace() {
            rest = &rest[c.len_utf8()..];
            continue;
        }
        if c == '<' || c == '[' {
            for (m, id) in MARKERS {
                if rest.starts_with(m) {
                    out.push(Piece::Marker(*id));
                    rest = &rest[m.len()..];
                    continue 'outer;
                }
            }
        }
        if is_word_char(c) {
            let end = rest.find(|ch: char| !is_word_char(ch)).unwrap_or(rest.len());
            out.push(Piece::Word(rest[..end].to_string()));
            rest = &rest[end..];
        } else {
            out.push(Piece::Word(c.to_string()));
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

/// Number of segmented tokens in `text`.
pub fn token_count(text: &str) -> usize {
    segment(text).len()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenSequence {
    pub ids: Vec<usize>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Word-level vocabulary with reserved special and marker tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }

    /// Builds from a corpus: reserved tokens, then category names, then words
    /// sorted by descending frequency and ascending text, keeping those seen at
    /// least `min_count` times, capped at `max_types` entries in total.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize, max_types: usize) -> Self {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in texts {
            for p in segment(t) {
                if let Piece::Word(w) = p {
                    *counts.entry(w).or_default() += 1;
                }
            }
        }
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for c in Category::ALL {
            tokens.push(c.as_str().to_string());
            counts.remove(c.as_str());
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().filter(|(_, n)| *n >= min_count).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        for (w, _) in ranked {
            if tokens.len() >= max_types {
                break;
            }
            tokens.push(w);
        }
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokenize(&self, s: &str) -> TokenSequence {
        let ids = segment(s)
            .into_iter()
            .map(|p| match p {
                Piece::Marker(id) => id,
                Piece::Word(w) => self.id(&w).unwrap_or(UNK),
            })
            .collect();
        TokenSequence { ids }
    }

    /// Inverse of [`tokenize`](Self::tokenize) up to spacing and case.
    /// PAD/BOS/EOS are dropped; markers are glued to their neighbours.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        let mut prev_glues_right = true;
        for &id in ids {
            if matches!(id, PAD | BOS | EOS) {
                continue;
            }
            let tok = self.token(id).unwrap_or("<unk>");
            let is_tag = (THINK_OPEN..=ANS_CLOSE).contains(&id);
            let glues_left = is_tag || matches!(tok, "." | "," | "!" | "?" | ";" | ":" | ")" | "]" | "%");
            if !out.is_empty() && !glues_left && !prev_glues_right {
                out.push(' ');
            }
            out.push_str(tok);
            prev_glues_right = is_tag || matches!(tok, "(" | "[");
        }
        out
    }

    /// `token<TAB>id` per line.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            s.push_str(t);
            s.push('\t');
            s.push_str(&i.to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (tok, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::Data(format!("vocab line {}: expected token<TAB>id", lineno + 1)))?;
            let id: usize = id
                .parse()
                .map_err(|_| Error::Data(format!("vocab line {}: bad id {id:?}", lineno + 1)))?;
            if id != tokens.len() {
                return Err(Error::Data(format!("vocab line {}: id {id} out of sequence", lineno + 1)));
            }
            tokens.push(tok.to_string());
        }
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*r) {
                return Err(Error::Data(format!("vocab: reserved token {r} must have id {i}")));
            }
        }
        Ok(Self::from_tokens(tokens))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}
