//! Attribution chain-of-thought generation with a schema and grounding gate.

mod client;
mod entities;

pub use client::{
    GenClient, GenContext, GenRequest, GenTask, MockClient, RemoteClient, RemoteConfig, DEFAULT_RETRIES,
    DEFAULT_TIMEOUT, ENDPOINT_ENV, TOKEN_ENV,
};
pub use entities::{entity_spans, extract_entities, words, Entity, EntityKind, EntitySet, Gazetteer, WordSpan};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Category, ManifestCot, NewsSample};
use crate::error::Result;
use crate::instruct::token_count;
use crate::par::{self, Exec};

pub const DEFAULT_L_MIN: usize = 12;
pub const DEFAULT_L_MAX: usize = 160;
pub const DEFAULT_ATTEMPTS: usize = 3;
pub const COT_MAX_TOKENS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MissingBlock,
    DuplicateBlock,
    TrailingGarbage,
    UnclosedTag,
    MissingGrounding,
    InvalidAnswer,
    LabelMismatch,
    ThinkLength,
    UnlinkedEntity,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::MissingBlock => "missing_block",
            RejectReason::DuplicateBlock => "duplicate_block",
            RejectReason::TrailingGarbage => "trailing_garbage",
            RejectReason::UnclosedTag => "unclosed_tag",
            RejectReason::MissingGrounding => "missing_grounding",
            RejectReason::InvalidAnswer => "invalid_answer",
            RejectReason::LabelMismatch => "label_mismatch",
            RejectReason::ThinkLength => "think_length",
            RejectReason::UnlinkedEntity => "unlinked_entity",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pending,
    Accepted,
    Rejected(RejectReason),
}

impl Verdict {
    pub fn is_accepted(self) -> bool {
        self == Verdict::Accepted
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pending => f.write_str("pending"),
            Verdict::Accepted => f.write_str("accepted"),
            Verdict::Rejected(r) => write!(f, "rejected({})", r.as_str()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CotRecord {
    #[serde(default)]
    pub sample_id: String,
    pub think: String,
    pub answer: String,
    pub grounded_image_span: String,
    pub grounded_text_span: String,
    pub cited_entities: Vec<String>,
    pub attempts_used: usize,
    pub verdict: Verdict,
}

impl CotRecord {
    fn rejected(reason: RejectReason) -> Self {
        CotRecord {
            sample_id: String::new(),
            think: String::new(),
            answer: String::new(),
            grounded_image_span: String::new(),
            grounded_text_span: String::new(),
            cited_entities: Vec::new(),
            attempts_used: 0,
            verdict: Verdict::Rejected(reason),
        }
    }

    pub fn to_manifest(&self) -> ManifestCot {
        ManifestCot {
            think: self.think.clone(),
            answer: self.answer.clone(),
            verdict: self.verdict.to_string(),
        }
    }
}

/// Quality-control settings: think-length range and the gazetteer used to
/// find entity mentions inside the rationale.
#[derive(Clone, Debug)]
pub struct QcConfig {
    pub l_min: usize,
    pub l_max: usize,
    pub gazetteer: Gazetteer,
}

impl Default for QcConfig {
    fn default() -> Self {
        QcConfig {
            l_min: DEFAULT_L_MIN,
            l_max: DEFAULT_L_MAX,
            gazetteer: Gazetteer::default(),
        }
    }
}

/// Renders the three-part attribution prompt: task, per-category criteria,
/// and the required response format. The ground-truth label is included so
/// the rationale argues for it.
pub fn build_cot_prompt(sample: &NewsSample, m: &EntitySet) -> String {
    let mut p = String::new();
    p.push_str("[TASK]\n");
    p.push_str(
        "Given the news image and title, use observable cues to explain why the sample belongs to its category. \
         Refer to the listed entities and their descriptions.\n",
    );
    p.push_str(&format!("Title: {}\n", sample.title));
    p.push_str(&format!("Label: {}\n", sample.label.as_str()));
    if !m.is_empty() {
        p.push_str("Entities:\n");
        for e in &m.entities {
            let desc = m.descriptions.get(&e.surface).map(String::as_str).unwrap_or("");
            p.push_str(&format!("- {} ({}): {}\n", e.surface, e.kind.as_str(), desc));
        }
    }
    p.push_str("[DEFINE]\n");
    p.push_str("real: image and title agree, no visual manipulation traces, plain reporting.\n");
    p.push_str(
        "human_crafted: authentic-looking image, but the title is misleading, exaggerated, or unsupported by the image.\n",
    );
    p.push_str(
        "ai_synthesized: visual generation or editing traces, or text rewriting and generation cues in the title.\n",
    );
    p.push_str(
        "Cite the criteria you use. Write one sentence about the image ending with [image] \
         and one sentence about the title ending with [text].\n",
    );
    p.push_str("[RESP]\n");
    p.push_str("Output exactly <think>...</think><answer>...</answer>.\n");
    p
}

const TAGS: [&str; 4] = ["<think>", "</think>", "<answer>", "</answer>"];

fn find_tags(raw: &str) -> Vec<(usize, usize)> {
    let lower = raw.to_ascii_lowercase();
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(off) = lower[i..].find('<') {
        let at = i + off;
        match TAGS.iter().position(|t| lower[at..].starts_with(t)) {
            Some(k) => {
                out.push((at, k));
                i = at + TAGS[k].len();
            }
            None => i = at + 1,
        }
    }
    out
}

/// Splits on sentence punctuation; a citation marker right before the
/// punctuation stays inside its sentence.
fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes = text.as_bytes();
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let next = bytes.get(i + 1).copied();
            if next.is_none() || next.is_some_and(|b| b.is_ascii_whitespace()) {
                let s = text[start..=i].trim();
                if !s.is_empty() {
                    out.push(s);
                }
                start = i + 1;
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Strict schema parse of `<think>…</think><answer>…</answer>` surrounded
/// only by whitespace. Grounded spans are the first sentences carrying the
/// `[image]` and `[text]` markers.
pub fn parse_cot(raw: &str) -> CotRecord {
    let tags = find_tags(raw);
    let count = |k: usize| tags.iter().filter(|t| t.1 == k).count();
    let counts = [count(0), count(1), count(2), count(3)];
    if counts.iter().any(|&c| c > 1) {
        return CotRecord::rejected(RejectReason::DuplicateBlock);
    }
    if counts[0] + counts[1] == 0 || counts[2] + counts[3] == 0 {
        return CotRecord::rejected(RejectReason::MissingBlock);
    }
    if counts[0] != counts[1] || counts[2] != counts[3] {
        return CotRecord::rejected(RejectReason::UnclosedTag);
    }
    let kinds: Vec<usize> = tags.iter().map(|t| t.1).collect();
    if kinds != [0, 1, 2, 3] {
        // Nested blocks cannot be closed in order; an answer ahead of the
        // think block is content outside the schema.
        let pos = |k: usize| kinds.iter().position(|&x| x == k).unwrap();
        let nested = (pos(0) < pos(2) && pos(2) < pos(1)) || (pos(2) < pos(0) && pos(0) < pos(3));
        return CotRecord::rejected(if nested {
            RejectReason::UnclosedTag
        } else {
            RejectReason::TrailingGarbage
        });
    }
    let (t0, t1, a0, a1) = (tags[0].0, tags[1].0, tags[2].0, tags[3].0);
    let outside = [&raw[..t0], &raw[t1 + TAGS[1].len()..a0], &raw[a1 + TAGS[3].len()..]];
    if outside.iter().any(|s| !s.trim().is_empty()) {
        return CotRecord::rejected(RejectReason::TrailingGarbage);
    }
    let think = raw[t0 + TAGS[0].len()..t1].trim().to_string();
    let answer = raw[a0 + TAGS[2].len()..a1].trim().to_string();
    let sents = sentences(&think);
    let span = |marker: &str| {
        sents
            .iter()
            .find(|s| s.to_ascii_lowercase().contains(marker))
            .map(|s| s.to_string())
            .unwrap_or_default()
    };
    CotRecord {
        sample_id: String::new(),
        grounded_image_span: span("[image]"),
        grounded_text_span: span("[text]"),
        think,
        answer,
        cited_entities: Vec::new(),
        attempts_used: 0,
        verdict: Verdict::Pending,
    }
}

fn occurs_in(title: &str, surface: &str) -> bool {
    let tw: Vec<String> = words(title).iter().map(|w| w.text.to_lowercase()).collect();
    let sw: Vec<String> = words(surface).iter().map(|w| w.text.to_lowercase()).collect();
    !sw.is_empty() && tw.windows(sw.len()).any(|w| w == sw.as_slice())
}

/// Applies the content checks to a parsed record: both grounded spans
/// present; the answer is a category equal to the label; think length within
/// `[l_min, l_max]`; every mentioned entity is in `m` or in the title.
pub fn validate_cot(rec: &CotRecord, title: &str, label: Category, m: &EntitySet, qc: &QcConfig) -> CotRecord {
    let mut out = rec.clone();
    if let Verdict::Rejected(_) = rec.verdict {
        return out;
    }
    let mentioned = extract_entities(&rec.think, &qc.gazetteer);
    out.cited_entities = mentioned.surfaces();
    out.verdict = if rec.grounded_image_span.is_empty() || rec.grounded_text_span.is_empty() {
        Verdict::Rejected(RejectReason::MissingGrounding)
    } else {
        match rec.answer.parse::<Category>() {
            Err(_) => Verdict::Rejected(RejectReason::InvalidAnswer),
            Ok(c) if c != label => Verdict::Rejected(RejectReason::LabelMismatch),
            Ok(_) => {
                let n = token_count(&rec.think);
                if n < qc.l_min || n > qc.l_max {
                    Verdict::Rejected(RejectReason::ThinkLength)
                } else if mentioned
                    .entities
                    .iter()
                    .any(|e| !m.contains_surface(&e.surface) && !occurs_in(title, &e.surface))
                {
                    Verdict::Rejected(RejectReason::UnlinkedEntity)
                } else {
                    Verdict::Accepted
                }
            }
        }
    };
    out
}

/// Generate → parse → validate, up to `attempts` times. Content failures end
/// in a rejected record; transport failures are returned as errors.
pub fn generate_with_qc(
    sample: &NewsSample,
    m: &EntitySet,
    client: &dyn GenClient,
    qc: &QcConfig,
    attempts: usize,
) -> Result<CotRecord> {
    let attempts = attempts.max(1);
    let prompt = build_cot_prompt(sample, m);
    let mut last = CotRecord::rejected(RejectReason::MissingBlock);
    for attempt in 1..=attempts {
        let req = GenRequest {
            prompt: prompt.clone(),
            max_tokens: COT_MAX_TOKENS,
            context: Some(GenContext {
                task: GenTask::Cot,
                sample_id: sample.id.clone(),
                title: sample.title.clone(),
                label: Some(sample.label),
                entities: m.surfaces(),
                attempt,
            }),
        };
        let raw = client.generate(&req)?;
        let mut rec = validate_cot(&parse_cot(&raw), &sample.title, sample.label, m, qc);
        rec.sample_id = sample.id.clone();
        rec.attempts_used = attempt;
        if rec.verdict.is_accepted() {
            return Ok(rec);
        }
        log::debug!("sample {} attempt {attempt}: {}", sample.id, rec.verdict);
        last = rec;
    }
    Ok(last)
}

/// Runs the QC loop over many samples with at most `max_in_flight` requests
/// outstanding. Output order follows input order.
pub fn generate_all(
    samples: &[NewsSample],
    client: &dyn GenClient,
    qc: &QcConfig,
    attempts: usize,
    max_in_flight: usize,
    exec: Exec,
) -> Result<Vec<CotRecord>> {
    par::map_bounded(exec, max_in_flight, samples, |_, s| {
        let m = extract_entities(&s.title, &qc.gazetteer);
        generate_with_qc(s, &m, client, qc, attempts)
    })
    .into_iter()
    .collect()
}
