//! Text fabrication: entity-preserving headline rewriting and keyword or
//! phrase distortion with a positional replacement log.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cot::{entity_spans, words, EntitySet, GenClient, GenContext, GenRequest, GenTask, WordSpan};
use crate::error::{Error, Result};

const DEFAULT_LEXICON: &str = include_str!("../resources/antonyms.tsv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteStrategy {
    PureFake,
    KeywordDistortion,
}

/// One replaced keyword or phrase; `position` is the char offset of
/// `replacement` in the output title.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub original: String,
    pub replacement: String,
    pub position: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteLog {
    pub strategy: RewriteStrategy,
    pub preserved_entities: Vec<String>,
    pub replacements: Vec<Replacement>,
    pub output_title: String,
}

impl RewriteLog {
    /// Every preserved entity occurs in the output and every replacement sits
    /// at its logged char position.
    pub fn is_consistent(&self) -> bool {
        let chars: Vec<char> = self.output_title.chars().collect();
        self.preserved_entities.iter().all(|e| self.output_title.contains(e.as_str()))
            && self.replacements.iter().all(|r| {
                let n = r.replacement.chars().count();
                r.position + n <= chars.len()
                    && chars[r.position..r.position + n].iter().collect::<String>() == r.replacement
            })
    }
}

/// Symmetric adjective → antonym map with case-insensitive lookup.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AntonymLexicon {
    map: HashMap<String, String>,
}

impl Default for AntonymLexicon {
    fn default() -> Self {
        AntonymLexicon::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

impl AntonymLexicon {
    /// `word<TAB>antonym` per line, `#` comments. Both directions are added;
    /// identity pairs and conflicting entries are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map: HashMap<String, String> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| Error::Data(format!("lexicon line {}: {reason}", lineno + 1));
            let (a, b) = line.split_once('\t').ok_or_else(|| bad("expected word<TAB>antonym"))?;
            let (a, b) = (a.trim().to_lowercase(), b.trim().to_lowercase());
            if a.is_empty() || b.is_empty() {
                return Err(bad("empty entry"));
            }
            if a == b {
                return Err(bad("word mapped to itself"));
            }
            for (k, v) in [(&a, &b), (&b, &a)] {
                if let Some(prev) = map.get(k) {
                    if prev != v {
                        return Err(bad(&format!("{k} already maps to {prev}")));
                    }
                }
                map.insert(k.clone(), v.clone());
            }
        }
        Ok(AntonymLexicon { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let text: String = pairs.into_iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
        Self::parse(&text)
    }

    pub fn antonym(&self, word: &str) -> Option<&str> {
        self.map.get(&word.to_lowercase()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// All words of the lexicon, sorted.
    pub fn words(&self) -> Vec<&str> {
        let mut w: Vec<&str> = self.map.keys().map(String::as_str).collect();
        w.sort_unstable();
        w
    }
}

const FUNCTION_WORDS: &[&str] = &[
    "the", "and", "but", "for", "with", "from", "into", "onto", "over", "under", "after", "before", "about",
    "its", "their", "his", "her", "our", "your", "this", "that", "these", "those", "are", "was", "were", "has",
    "have", "had", "will", "would", "can", "could", "may", "might", "not", "near", "amid", "than", "then",
    "who", "what", "when", "where", "why", "how", "all", "any", "some", "per", "via", "out", "off", "too",
];

fn match_case(original: &str, replacement: &str) -> String {
    let letters: Vec<char> = original.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return replacement.to_uppercase();
    }
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut c = replacement.chars();
        return match c.next() {
            Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
            None => String::new(),
        };
    }
    replacement.to_string()
}

fn overlaps(w: &WordSpan<'_>, spans: &[(usize, usize)]) -> bool {
    spans.iter().any(|&(s, e)| w.start < e && s < w.end)
}

/// Candidate keywords: non-entity words that are lexicon adjectives, or
/// alphabetic content words of at least three letters.
pub fn candidate_keywords<'a>(title: &'a str, m: &EntitySet, lex: &AntonymLexicon) -> Vec<WordSpan<'a>> {
    let ents = entity_spans(title, m);
    words(title)
        .into_iter()
        .filter(|w| !overlaps(w, &ents))
        .filter(|w| {
            let lower = w.text.to_lowercase();
            lex.antonym(&lower).is_some()
                || (w.text.chars().count() >= 3
                    && w.text.chars().all(char::is_alphabetic)
                    && !FUNCTION_WORDS.contains(&lower.as_str()))
        })
        .collect()
}

fn replace_word(w: &str, lex: &AntonymLexicon) -> String {
    match lex.antonym(w) {
        Some(a) => match_case(w, a),
        None => match_case(w, &format!("not {}", w.to_lowercase())),
    }
}

/// Applies byte-range substitutions (sorted, disjoint) and logs char positions
/// in the output.
fn apply(title: &str, subs: &[(usize, usize, String)]) -> (String, Vec<Replacement>) {
    let mut out = String::new();
    let mut log = Vec::new();
    let mut cursor = 0;
    for (s, e, rep) in subs {
        out.push_str(&title[cursor..*s]);
        log.push(Replacement {
            original: title[*s..*e].to_string(),
            replacement: rep.clone(),
            position: out.chars().count(),
        });
        out.push_str(rep);
        cursor = *e;
    }
    out.push_str(&title[cursor..]);
    (out, log)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistortMode {
    #[default]
    Keywords,
    Phrase,
}

/// Keyword mode: samples 2–3 candidates (all of them when fewer than two),
/// lexicon adjectives first, and swaps each for its antonym or a negation.
/// Phrase mode: replaces one run of 2–3 consecutive candidate words.
/// Returns `None` when the title has no candidate outside the entities.
pub fn keyword_distortion<R: Rng + ?Sized>(
    title: &str,
    m: &EntitySet,
    lex: &AntonymLexicon,
    mode: DistortMode,
    rng: &mut R,
) -> Option<(String, RewriteLog)> {
    let cands = candidate_keywords(title, m, lex);
    if cands.is_empty() {
        return None;
    }
    let mut subs: Vec<(usize, usize, String)> = match mode {
        DistortMode::Keywords => {
            let count = if cands.len() >= 3 { rng.random_range(2..=3) } else { cands.len() };
            let (mut hits, mut rest): (Vec<&WordSpan<'_>>, Vec<&WordSpan<'_>>) =
                cands.iter().partition(|w| lex.antonym(w.text).is_some());
            hits.shuffle(rng);
            rest.shuffle(rng);
            hits.into_iter()
                .chain(rest)
                .take(count)
                .map(|w| (w.start, w.end, replace_word(w.text, lex)))
                .collect()
        }
        DistortMode::Phrase => {
            let mut runs: Vec<(usize, usize)> = Vec::new();
            for len in [2usize, 3] {
                for i in 0..cands.len().saturating_sub(len - 1) {
                    let run = &cands[i..i + len];
                    let adjacent = run
                        .windows(2)
                        .all(|p| title[p[0].end..p[1].start].chars().all(|c| c == ' '));
                    if adjacent {
                        runs.push((i, len));
                    }
                }
            }
            match runs.as_slice() {
                [] => {
                    let w = &cands[rng.random_range(0..cands.len())];
                    vec![(w.start, w.end, replace_word(w.text, lex))]
                }
                _ => {
                    let (i, len) = runs[rng.random_range(0..runs.len())];
                    let run = &cands[i..i + len];
                    let phrase = &title[run[0].start..run[len - 1].end];
                    let any_lex = run.iter().any(|w| lex.antonym(w.text).is_some());
                    let rep = if any_lex {
                        let (swapped, _) = apply(
                            phrase,
                            &run.iter()
                                .filter_map(|w| {
                                    lex.antonym(w.text).map(|a| {
                                        (w.start - run[0].start, w.end - run[0].start, match_case(w.text, a))
                                    })
                                })
                                .collect::<Vec<_>>(),
                        );
                        swapped
                    } else {
                        match_case(phrase, &format!("not {}", lower_first(phrase)))
                    };
                    vec![(run[0].start, run[len - 1].end, rep)]
                }
            }
        }
    };
    subs.sort_by_key(|s| s.0);
    let (out, replacements) = apply(title, &subs);
    let log = RewriteLog {
        strategy: RewriteStrategy::KeywordDistortion,
        preserved_entities: m.surfaces(),
        replacements,
        output_title: out.clone(),
    };
    Some((out, log))
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) if !s.chars().skip(1).take(1).any(char::is_uppercase) => f.to_lowercase().collect::<String>() + c.as_str(),
        Some(f) => f.to_string() + c.as_str(),
        None => String::new(),
    }
}

/// Asks the generator for a misleading headline that keeps every entity of
/// `m` verbatim (or rewrites everything when `m` is empty). Outputs that drop
/// an entity or echo the input are regenerated, up to `attempts` calls.
pub fn pure_fake_rewrite(
    sample_id: &str,
    title: &str,
    m: &EntitySet,
    client: &dyn GenClient,
    attempts: usize,
) -> Result<(String, RewriteLog)> {
    let entities = m.surfaces();
    let prompt = if entities.is_empty() {
        format!("Rewrite the entire headline into a misleading fake-news headline.\nHeadline: {title}\n")
    } else {
        format!(
            "Write a misleading fake-news headline that keeps these entities exactly: {}. \
             Rewrite everything else.\nHeadline: {title}\n",
            entities.join(", ")
        )
    };
    for attempt in 1..=attempts.max(1) {
        let req = GenRequest {
            prompt: prompt.clone(),
            max_tokens: 48,
            context: Some(GenContext {
                task: GenTask::Rewrite,
                sample_id: sample_id.to_string(),
                title: title.to_string(),
                label: None,
                entities: entities.clone(),
                attempt,
            }),
        };
        let out = client.generate(&req)?.trim().to_string();
        let keeps = entities.iter().all(|e| out.contains(e.as_str()));
        if !out.is_empty() && keeps && out != title {
            let log = RewriteLog {
                strategy: RewriteStrategy::PureFake,
                preserved_entities: entities,
                replacements: vec![Replacement {
                    original: title.to_string(),
                    replacement: out.clone(),
                    position: 0,
                }],
                output_title: out.clone(),
            };
            return Ok((out, log));
        }
        log::debug!("rewrite of {sample_id} attempt {attempt} rejected by entity check");
    }
    Err(Error::Fabrication {
        id: sample_id.to_string(),
        reason: format!("no entity-preserving rewrite within {attempts} attempt(s)"),
    })
}

/// Keyword distortion, falling back to a pure fake rewrite for titles
/// without candidate keywords.
#[allow(clippy::too_many_arguments)]
pub fn distort_or_rewrite<R: Rng + ?Sized>(
    sample_id: &str,
    title: &str,
    m: &EntitySet,
    lex: &AntonymLexicon,
    mode: DistortMode,
    rng: &mut R,
    client: &dyn GenClient,
    attempts: usize,
) -> Result<(String, RewriteLog)> {
    match keyword_distortion(title, m, lex, mode, rng) {
        Some(r) => Ok(r),
        None => pure_fake_rewrite(sample_id, title, m, client, attempts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cot::{extract_entities, EntityKind, Gazetteer, MockClient};
    use crate::rng::rng_for;
    use proptest::prelude::*;

    fn berlin() -> Gazetteer {
        Gazetteer::from_entries([
            ("Berlin", EntityKind::Location, "German capital"),
            ("Oslo", EntityKind::Location, "Norwegian capital"),
        ])
    }

    #[test]
    fn lexicon_contract() {
        let lex = AntonymLexicon::from_pairs([("large", "small"), ("peaceful", "violent")]).unwrap();
        assert_eq!(lex.antonym("Large"), Some("small"));
        assert_eq!(lex.antonym("violent"), Some("peaceful"));
        assert!(AntonymLexicon::from_pairs([("same", "same")]).is_err());
        assert!(AntonymLexicon::from_pairs([("a", "b"), ("a", "c")]).is_err());
        let full = AntonymLexicon::default();
        assert!(full.len() >= 400);
        assert!(full.words().iter().all(|w| full.antonym(w) != Some(*w)));
    }

    #[test]
    fn berlin_rally_distortion() {
        let lex = AntonymLexicon::from_pairs([("large", "small"), ("peaceful", "violent")]).unwrap();
        let title = "Large crowd celebrates peaceful rally in Berlin";
        let m = extract_entities(title, &berlin());
        // Seeds drawing a count of two keep only the two lexicon hits.
        let (out, log) = (0..64u64)
            .find_map(|seed| {
                let r = keyword_distortion(title, &m, &lex, DistortMode::Keywords, &mut rng_for(seed, &[]))?;
                (r.1.replacements.len() == 2).then_some(r)
            })
            .unwrap();
        assert_eq!(out, "Small crowd celebrates violent rally in Berlin");
        let reps: Vec<(&str, &str, usize)> = log
            .replacements
            .iter()
            .map(|r| (r.original.as_str(), r.replacement.as_str(), r.position))
            .collect();
        assert_eq!(reps, vec![("Large", "Small", 0), ("peaceful", "violent", 23)]);
        assert_eq!(log.preserved_entities, vec!["Berlin".to_string()]);
        assert!(log.is_consistent());
    }

    #[test]
    fn entity_only_title_falls_back() {
        let lex = AntonymLexicon::default();
        let m = extract_entities("Berlin Oslo", &berlin());
        assert!(keyword_distortion("Berlin Oslo", &m, &lex, DistortMode::Keywords, &mut rng_for(0, &[])).is_none());
        let (out, log) = distort_or_rewrite(
            "s",
            "Berlin Oslo",
            &m,
            &lex,
            DistortMode::Keywords,
            &mut rng_for(0, &[]),
            &MockClient::new(),
            3,
        )
        .unwrap();
        assert_eq!(log.strategy, RewriteStrategy::PureFake);
        assert!(out.contains("Berlin") && out.contains("Oslo"));
    }

    #[test]
    fn pure_fake_paths() {
        let mock = MockClient::new();
        let m = extract_entities("Fire near Oslo harbor", &berlin());
        let (out, log) = pure_fake_rewrite("a", "Fire near Oslo harbor", &m, &mock, 3).unwrap();
        assert!(out.contains("Oslo") && out != "Fire near Oslo harbor");
        assert!(log.is_consistent());
        let (out, _) = pure_fake_rewrite("a", "a quiet day", &EntitySet::default(), &mock, 3).unwrap();
        assert_ne!(out, "a quiet day");
    }

    struct Forgetful;
    impl GenClient for Forgetful {
        fn generate(&self, _req: &GenRequest) -> Result<String> {
            Ok("Something else entirely".into())
        }
    }

    #[test]
    fn entity_loss_exhausts_budget() {
        let m = extract_entities("Fire near Oslo harbor", &berlin());
        let err = pure_fake_rewrite("x1", "Fire near Oslo harbor", &m, &Forgetful, 2).unwrap_err();
        assert!(matches!(err, Error::Fabrication { ref id, .. } if id == "x1"));
    }

    #[test]
    fn count_is_two_or_three_with_enough_candidates() {
        let lex = AntonymLexicon::default();
        let title = "Large angry crowd celebrates peaceful rally downtown";
        for seed in 0..50 {
            let (_, log) =
                keyword_distortion(title, &EntitySet::default(), &lex, DistortMode::Keywords, &mut rng_for(seed, &[]))
                    .unwrap();
            assert!((2..=3).contains(&log.replacements.len()));
        }
    }

    #[test]
    fn phrase_mode_replaces_a_run() {
        let lex = AntonymLexicon::default();
        let title = "Large crowd gathers in Berlin";
        let m = extract_entities(title, &berlin());
        let (out, log) = keyword_distortion(title, &m, &lex, DistortMode::Phrase, &mut rng_for(1, &[])).unwrap();
        assert_eq!(log.replacements.len(), 1);
        assert!(log.replacements[0].original.contains(' '));
        assert!(out.ends_with("in Berlin"));
        assert!(log.is_consistent());
    }

    const WORDS: &[&str] = &["large", "crowd", "quiet", "harbor", "fire", "rally", "peaceful", "storm", "in", "near"];
    const PLACES: &[&str] = &["Berlin", "Oslo", "Lagos", "Quito", "Hanoi"];

    proptest! {
        #[test]
        fn entities_and_positions_survive(
            picks in proptest::collection::vec((0usize..WORDS.len(), proptest::option::of(0usize..PLACES.len())), 1..10),
            seed in any::<u64>(),
            phrase in any::<bool>(),
        ) {
            let gaz = Gazetteer::from_entries(PLACES.iter().map(|p| (*p, EntityKind::Location, "a place")));
            let title: String = picks
                .iter()
                .map(|(w, p)| match p { Some(p) => format!("{} {}", WORDS[*w], PLACES[*p]), None => WORDS[*w].to_string() })
                .collect::<Vec<_>>()
                .join(" ");
            let m = extract_entities(&title, &gaz);
            let mode = if phrase { DistortMode::Phrase } else { DistortMode::Keywords };
            let (out, log) = distort_or_rewrite(
                "p", &title, &m, &AntonymLexicon::default(), mode, &mut rng_for(seed, &[]), &MockClient::new(), 3,
            ).unwrap();
            for e in m.surfaces() {
                prop_assert!(out.contains(&e));
            }
            prop_assert!(log.is_consistent());
            let again = distort_or_rewrite(
                "p", &title, &m, &AntonymLexicon::default(), mode, &mut rng_for(seed, &[]), &MockClient::new(), 3,
            ).unwrap();
            prop_assert_eq!(again.0, out);
        }
    }
}
