//! Desk-scale synthetic corpus with label cues in both modalities whose
//! strength is controlled by a single knob.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Category, ImagePayload, ManipulationAnnotation, ManipulationKind, NewsSample, RawImage};
use crate::cot::{extract_entities, generate_with_qc, Gazetteer, MockClient, QcConfig, DEFAULT_ATTEMPTS};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream_id, DetRng};
use crate::textforge::{distort_or_rewrite, pure_fake_rewrite, AntonymLexicon, DistortMode};

pub const TOY_IMAGE_SIZE: usize = 16;
pub const MIN_TOY_SAMPLES: usize = 30;

/// Per-topic noun and the location of its bright blob in the image.
const TOPICS: &[(&str, (f64, f64))] = &[
    ("fire", (4.0, 4.0)),
    ("flood", (11.5, 4.0)),
    ("crowd", (4.0, 11.5)),
    ("storm", (11.5, 11.5)),
    ("parade", (7.5, 7.5)),
    ("protest", (7.5, 3.0)),
];

const ADJECTIVES: &[&str] = &["large", "peaceful", "quiet", "huge", "calm", "early", "bright", "strong", "local"];
const VERBS: &[&str] = &["gathers", "spreads", "grows", "returns", "moves", "ends"];
const PLACES: &[&str] = &["Berlin", "Paris", "Oslo", "Tokyo", "Chicago", "Cairo", "Madrid", "Sydney"];
const PEOPLE: &[&str] = &["Obama", "Merkel", "Macron", "Greta Thunberg", "Pope Francis"];
const ORGS: &[&str] = &["NASA", "Red Cross", "Greenpeace", "Interpol", "United Nations"];
const TIMES: &[&str] = &["Monday", "Friday", "Christmas", "New Year"];
const SENSATIONAL: &[&str] = &[
    "Shocking truth:",
    "Exposed:",
    "You won't believe it:",
    "Unbelievable:",
    "Scandal:",
];
const IMAGE_KINDS: &[ManipulationKind] = &[
    ManipulationKind::FaceSwap,
    ManipulationKind::FaceAttribute,
    ManipulationKind::FullGeneration,
    ManipulationKind::InpaintReplace,
    ManipulationKind::StyleTransfer,
];

const BLOB_AMPLITUDE: f64 = 0.35;
const CHECKER_AMPLITUDE: f64 = 0.18;
const PIXEL_NOISE: f64 = 0.03;

fn pick<'a, T>(rng: &mut DetRng, xs: &'a [T]) -> &'a T {
    &xs[rng.random_range(0..xs.len())]
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn base_title(rng: &mut DetRng, noun: &str) -> String {
    let adj = *pick(rng, ADJECTIVES);
    let place = *pick(rng, PLACES);
    match rng.random_range(0..4) {
        0 => format!("{} {noun} {} in {place}", capitalize(adj), pick(rng, VERBS)),
        1 => format!("{} visits {adj} {noun} in {place}", pick(rng, PEOPLE)),
        2 => format!("{} {noun} reported near {place} on {}", capitalize(adj), pick(rng, TIMES)),
        _ => format!("{} monitors {adj} {noun} in {place}", pick(rng, ORGS)),
    }
}

/// 16×16 grayscale scene: smooth background, a topic blob, pixel noise and,
/// for generated images, a checkerboard of amplitude ∝ `checker`.
fn render_image(rng: &mut DetRng, topic: usize, checker: f64) -> RawImage {
    let s = TOY_IMAGE_SIZE;
    let base = rng.random_range(0.3..0.5);
    let (gx, gy): (f64, f64) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    let (cx, cy) = TOPICS[topic].1;
    let noise = Normal::new(0.0, PIXEL_NOISE).expect("valid sigma");
    let mut data = Vec::with_capacity(s * s);
    for y in 0..s {
        for x in 0..s {
            let (fx, fy) = (x as f64, y as f64);
            let d2 = (fx - cx).powi(2) + (fy - cy).powi(2);
            let mut v = base + gx * (fx / s as f64 - 0.5) + gy * (fy / s as f64 - 0.5);
            v += BLOB_AMPLITUDE * (-d2 / (2.0 * 2.5 * 2.5)).exp();
            v += noise.sample(rng);
            if (x + y) % 2 == 0 {
                v += checker;
            } else {
                v -= checker;
            }
            data.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    RawImage { channels: 1, size: s, data }
}

/// Balanced toy corpus of `n` samples. Cues scale with `cue_strength`:
/// sensational title prefixes for human-crafted rumors, a checkerboard
/// pattern plus occasional title rewriting for AI-synthesized samples. At 0
/// the inputs of all classes share one distribution. Every sample carries a
/// label-consistent template CoT.
pub fn synth_toy_corpus(n: usize, cue_strength: f64, seed: u64) -> Result<Vec<NewsSample>> {
    if n < MIN_TOY_SAMPLES {
        return Err(Error::Config(format!("toy corpus needs n >= {MIN_TOY_SAMPLES}, got {n}")));
    }
    if !(0.0..=1.0).contains(&cue_strength) {
        return Err(Error::Config(format!("cue_strength must lie in [0,1], got {cue_strength}")));
    }
    let gaz = Gazetteer::default();
    let lex = AntonymLexicon::default();
    let mock = MockClient::new();
    let qc = QcConfig::default();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng_for(seed, &[stream_id("synth"), i as u64]);
        let label = Category::from_index(i % 3).expect("three categories");
        let id = format!("toy-{i:05}");
        let topic = rng.random_range(0..TOPICS.len());
        let mut title = base_title(&mut rng, TOPICS[topic].0);
        let mut manipulation = ManipulationAnnotation::none();
        let mut checker = 0.0;
        match label {
            Category::Real => {}
            Category::HumanCrafted => {
                if rng.random_bool(cue_strength) {
                    title = format!("{} {title}", pick(&mut rng, SENSATIONAL));
                }
            }
            Category::AiSynthesized => {
                checker = CHECKER_AMPLITUDE * cue_strength;
                let rewrite_text = rng.random_bool(0.6 * cue_strength);
                let m = extract_entities(&title, &gaz);
                if rewrite_text {
                    let (out_title, log) = if rng.random_bool(0.7) {
                        distort_or_rewrite(&id, &title, &m, &lex, DistortMode::Keywords, &mut rng, &mock, DEFAULT_ATTEMPTS)?
                    } else {
                        pure_fake_rewrite(&id, &title, &m, &mock, DEFAULT_ATTEMPTS)?
                    };
                    let kind = match log.strategy {
                        crate::textforge::RewriteStrategy::PureFake => ManipulationKind::PureFakeText,
                        crate::textforge::RewriteStrategy::KeywordDistortion => ManipulationKind::KeywordDistortion,
                    };
                    manipulation = ManipulationAnnotation::of(kind);
                    manipulation.rewrite_log = Some(log);
                    title = out_title;
                } else {
                    let kind = *pick(&mut rng, IMAGE_KINDS);
                    manipulation = ManipulationAnnotation::of(kind);
                    manipulation.similarity = Some((rng.random_range(0.7..1.0f64) * 1000.0).round() / 1000.0);
                    match kind {
                        ManipulationKind::InpaintReplace => {
                            let other = TOPICS[(topic + 1) % TOPICS.len()].0;
                            manipulation.mask_ref = Some(format!("masks/{id}.png"));
                            manipulation.p_src = Some(format!("a photo of a {}", TOPICS[topic].0));
                            manipulation.p_mod = Some(format!("a photo of a {other}"));
                        }
                        ManipulationKind::FaceAttribute | ManipulationKind::StyleTransfer => {
                            manipulation.edit_strength = Some((rng.random_range(0.3..0.9f64) * 100.0).round() / 100.0);
                        }
                        _ => {}
                    }
                }
            }
        }
        let image = ImagePayload::Raw(render_image(&mut rng, topic, checker));
        let mut sample = NewsSample {
            id,
            title,
            image,
            label,
            manipulation,
            cot: None,
        };
        let m = extract_entities(&sample.title, &gaz);
        let rec = generate_with_qc(&sample, &m, &mock, &qc, DEFAULT_ATTEMPTS)?;
        sample.cot = Some(rec.to_manifest());
        out.push(sample);
    }
    Ok(out)
}
