use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use base64::Engine;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Category;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::textforge::RewriteLog;

/// Raw pixel image `[channels, size, size]`, 8 bits per value, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawImage {
    pub channels: usize,
    pub size: usize,
    #[serde(serialize_with = "b64_encode", deserialize_with = "b64_decode")]
    pub data: Vec<u8>,
}

fn b64_encode<S: Serializer>(bytes: &[u8], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
}

fn b64_decode<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<u8>, D::Error> {
    let s = String::deserialize(d)?;
    base64::engine::general_purpose::STANDARD
        .decode(s.as_bytes())
        .map_err(serde::de::Error::custom)
}

impl RawImage {
    pub fn pixel(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.size + y) * self.size + x] as f64 / 255.0
    }

    pub fn as_unit_floats(&self) -> Vec<f64> {
        self.data.iter().map(|&b| b as f64 / 255.0).collect()
    }
}

/// Image side of a sample: inline pixels, inline feature vectors `[N_v, H_v]`,
/// or a path (relative to the manifest) to a JSON file holding one of those.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagePayload {
    Raw(RawImage),
    Feat(Vec<Vec<f64>>),
    Path(String),
}

impl ImagePayload {
    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            ImagePayload::Raw(r) => {
                if r.channels == 0 || r.size == 0 || r.size > 64 {
                    return Err(format!("raw image needs channels>0 and 0<size<=64, got {}x{}", r.channels, r.size));
                }
                if r.data.len() != r.channels * r.size * r.size {
                    return Err(format!(
                        "raw image has {} bytes, expected {}",
                        r.data.len(),
                        r.channels * r.size * r.size
                    ));
                }
            }
            ImagePayload::Feat(rows) => {
                let w = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != w || w == 0) {
                    return Err("feature rows must be non-empty and equally wide".into());
                }
                if rows.iter().flatten().any(|v| !v.is_finite()) {
                    return Err("feature values must be finite".into());
                }
            }
            ImagePayload::Path(p) => {
                if p.is_empty() {
                    return Err("empty image path".into());
                }
            }
        }
        Ok(())
    }

    /// Replaces a path reference by the payload it points to.
    pub fn resolve(&self, base_dir: &Path) -> Result<ImagePayload> {
        match self {
            ImagePayload::Path(p) => {
                let full = base_dir.join(p);
                let text = std::fs::read_to_string(&full).map_err(|_| Error::MissingPath(full.clone()))?;
                let inner: ImagePayload = serde_json::from_str(&text)?;
                if matches!(inner, ImagePayload::Path(_)) {
                    return Err(Error::Data(format!("{} points to another path", full.display())));
                }
                inner.validate().map_err(Error::Data)?;
                Ok(inner)
            }
            other => Ok(other.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManipulationKind {
    None,
    FaceSwap,
    FaceAttribute,
    FullGeneration,
    InpaintReplace,
    StyleTransfer,
    PureFakeText,
    KeywordDistortion,
}

impl ManipulationKind {
    pub const ALL: [ManipulationKind; 8] = [
        ManipulationKind::None,
        ManipulationKind::FaceSwap,
        ManipulationKind::FaceAttribute,
        ManipulationKind::FullGeneration,
        ManipulationKind::InpaintReplace,
        ManipulationKind::StyleTransfer,
        ManipulationKind::PureFakeText,
        ManipulationKind::KeywordDistortion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ManipulationKind::None => "none",
            ManipulationKind::FaceSwap => "face_swap",
            ManipulationKind::FaceAttribute => "face_attribute",
            ManipulationKind::FullGeneration => "full_generation",
            ManipulationKind::InpaintReplace => "inpaint_replace",
            ManipulationKind::StyleTransfer => "style_transfer",
            ManipulationKind::PureFakeText => "pure_fake_text",
            ManipulationKind::KeywordDistortion => "keyword_distortion",
        }
    }

    pub fn is_text(self) -> bool {
        matches!(self, ManipulationKind::PureFakeText | ManipulationKind::KeywordDistortion)
    }
}

/// How (and whether) a sample was manipulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManipulationAnnotation {
    pub kind: ManipulationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_src: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_mod: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewrite_log: Option<RewriteLog>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edit_strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
}

impl ManipulationAnnotation {
    pub fn none() -> Self {
        Self::of(ManipulationKind::None)
    }

    pub fn of(kind: ManipulationKind) -> Self {
        ManipulationAnnotation {
            kind,
            mask_ref: None,
            p_src: None,
            p_mod: None,
            rewrite_log: None,
            edit_strength: None,
            similarity: None,
        }
    }
}

/// CoT fields as stored in the manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCot {
    pub think: String,
    pub answer: String,
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewsSample {
    pub id: String,
    pub title: String,
    pub image: ImagePayload,
    pub label: Category,
    pub manipulation: ManipulationAnnotation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot: Option<ManifestCot>,
}

impl NewsSample {
    /// Checks the label/annotation invariants. Only AI-synthesized samples carry
    /// a manipulation kind other than `none`.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.title.trim().is_empty() {
            return Err(format!("sample {}: empty title", self.id));
        }
        self.image.validate().map_err(|e| format!("sample {}: {e}", self.id))?;
        let m = &self.manipulation;
        let manipulated = m.kind != ManipulationKind::None;
        if manipulated != (self.label == Category::AiSynthesized) {
            return Err(format!(
                "sample {}: manipulation kind {} inconsistent with label {}",
                self.id,
                m.kind.as_str(),
                self.label
            ));
        }
        if m.p_src.is_some() != m.p_mod.is_some() {
            return Err(format!("sample {}: prompt pair needs both p_src and p_mod", self.id));
        }
        if m.kind == ManipulationKind::InpaintReplace && (m.mask_ref.is_none() || m.p_src.is_none()) {
            return Err(format!("sample {}: inpaint_replace needs mask_ref and prompt pair", self.id));
        }
        if m.kind.is_text() && m.rewrite_log.is_none() {
            return Err(format!("sample {}: {} needs rewrite_log", self.id, m.kind.as_str()));
        }
        if let Some(s) = m.similarity {
            if !(0.0..=1.0).contains(&s) {
                return Err(format!("sample {}: similarity {s} outside [0,1]", self.id));
            }
        }
        Ok(())
    }
}

/// Reads a JSONL manifest, checking every invariant; errors carry the line number.
pub fn load_manifest(path: &Path) -> Result<Vec<NewsSample>> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    parse_manifest(&text, path)
}

pub fn parse_manifest(text: &str, path: &Path) -> Result<Vec<NewsSample>> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();
    let load_err = |line: usize, reason: String| Error::Load {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let parsed = par::map(Exec::Parallel, &lines, |_, (lineno, line)| {
        serde_json::from_str::<NewsSample>(line)
            .map_err(|e| (*lineno, e.to_string()))
            .and_then(|s| s.validate().map(|_| s).map_err(|e| (*lineno, e)))
    });
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(parsed.len());
    for (r, (lineno, _)) in parsed.into_iter().zip(&lines) {
        let s = r.map_err(|(l, e)| load_err(l, e))?;
        if !seen.insert(s.id.clone()) {
            return Err(load_err(*lineno, format!("duplicate id {}", s.id)));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn manifest_to_string(samples: &[NewsSample]) -> Result<String> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_manifest(path: &Path, samples: &[NewsSample]) -> Result<()> {
    let text = manifest_to_string(samples)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Keeps samples whose similarity score is at least `threshold`; samples
/// without a score pass through.
pub fn similarity_gate(samples: Vec<NewsSample>, threshold: f64) -> (Vec<NewsSample>, Vec<NewsSample>) {
    samples
        .into_iter()
        .partition(|s| s.manipulation.similarity.is_none_or(|sim| sim >= threshold))
}

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.7;

/// Directory containing a manifest, for resolving relative image paths.
pub fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample(id: &str, label: Category) -> NewsSample {
        let manipulation = if label == Category::AiSynthesized {
            ManipulationAnnotation {
                similarity: Some(0.8),
                ..ManipulationAnnotation::of(ManipulationKind::FullGeneration)
            }
        } else {
            ManipulationAnnotation::none()
        };
        NewsSample {
            id: id.into(),
            title: format!("title {id}"),
            image: ImagePayload::Raw(RawImage {
                channels: 1,
                size: 2,
                data: vec![0, 64, 128, 255],
            }),
            label,
            manipulation,
            cot: None,
        }
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_manifest("", Path::new("m.jsonl")).unwrap().is_empty());
    }

    #[test]
    fn duplicate_id_cites_line() {
        let mut lines = Vec::new();
        for i in 0..6 {
            lines.push(serde_json::to_string(&sample(&format!("s{i}"), Category::Real)).unwrap());
        }
        lines.push(serde_json::to_string(&sample("s2", Category::Real)).unwrap());
        let err = parse_manifest(&lines.join("\n"), Path::new("m.jsonl")).unwrap_err();
        match err {
            Error::Load { line, reason, .. } => {
                assert_eq!(line, 7);
                assert!(reason.contains("duplicate"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_and_invariant_errors_have_locus() {
        let good = serde_json::to_string(&sample("a", Category::Real)).unwrap();
        let err = parse_manifest(&format!("{good}\n{{not json"), Path::new("m")).unwrap_err();
        assert!(matches!(err, Error::Load { line: 2, .. }));

        let mut bad = sample("b", Category::Real);
        bad.manipulation.kind = ManipulationKind::FaceSwap;
        let err = parse_manifest(&serde_json::to_string(&bad).unwrap(), Path::new("m")).unwrap_err();
        assert!(matches!(err, Error::Load { line: 1, .. }));

        let mut inpaint = sample("c", Category::AiSynthesized);
        inpaint.manipulation.kind = ManipulationKind::InpaintReplace;
        assert!(inpaint.validate().is_err());
        inpaint.manipulation.mask_ref = Some("m.png".into());
        inpaint.manipulation.p_src = Some("red car".into());
        inpaint.manipulation.p_mod = Some("blue car".into());
        assert!(inpaint.validate().is_ok());

        let mut text = sample("d", Category::AiSynthesized);
        text.manipulation.kind = ManipulationKind::KeywordDistortion;
        assert!(text.validate().is_err());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut s = vec![sample("a", Category::Real), sample("b", Category::AiSynthesized)];
        s[1].cot = Some(ManifestCot {
            think: "x [image]. y [text].".into(),
            answer: "ai_synthesized".into(),
            verdict: "accepted".into(),
        });
        s.push(NewsSample {
            image: ImagePayload::Feat(vec![vec![0.25, -1.5], vec![3.0, 1e-7]]),
            ..sample("c", Category::HumanCrafted)
        });
        let text = manifest_to_string(&s).unwrap();
        assert_eq!(parse_manifest(&text, Path::new("m")).unwrap(), s);
        let line: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
        for key in ["id", "title", "image", "label", "manipulation", "cot"] {
            assert!(line.get(key).is_some(), "{key}");
        }
        assert_eq!(line["manipulation"]["kind"], "full_generation");
        assert_eq!(line["cot"]["verdict"], "accepted");
    }

    #[test]
    fn gate_bounds() {
        let mut a = sample("a", Category::AiSynthesized);
        a.manipulation.similarity = Some(0.70);
        let mut b = sample("b", Category::AiSynthesized);
        b.manipulation.similarity = Some(0.699);
        let c = sample("c", Category::Real);
        let (kept, dropped) = similarity_gate(vec![a, b, c], DEFAULT_SIMILARITY_THRESHOLD);
        let ids: Vec<&str> = kept.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c"]);
        assert_eq!(dropped[0].id, "b");
    }

    #[test]
    fn path_payload_resolves() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("img.json"), r#"{"feat":[[1.0,2.0]]}"#).unwrap();
        let p = ImagePayload::Path("img.json".into());
        assert_eq!(p.resolve(dir.path()).unwrap(), ImagePayload::Feat(vec![vec![1.0, 2.0]]));
        assert!(ImagePayload::Path("nope.json".into()).resolve(dir.path()).is_err());
    }
}
