//! News samples, manifests, toy-corpus synthesis and splitting.

mod category;
mod manifest;
mod split;
mod stats;
mod synth;

pub use category::Category;
pub use manifest::{
    load_manifest, manifest_dir, manifest_to_string, parse_manifest, save_manifest, similarity_gate, ImagePayload,
    ManifestCot, ManipulationAnnotation, ManipulationKind, NewsSample, RawImage, DEFAULT_SIMILARITY_THRESHOLD,
};
pub use split::{split, SplitSpec, Splits, MIN_PER_CLASS};
pub use stats::{
    verify_omnifake, CorpusStats, OmniFakeAccounting, OMNIFAKE_HUMAN_CRAFTED, OMNIFAKE_REAL, OMNIFAKE_TOTAL,
};
pub use synth::{synth_toy_corpus, MIN_TOY_SAMPLES, TOY_IMAGE_SIZE};
