//! The toy detector: patch embedder, transformer encoder fusion, stacked
//! C-MoE, and an autoregressive decoder emitting think and answer blocks.

mod checkpoint;
mod config;
mod forward;
mod params;
mod target;

pub use checkpoint::{decode_tensors, encode_tensors, read_tensors, write_tensors, NamedTensor, MAGIC};
pub use config::{ModelConfig, PATCH};
pub use forward::{
    attention, decode, embed_image, encode, forward_train, fuse, generate, generate_full, moe_stack, ForwardOut,
    Generation, MoeStack,
};
pub use params::{AttnParams, DecoderLayer, EncoderLayer, FfnParams, LnParams, ModelParams};
pub use target::{build_target, sample_target, target_text, TargetSeq, IGNORE};

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::instruct::{InstructionTemplate, Vocabulary};
use crate::ndtensor::ParamStore;
use crate::rng::{rng_for, stream_id};

pub const WEIGHTS_FILE: &str = "model.umfd";
pub const CONFIG_FILE: &str = "model.cfg";
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const TEMPLATE_FILE: &str = "template.txt";

/// Parameters plus everything needed to turn a sample into model inputs.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub template: InstructionTemplate,
}

impl Model {
    /// Freshly initialized model; weights depend only on `cfg.seed`.
    pub fn new(mut cfg: ModelConfig, vocab: Vocabulary, template: InstructionTemplate) -> Result<Self> {
        cfg.vocab_size = vocab.len();
        let mut store = ParamStore::new();
        let mut rng = rng_for(cfg.seed, &[stream_id("init")]);
        let params = ModelParams::register(&mut store, &cfg, &mut rng)?;
        Ok(Model {
            cfg,
            store,
            params,
            vocab,
            template,
        })
    }

    pub fn tensors(&self) -> Vec<NamedTensor> {
        self.store
            .iter()
            .map(|(_, name, t)| NamedTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                values: t.values().to_vec(),
            })
            .collect()
    }

    /// Overwrites every parameter from `tensors`; names must match one-to-one.
    pub fn load_tensors(&mut self, tensors: Vec<NamedTensor>) -> Result<()> {
        if tensors.len() != self.store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model expects {}",
                tensors.len(),
                self.store.len()
            )));
        }
        let by_name: HashMap<String, NamedTensor> = tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
        let ids: Vec<_> = self.store.iter().map(|(id, name, _)| (id, name.to_string())).collect();
        for (id, name) in ids {
            let t = by_name
                .get(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            let slot = self.store.get_mut(id);
            if slot.shape() != t.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape,
                    slot.shape()
                )));
            }
            slot.values_mut().copy_from_slice(&t.values);
        }
        Ok(())
    }

    /// Writes weights, config, vocabulary and template into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_tensors(&dir.join(WEIGHTS_FILE), &self.tensors())?;
        let cfg_path = dir.join(CONFIG_FILE);
        std::fs::write(&cfg_path, self.cfg.to_file_string()).map_err(|e| Error::io(&cfg_path, e))?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        let tpl = dir.join(TEMPLATE_FILE);
        std::fs::write(&tpl, self.template.to_file_string()).map_err(|e| Error::io(&tpl, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let weights = dir.join(WEIGHTS_FILE);
        if !weights.exists() {
            return Err(Error::MissingPath(weights));
        }
        let cfg = ModelConfig::load(&dir.join(CONFIG_FILE))?;
        let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
        if cfg.vocab_size != vocab.len() {
            return Err(Error::Checkpoint(format!(
                "config vocab_size {} does not match vocabulary of {}",
                cfg.vocab_size,
                vocab.len()
            )));
        }
        let tpl = dir.join(TEMPLATE_FILE);
        let template = if tpl.exists() {
            InstructionTemplate::load(&tpl)?
        } else {
            InstructionTemplate::default()
        };
        let mut model = Model::new(cfg, vocab, template)?;
        model.load_tensors(read_tensors(&weights)?)?;
        Ok(model)
    }
}
