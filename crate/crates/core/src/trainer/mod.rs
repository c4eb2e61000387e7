//! Adam training loop over `L_Det + λ·L_cot (+ routing aux)`, checkpoints
//! with optimizer state, and the ablation harness.

mod ablate;
mod adam;

pub use ablate::{ablate, ablation_configs, ablation_to_csv, config_hash, AblationRow};
pub use adam::{adam_step, AdamMoments, AdamParams};

use std::path::Path;

use rand::seq::SliceRandom;

use crate::data::NewsSample;
use crate::error::{Error, Result};
use crate::evalkit::evaluate;
use crate::instruct::{render_prompt, InstructionTemplate, Vocabulary, DEFAULT_MAX_TYPES, DEFAULT_MIN_COUNT};
use crate::kv::{to_kv_string, KvMap};
use crate::model::{forward_train, read_tensors, sample_target, write_tensors, Model, ModelConfig, NamedTensor, TargetSeq};
use crate::ndtensor::{Gradients, Graph};
use crate::par::{self, Exec};
use crate::rng::{rng_for, stream_id};

pub const OPTIMIZER_FILE: &str = "optim.umfd";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Architecture plus λ, MoE switches and the seed.
    pub model: ModelConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub adam: AdamParams,
    pub clip_norm: f64,
    pub cot_enabled: bool,
    /// Keep the rationale in the decoder input but out of every loss.
    pub mask_think: bool,
    pub routing_aux_coeff: f64,
    pub freeze_vision: bool,
    pub checkpoint_every: usize,
    pub eval_every: usize,
    pub eval_max_samples: usize,
    pub vocab_min_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            steps: 2000,
            batch_size: 8,
            adam: AdamParams::default(),
            clip_norm: 1.0,
            cot_enabled: true,
            mask_think: false,
            routing_aux_coeff: 0.0,
            freeze_vision: false,
            checkpoint_every: 0,
            eval_every: 0,
            eval_max_samples: 64,
            vocab_min_count: DEFAULT_MIN_COUNT,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.steps == 0 || self.batch_size == 0 {
            return bad("steps and batch_size must be positive".into());
        }
        let a = &self.adam;
        if !(a.lr > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("learning_rate and eps must be > 0, betas in [0,1)".into());
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip_norm must be > 0, got {}", self.clip_norm));
        }
        if !(self.routing_aux_coeff >= 0.0) {
            return bad(format!("routing_aux_coeff must be >= 0, got {}", self.routing_aux_coeff));
        }
        Ok(())
    }

    /// Reads known keys from `kv`; `moe_depth` is accepted for `depth_moe`.
    pub fn take_from(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.take("steps", &mut self.steps)?;
        kv.take("batch_size", &mut self.batch_size)?;
        kv.take("learning_rate", &mut self.adam.lr)?;
        kv.take("beta1", &mut self.adam.beta1)?;
        kv.take("beta2", &mut self.adam.beta2)?;
        kv.take("eps", &mut self.adam.eps)?;
        kv.take("clip_norm", &mut self.clip_norm)?;
        kv.take("cot_enabled", &mut self.cot_enabled)?;
        kv.take("mask_think", &mut self.mask_think)?;
        kv.take("routing_aux_coeff", &mut self.routing_aux_coeff)?;
        kv.take("freeze_vision", &mut self.freeze_vision)?;
        kv.take("checkpoint_every", &mut self.checkpoint_every)?;
        kv.take("eval_every", &mut self.eval_every)?;
        kv.take("eval_max_samples", &mut self.eval_max_samples)?;
        kv.take("vocab_min_count", &mut self.vocab_min_count)?;
        if kv.contains("moe_depth") && kv.contains("depth_moe") {
            return Err(Error::Config("give either moe_depth or depth_moe, not both".into()));
        }
        kv.take("moe_depth", &mut self.model.depth_moe)?;
        self.model.take_from(kv)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let mut cfg = TrainConfig::default();
        cfg.take_from(&mut kv)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut kv = KvMap::load(path)?;
        let mut cfg = TrainConfig::default();
        cfg.take_from(&mut kv)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("steps", self.steps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.adam.lr.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("eps", self.adam.eps.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("cot_enabled", self.cot_enabled.to_string()),
            ("mask_think", self.mask_think.to_string()),
            ("routing_aux_coeff", self.routing_aux_coeff.to_string()),
            ("freeze_vision", self.freeze_vision.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_max_samples", self.eval_max_samples.to_string()),
            ("vocab_min_count", self.vocab_min_count.to_string()),
        ];
        out.extend(self.model.pairs().into_iter().filter(|(k, _)| *k != "vocab_size"));
        out
    }

    pub fn to_file_string(&self) -> String {
        to_kv_string(self.pairs())
    }
}

/// Everything besides the parameters needed to continue a run exactly.
/// Randomness is derived from `(seed, step)`, so no generator state is kept.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub step: usize,
    pub moments: AdamMoments,
    pub best_val: Option<f64>,
}

impl TrainState {
    pub fn fresh(model: &Model) -> Self {
        TrainState {
            step: 0,
            moments: AdamMoments::zeros(&model.store),
            best_val: None,
        }
    }

    pub fn to_tensors(&self, model: &Model) -> Vec<NamedTensor> {
        let mut out = vec![
            NamedTensor {
                name: "trainer.step".into(),
                shape: vec![1],
                values: vec![self.step as f64],
            },
            NamedTensor {
                name: "trainer.best_val".into(),
                shape: vec![1],
                values: vec![self.best_val.unwrap_or(f64::NAN)],
            },
        ];
        for (id, name, t) in model.store.iter() {
            for (prefix, buf) in [("adam.m.", &self.moments.m), ("adam.v.", &self.moments.v)] {
                out.push(NamedTensor {
                    name: format!("{prefix}{name}"),
                    shape: t.shape().to_vec(),
                    values: buf[id.0].clone(),
                });
            }
        }
        out
    }

    pub fn from_tensors(model: &Model, tensors: Vec<NamedTensor>) -> Result<Self> {
        let mut by_name: std::collections::HashMap<String, NamedTensor> =
            tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
        let mut take = |name: &str, numel: usize| -> Result<Vec<f64>> {
            let t = by_name
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("optimizer state lacks {name}")))?;
            if t.values.len() != numel {
                return Err(Error::Checkpoint(format!("optimizer tensor {name} has wrong size")));
            }
            Ok(t.values)
        };
        let step = take("trainer.step", 1)?[0];
        let best = take("trainer.best_val", 1)?[0];
        let mut moments = AdamMoments::zeros(&model.store);
        for (id, name, t) in model.store.iter() {
            moments.m[id.0] = take(&format!("adam.m.{name}"), t.numel())?;
            moments.v[id.0] = take(&format!("adam.v.{name}"), t.numel())?;
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected optimizer tensor {extra}")));
        }
        if !(step >= 0.0 && step.fract() == 0.0) {
            return Err(Error::Checkpoint("invalid step counter".into()));
        }
        Ok(TrainState {
            step: step as usize,
            moments,
            best_val: (!best.is_nan()).then_some(best),
        })
    }
}

/// One optimizer step's batch-mean losses.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub loss_det: f64,
    pub loss_cot: f64,
    pub loss_aux: f64,
    pub total: f64,
    pub grad_norm: f64,
    pub val_acc: Option<f64>,
}

pub fn history_to_csv(rows: &[HistoryRow]) -> String {
    let mut s = String::from("step,loss_det,loss_cot,total,val_acc,loss_aux,grad_norm\n");
    for r in rows {
        let val = r.val_acc.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step, r.loss_det, r.loss_cot, r.total, val, r.loss_aux, r.grad_norm
        ));
    }
    s
}

/// Vocabulary over the training titles, stored rationales and the template.
pub fn build_vocab(train: &[NewsSample], template: &InstructionTemplate, min_count: usize) -> Result<Vocabulary> {
    let mut texts = Vec::with_capacity(train.len() * 2 + 1);
    for s in train {
        texts.push(render_prompt(template, &s.title)?);
        if let Some(c) = &s.cot {
            texts.push(c.think.clone());
        }
    }
    Ok(Vocabulary::build(texts.iter().map(String::as_str), min_count, DEFAULT_MAX_TYPES))
}

/// Fresh model for `cfg` with a vocabulary built from `train`.
pub fn init_model(cfg: &TrainConfig, train: &[NewsSample]) -> Result<Model> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let template = InstructionTemplate::default();
    let vocab = build_vocab(train, &template, cfg.vocab_min_count)?;
    Model::new(cfg.model.clone(), vocab, template)
}

pub fn prepare_targets(model: &Model, samples: &[NewsSample], cfg: &TrainConfig) -> Result<Vec<TargetSeq>> {
    samples
        .iter()
        .map(|s| {
            let t = sample_target(&model.vocab, s, cfg.cot_enabled)?;
            if t.len() > model.cfg.max_len {
                return Err(Error::Data(format!(
                    "sample {}: target of {} tokens exceeds max_len {}",
                    s.id,
                    t.len(),
                    model.cfg.max_len
                )));
            }
            Ok(if cfg.mask_think { t.without_think_loss() } else { t })
        })
        .collect()
}

struct SampleResult {
    loss_det: f64,
    loss_cot: f64,
    loss_aux: f64,
    total: f64,
    grads: Gradients,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: Model,
    pub state: TrainState,
    exec: Exec,
    frozen: Vec<bool>,
    epoch_cache: Option<(usize, Vec<usize>)>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, model: Model, exec: Exec) -> Result<Self> {
        cfg.validate()?;
        let mut frozen = vec![false; model.store.len()];
        if cfg.freeze_vision {
            for id in model.params.vision_ids() {
                frozen[id.0] = true;
            }
        }
        let state = TrainState::fresh(&model);
        Ok(Trainer {
            cfg,
            model,
            state,
            exec,
            frozen,
            epoch_cache: None,
        })
    }

    pub fn with_state(mut self, state: TrainState) -> Result<Self> {
        if !state.moments.matches(&self.model.store) {
            return Err(Error::Checkpoint("optimizer state does not match the model".into()));
        }
        self.state = state;
        Ok(self)
    }

    /// Sample indices for optimizer step `step` (0-based): consecutive slices
    /// of per-epoch seeded permutations.
    pub fn batch_indices(&mut self, step: usize, n: usize) -> Vec<usize> {
        let b = self.cfg.batch_size;
        let seed = self.model.cfg.seed;
        (0..b)
            .map(|j| {
                let pos = step * b + j;
                let epoch = pos / n;
                let perm = match &self.epoch_cache {
                    Some((e, p)) if *e == epoch && p.len() == n => p,
                    _ => {
                        let mut p: Vec<usize> = (0..n).collect();
                        p.shuffle(&mut rng_for(seed, &[stream_id("batch"), epoch as u64]));
                        &self.epoch_cache.insert((epoch, p)).1
                    }
                };
                perm[pos % n]
            })
            .collect()
    }

    /// Runs one optimizer step on the batch for `state.step`.
    pub fn step(&mut self, train: &[NewsSample], targets: &[TargetSeq]) -> Result<HistoryRow> {
        if train.is_empty() || train.len() != targets.len() {
            return Err(Error::Data("training set is empty or targets are misaligned".into()));
        }
        let step = self.state.step;
        let batch = self.batch_indices(step, train.len());
        let model = &self.model;
        let seed = model.cfg.seed;
        let aux = self.cfg.routing_aux_coeff;
        let results = par::map(self.exec, &batch, |j, &i| -> Result<SampleResult> {
            let mut g = Graph::new(&model.store);
            let mut rng = rng_for(seed, &[stream_id("dropout"), step as u64, j as u64]);
            let out = forward_train(&mut g, model, &train[i], &targets[i], aux, true, &mut rng)?;
            let loss_det = g.scalar(out.loss_det);
            let loss_cot = g.scalar(out.loss_cot);
            let loss_aux = out.loss_aux.map_or(0.0, |a| g.scalar(a));
            let total = g.scalar(out.total);
            let grads = g.backward(out.total)?;
            Ok(SampleResult {
                loss_det,
                loss_cot,
                loss_aux,
                total,
                grads,
            })
        });
        let results: Vec<SampleResult> = results.into_iter().collect::<Result<_>>()?;
        let bad: Vec<String> = batch
            .iter()
            .zip(&results)
            .filter(|(_, r)| !r.total.is_finite() || !r.grads.is_finite())
            .map(|(&i, _)| train[i].id.clone())
            .collect();
        if !bad.is_empty() {
            return Err(Error::NonFinite { step, sample_ids: bad });
        }
        let mut grads = Gradients::new(model.store.len());
        let (mut det, mut cot, mut aux_sum, mut total) = (0.0, 0.0, 0.0, 0.0);
        for r in &results {
            grads.add_assign(&r.grads);
            det += r.loss_det;
            cot += r.loss_cot;
            aux_sum += r.loss_aux;
            total += r.total;
        }
        let inv = 1.0 / results.len() as f64;
        grads.scale(inv);
        let grad_norm = grads.clip_global_norm(self.cfg.clip_norm);
        adam_step(
            &mut self.model.store,
            &mut self.state.moments,
            &grads,
            &self.cfg.adam,
            step as u64 + 1,
            &self.frozen,
        );
        self.state.step += 1;
        Ok(HistoryRow {
            step: self.state.step,
            loss_det: det * inv,
            loss_cot: cot * inv,
            loss_aux: aux_sum * inv,
            total: total * inv,
            grad_norm,
            val_acc: None,
        })
    }

    /// Validation accuracy on the first `eval_max_samples` of `val`.
    pub fn validate(&self, val: &[NewsSample]) -> Result<f64> {
        let n = val.len().min(self.cfg.eval_max_samples.max(1));
        let report = evaluate(&self.model, &val[..n], self.model.cfg.max_len, self.exec)?;
        Ok(report.metrics.accuracy)
    }

    /// Steps until `cfg.steps`, validating every `eval_every` steps and
    /// checkpointing into `checkpoint_dir` every `checkpoint_every` steps
    /// and at the end.
    pub fn run(&mut self, train: &[NewsSample], val: &[NewsSample], checkpoint_dir: Option<&Path>) -> Result<Vec<HistoryRow>> {
        let targets = prepare_targets(&self.model, train, &self.cfg)?;
        let mut history = Vec::new();
        while self.state.step < self.cfg.steps {
            let mut row = self.step(train, &targets)?;
            let s = self.state.step;
            if self.cfg.eval_every > 0 && s.is_multiple_of(self.cfg.eval_every) && !val.is_empty() {
                let acc = self.validate(val)?;
                row.val_acc = Some(acc);
                if self.state.best_val.is_none_or(|b| acc > b) {
                    self.state.best_val = Some(acc);
                }
            }
            let level = if s.is_multiple_of(100) || row.val_acc.is_some() || s == self.cfg.steps {
                log::Level::Info
            } else {
                log::Level::Debug
            };
            log::log!(
                level,
                "step {s} total {:.4} det {:.4} cot {:.4} aux {:.4}{}",
                row.total,
                row.loss_det,
                row.loss_cot,
                row.loss_aux,
                row.val_acc.map(|a| format!(" val_acc {a:.3}")).unwrap_or_default()
            );
            history.push(row);
            if let Some(dir) = checkpoint_dir {
                if self.cfg.checkpoint_every > 0 && s.is_multiple_of(self.cfg.checkpoint_every) && s < self.cfg.steps {
                    self.save(dir)?;
                }
            }
        }
        if let Some(dir) = checkpoint_dir {
            self.save(dir)?;
        }
        Ok(history)
    }

    /// Model checkpoint plus optimizer state.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.model.save(dir)?;
        write_tensors(&dir.join(OPTIMIZER_FILE), &self.state.to_tensors(&self.model))
    }

    /// Restores model and optimizer state saved by [`Trainer::save`].
    pub fn resume(cfg: TrainConfig, dir: &Path, exec: Exec) -> Result<Self> {
        let model = Model::load(dir)?;
        if model.cfg.seed != cfg.model.seed {
            log::warn!("resuming with seed {} from a checkpoint trained with {}", cfg.model.seed, model.cfg.seed);
        }
        let state = TrainState::from_tensors(&model, read_tensors(&dir.join(OPTIMIZER_FILE))?)?;
        Trainer::new(cfg, model, exec)?.with_state(state)
    }
}

/// Fresh model trained for `cfg.steps` steps.
pub fn train(cfg: &TrainConfig, train: &[NewsSample], val: &[NewsSample], exec: Exec) -> Result<(Model, Vec<HistoryRow>)> {
    let model = init_model(cfg, train)?;
    let mut t = Trainer::new(cfg.clone(), model, exec)?;
    let history = t.run(train, val, None)?;
    Ok((t.model, history))
}
