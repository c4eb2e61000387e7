use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::config::{ModelConfig, PATCH};
use crate::cmoe::{init_matrix, CMoELayer};
use crate::error::{Error, Result};
use crate::ndtensor::{ParamId, ParamStore, Tensor};

const EMBED_STD: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct LnParams {
    pub gain: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Debug)]
pub struct AttnParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
}

#[derive(Clone, Debug)]
pub struct FfnParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

#[derive(Clone, Debug)]
pub struct EncoderLayer {
    pub ln1: LnParams,
    pub attn: AttnParams,
    pub ln2: LnParams,
    pub ffn: FfnParams,
}

#[derive(Clone, Debug)]
pub struct DecoderLayer {
    pub ln1: LnParams,
    pub self_attn: AttnParams,
    pub ln2: LnParams,
    pub cross_attn: AttnParams,
    pub ln3: LnParams,
    pub ffn: FfnParams,
}

/// Handles of every trainable tensor of the detector.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub tok_emb: ParamId,
    pub enc_pos: ParamId,
    pub dec_pos: ParamId,
    pub vis_pos: ParamId,
    pub patch_w: ParamId,
    pub patch_b: ParamId,
    pub feat_w: ParamId,
    pub feat_b: ParamId,
    pub encoder: Vec<EncoderLayer>,
    pub enc_ln: LnParams,
    pub cmoe: Vec<CMoELayer>,
    pub mem_ln: LnParams,
    pub decoder: Vec<DecoderLayer>,
    pub out_ln: LnParams,
    pub head_w: ParamId,
    pub head_b: ParamId,
}

/// Adds tensors in a fixed order so a seed always yields the same store.
struct Builder<'a, R: Rng + ?Sized> {
    store: &'a mut ParamStore,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    fn matrix(&mut self, name: String, rows: usize, cols: usize) -> Result<ParamId> {
        let t = init_matrix(rows, cols, self.rng);
        self.store.add(name, t)
    }

    fn embed(&mut self, name: String, rows: usize, cols: usize) -> Result<ParamId> {
        let normal = Normal::new(0.0, EMBED_STD).expect("valid std");
        let rng = &mut *self.rng;
        let t = Tensor::from_fn(&[rows, cols], |_| normal.sample(rng));
        self.store.add(name, t)
    }

    fn zeros(&mut self, name: String, n: usize) -> Result<ParamId> {
        self.store.add(name, Tensor::zeros(&[n]))
    }

    fn ln(&mut self, prefix: &str, h: usize) -> Result<LnParams> {
        Ok(LnParams {
            gain: self.store.add(format!("{prefix}.gain"), Tensor::from_fn(&[h], |_| 1.0))?,
            bias: self.zeros(format!("{prefix}.bias"), h)?,
        })
    }

    fn attn(&mut self, prefix: &str, h: usize) -> Result<AttnParams> {
        Ok(AttnParams {
            wq: self.matrix(format!("{prefix}.Wq"), h, h)?,
            wk: self.matrix(format!("{prefix}.Wk"), h, h)?,
            wv: self.matrix(format!("{prefix}.Wv"), h, h)?,
            wo: self.matrix(format!("{prefix}.Wo"), h, h)?,
        })
    }

    fn ffn(&mut self, prefix: &str, h: usize, inner: usize) -> Result<FfnParams> {
        Ok(FfnParams {
            w1: self.matrix(format!("{prefix}.W1"), h, inner)?,
            b1: self.zeros(format!("{prefix}.b1"), inner)?,
            w2: self.matrix(format!("{prefix}.W2"), inner, h)?,
            b2: self.zeros(format!("{prefix}.b2"), h)?,
        })
    }
}

impl ModelParams {
    pub fn register<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        if cfg.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be set before building the model".into()));
        }
        let h = cfg.hidden;
        let v = cfg.vocab_size;
        let mut b = Builder { store, rng };
        let tok_emb = b.embed("embed.tok".into(), v, h)?;
        let enc_pos = b.embed("embed.enc_pos".into(), cfg.max_len, h)?;
        let dec_pos = b.embed("embed.dec_pos".into(), cfg.max_len, h)?;
        let vis_pos = b.embed("embed.vis_pos".into(), cfg.max_visual_tokens, h)?;
        let patch_in = cfg.image_channels * PATCH * PATCH;
        let patch_w = b.matrix("vision.patch.W".into(), patch_in, h)?;
        let patch_b = b.zeros("vision.patch.b".into(), h)?;
        let feat_w = b.matrix("vision.feat.W".into(), cfg.visual_width, h)?;
        let feat_b = b.zeros("vision.feat.b".into(), h)?;
        let encoder = (0..cfg.depth_enc)
            .map(|l| {
                Ok(EncoderLayer {
                    ln1: b.ln(&format!("enc.{l}.ln1"), h)?,
                    attn: b.attn(&format!("enc.{l}.attn"), h)?,
                    ln2: b.ln(&format!("enc.{l}.ln2"), h)?,
                    ffn: b.ffn(&format!("enc.{l}.ffn"), h, cfg.ffn_ratio * h)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let enc_ln = b.ln("enc.ln_f", h)?;
        let cmoe = (0..cfg.depth_moe)
            .map(|l| {
                CMoELayer::register(
                    b.store,
                    l,
                    h,
                    cfg.expansion_ratio,
                    cfg.moe_enabled,
                    cfg.dropout_rate,
                    cfg.gate_scaling,
                    b.rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mem_ln = b.ln("mem.ln", h)?;
        let decoder = (0..cfg.depth_dec)
            .map(|l| {
                Ok(DecoderLayer {
                    ln1: b.ln(&format!("dec.{l}.ln1"), h)?,
                    self_attn: b.attn(&format!("dec.{l}.self"), h)?,
                    ln2: b.ln(&format!("dec.{l}.ln2"), h)?,
                    cross_attn: b.attn(&format!("dec.{l}.cross"), h)?,
                    ln3: b.ln(&format!("dec.{l}.ln3"), h)?,
                    ffn: b.ffn(&format!("dec.{l}.ffn"), h, cfg.ffn_ratio * h)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let out_ln = b.ln("dec.ln_f", h)?;
        let head_w = b.matrix("head.W".into(), h, v)?;
        let head_b = b.zeros("head.b".into(), v)?;
        Ok(ModelParams {
            tok_emb,
            enc_pos,
            dec_pos,
            vis_pos,
            patch_w,
            patch_b,
            feat_w,
            feat_b,
            encoder,
            enc_ln,
            cmoe,
            mem_ln,
            decoder,
            out_ln,
            head_w,
            head_b,
        })
    }

    /// Parameters of the raw-image patch projection, the frozen-vision analogue.
    pub fn vision_ids(&self) -> [ParamId; 2] {
        [self.patch_w, self.patch_b]
    }
}
