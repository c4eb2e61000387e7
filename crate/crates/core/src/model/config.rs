use std::path::Path;

use crate::error::{Error, Result};
use crate::kv::{to_kv_string, KvMap};

pub const PATCH: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    /// Width of precomputed visual feature vectors.
    pub visual_width: usize,
    /// Channels of raw image payloads.
    pub image_channels: usize,
    pub depth_enc: usize,
    pub depth_moe: usize,
    pub depth_dec: usize,
    pub heads: usize,
    pub ffn_ratio: usize,
    pub expansion_ratio: usize,
    pub max_len: usize,
    pub max_visual_tokens: usize,
    pub dropout_rate: f64,
    pub gate_scaling: bool,
    pub moe_enabled: bool,
    pub lambda_cot: f64,
    pub seed: u64,
    /// Filled from the vocabulary when the model is built.
    pub vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 64,
            visual_width: 64,
            image_channels: 1,
            depth_enc: 2,
            depth_moe: 2,
            depth_dec: 2,
            heads: 4,
            ffn_ratio: 2,
            expansion_ratio: 2,
            max_len: 192,
            max_visual_tokens: 64,
            dropout_rate: 0.1,
            gate_scaling: true,
            moe_enabled: true,
            lambda_cot: 1.0,
            seed: 0,
            vocab_size: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return bad(format!("hidden {} must be a positive multiple of heads {}", self.hidden, self.heads));
        }
        if !(1..=4).contains(&self.depth_moe) {
            return bad(format!("depth_moe must be in [1,4], got {}", self.depth_moe));
        }
        if self.depth_enc == 0 || self.depth_dec == 0 {
            return bad("encoder and decoder need at least one layer".into());
        }
        if self.lambda_cot.is_nan() || self.lambda_cot < 0.0 {
            return bad(format!("lambda_cot must be >= 0, got {}", self.lambda_cot));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must be in [0,1), got {}", self.dropout_rate));
        }
        if self.visual_width == 0 || self.image_channels == 0 || self.ffn_ratio == 0 || self.expansion_ratio == 0 {
            return bad("widths and ratios must be positive".into());
        }
        if self.max_len < 2 || self.max_visual_tokens == 0 {
            return bad("max_len must be >= 2 and max_visual_tokens >= 1".into());
        }
        Ok(())
    }

    /// Reads known keys from `kv`, leaving unknown ones for the caller.
    pub fn take_from(&mut self, kv: &mut KvMap) -> Result<()> {
        kv.take("hidden", &mut self.hidden)?;
        kv.take("visual_width", &mut self.visual_width)?;
        kv.take("image_channels", &mut self.image_channels)?;
        kv.take("depth_enc", &mut self.depth_enc)?;
        kv.take("depth_moe", &mut self.depth_moe)?;
        kv.take("depth_dec", &mut self.depth_dec)?;
        kv.take("heads", &mut self.heads)?;
        kv.take("ffn_ratio", &mut self.ffn_ratio)?;
        kv.take("expansion_ratio", &mut self.expansion_ratio)?;
        kv.take("max_len", &mut self.max_len)?;
        kv.take("max_visual_tokens", &mut self.max_visual_tokens)?;
        kv.take("dropout_rate", &mut self.dropout_rate)?;
        kv.take("gate_scaling", &mut self.gate_scaling)?;
        kv.take("moe_enabled", &mut self.moe_enabled)?;
        kv.take("lambda_cot", &mut self.lambda_cot)?;
        kv.take("seed", &mut self.seed)?;
        kv.take("vocab_size", &mut self.vocab_size)?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvMap::parse(text)?;
        let mut cfg = ModelConfig::default();
        cfg.take_from(&mut kv)?;
        kv.finish()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::parse(&text)
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("hidden", self.hidden.to_string()),
            ("visual_width", self.visual_width.to_string()),
            ("image_channels", self.image_channels.to_string()),
            ("depth_enc", self.depth_enc.to_string()),
            ("depth_moe", self.depth_moe.to_string()),
            ("depth_dec", self.depth_dec.to_string()),
            ("heads", self.heads.to_string()),
            ("ffn_ratio", self.ffn_ratio.to_string()),
            ("expansion_ratio", self.expansion_ratio.to_string()),
            ("max_len", self.max_len.to_string()),
            ("max_visual_tokens", self.max_visual_tokens.to_string()),
            ("dropout_rate", self.dropout_rate.to_string()),
            ("gate_scaling", self.gate_scaling.to_string()),
            ("moe_enabled", self.moe_enabled.to_string()),
            ("lambda_cot", self.lambda_cot.to_string()),
            ("seed", self.seed.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
        ]
    }

    pub fn to_file_string(&self) -> String {
        to_kv_string(self.pairs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_validation() {
        let cfg = ModelConfig {
            lambda_cot: 0.25,
            depth_moe: 3,
            ..ModelConfig::default()
        };
        assert_eq!(ModelConfig::parse(&cfg.to_file_string()).unwrap(), cfg);
        assert!(ModelConfig::parse("hidden = 10\nheads = 4").is_err());
        assert!(ModelConfig::parse("depth_moe = 5").is_err());
        assert!(ModelConfig::parse("lambda_cot = -1").is_err());
        assert!(ModelConfig::parse("colour = red").is_err());
    }
}
