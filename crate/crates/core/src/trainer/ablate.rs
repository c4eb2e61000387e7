use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{train, TrainConfig};
use crate::data::NewsSample;
use crate::error::Result;
use crate::evalkit::evaluate;
use crate::par::Exec;

/// One ablation configuration scored on the test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub config_hash: String,
    pub moe_enabled: bool,
    pub depth_moe: usize,
    pub cot_enabled: bool,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_recall: f64,
    pub n_unparseable: usize,
    pub final_loss: f64,
}

/// SHA-256 over the effective config file, hex encoded.
pub fn config_hash(cfg: &TrainConfig) -> String {
    Sha256::digest(cfg.to_file_string().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// {MoE off, on at depth 1, on at depth 2} × {CoT off, on}. With MoE off the
/// depth only repeats the single expert, so depth 1 and 2 collapse into one
/// configuration kept at the base depth.
pub fn ablation_configs(base: &TrainConfig) -> Vec<(String, TrainConfig)> {
    let mut out = Vec::new();
    for (moe, depth) in [(false, base.model.depth_moe), (true, 1), (true, 2)] {
        for cot in [false, true] {
            let mut c = base.clone();
            c.model.moe_enabled = moe;
            c.model.depth_moe = depth;
            c.cot_enabled = cot;
            let name = match moe {
                false => format!("moe_off-cot_{}", if cot { "on" } else { "off" }),
                true => format!("moe_d{depth}-cot_{}", if cot { "on" } else { "off" }),
            };
            out.push((name, c));
        }
    }
    out
}

/// Trains each ablation configuration from scratch on `train` and scores it
/// on `test`. Configurations run one after another; each uses `exec` inside.
pub fn ablate(
    base: &TrainConfig,
    train_set: &[NewsSample],
    test_set: &[NewsSample],
    exec: Exec,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for (name, cfg) in ablation_configs(base) {
        log::info!("ablation {name}");
        let (model, history) = train(&cfg, train_set, &[], exec)?;
        let report = evaluate(&model, test_set, model.cfg.max_len, exec)?;
        let m = report.metrics;
        rows.push(AblationRow {
            name,
            config_hash: config_hash(&cfg),
            moe_enabled: cfg.model.moe_enabled,
            depth_moe: cfg.model.depth_moe,
            cot_enabled: cfg.cot_enabled,
            accuracy: m.accuracy,
            macro_precision: m.macro_precision,
            macro_recall: m.macro_recall,
            macro_f1: m.macro_f1,
            micro_recall: m.micro_recall,
            n_unparseable: m.n_unparseable,
            final_loss: history.last().map_or(f64::NAN, |h| h.total),
        });
    }
    Ok(rows)
}

pub fn ablation_to_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(
        "name,config_hash,moe_enabled,depth_moe,cot_enabled,accuracy,macro_precision,macro_recall,macro_f1,micro_recall,n_unparseable,final_loss\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.name,
            r.config_hash,
            r.moe_enabled,
            r.depth_moe,
            r.cot_enabled,
            r.accuracy,
            r.macro_precision,
            r.macro_recall,
            r.macro_f1,
            r.micro_recall,
            r.n_unparseable,
            r.final_loss
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_distinct_configs() {
        let cfgs = ablation_configs(&TrainConfig::default());
        assert_eq!(cfgs.len(), 6);
        let mut hashes: Vec<String> = cfgs.iter().map(|(_, c)| config_hash(c)).collect();
        hashes.sort();
        hashes.dedup();
        assert_eq!(hashes.len(), 6);
        assert_eq!(config_hash(&cfgs[0].1).len(), 64);
    }
}
