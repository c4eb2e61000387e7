use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Category, NewsSample};
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream_id};

pub const MIN_PER_CLASS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub ratios: (u32, u32, u32),
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { ratios: (8, 1, 1), seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<NewsSample>,
    pub val: Vec<NewsSample>,
    pub test: Vec<NewsSample>,
}

fn class_counts(n: usize, ratios: (u32, u32, u32)) -> (usize, usize, usize) {
    let total = (ratios.0 + ratios.1 + ratios.2) as f64;
    let train = ((n as f64) * ratios.0 as f64 / total).round() as usize;
    let val = ((n as f64) * ratios.1 as f64 / total).round() as usize;
    let train = train.min(n);
    let val = val.min(n - train);
    (train, val, n - train - val)
}

/// Stratified seeded split. Each class present must have at least
/// [`MIN_PER_CLASS`] samples; each part keeps the input order.
pub fn split(samples: &[NewsSample], spec: &SplitSpec) -> Result<Splits> {
    let (a, b, c) = spec.ratios;
    if a + b + c == 0 {
        return Err(Error::Config("split ratios must not all be zero".into()));
    }
    let mut assign = vec![0u8; samples.len()];
    for cat in Category::ALL {
        let mut idx: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == cat)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < MIN_PER_CLASS {
            return Err(Error::Config(format!(
                "class {cat} has {} samples; stratified split needs at least {MIN_PER_CLASS}",
                idx.len()
            )));
        }
        let mut rng = rng_for(spec.seed, &[stream_id("split"), cat.index() as u64]);
        idx.shuffle(&mut rng);
        let (tr, va, _) = class_counts(idx.len(), spec.ratios);
        for (k, &i) in idx.iter().enumerate() {
            assign[i] = if k < tr {
                0
            } else if k < tr + va {
                1
            } else {
                2
            };
        }
    }
    let mut out = Splits::default();
    for (s, part) in samples.iter().zip(assign) {
        match part {
            0 => out.train.push(s.clone()),
            1 => out.val.push(s.clone()),
            _ => out.test.push(s.clone()),
        }
    }
    Ok(out)
}
