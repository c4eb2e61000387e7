//! Multimodal fake-news attribution with a category-aware mixture of experts
//! and chain-of-thought supervision, at desk scale.

pub mod cli;
pub mod cmoe;
pub mod cot;
pub mod data;
pub mod error;
pub mod evalkit;
pub mod instruct;
pub mod kv;
pub mod model;
pub mod ndtensor;
pub mod par;
pub mod rng;
pub mod textforge;
pub mod trainer;

pub use error::{Error, Result};
