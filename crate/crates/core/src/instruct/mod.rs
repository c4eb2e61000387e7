//! Instruction prompt, word-level tokenizer and text embedding.

mod template;
mod vocab;

pub use template::{render_prompt, InstructionTemplate, TITLE_PLACEHOLDER};
pub use vocab::*;

use crate::error::{Error, Result};
use crate::ndtensor::{Graph, Var};

/// Token embeddings plus learned positional embeddings, `[N_t, H]`.
/// An empty sequence yields a `0 × H` tensor.
pub fn embed_text(g: &mut Graph<'_>, table: Var, positions: Var, tokens: &TokenSequence) -> Result<Var> {
    let max_len = g.shape(positions)[0];
    if tokens.len() > max_len {
        return Err(Error::Data(format!(
            "sequence of {} tokens exceeds max_len {max_len}",
            tokens.len()
        )));
    }
    let tok = g.embedding(table, &tokens.ids)?;
    let pos_ids: Vec<usize> = (0..tokens.len()).collect();
    let pos = g.embedding(positions, &pos_ids)?;
    g.add(tok, pos)
}
