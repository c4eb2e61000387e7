use rand::Rng;

use super::config::PATCH;
use super::params::{AttnParams, FfnParams, LnParams};
use super::target::{TargetSeq, IGNORE};
use super::Model;
use crate::cmoe::{cmoe_forward, routing_alignment_loss, RoutingDecision};
use crate::data::{ImagePayload, NewsSample};
use crate::error::{Error, Result};
use crate::instruct::{embed_text, TokenSequence, BOS, EOS};
use crate::ndtensor::{Graph, Var};

fn layer_norm(g: &mut Graph<'_>, p: &LnParams, x: Var) -> Result<Var> {
    let gain = g.param(p.gain);
    let bias = g.param(p.bias);
    g.layer_norm(x, gain, bias)
}

fn ffn(g: &mut Graph<'_>, p: &FfnParams, x: Var) -> Result<Var> {
    let (w1, b1, w2, b2) = (g.param(p.w1), g.param(p.b1), g.param(p.w2), g.param(p.b2));
    let h = g.matmul(x, w1)?;
    let h = g.add_row(h, b1)?;
    let h = g.silu(h);
    let o = g.matmul(h, w2)?;
    g.add_row(o, b2)
}

/// Multi-head scaled dot-product attention of `q_in` over `kv_in`.
pub fn attention(g: &mut Graph<'_>, p: &AttnParams, q_in: Var, kv_in: Var, heads: usize, causal: bool) -> Result<Var> {
    let (wq, wk, wv, wo) = (g.param(p.wq), g.param(p.wk), g.param(p.wv), g.param(p.wo));
    let q = g.matmul(q_in, wq)?;
    let k = g.matmul(kv_in, wk)?;
    let v = g.matmul(kv_in, wv)?;
    let h = g.shape(q)[1];
    let d = h / heads;
    let scale = 1.0 / (d as f64).sqrt();
    let mut outs = Vec::with_capacity(heads);
    for i in 0..heads {
        let (qh, kh, vh) = if heads == 1 {
            (q, k, v)
        } else {
            (g.slice_cols(q, i * d, d)?, g.slice_cols(k, i * d, d)?, g.slice_cols(v, i * d, d)?)
        };
        let s = g.matmul_t(qh, kh)?;
        let s = g.scale(s, scale);
        let a = g.softmax(s, causal);
        outs.push(g.matmul(a, vh)?);
    }
    let o = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
    g.matmul(o, wo)
}

/// Visual tokens `[N_v, H]`: 8×8 patches of a raw image through the patch
/// projection, or feature vectors through the feature projection.
pub fn embed_image(g: &mut Graph<'_>, m: &Model, img: &ImagePayload) -> Result<Var> {
    let cfg = &m.cfg;
    let p = &m.params;
    match img {
        ImagePayload::Raw(r) => {
            if r.size % PATCH != 0 {
                return Err(Error::Data(format!("image size {} is not divisible by patch size {PATCH}", r.size)));
            }
            if r.channels != cfg.image_channels {
                return Err(Error::dim("embed_image", &[r.channels], &[cfg.image_channels]));
            }
            let grid = r.size / PATCH;
            let n_v = grid * grid;
            let width = r.channels * PATCH * PATCH;
            let mut flat = Vec::with_capacity(n_v * width);
            for py in 0..grid {
                for px in 0..grid {
                    for c in 0..r.channels {
                        for y in 0..PATCH {
                            for x in 0..PATCH {
                                flat.push(r.pixel(c, py * PATCH + y, px * PATCH + x));
                            }
                        }
                    }
                }
            }
            let patches = g.constant(&[n_v, width], flat)?;
            let (w, b) = (g.param(p.patch_w), g.param(p.patch_b));
            let e = g.matmul(patches, w)?;
            g.add_row(e, b)
        }
        ImagePayload::Feat(rows) => {
            if rows.is_empty() {
                return g.constant(&[0, cfg.hidden], Vec::new());
            }
            if rows[0].len() != cfg.visual_width {
                return Err(Error::dim("embed_image", &[rows.len(), rows[0].len()], &[rows.len(), cfg.visual_width]));
            }
            let feats = g.constant(&[rows.len(), cfg.visual_width], rows.concat())?;
            let (w, b) = (g.param(p.feat_w), g.param(p.feat_b));
            let e = g.matmul(feats, w)?;
            g.add_row(e, b)
        }
        ImagePayload::Path(path) => Err(Error::Data(format!("image path {path} must be resolved before embedding"))),
    }
}

/// Encoder fusion: concatenates visual and text tokens along the sequence
/// axis and runs the pre-norm transformer encoder.
pub fn fuse(g: &mut Graph<'_>, m: &Model, e_v: Var, e_t: Var) -> Result<Var> {
    let h = m.cfg.hidden;
    for e in [e_v, e_t] {
        if g.shape(e).len() != 2 || g.shape(e)[1] != h {
            return Err(Error::dim("fuse", g.shape(e), &[g.shape(e)[0], h]));
        }
    }
    let mut x = g.concat_rows(&[e_v, e_t])?;
    for layer in &m.params.encoder {
        let n = layer_norm(g, &layer.ln1, x)?;
        let a = attention(g, &layer.attn, n, n, m.cfg.heads, false)?;
        x = g.add(x, a)?;
        let n = layer_norm(g, &layer.ln2, x)?;
        let f = ffn(g, &layer.ffn, n)?;
        x = g.add(x, f)?;
    }
    layer_norm(g, &m.params.enc_ln, x)
}

/// Image tokens (with visual positions) fused with the instruction prompt
/// rendered around the sample title.
pub fn encode(g: &mut Graph<'_>, m: &Model, sample: &NewsSample) -> Result<Var> {
    let prompt = m.template.render(&sample.title)?;
    let tokens = m.vocab.tokenize(&prompt);
    let table = g.param(m.params.tok_emb);
    let enc_pos = g.param(m.params.enc_pos);
    let e_t = embed_text(g, table, enc_pos, &tokens)?;
    let mut e_v = embed_image(g, m, &sample.image)?;
    let n_v = g.shape(e_v)[0];
    if n_v > 0 {
        if n_v > m.cfg.max_visual_tokens {
            return Err(Error::Data(format!(
                "{n_v} visual tokens exceed max_visual_tokens {}",
                m.cfg.max_visual_tokens
            )));
        }
        let vis_pos = g.param(m.params.vis_pos);
        let ids: Vec<usize> = (0..n_v).collect();
        let pos = g.embedding(vis_pos, &ids)?;
        e_v = g.add(e_v, pos)?;
    }
    fuse(g, m, e_v, e_t)
}

pub struct MoeStack {
    pub output: Var,
    pub decisions: Vec<RoutingDecision>,
    pub router_logits: Vec<Option<Var>>,
}

/// Applies the C-MoE layers in sequence, one routing decision per layer.
pub fn moe_stack<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    m: &Model,
    x: Var,
    sample_id: &str,
    training: bool,
    rng: &mut R,
) -> Result<MoeStack> {
    let mut z = x;
    let mut decisions = Vec::with_capacity(m.params.cmoe.len());
    let mut router_logits = Vec::with_capacity(m.params.cmoe.len());
    for layer in &m.params.cmoe {
        let out = cmoe_forward(g, layer, z, training, rng)?;
        let mut d = out.decision;
        d.sequence_id = sample_id.to_string();
        decisions.push(d);
        router_logits.push(out.router_logits);
        z = out.output;
    }
    Ok(MoeStack {
        output: z,
        decisions,
        router_logits,
    })
}

/// Teacher-forced decoder over `memory` (already normalized): logits `[T, V]`.
pub fn decode(g: &mut Graph<'_>, m: &Model, memory: Var, dec_input: &[usize]) -> Result<Var> {
    let table = g.param(m.params.tok_emb);
    let dec_pos = g.param(m.params.dec_pos);
    let tokens = TokenSequence { ids: dec_input.to_vec() };
    let mut y = embed_text(g, table, dec_pos, &tokens)?;
    for layer in &m.params.decoder {
        let n = layer_norm(g, &layer.ln1, y)?;
        let a = attention(g, &layer.self_attn, n, n, m.cfg.heads, true)?;
        y = g.add(y, a)?;
        let n = layer_norm(g, &layer.ln2, y)?;
        let c = attention(g, &layer.cross_attn, n, memory, m.cfg.heads, false)?;
        y = g.add(y, c)?;
        let n = layer_norm(g, &layer.ln3, y)?;
        let f = ffn(g, &layer.ffn, n)?;
        y = g.add(y, f)?;
    }
    let y = layer_norm(g, &m.params.out_ln, y)?;
    let (w, b) = (g.param(m.params.head_w), g.param(m.params.head_b));
    let logits = g.matmul(y, w)?;
    g.add_row(logits, b)
}

pub struct ForwardOut {
    pub loss_det: Var,
    pub loss_cot: Var,
    pub loss_aux: Option<Var>,
    pub total: Var,
    pub decisions: Vec<RoutingDecision>,
}

/// Teacher-forced pass producing `total = L_Det + λ·L_cot (+ aux)`, with λ
/// from the model config and the optional routing alignment term.
pub fn forward_train<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    m: &Model,
    sample: &NewsSample,
    target: &TargetSeq,
    aux_coeff: f64,
    training: bool,
    rng: &mut R,
) -> Result<ForwardOut> {
    if target.len() > m.cfg.max_len {
        return Err(Error::Data(format!(
            "sample {}: target of {} tokens exceeds max_len {}",
            sample.id,
            target.len(),
            m.cfg.max_len
        )));
    }
    let x = encode(g, m, sample)?;
    let stack = moe_stack(g, m, x, &sample.id, training, rng)?;
    let memory = layer_norm(g, &m.params.mem_ln, stack.output)?;
    let logits = decode(g, m, memory, &target.dec_input)?;
    let loss_det = g.cross_entropy(logits, &target.det_targets, IGNORE)?;
    let loss_cot = g.cross_entropy(logits, &target.cot_targets, IGNORE)?;
    let weighted = g.scale(loss_cot, m.cfg.lambda_cot);
    let mut total = g.add(loss_det, weighted)?;
    let mut loss_aux = None;
    if aux_coeff != 0.0 {
        let mut terms = Vec::new();
        for l in stack.router_logits.iter().flatten() {
            terms.push(routing_alignment_loss(g, *l, sample.label, aux_coeff)?);
        }
        if let Some((&first, rest)) = terms.split_first() {
            let mut aux = first;
            for &t in rest {
                aux = g.add(aux, t)?;
            }
            total = g.add(total, aux)?;
            loss_aux = Some(aux);
        }
    }
    Ok(ForwardOut {
        loss_det,
        loss_cot,
        loss_aux,
        total,
        decisions: stack.decisions,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub text: String,
    pub ids: Vec<usize>,
    pub decisions: Vec<RoutingDecision>,
}

fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding from BOS until EOS or `max_len` generated tokens.
pub fn generate_full(m: &Model, sample: &NewsSample, max_len: usize) -> Result<Generation> {
    let mut g = Graph::new(&m.store);
    let x = encode(&mut g, m, sample)?;
    let mut no_rng = crate::rng::rng_for(0, &[]);
    let stack = moe_stack(&mut g, m, x, &sample.id, false, &mut no_rng)?;
    let memory = layer_norm(&mut g, &m.params.mem_ln, stack.output)?;
    let limit = max_len.min(m.cfg.max_len);
    let mut input = vec![BOS];
    let mut out = Vec::new();
    while out.len() < limit {
        let logits = decode(&mut g, m, memory, &input)?;
        let v = m.cfg.vocab_size;
        let vals = g.value(logits);
        let last = &vals[vals.len() - v..];
        let next = argmax_row(last);
        out.push(next);
        if next == EOS {
            break;
        }
        input.push(next);
    }
    Ok(Generation {
        text: m.vocab.detokenize(&out),
        ids: out,
        decisions: stack.decisions,
    })
}

pub fn generate(m: &Model, sample: &NewsSample, max_len: usize) -> Result<String> {
    generate_full(m, sample, max_len).map(|g| g.text)
}
