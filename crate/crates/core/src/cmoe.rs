//! Category-aware mixture of experts: three gated feed-forward experts and a
//! softmax router that hard-selects one expert per sequence.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Category;
use crate::error::{Error, Result};
use crate::ndtensor::{Graph, ParamId, ParamStore, Tensor, Var};

pub const NUM_EXPERTS: usize = 3;

/// Checkpoint names of the experts, in routing index order.
pub const EXPERT_NAMES: [&str; NUM_EXPERTS] = ["reality", "deception", "synthesis"];

pub(crate) fn init_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let normal = Normal::new(0.0, 1.0 / (rows as f64).sqrt()).expect("valid std");
    Tensor::from_fn(&[rows, cols], |_| normal.sample(rng))
}

/// Parameter handles of one gated-FFN expert.
#[derive(Clone, Debug)]
pub struct ExpertParams {
    pub w_a: ParamId,
    pub b_a: ParamId,
    pub w_b: ParamId,
    pub b_b: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
}

impl ExpertParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        hidden: usize,
        expanded: usize,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(ExpertParams {
            w_a: store.add(format!("{prefix}.W_a"), init_matrix(hidden, expanded, rng))?,
            b_a: store.add(format!("{prefix}.b_a"), Tensor::zeros(&[expanded]))?,
            w_b: store.add(format!("{prefix}.W_b"), init_matrix(hidden, expanded, rng))?,
            b_b: store.add(format!("{prefix}.b_b"), Tensor::zeros(&[expanded]))?,
            w_out: store.add(format!("{prefix}.W_out"), init_matrix(expanded, hidden, rng))?,
            b_out: store.add(format!("{prefix}.b_out"), Tensor::zeros(&[hidden]))?,
        })
    }

    pub fn ids(&self) -> [ParamId; 6] {
        [self.w_a, self.b_a, self.w_b, self.b_b, self.w_out, self.b_out]
    }

    pub fn from_store(store: &ParamStore, prefix: &str) -> Result<Self> {
        let get = |n: &str| {
            store
                .id(&format!("{prefix}.{n}"))
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {prefix}.{n}")))
        };
        Ok(ExpertParams {
            w_a: get("W_a")?,
            b_a: get("b_a")?,
            w_b: get("W_b")?,
            b_b: get("b_b")?,
            w_out: get("W_out")?,
            b_out: get("b_out")?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct RouterParams {
    pub w: ParamId,
    pub b: ParamId,
}

impl RouterParams {
    pub fn register<R: Rng + ?Sized>(store: &mut ParamStore, prefix: &str, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(RouterParams {
            w: store.add(format!("{prefix}.W"), init_matrix(hidden, NUM_EXPERTS, rng))?,
            b: store.add(format!("{prefix}.b"), Tensor::zeros(&[NUM_EXPERTS]))?,
        })
    }
}

/// One C-MoE layer. With a single expert and no router it degenerates to the
/// always-selected FFN used by the "without MoE" ablation.
#[derive(Clone, Debug)]
pub struct CMoELayer {
    pub experts: Vec<ExpertParams>,
    pub router: Option<RouterParams>,
    pub dropout_rate: f64,
    pub gate_scaling: bool,
}

impl CMoELayer {
    #[allow(clippy::too_many_arguments)]
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        layer: usize,
        hidden: usize,
        expansion_ratio: usize,
        moe_enabled: bool,
        dropout_rate: f64,
        gate_scaling: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let n = if moe_enabled { NUM_EXPERTS } else { 1 };
        let experts = (0..n)
            .map(|e| {
                ExpertParams::register(
                    store,
                    &format!("cmoe.{layer}.{}", EXPERT_NAMES[e]),
                    hidden,
                    expansion_ratio * hidden,
                    rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let router = if moe_enabled {
            Some(RouterParams::register(store, &format!("cmoe.{layer}.router"), hidden, rng)?)
        } else {
            None
        };
        Ok(CMoELayer {
            experts,
            router,
            dropout_rate,
            gate_scaling,
        })
    }

    pub fn from_store(
        store: &ParamStore,
        layer: usize,
        moe_enabled: bool,
        dropout_rate: f64,
        gate_scaling: bool,
    ) -> Result<Self> {
        let n = if moe_enabled { NUM_EXPERTS } else { 1 };
        let experts = (0..n)
            .map(|e| ExpertParams::from_store(store, &format!("cmoe.{layer}.{}", EXPERT_NAMES[e])))
            .collect::<Result<Vec<_>>>()?;
        let router = if moe_enabled {
            let get = |n: &str| {
                store
                    .id(&format!("cmoe.{layer}.router.{n}"))
                    .ok_or_else(|| Error::Checkpoint(format!("missing parameter cmoe.{layer}.router.{n}")))
            };
            Some(RouterParams { w: get("W")?, b: get("b")? })
        } else {
            None
        };
        Ok(CMoELayer {
            experts,
            router,
            dropout_rate,
            gate_scaling,
        })
    }
}

/// Router output for one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub weights: [f64; NUM_EXPERTS],
    pub selected: usize,
    pub sequence_id: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Pooling {
    #[default]
    Mean,
}

/// Index of the largest weight; ties go to the lowest index.
pub fn argmax_lowest(weights: &[f64]) -> usize {
    let mut best = 0;
    for (i, &w) in weights.iter().enumerate().skip(1) {
        if w > weights[best] {
            best = i;
        }
    }
    best
}

pub struct Routed {
    pub logits: Var,
    pub probs: Var,
    pub decision: RoutingDecision,
}

/// `Dropout(SiLU(X W_a + b_a) ⊙ sigmoid(X W_b + b_b)) W_out + b_out`
pub fn expert_forward<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    p: &ExpertParams,
    x: Var,
    dropout_rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let w_a = g.param(p.w_a);
    let b_a = g.param(p.b_a);
    let w_b = g.param(p.w_b);
    let b_b = g.param(p.b_b);
    let w_out = g.param(p.w_out);
    let b_out = g.param(p.b_out);
    let ua = g.matmul(x, w_a)?;
    let ua = g.add_row(ua, b_a)?;
    let u = g.silu(ua);
    let vb = g.matmul(x, w_b)?;
    let vb = g.add_row(vb, b_b)?;
    let v = g.sigmoid(vb);
    let y = g.mul(u, v)?;
    let y = g.dropout(y, dropout_rate, training, rng)?;
    let o = g.matmul(y, w_out)?;
    g.add_row(o, b_out)
}

/// Pools the sequence, applies the linear router and softmax, and picks the
/// argmax expert.
pub fn route(g: &mut Graph<'_>, r: &RouterParams, x: Var, pooling: Pooling) -> Result<Routed> {
    if g.shape(x).first().copied().unwrap_or(0) == 0 {
        return Err(Error::Data("cannot route an empty sequence".into()));
    }
    let pooled = match pooling {
        Pooling::Mean => g.mean_rows(x)?,
    };
    let w = g.param(r.w);
    let b = g.param(r.b);
    let logits = g.matmul(pooled, w)?;
    let logits = g.add_row(logits, b)?;
    let probs = g.softmax(logits, false);
    let pv = g.value(probs);
    let weights = [pv[0], pv[1], pv[2]];
    Ok(Routed {
        logits,
        probs,
        decision: RoutingDecision {
            selected: argmax_lowest(&weights),
            weights,
            sequence_id: String::new(),
        },
    })
}

pub struct MoeOutput {
    pub output: Var,
    pub decision: RoutingDecision,
    /// Router logits, absent for the single-expert ablation layer.
    pub router_logits: Option<Var>,
}

/// Routes `x` and evaluates only the selected expert. With gate scaling the
/// expert output is multiplied by its routing probability.
pub fn cmoe_forward<R: Rng + ?Sized>(
    g: &mut Graph<'_>,
    layer: &CMoELayer,
    x: Var,
    training: bool,
    rng: &mut R,
) -> Result<MoeOutput> {
    let Some(router) = &layer.router else {
        let output = expert_forward(g, &layer.experts[0], x, layer.dropout_rate, training, rng)?;
        return Ok(MoeOutput {
            output,
            decision: RoutingDecision {
                weights: [1.0, 0.0, 0.0],
                selected: 0,
                sequence_id: String::new(),
            },
            router_logits: None,
        });
    };
    let routed = route(g, router, x, Pooling::Mean)?;
    let e = routed.decision.selected;
    let expert_out = expert_forward(g, &layer.experts[e], x, layer.dropout_rate, training, rng)?;
    let output = if layer.gate_scaling {
        let gate = g.select(routed.probs, e)?;
        g.scale_by(gate, expert_out)?
    } else {
        expert_out
    };
    Ok(MoeOutput {
        output,
        decision: routed.decision,
        router_logits: Some(routed.logits),
    })
}

/// `coeff · CE(router distribution, expert index of label)`; exactly zero when
/// `coeff` is zero.
pub fn routing_alignment_loss(g: &mut Graph<'_>, router_logits: Var, label: Category, coeff: f64) -> Result<Var> {
    let ce = g.cross_entropy(router_logits, &[label.index()], usize::MAX)?;
    Ok(g.scale(ce, coeff))
}
