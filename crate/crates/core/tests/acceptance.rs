//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Pass criterion numbers as
//! arguments to run a subset, e.g. `cargo test --test acceptance -- 2 6`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;
use std::time::Instant;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use umfdet::cmoe::{cmoe_forward, expert_forward, route, CMoELayer, Pooling, RouterParams, NUM_EXPERTS};
use umfdet::cot::{
    extract_entities, generate_with_qc, parse_cot, validate_cot, GenClient, GenRequest, Gazetteer, MockClient,
    QcConfig, Verdict,
};
use umfdet::data::{
    manifest_to_string, parse_manifest, similarity_gate, split, synth_toy_corpus, verify_omnifake, Category,
    CorpusStats, ImagePayload, ManipulationAnnotation, ManipulationKind, NewsSample, RawImage, SplitSpec, Splits,
};
use umfdet::evalkit::{compute_metrics, evaluate, EvalReport};
use umfdet::instruct::{InstructionTemplate, Vocabulary};
use umfdet::model::{
    attention, build_target, decode, encode, forward_train, target_text, AttnParams, Model, ModelConfig,
};
use umfdet::ndtensor::{Graph, ParamStore, Tensor, Var};
use umfdet::par::Exec;
use umfdet::rng::rng_for;
use umfdet::textforge::{candidate_keywords, keyword_distortion, pure_fake_rewrite, AntonymLexicon, DistortMode};
use umfdet::trainer::{ablate, ablation_configs, ablation_to_csv, config_hash, train, TrainConfig};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const GRAD_SEEDS: u64 = 100;
const TOY_SEED: u64 = 7;

static COMPARED: AtomicUsize = AtomicUsize::new(0);
static SKIPPED: AtomicUsize = AtomicUsize::new(0);

// ---------------------------------------------------------------- helpers

fn randn(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, randn(rng, n)).unwrap()
}

/// Random fixed projection to a scalar: `mean(out ⊙ R)`.
fn project(g: &mut Graph<'_>, out: Var, seed: u64) -> Var {
    let shape = g.shape(out).to_vec();
    let n = shape.iter().product();
    let r = randn(&mut rng_for(seed, &[0xfeed]), n);
    let r = g.constant(&shape, r).unwrap();
    let m = g.mul(out, r).unwrap();
    g.mean(m).unwrap()
}

trait Holder {
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
}

impl Holder for ParamStore {
    fn store(&self) -> &ParamStore {
        self
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        self
    }
}

impl Holder for Model {
    fn store(&self) -> &ParamStore {
        &self.store
    }
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

/// Loss closure: returns the scalar loss and a tag of discrete choices
/// (routing decisions). Coordinates whose perturbation changes the tag are
/// skipped, since the loss is not differentiable across a routing switch.
type LossFn<'f, T> = &'f dyn Fn(&T, &mut Graph<'_>) -> (Var, Vec<usize>);

fn eval_loss<T: Holder>(h: &T, f: LossFn<'_, T>) -> (f64, Vec<usize>) {
    let mut g = Graph::new(h.store());
    let (l, tag) = f(h, &mut g);
    (g.scalar(l), tag)
}

/// Worst per-tensor relative error `‖a−n‖ / max(‖a‖+‖n‖, 1e-6)` between the
/// analytic gradient and central differences, over up to `per_tensor`
/// random coordinates of every parameter.
fn gradcheck<T: Holder>(h: &mut T, per_tensor: usize, seed: u64, f: LossFn<'_, T>) -> (f64, String) {
    let (grads, base_tag) = {
        let mut g = Graph::new(h.store());
        let (l, tag) = f(h, &mut g);
        (g.backward(l).unwrap(), tag)
    };
    let ids: Vec<_> = h.store().iter().map(|(id, name, t)| (id, name.to_string(), t.numel())).collect();
    let mut rng = rng_for(seed, &[0xc0de]);
    let (mut worst, mut worst_name) = (0.0f64, String::new());
    for (id, name, n) in ids {
        let coords: Vec<usize> = if n <= per_tensor {
            (0..n).collect()
        } else {
            sample_indices(&mut rng, n, per_tensor).into_vec()
        };
        let (mut an, mut nu) = (Vec::new(), Vec::new());
        for i in coords {
            let orig = h.store().get(id).values()[i];
            h.store_mut().get_mut(id).values_mut()[i] = orig + H;
            let (lp, tp) = eval_loss(h, f);
            h.store_mut().get_mut(id).values_mut()[i] = orig - H;
            let (lm, tm) = eval_loss(h, f);
            h.store_mut().get_mut(id).values_mut()[i] = orig;
            if tp != base_tag || tm != base_tag {
                SKIPPED.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            COMPARED.fetch_add(1, Ordering::Relaxed);
            an.push(grads.get(id).map_or(0.0, |g| g[i]));
            nu.push((lp - lm) / (2.0 * H));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = an.iter().zip(&nu).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / (norm(&an) + norm(&nu)).max(1e-6);
        if rel > worst {
            worst = rel;
            worst_name = name;
        }
    }
    (worst, worst_name)
}

fn toy_splits() -> &'static Splits {
    static S: OnceLock<Splits> = OnceLock::new();
    S.get_or_init(|| {
        let corpus = synth_toy_corpus(900, 0.9, TOY_SEED).unwrap();
        split(&corpus, &SplitSpec { ratios: (8, 1, 1), seed: TOY_SEED }).unwrap()
    })
}

fn default_report() -> &'static EvalReport {
    static R: OnceLock<EvalReport> = OnceLock::new();
    R.get_or_init(|| {
        let s = toy_splits();
        let (model, _) = train(&TrainConfig::default(), &s.train, &s.val, Exec::Parallel).unwrap();
        evaluate(&model, &s.test, model.cfg.max_len, Exec::Parallel).unwrap()
    })
}

fn tiny_model(seed: u64, depth_moe: usize, gate_scaling: bool) -> Model {
    let cfg = ModelConfig {
        hidden: 8,
        visual_width: 4,
        depth_enc: 1,
        depth_moe,
        depth_dec: 1,
        heads: 2,
        max_len: 24,
        max_visual_tokens: 8,
        dropout_rate: 0.0,
        gate_scaling,
        seed,
        ..ModelConfig::default()
    };
    let vocab = Vocabulary::build(["quiet harbor fire photo shows grid title fine"], 1, 100);
    let template = InstructionTemplate::parse("[TASK]\nt\n[OPT]\no\n[QUE]\n{TITLE}\n[RESP]\nr").unwrap();
    let mut m = Model::new(cfg, vocab, template).unwrap();
    // Spread the weights so the check is not dominated by tiny gradients.
    let mut rng = rng_for(seed, &[0xbeef]);
    let ids: Vec<_> = m.store.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        for v in m.store.get_mut(id).values_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += 0.15 * z;
        }
    }
    m
}

fn tiny_sample(seed: u64) -> NewsSample {
    let mut rng = rng_for(seed, &[0x5a]);
    let image = if seed.is_multiple_of(2) {
        ImagePayload::Feat((0..3).map(|_| randn(&mut rng, 4)).collect())
    } else {
        ImagePayload::Raw(RawImage {
            channels: 1,
            size: 16,
            data: (0..256).map(|_| rng.random_range(0..=255u8)).collect(),
        })
    };
    NewsSample {
        id: format!("g{seed}"),
        title: "quiet harbor fire".into(),
        image,
        label: Category::ALL[(seed % 3) as usize],
        manipulation: ManipulationAnnotation::none(),
        cot: None,
    }
}

// ------------------------------------------------------------ criterion 1

type OpCase = (ParamStore, Box<dyn Fn(&ParamStore, &mut Graph<'_>) -> (Var, Vec<usize>)>);

fn op_case(op: &str, seed: u64) -> OpCase {
    let mut rng = rng_for(seed, &[0x0b]);
    let (m, k, n) = (rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(2..=4));
    let mut s = ParamStore::new();
    let ps = seed;
    macro_rules! p {
        ($name:expr, $shape:expr) => {
            s.add($name, tensor(&mut rng, &$shape)).unwrap()
        };
    }
    let f: Box<dyn Fn(&ParamStore, &mut Graph<'_>) -> (Var, Vec<usize>)> = match op {
        "matmul" => {
            let (a, b) = (p!("a", [m, k]), p!("b", [k, n]));
            Box::new(move |_, g| {
                let (a, b) = (g.param(a), g.param(b));
                let y = g.matmul(a, b).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "matmul_t" => {
            let (a, b) = (p!("a", [m, k]), p!("b", [n, k]));
            Box::new(move |_, g| {
                let (a, b) = (g.param(a), g.param(b));
                let y = g.matmul_t(a, b).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "add" | "mul" => {
            let (a, b) = (p!("a", [m, n]), p!("b", [m, n]));
            let is_add = op == "add";
            Box::new(move |_, g| {
                let (a, b) = (g.param(a), g.param(b));
                let y = if is_add { g.add(a, b) } else { g.mul(a, b) }.unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "add_row" => {
            let (a, b) = (p!("a", [m, n]), p!("b", [n]));
            Box::new(move |_, g| {
                let (a, b) = (g.param(a), g.param(b));
                let y = g.add_row(a, b).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "scale" => {
            let a = p!("a", [m, n]);
            let c: f64 = rng.random_range(-2.0..2.0);
            Box::new(move |_, g| {
                let a = g.param(a);
                let y = g.scale(a, c);
                (project(g, y, ps), vec![])
            })
        }
        "scale_by" => {
            let (c, a) = (p!("c", [1]), p!("a", [m, n]));
            Box::new(move |_, g| {
                let (c, a) = (g.param(c), g.param(a));
                let y = g.scale_by(c, a).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "silu" | "sigmoid" => {
            let a = p!("a", [m, n]);
            let silu = op == "silu";
            Box::new(move |_, g| {
                let a = g.param(a);
                let y = if silu { g.silu(a) } else { g.sigmoid(a) };
                (project(g, y, ps), vec![])
            })
        }
        "softmax" | "softmax_causal" => {
            let causal = op == "softmax_causal";
            let a = if causal { p!("a", [n, n]) } else { p!("a", [m, n]) };
            Box::new(move |_, g| {
                let a = g.param(a);
                let y = g.softmax(a, causal);
                (project(g, y, ps), vec![])
            })
        }
        "dropout" => {
            let a = p!("a", [m, n]);
            Box::new(move |_, g| {
                let a = g.param(a);
                let y = g.dropout(a, 0.3, true, &mut rng_for(ps, &[0xd0])).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "cross_entropy" => {
            let a = p!("logits", [m + 1, n]);
            let targets: Vec<usize> = (0..=m)
                .map(|i| if i == 1 { usize::MAX } else { rng.random_range(0..n) })
                .collect();
            Box::new(move |_, g| {
                let a = g.param(a);
                (g.cross_entropy(a, &targets, usize::MAX).unwrap(), vec![])
            })
        }
        "concat_rows" => {
            let (a, b) = (p!("a", [m, n]), p!("b", [k, n]));
            Box::new(move |_, g| {
                let (a, b) = (g.param(a), g.param(b));
                let y = g.concat_rows(&[a, b]).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "concat_cols" => {
            let (a, b) = (p!("a", [m, n]), p!("b", [m, k]));
            Box::new(move |_, g| {
                let (a, b) = (g.param(a), g.param(b));
                let y = g.concat_cols(&[a, b]).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "slice_cols" => {
            let a = p!("a", [m, n + 2]);
            let start = rng.random_range(0..=2);
            Box::new(move |_, g| {
                let a = g.param(a);
                let y = g.slice_cols(a, start, n).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "embedding" => {
            let t = p!("table", [n + 1, k]);
            let ids: Vec<usize> = (0..m + 2).map(|_| rng.random_range(0..=n)).collect();
            Box::new(move |_, g| {
                let t = g.param(t);
                let y = g.embedding(t, &ids).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "layer_norm" => {
            let (x, ga, b) = (p!("x", [m, n + 1]), p!("gain", [n + 1]), p!("bias", [n + 1]));
            Box::new(move |_, g| {
                let (x, ga, b) = (g.param(x), g.param(ga), g.param(b));
                let y = g.layer_norm(x, ga, b).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "mean" => {
            let a = p!("a", [m, n]);
            Box::new(move |_, g| {
                let a = g.param(a);
                let y = g.mean(a).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "mean_rows" => {
            let a = p!("a", [m, n]);
            Box::new(move |_, g| {
                let a = g.param(a);
                let y = g.mean_rows(a).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "select" => {
            let a = p!("a", [m, n]);
            let idx = rng.random_range(0..m * n);
            Box::new(move |_, g| {
                let a = g.param(a);
                let y = g.select(a, idx).unwrap();
                let y2 = g.mul(y, y).unwrap();
                (project(g, y2, ps), vec![])
            })
        }
        "attention" => {
            let h = 4;
            let ap = AttnParams {
                wq: p!("wq", [h, h]),
                wk: p!("wk", [h, h]),
                wv: p!("wv", [h, h]),
                wo: p!("wo", [h, h]),
            };
            let (q, kv) = (p!("q", [m + 1, h]), p!("kv", [k + 1, h]));
            let causal = seed.is_multiple_of(2);
            Box::new(move |_, g| {
                let (q, kv) = (g.param(q), g.param(kv));
                let kv = if causal { q } else { kv };
                let y = attention(g, &ap, q, kv, 2, causal).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "expert" => {
            let layer = CMoELayer::register(&mut s, 0, 4, 2, true, 0.25, true, &mut rng).unwrap();
            let x = p!("x", [m + 1, 4]);
            Box::new(move |_, g| {
                let xv = g.param(x);
                let y = expert_forward(g, &layer.experts[1], xv, 0.25, true, &mut rng_for(ps, &[0xe0])).unwrap();
                (project(g, y, ps), vec![])
            })
        }
        "cmoe" => {
            let gate = seed.is_multiple_of(2);
            let layer = CMoELayer::register(&mut s, 0, 4, 2, true, 0.0, gate, &mut rng).unwrap();
            let x = p!("x", [m + 1, 4]);
            Box::new(move |_, g| {
                let xv = g.param(x);
                let out = cmoe_forward(g, &layer, xv, false, &mut rng_for(0, &[])).unwrap();
                (project(g, out.output, ps), vec![out.decision.selected])
            })
        }
        other => panic!("unknown op {other}"),
    };
    (s, f)
}

const OPS: &[&str] = &[
    "matmul",
    "matmul_t",
    "add",
    "add_row",
    "mul",
    "scale",
    "scale_by",
    "silu",
    "sigmoid",
    "softmax",
    "softmax_causal",
    "dropout",
    "cross_entropy",
    "concat_rows",
    "concat_cols",
    "slice_cols",
    "embedding",
    "layer_norm",
    "mean",
    "mean_rows",
    "select",
    "attention",
    "expert",
    "cmoe",
];

fn model_checks(seed: u64) -> Vec<(&'static str, f64, String)> {
    let mut out = Vec::new();
    let sample = tiny_sample(seed);
    let mut model = tiny_model(seed, 1 + (seed % 2) as usize, !seed.is_multiple_of(3));
    let tgt = build_target(&model.vocab, &sample.id, &target_text(sample.label, Some("photo shows grid [image]. title fine [text]."))).unwrap();

    let enc = |m: &Model, g: &mut Graph<'_>| {
        let x = encode(g, m, &sample).unwrap();
        (project(g, x, seed), vec![])
    };
    let (e, n) = gradcheck(&mut model, 2, seed, &enc);
    out.push(("encoder", e, n));

    let mem: Vec<f64> = randn(&mut rng_for(seed, &[0x3e]), 5 * 8);
    let dec = |m: &Model, g: &mut Graph<'_>| {
        let memory = g.constant(&[5, 8], mem.clone()).unwrap();
        let logits = decode(g, m, memory, &tgt.dec_input).unwrap();
        (g.cross_entropy(logits, &tgt.ids, usize::MAX).unwrap(), vec![])
    };
    let (e, n) = gradcheck(&mut model, 2, seed, &dec);
    out.push(("decoder", e, n));

    let full = |m: &Model, g: &mut Graph<'_>| {
        let o = forward_train(g, m, &sample, &tgt, 0.3, false, &mut rng_for(0, &[])).unwrap();
        (o.total, o.decisions.iter().map(|d| d.selected).collect())
    };
    let (e, n) = gradcheck(&mut model, 2, seed, &full);
    out.push(("full model", e, n));
    out
}

fn c1_gradients() -> Outcome {
    let t = Instant::now();
    let mut worst: BTreeMap<&str, (f64, u64, String)> = BTreeMap::new();
    for seed in 0..GRAD_SEEDS {
        for op in OPS {
            let (mut s, f) = op_case(op, seed);
            let (e, name) = gradcheck(&mut s, 6, seed, &*f);
            let w = worst.entry(op).or_insert((0.0, 0, String::new()));
            if e >= w.0 {
                *w = (e, seed, name);
            }
        }
        for (what, e, name) in model_checks(seed) {
            let w = worst.entry(what).or_insert((0.0, 0, String::new()));
            if e >= w.0 {
                *w = (e, seed, name);
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let bad: Vec<String> = worst
        .iter()
        .filter(|(_, w)| !(w.0 < GRAD_TOL))
        .map(|(op, w)| format!("{op} rel {:.2e} (seed {}, {})", w.0, w.1, w.2))
        .collect();
    ensure!(bad.is_empty(), "{}", bad.join("; "));
    ensure!(secs < 60.0, "gradient suite took {secs:.1}s (limit 60s)");
    let max = worst.values().map(|w| w.0).fold(0.0, f64::max);
    let (compared, skipped) = (COMPARED.load(Ordering::Relaxed), SKIPPED.load(Ordering::Relaxed));
    ensure!(skipped * 20 < compared, "{skipped} coordinates skipped at routing switches vs {compared} compared");
    Ok(format!(
        "{} checks x {GRAD_SEEDS} seeds, {compared} coordinates ({skipped} skipped at routing switches), max rel err {max:.2e} < {GRAD_TOL:.0e}, {secs:.1}s < 60s",
        worst.len()
    ))
}

// ------------------------------------------------------------ criterion 2

fn router_store(logits: &[f64]) -> (ParamStore, RouterParams) {
    let mut s = ParamStore::new();
    let w = s.add("r.W", Tensor::zeros(&[4, NUM_EXPERTS])).unwrap();
    let b = s.add("r.b", Tensor::new(&[NUM_EXPERTS], logits.to_vec()).unwrap()).unwrap();
    (s, RouterParams { w, b })
}

fn selected_for(logits: &[f64]) -> usize {
    let (s, r) = router_store(logits);
    let mut g = Graph::new(&s);
    let x = g.constant(&[2, 4], vec![0.5; 8]).unwrap();
    route(&mut g, &r, x, Pooling::Mean).unwrap().decision.selected
}

fn c2_routing() -> Outcome {
    let mut rng = rng_for(2, &[]);
    for case in 0..10_000 {
        let logits: Vec<f64> = (0..NUM_EXPERTS).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c: f64 = rng.random_range(-50.0..50.0);
        let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
        ensure!(
            selected_for(&logits) == selected_for(&shifted),
            "case {case}: selection changed under shift {c}"
        );
    }
    let mut router_nonzero = 0;
    let trials = 300;
    for t in 0..trials {
        for gate in [false, true] {
            let mut s = ParamStore::new();
            let mut rng = rng_for(t, &[gate as u64]);
            let layer = CMoELayer::register(&mut s, 0, 6, 2, true, 0.0, gate, &mut rng).unwrap();
            let len = rng.random_range(1..6);
            let x = randn(&mut rng, len * 6);
            let mut g = Graph::new(&s);
            let xv = g.constant(&[len, 6], x).unwrap();
            let out = cmoe_forward(&mut g, &layer, xv, true, &mut rng_for(t, &[9])).unwrap();
            let loss = project(&mut g, out.output, t);
            let grads = g.backward(loss).unwrap();
            let touched: Vec<usize> = (0..NUM_EXPERTS)
                .filter(|&e| layer.experts[e].ids().iter().any(|&id| grads.touched(id)))
                .collect();
            ensure!(
                touched == vec![out.decision.selected],
                "trial {t}: experts {touched:?} received gradient, selected {}",
                out.decision.selected
            );
            let r = layer.router.as_ref().unwrap();
            let router_touched = grads.touched(r.w) || grads.touched(r.b);
            if gate {
                router_nonzero += usize::from(router_touched);
            } else {
                ensure!(!router_touched, "trial {t}: router gradient non-zero without gate scaling");
            }
        }
    }
    ensure!(router_nonzero == trials as usize, "router gradient zero in {} gated trials", trials as usize - router_nonzero);
    Ok(format!(
        "10^4 shifts exact; one expert with gradient in {} sequences; router grad 0 ungated, non-zero in {trials}/{trials} gated",
        2 * trials
    ))
}

// ------------------------------------------------------------ criterion 3

fn small_train_config() -> TrainConfig {
    TrainConfig {
        model: ModelConfig {
            hidden: 16,
            visual_width: 16,
            depth_enc: 1,
            depth_dec: 1,
            heads: 2,
            ..ModelConfig::default()
        },
        steps: 25,
        batch_size: 4,
        ..TrainConfig::default()
    }
}

fn c3_loss_decomposition() -> Outcome {
    let corpus = synth_toy_corpus(60, 0.9, 3).unwrap();
    let mut worst = 0.0f64;
    let mut steps = 0;
    for (lambda, aux) in [(1.0, 0.0), (0.35, 0.0), (2.5, 0.4)] {
        let mut cfg = small_train_config();
        cfg.model.lambda_cot = lambda;
        cfg.routing_aux_coeff = aux;
        let (_, hist) = train(&cfg, &corpus, &[], Exec::Parallel).map_err(|e| e.to_string())?;
        for r in &hist {
            let err = (r.total - (r.loss_det + lambda * r.loss_cot + r.loss_aux)).abs();
            worst = worst.max(err);
            steps += 1;
        }
    }
    ensure!(worst <= 1e-12, "logged total deviates by {worst:e}");
    let mut zero = small_train_config();
    zero.model.lambda_cot = 0.0;
    let masked = TrainConfig {
        mask_think: true,
        ..small_train_config()
    };
    let (a, ha) = train(&zero, &corpus, &[], Exec::Parallel).map_err(|e| e.to_string())?;
    let (b, hb) = train(&masked, &corpus, &[], Exec::Parallel).map_err(|e| e.to_string())?;
    let bits = |m: &Model| -> Vec<u64> { m.tensors().iter().flat_map(|t| t.values.iter().map(|v| v.to_bits())).collect() };
    ensure!(bits(&a) == bits(&b), "λ=0 and think-masked parameters differ");
    let det = |h: &[umfdet::trainer::HistoryRow]| h.iter().map(|r| r.loss_det.to_bits()).collect::<Vec<_>>();
    ensure!(det(&ha) == det(&hb), "λ=0 and think-masked detection losses differ");
    Ok(format!(
        "max |total - (det + λ·cot + aux)| = {worst:.1e} over {steps} steps; λ=0 ≡ masked think bitwise after {} steps",
        zero.steps
    ))
}

// ------------------------------------------------------------ criterion 4

fn c4_toy_learning() -> Outcome {
    let s = toy_splits();
    let t = Instant::now();
    let report = default_report();
    let secs = t.elapsed().as_secs_f64();
    let acc = report.metrics.accuracy;
    let cfg = TrainConfig::default();
    ensure!(acc >= 0.90, "cue 0.9 test accuracy {acc:.4} < 0.90");
    ensure!(secs < 600.0, "default training + eval took {secs:.0}s (limit 600s)");

    let corpus0 = synth_toy_corpus(900, 0.0, TOY_SEED).unwrap();
    let s0 = split(&corpus0, &SplitSpec { ratios: (8, 1, 1), seed: TOY_SEED }).unwrap();
    let (m0, _) = train(&cfg, &s0.train, &s0.val, Exec::Parallel).map_err(|e| e.to_string())?;
    let r0 = evaluate(&m0, &s0.test, m0.cfg.max_len, Exec::Parallel).map_err(|e| e.to_string())?;
    let acc0 = r0.metrics.accuracy;
    ensure!((0.25..=0.45).contains(&acc0), "cue 0 accuracy {acc0:.4} outside [0.25, 0.45]");
    Ok(format!(
        "cue 0.9: acc {acc:.4} >= 0.90 after {} steps in {secs:.0}s < 600s (n_test {}); cue 0: acc {acc0:.4} in [0.25, 0.45]",
        cfg.steps,
        s.test.len()
    ))
}

// ------------------------------------------------------------ criterion 5

fn routing_rows_hold(report: &EvalReport, test: &[NewsSample]) -> std::result::Result<(), String> {
    for layer in &report.routing.layers {
        for c in Category::ALL {
            let n = test.iter().filter(|s| s.label == c).count();
            let row = layer.counts[c.index()];
            ensure!(row.iter().sum::<usize>() == n, "layer {} row {c} does not sum to {n}", layer.layer);
            let pct: f64 = layer.percentages[c.index()].iter().sum();
            ensure!(n == 0 || (pct - 100.0).abs() <= 0.01, "layer {} row {c} sums to {pct}%", layer.layer);
        }
    }
    Ok(())
}

fn c5_routing_specialization() -> Outcome {
    let s = toy_splits();
    let cfg = TrainConfig {
        routing_aux_coeff: 0.5,
        ..TrainConfig::default()
    };
    let (model, _) = train(&cfg, &s.train, &s.val, Exec::Parallel).map_err(|e| e.to_string())?;
    let report = evaluate(&model, &s.test, model.cfg.max_len, Exec::Parallel).map_err(|e| e.to_string())?;
    routing_rows_hold(&report, &s.test)?;
    let shares: Vec<f64> = (0..report.routing.layers.len())
        .map(|l| report.routing.share(l, Category::AiSynthesized, 2))
        .collect();
    ensure!(
        shares.iter().all(|&x| x >= 0.85),
        "ai_synthesized -> synthesis expert shares per layer {shares:?}, need >= 0.85"
    );
    let off = default_report();
    routing_rows_hold(off, &s.test)?;
    Ok(format!(
        "aux 0.5: ai_synthesized routed to synthesis expert {} per layer (>= 0.85), acc {:.4}; aux off: report rows consistent",
        shares.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/"),
        report.metrics.accuracy
    ))
}

// ------------------------------------------------------------ criterion 6

fn brute_force(pairs: &[(Category, Option<Category>)]) -> Vec<(f64, f64, f64)> {
    Category::ALL
        .iter()
        .map(|&c| {
            let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
            for &(gold, pred) in pairs {
                for k in Category::ALL {
                    if k != c {
                        continue;
                    }
                    match (gold == k, pred == Some(k)) {
                        (true, true) => tp += 1,
                        (false, true) => fp += 1,
                        (true, false) => fnn += 1,
                        (false, false) => {}
                    }
                }
            }
            let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let r = if tp + fnn == 0 { 0.0 } else { tp as f64 / (tp + fnn) as f64 };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            (p, r, f)
        })
        .collect()
}

fn c6_metrics() -> Outcome {
    let mut rng = rng_for(6, &[]);
    for case in 0..1000 {
        let n = rng.random_range(1..60);
        let pairs: Vec<(Category, Option<Category>)> = (0..n)
            .map(|_| {
                let g = Category::ALL[rng.random_range(0..3)];
                let p = if rng.random_bool(0.1) { None } else { Some(Category::ALL[rng.random_range(0..3)]) };
                (g, p)
            })
            .collect();
        let m = compute_metrics(&pairs).map_err(|e| e.to_string())?;
        let reference = brute_force(&pairs);
        for (pc, r) in m.per_class.iter().zip(&reference) {
            ensure!((pc.precision, pc.recall, pc.f1) == *r, "case {case}: {pc:?} vs {r:?}");
        }
        let correct = pairs.iter().filter(|(g, p)| Some(*g) == *p).count();
        ensure!(m.accuracy == correct as f64 / n as f64, "case {case}: accuracy");
    }
    use Category::{AiSynthesized as S, HumanCrafted as D, Real as R};
    let m = compute_metrics(&[(R, Some(R)), (R, Some(D)), (D, Some(D)), (S, Some(S))]).map_err(|e| e.to_string())?;
    let got: Vec<(f64, f64, f64)> = m.per_class.iter().map(|c| (c.precision, c.recall, c.f1)).collect();
    ensure!(m.accuracy == 0.75, "hand example accuracy {}", m.accuracy);
    ensure!(
        got == vec![(1.0, 0.5, 2.0 / 3.0), (0.5, 1.0, 2.0 / 3.0), (1.0, 1.0, 1.0)],
        "hand example per-class {got:?}"
    );
    Ok("1000 random vectors match brute force exactly; hand example ACC 0.75 exact".into())
}

// ------------------------------------------------------------ criterion 7

struct Counting<C> {
    inner: C,
    calls: std::sync::atomic::AtomicUsize,
}

impl<C: GenClient> GenClient for Counting<C> {
    fn generate(&self, req: &GenRequest) -> umfdet::Result<String> {
        self.calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
        self.inner.generate(req)
    }
}

fn c7_cot_qc() -> Outcome {
    let qc = QcConfig::default();
    let corpus = synth_toy_corpus(300, 0.8, 70).unwrap();
    let (mut accepted, mut flips, mut fuzz) = (0usize, 0usize, 0usize);
    for (i, s) in corpus.iter().enumerate() {
        let m = extract_entities(&s.title, &qc.gazetteer);
        let bad_first = i % 5;
        let k = 1 + i % 4;
        let client = Counting {
            inner: MockClient {
                malformed_attempts: bad_first,
            },
            calls: 0.into(),
        };
        let rec = generate_with_qc(s, &m, &client, &qc, k).map_err(|e| e.to_string())?;
        let calls = client.calls.load(std::sync::atomic::Ordering::SeqCst);
        fuzz += 1;
        ensure!(calls <= k && rec.attempts_used <= k, "sample {}: {calls} calls with K={k}", s.id);
        ensure!(rec.verdict.is_accepted() == (bad_first < k), "sample {}: verdict {}", s.id, rec.verdict);
        if !rec.verdict.is_accepted() {
            continue;
        }
        accepted += 1;
        // Accepted records satisfy every check.
        ensure!(!rec.grounded_image_span.is_empty() && !rec.grounded_text_span.is_empty(), "{}: spans", s.id);
        ensure!(rec.answer.parse::<Category>().ok() == Some(s.label), "{}: answer {}", s.id, rec.answer);
        let n = umfdet::instruct::token_count(&rec.think);
        ensure!((qc.l_min..=qc.l_max).contains(&n), "{}: think length {n}", s.id);
        ensure!(
            rec.cited_entities.iter().all(|e| m.contains_surface(e) || s.title.contains(e.as_str())),
            "{}: unlinked entity in {:?}",
            s.id,
            rec.cited_entities
        );
        let raw = format!("<think>{}</think><answer>{}</answer>", rec.think, rec.answer);
        let check = |r: &str| validate_cot(&parse_cot(r), &s.title, s.label, &m, &qc).verdict;
        ensure!(check(&raw) == Verdict::Accepted, "{}: reconstructed record rejected", s.id);
        let other = Category::ALL[(s.label.index() + 1) % 3];
        let foreign = ["Elon Musk", "Taylor Swift", "Lionel Messi", "Jane Goodall", "Toronto"]
            .into_iter()
            .find(|e| !s.title.contains(e))
            .unwrap();
        let mutants = [
            ("missing span", raw.replace("[image]", "")),
            ("wrong answer", raw.replace(&format!("<answer>{}", s.label.as_str()), &format!("<answer>{}", other.as_str()))),
            ("over-length", raw.replace("<think>", &format!("<think>{}", "very ".repeat(qc.l_max)))),
            ("unlinked entity", raw.replace("</think>", &format!(" It also mentions {foreign} [text].</think>"))),
        ];
        for (what, bad) in mutants {
            ensure!(matches!(check(&bad), Verdict::Rejected(_)), "{}: {what} not rejected", s.id);
            flips += 1;
        }
    }
    ensure!(accepted > 100, "only {accepted} accepted records");
    Ok(format!(
        "{fuzz} fuzz cases within K calls; {accepted} accepted records pass format, label, length and entity checks; {flips}/{flips} single violations flip the verdict"
    ))
}

// ------------------------------------------------------------ criterion 8

fn fuzz_title(rng: &mut impl Rng, gaz: &[String], lex: &[&str]) -> String {
    const FILL: &[&str] = &[
        "crowd", "rally", "storm", "report", "gathers", "near", "after", "market", "river", "celebrates", "in", "on",
        "police", "school", "bridge", "opens", "closes",
    ];
    let n = rng.random_range(2..9);
    let mut words: Vec<String> = Vec::new();
    for _ in 0..n {
        let w = match rng.random_range(0..10) {
            0..=2 => lex[rng.random_range(0..lex.len())].to_string(),
            3 | 4 => gaz[rng.random_range(0..gaz.len())].clone(),
            _ => FILL[rng.random_range(0..FILL.len())].to_string(),
        };
        words.push(w);
    }
    let mut t = words.join(" ");
    if rng.random_bool(0.5) {
        let mut c = t.chars();
        t = c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default();
    }
    t
}

fn c8_text_fabrication() -> Outcome {
    let gaz = Gazetteer::default();
    let surfaces = gaz.surfaces();
    let lex = AntonymLexicon::default();
    let lex_words = lex.words();
    let mock = MockClient::new();
    let mut rng = rng_for(8, &[]);
    let (mut accepted, mut big_k, mut slices) = (0usize, 0usize, 0usize);
    for i in 0..10_000 {
        let title = fuzz_title(&mut rng, &surfaces, &lex_words);
        let m = extract_entities(&title, &gaz);
        let k = candidate_keywords(&title, &m, &lex).len();
        let mode = if i % 4 == 3 { DistortMode::Phrase } else { DistortMode::Keywords };
        let out = keyword_distortion(&title, &m, &lex, mode, &mut rng_for(8, &[i as u64]));
        let (out_title, log) = match out {
            Some(x) => x,
            None => match pure_fake_rewrite(&format!("f{i}"), &title, &m, &mock, 3) {
                Ok(x) => x,
                Err(_) => continue,
            },
        };
        accepted += 1;
        for e in m.surfaces() {
            ensure!(out_title.contains(e.as_str()), "case {i}: entity {e} lost in {out_title:?} (from {title:?})");
        }
        let chars: Vec<char> = out_title.chars().collect();
        for r in &log.replacements {
            let n = r.replacement.chars().count();
            ensure!(
                r.position + n <= chars.len() && chars[r.position..r.position + n].iter().collect::<String>() == r.replacement,
                "case {i}: replacement {r:?} not at its position in {out_title:?}"
            );
            slices += 1;
        }
        if mode == DistortMode::Keywords && k >= 3 {
            big_k += 1;
            let n = log.replacements.len();
            ensure!((2..=3).contains(&n), "case {i}: |K|={k} but {n} replacements");
        }
    }
    ensure!(accepted > 9_000, "only {accepted} accepted outputs");
    Ok(format!(
        "{accepted} accepted of 10^4: entities preserved 100%, {slices} slice checks exact, 2-3 replacements in all {big_k} cases with |K|>=3"
    ))
}

// ------------------------------------------------------------ criterion 9

fn with_similarity(id: &str, sim: f64) -> NewsSample {
    let mut m = ManipulationAnnotation::of(ManipulationKind::FullGeneration);
    m.similarity = Some(sim);
    NewsSample {
        id: id.into(),
        title: "t".into(),
        image: ImagePayload::Feat(vec![vec![0.0]]),
        label: Category::AiSynthesized,
        manipulation: m,
        cot: None,
    }
}

fn c9_data_layer() -> Outcome {
    let (kept, dropped) = similarity_gate(vec![with_similarity("a", 0.70), with_similarity("b", 0.699)], 0.70);
    ensure!(kept.len() == 1 && kept[0].id == "a", "0.70 not kept");
    ensure!(dropped.len() == 1 && dropped[0].id == "b", "0.699 not dropped");

    let corpus = synth_toy_corpus(300, 0.9, 9).unwrap();
    let sp = split(&corpus, &SplitSpec { ratios: (8, 1, 1), seed: 9 }).map_err(|e| e.to_string())?;
    let ids = |v: &[NewsSample]| v.iter().map(|s| s.id.clone()).collect::<BTreeSet<_>>();
    let (a, b, c) = (ids(&sp.train), ids(&sp.val), ids(&sp.test));
    ensure!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c), "split parts overlap");
    let union: BTreeSet<String> = a.union(&b).chain(c.iter()).cloned().collect();
    ensure!(union == ids(&corpus), "split does not cover the corpus");
    for cat in Category::ALL {
        let count = |v: &[NewsSample]| v.iter().filter(|s| s.label == cat).count();
        ensure!(
            (count(&sp.train), count(&sp.val), count(&sp.test)) == (80, 10, 10),
            "class {cat} split {:?}",
            (count(&sp.train), count(&sp.val), count(&sp.test))
        );
    }

    let text = manifest_to_string(&corpus).map_err(|e| e.to_string())?;
    let back = parse_manifest(&text, Path::new("mem.jsonl")).map_err(|e| e.to_string())?;
    ensure!(back == corpus, "manifest round trip changed samples");
    ensure!(manifest_to_string(&back).map_err(|e| e.to_string())? == text, "manifest bytes changed");

    let stats = CorpusStats {
        real: 49_034,
        human_crafted: 24_726,
        ai_synthesized: 53_523,
        total: 127_283,
        kinds: BTreeMap::new(),
    };
    let line = verify_omnifake(&stats).map_err(|e| e.to_string())?.to_string();
    ensure!(line == "49034 + 24726 + 53523 = 127283", "reporter printed {line}");
    let dir = tempfile::tempdir().unwrap();
    let sp_path = dir.path().join("omnifake.json");
    std::fs::write(&sp_path, serde_json::to_string(&stats).unwrap()).unwrap();
    let out = dir.path().join("out");
    let code = umfdet::cli::run(["umfdet", "stats", "--omnifake", "--data", sp_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    ensure!(code == 0, "stats --omnifake exited {code}");
    let written = std::fs::read_to_string(out.join("omnifake_check.txt")).unwrap();
    ensure!(written.trim() == line, "CLI wrote {written:?}");
    Ok(format!("gate keeps 0.70 drops 0.699; 8:1:1 split exact (80/10/10 per class); manifest round trip identity; {line}"))
}

// ----------------------------------------------------------- criterion 10

fn c10_ablation() -> Outcome {
    let s = toy_splits();
    let base = TrainConfig::default();
    let t = Instant::now();
    let rows = ablate(&base, &s.train, &s.test, Exec::Parallel).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    ensure!(rows.len() == 6, "{} rows", rows.len());
    let cfgs = ablation_configs(&base);
    for (row, (name, cfg)) in rows.iter().zip(&cfgs) {
        ensure!(row.name == *name && row.config_hash == config_hash(cfg), "row {} hash mismatch", row.name);
        for v in [row.accuracy, row.macro_precision, row.macro_recall, row.macro_f1] {
            ensure!((0.0..=1.0).contains(&v), "row {} has metric {v}", row.name);
        }
    }
    let csv = ablation_to_csv(&rows);
    ensure!(csv.lines().count() == 7, "csv has {} lines", csv.lines().count());
    let acc = |n: &str| rows.iter().find(|r| r.name == n).map(|r| r.accuracy).unwrap();
    let (on, off) = (acc("moe_d2-cot_on"), acc("moe_off-cot_on"));
    ensure!(on >= off - 0.02, "MoE depth 2 accuracy {on:.4} < MoE-off {off:.4} - 0.02");
    ensure!(secs < 3600.0, "ablation took {secs:.0}s");
    let summary: Vec<String> = rows.iter().map(|r| format!("{}={:.3}", r.name, r.accuracy)).collect();
    Ok(format!("6 rows in {secs:.0}s < 3600s; {}; d2 {on:.4} >= off {off:.4} - 0.02", summary.join(" ")))
}

// ----------------------------------------------------------- criterion 11

fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |s: &str| d.join(s).display().to_string();
    let tiny = ["--set", "hidden=16", "--set", "visual_width=16", "--set", "batch_size=4", "--set", "max_len=96"];
    let mut commands: Vec<Vec<String>> = vec![
        vec!["synth-toy", "--n", "60", "--seed", "5", "--cue-strength", "0.9", "--out", &p("toy")]
            .into_iter()
            .map(String::from)
            .collect(),
        vec!["fabricate-text", "--data", &p("toy/test.jsonl"), "--out", &p("fab"), "--seed", "3"]
            .into_iter()
            .map(String::from)
            .collect(),
        vec!["cot-gen", "--data", &p("toy/val.jsonl"), "--out", &p("cot")]
            .into_iter()
            .map(String::from)
            .collect(),
        vec!["cot-validate", "--data", &p("cot/with_cot.jsonl"), "--out", &p("cotval")]
            .into_iter()
            .map(String::from)
            .collect(),
    ];
    let mut train_cmd: Vec<String> = ["train", "--data", &p("toy"), "--out", &p("train"), "--steps", "6", "--seed", "11"]
        .into_iter()
        .map(String::from)
        .collect();
    train_cmd.extend(tiny.iter().map(|s| s.to_string()));
    commands.push(train_cmd);
    for (cmd, out) in [("eval", "eval"), ("route-report", "route")] {
        commands.push(
            [cmd, "--checkpoint", &p("train/checkpoint"), "--data", &p("toy"), "--out", &p(out), "--max-len", "40"]
                .into_iter()
                .map(String::from)
                .collect(),
        );
    }
    let mut abl: Vec<String> = ["ablate", "--data", &p("toy"), "--out", &p("ablate"), "--steps", "2"]
        .into_iter()
        .map(String::from)
        .collect();
    abl.extend(tiny.iter().map(|s| s.to_string()));
    commands.push(abl);
    commands.push(
        ["stats", "--data", &p("toy/train.jsonl"), "--out", &p("stats")]
            .into_iter()
            .map(String::from)
            .collect(),
    );
    let mut run_files = Vec::new();
    for c in &commands {
        let code = umfdet::cli::run(std::iter::once("umfdet".to_string()).chain(c.iter().cloned()));
        ensure!(code == 0, "{} exited {code}", c[0]);
        let out_idx = c.iter().position(|x| x == "--out").unwrap() + 1;
        run_files.push(PathBuf::from(&c[out_idx]).join("run.json"));
    }
    let first = snapshot(d);
    for rf in &run_files {
        ensure!(rf.exists(), "{} missing", rf.display());
        let code = umfdet::cli::run(["umfdet", "replay", "--run", rf.to_str().unwrap()]);
        ensure!(code == 0, "replay of {} exited {code}", rf.display());
    }
    let second = snapshot(d);
    ensure!(first.keys().eq(second.keys()), "replay produced a different file set");
    let differing: Vec<String> = first
        .iter()
        .filter(|(k, v)| second.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    ensure!(differing.is_empty(), "files differ after replay: {}", differing.join(", "));
    let seq_out = p("train_seq");
    let mut seq: Vec<String> = vec!["--sequential".into()];
    seq.extend(commands[4].iter().cloned());
    let oi = seq.iter().position(|x| x == "--out").unwrap() + 1;
    seq[oi] = seq_out.clone();
    ensure!(umfdet::cli::run(std::iter::once("umfdet".to_string()).chain(seq)) == 0, "sequential train failed");
    let (a, b) = (
        std::fs::read(d.join("train/checkpoint/model.umfd")).unwrap(),
        std::fs::read(d.join("train_seq/checkpoint/model.umfd")).unwrap(),
    );
    ensure!(a == b, "parallel and sequential checkpoints differ");
    Ok(format!(
        "{} commands replayed from run.json: {} files byte-identical; sequential == parallel checkpoint",
        run_files.len(),
        first.len()
    ))
}

// ------------------------------------------------------------------ main

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "gradient suite", c1_gradients),
        (2, "routing invariants", c2_routing),
        (3, "loss decomposition", c3_loss_decomposition),
        (4, "toy learning", c4_toy_learning),
        (5, "routing specialization", c5_routing_specialization),
        (6, "metrics oracle", c6_metrics),
        (7, "CoT quality control", c7_cot_qc),
        (8, "text fabrication", c8_text_fabrication),
        (9, "data layer", c9_data_layer),
        (10, "ablation harness", c10_ablation),
        (11, "determinism", c11_determinism),
    ];
    let (mut passed, mut failed) = (0, 0);
    for (id, name, check) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(p))));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("PASS [{id:>2}] {name}: {detail} ({secs:.1}s)");
            }
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id:>2}] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {passed} passed, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
