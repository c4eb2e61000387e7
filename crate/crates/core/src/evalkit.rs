//! Answer parsing, classification metrics and expert-routing reports.

use serde::{Deserialize, Serialize};

use crate::cmoe::{RoutingDecision, NUM_EXPERTS};
use crate::data::{Category, NewsSample};
use crate::error::{Error, Result};
use crate::model::{generate_full, Model};
use crate::par::{self, Exec};

const OPEN: &str = "<answer>";
const CLOSE: &str = "</answer>";

/// Category inside the first `<answer>…</answer>` span, matched
/// case-insensitively after trimming; `None` if absent or not a category.
pub fn parse_answer(generated: &str) -> Option<Category> {
    let lower = generated.to_ascii_lowercase();
    let start = lower.find(OPEN)? + OPEN.len();
    let end = start + lower[start..].find(CLOSE)?;
    Category::parse_loose(&generated[start..end])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub category: Category,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// `confusion[gold][pred]` counts parseable predictions; unparseable ones
/// are tallied per gold class in `unparseable_by_class`, so each confusion
/// row plus its unparseable count equals the class support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_recall: f64,
    pub confusion: [[usize; 3]; 3],
    pub unparseable_by_class: [usize; 3],
    pub n_samples: usize,
    pub n_unparseable: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// One-vs-rest precision/recall/F1 per class (0/0 counts as 0), their
/// unweighted means, and accuracy. Unparseable predictions are wrong for
/// every class.
pub fn compute_metrics(pairs: &[(Category, Option<Category>)]) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Config("cannot compute metrics over zero samples".into()));
    }
    let mut confusion = [[0usize; 3]; 3];
    let mut unparseable_by_class = [0usize; 3];
    for &(gold, pred) in pairs {
        match pred {
            Some(p) => confusion[gold.index()][p.index()] += 1,
            None => unparseable_by_class[gold.index()] += 1,
        }
    }
    let support: Vec<usize> = (0..3)
        .map(|c| confusion[c].iter().sum::<usize>() + unparseable_by_class[c])
        .collect();
    let per_class: Vec<ClassMetrics> = Category::ALL
        .iter()
        .map(|&cat| {
            let c = cat.index();
            let tp = confusion[c][c];
            let predicted: usize = (0..3).map(|g| confusion[g][c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support[c]);
            ClassMetrics {
                category: cat,
                precision,
                recall,
                f1: f1(precision, recall),
                support: support[c],
            }
        })
        .collect();
    let correct: usize = (0..3).map(|c| confusion[c][c]).sum();
    let n = pairs.len();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / 3.0;
    Ok(MetricsReport {
        accuracy: ratio(correct, n),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        micro_recall: ratio(correct, n),
        per_class,
        confusion,
        unparseable_by_class,
        n_samples: n,
        n_unparseable: unparseable_by_class.iter().sum(),
    })
}

/// Category × selected-expert counts for one C-MoE layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRouting {
    pub layer: usize,
    pub counts: [[usize; NUM_EXPERTS]; 3],
    pub percentages: [[f64; NUM_EXPERTS]; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingReport {
    pub layers: Vec<LayerRouting>,
}

impl RoutingReport {
    /// Share of `cat` samples routed to `expert` at `layer`, in `[0, 1]`.
    pub fn share(&self, layer: usize, cat: Category, expert: usize) -> f64 {
        self.layers
            .get(layer)
            .map_or(0.0, |l| l.percentages[cat.index()][expert] / 100.0)
    }
}

/// Counts per-layer expert selections by gold category; rows are converted
/// to percentages, empty categories give a zero row.
pub fn routing_report(decisions: &[(Category, Vec<RoutingDecision>)]) -> RoutingReport {
    let depth = decisions.iter().map(|(_, d)| d.len()).max().unwrap_or(0);
    let layers = (0..depth)
        .map(|layer| {
            let mut counts = [[0usize; NUM_EXPERTS]; 3];
            for (cat, ds) in decisions {
                if let Some(d) = ds.get(layer) {
                    counts[cat.index()][d.selected] += 1;
                }
            }
            let mut percentages = [[0.0; NUM_EXPERTS]; 3];
            for (row, pct) in counts.iter().zip(percentages.iter_mut()) {
                let total: usize = row.iter().sum();
                if total > 0 {
                    for (c, p) in row.iter().zip(pct.iter_mut()) {
                        *p = 100.0 * *c as f64 / total as f64;
                    }
                }
            }
            LayerRouting {
                layer,
                counts,
                percentages,
            }
        })
        .collect();
    RoutingReport { layers }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub gold: Category,
    pub pred: Option<Category>,
    pub generated: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricsReport,
    pub routing: RoutingReport,
    pub predictions: Vec<Prediction>,
}

/// Greedy-decodes every sample with frozen parameters, parses the answers
/// and scores them. Samples are decoded independently; results keep input
/// order.
pub fn evaluate(model: &Model, samples: &[NewsSample], max_len: usize, exec: Exec) -> Result<EvalReport> {
    let gens = par::map(exec, samples, |_, s| generate_full(model, s, max_len));
    let mut predictions = Vec::with_capacity(samples.len());
    let mut routed = Vec::with_capacity(samples.len());
    for (s, g) in samples.iter().zip(gens) {
        let g = g?;
        predictions.push(Prediction {
            id: s.id.clone(),
            gold: s.label,
            pred: parse_answer(&g.text),
            generated: g.text,
        });
        routed.push((s.label, g.decisions));
    }
    let pairs: Vec<(Category, Option<Category>)> = predictions.iter().map(|p| (p.gold, p.pred)).collect();
    Ok(EvalReport {
        metrics: compute_metrics(&pairs)?,
        routing: routing_report(&routed),
        predictions,
    })
}
