use crate::data::{Category, NewsSample};
use crate::error::{Error, Result};
use crate::instruct::{Vocabulary, ANS_CLOSE, ANS_OPEN, BOS, EOS, THINK_CLOSE, THINK_OPEN};

/// Target id ignored by the losses.
pub const IGNORE: usize = usize::MAX;

/// Teacher-forcing sequences for one sample. `det_targets` and `cot_targets`
/// are aligned with `ids`, holding [`IGNORE`] outside their span.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetSeq {
    pub ids: Vec<usize>,
    pub dec_input: Vec<usize>,
    pub det_targets: Vec<usize>,
    pub cot_targets: Vec<usize>,
}

impl TargetSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Same sequence with the rationale excluded from every loss.
    pub fn without_think_loss(&self) -> TargetSeq {
        TargetSeq {
            cot_targets: vec![IGNORE; self.ids.len()],
            ..self.clone()
        }
    }
}

/// `<think>…</think><answer>label</answer>`, or just the answer block.
pub fn target_text(label: Category, think: Option<&str>) -> String {
    match think {
        Some(t) => format!("<think>{}</think><answer>{}</answer>", t.trim(), label.as_str()),
        None => format!("<answer>{}</answer>", label.as_str()),
    }
}

/// Tokenizes `text`, appends EOS and assigns every position to one loss:
/// rationale tokens strictly inside the think block go to the CoT loss; the
/// block markers, the answer block and EOS go to the detection loss.
pub fn build_target(vocab: &Vocabulary, sample_id: &str, text: &str) -> Result<TargetSeq> {
    let mut ids = vocab.tokenize(text).ids;
    ids.push(EOS);
    let bad = |reason: &str| Error::Data(format!("sample {sample_id}: malformed target ({reason})"));
    let positions = |id: usize| ids.iter().enumerate().filter(|(_, &x)| x == id).map(|(i, _)| i).collect::<Vec<_>>();
    let (t_open, t_close, a_open, a_close) =
        (positions(THINK_OPEN), positions(THINK_CLOSE), positions(ANS_OPEN), positions(ANS_CLOSE));
    if a_open.len() != 1 || a_close.len() != 1 {
        return Err(bad("needs exactly one answer block"));
    }
    let (a0, a1) = (a_open[0], a_close[0]);
    if a0 > a1 {
        return Err(bad("answer block closed before opened"));
    }
    let think = match (t_open.as_slice(), t_close.as_slice()) {
        ([], []) => None,
        ([t0], [t1]) if t0 < t1 && *t1 < a0 => Some((*t0, *t1)),
        _ => return Err(bad("think block must appear once, before the answer")),
    };
    let first = think.map_or(a0, |t| t.0);
    if first != 0 || a1 + 2 != ids.len() {
        return Err(bad("text outside the think and answer blocks"));
    }
    let mut det = vec![IGNORE; ids.len()];
    let mut cot = vec![IGNORE; ids.len()];
    for (i, &id) in ids.iter().enumerate() {
        let in_think = think.is_some_and(|(t0, t1)| i > t0 && i < t1);
        if in_think {
            cot[i] = id;
        } else {
            det[i] = id;
        }
    }
    let mut dec_input = Vec::with_capacity(ids.len());
    dec_input.push(BOS);
    dec_input.extend_from_slice(&ids[..ids.len() - 1]);
    Ok(TargetSeq {
        ids,
        dec_input,
        det_targets: det,
        cot_targets: cot,
    })
}

/// Target for a manifest sample: with `use_cot` and a stored rationale the
/// think block is included, otherwise only the answer.
pub fn sample_target(vocab: &Vocabulary, sample: &NewsSample, use_cot: bool) -> Result<TargetSeq> {
    let think = if use_cot {
        sample.cot.as_ref().map(|c| c.think.as_str())
    } else {
        None
    };
    build_target(vocab, &sample.id, &target_text(sample.label, think))
}
