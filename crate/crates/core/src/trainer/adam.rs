use crate::ndtensor::{Gradients, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments, one buffer per parameter in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamMoments {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamMoments {
    pub fn zeros(store: &ParamStore) -> Self {
        let m: Vec<Vec<f64>> = store.iter().map(|(_, _, t)| vec![0.0; t.numel()]).collect();
        AdamMoments { v: m.clone(), m }
    }

    pub fn matches(&self, store: &ParamStore) -> bool {
        self.m.len() == store.len()
            && self.v.len() == store.len()
            && store
                .iter()
                .all(|(id, _, t)| self.m[id.0].len() == t.numel() && self.v[id.0].len() == t.numel())
    }
}

/// One bias-corrected Adam update at 1-based step `t`. Parameters flagged in
/// `frozen` are left untouched together with their moments; parameters with
/// no gradient this step see a zero gradient.
pub fn adam_step(
    store: &mut ParamStore,
    moments: &mut AdamMoments,
    grads: &Gradients,
    hp: &AdamParams,
    t: u64,
    frozen: &[bool],
) {
    let bc1 = 1.0 - hp.beta1.powi(t as i32);
    let bc2 = 1.0 - hp.beta2.powi(t as i32);
    let ids: Vec<ParamId> = store.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        if frozen.get(id.0).copied().unwrap_or(false) {
            continue;
        }
        let g = grads.get(id);
        let (m, v) = (&mut moments.m[id.0], &mut moments.v[id.0]);
        let w = store.get_mut(id).values_mut();
        for i in 0..w.len() {
            let gi = g.map_or(0.0, |g| g[i]);
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * gi;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * gi * gi;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            w[i] -= hp.lr * mhat / (vhat.sqrt() + hp.eps);
        }
    }
}
