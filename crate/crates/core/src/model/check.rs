use super::config::{LossConfig, ModelConfig};
use super::dcn::{forward_with, Batch, DcnModel, ModelError};
use crate::numeric::gradcheck::{check_store, GradCheckReport};
use crate::numeric::SeededRng;

/// A batch of `b` samples with random ids, random amounts of left padding
/// and alternating labels (starting with 1).
pub fn random_batch(cfg: &ModelConfig, b: usize, rng: &mut SeededRng) -> Batch {
    let t = cfg.max_seq_len;
    let seq = |n: usize, rng: &mut SeededRng| -> Vec<usize> {
        let pads = rng.below(t + 1);
        (0..t).map(|i| if i < pads { 0 } else { 1 + rng.below(n) }).collect()
    };
    let mut batch = Batch {
        users: Vec::with_capacity(b),
        items: Vec::with_capacity(b),
        item_seqs: Vec::with_capacity(b * t),
        user_seqs: Vec::with_capacity(b * t),
        labels: Vec::with_capacity(b),
        seq_len: t,
    };
    for s in 0..b {
        batch.users.push(1 + rng.below(cfg.n_users));
        batch.items.push(1 + rng.below(cfg.n_items));
        let is = seq(cfg.n_items, rng);
        let us = seq(cfg.n_users, rng);
        batch.item_seqs.extend(is);
        batch.user_seqs.extend(us);
        batch.labels.push(u8::from(s % 2 == 0));
    }
    batch
}

/// Central-difference check of `∂L_total/∂θ` for every entry of every
/// parameter of a freshly initialized model on a random batch.
pub fn check_model_gradients(
    cfg: &ModelConfig,
    loss: &LossConfig,
    batch_size: usize,
    seed: u64,
    h: f64,
) -> Result<GradCheckReport, ModelError> {
    let mut model = DcnModel::<f64>::new(cfg.clone(), seed)?;
    let mut rng = SeededRng::derive(seed, "gradcheck-batch", 0);
    let batch = random_batch(cfg, batch_size, &mut rng);
    let pass = model.forward(&batch, loss)?;
    model.store.zero_grads();
    pass.backward(&mut model.store)?;
    let layout = model.layout.clone();
    Ok(check_store(&mut model.store, h, |store| {
        forward_with(store, &layout, cfg, &batch, loss)
            .map(|p| p.outputs.l_total)
            .unwrap_or(f64::NAN)
    }))
}
