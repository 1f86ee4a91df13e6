use std::fmt::Write as _;

use crate::data::{make_dual_sample, sample_negatives, batch_indices, DataError, DualSample, HistoryIndex, NegativeMode, PreparedData};
use crate::eval::{evaluate, Centricity, EvalConfig, EvalError, MetricReport};
use crate::model::{Batch, DcnModel, ForwardOutputs, LossConfig};
use crate::numeric::{derive_seed, AdamState, Scalar, SeededRng, TensorError};

use super::{TrainConfig, TrainError};

/// One epoch of [`TrainHistory`]. Loss components are means over batches.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_i: f64,
    pub l_e: f64,
    pub l_p: f64,
    pub l_reg: f64,
    pub l_total: f64,
    /// User-centric validation AUC; `None` when the validation split has
    /// nothing to evaluate.
    pub val_auc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub const CSV_HEADER: &'static str = "epoch,L_i,L_e,L_p,L_total,val_auc";

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// `epoch,L_i,L_e,L_p,L_total,val_auc` with shortest round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let val = r.val_auc.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{},{}", r.epoch, r.l_i, r.l_e, r.l_p, r.l_total, val);
        }
        out
    }
}

/// A model plus its optimizer state; one call to [`Trainer::step`] is one
/// Adam update on one batch.
pub struct Trainer<S> {
    pub model: DcnModel<S>,
    pub adam: AdamState<S>,
    pub loss: LossConfig,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(model: DcnModel<S>, cfg: &TrainConfig) -> Result<Self, TrainError> {
        let adam = AdamState::new(cfg.adam(), &model.store)?;
        Ok(Self {
            model,
            adam,
            loss: cfg.loss(),
        })
    }

    pub fn step(&mut self, batch: &Batch) -> Result<ForwardOutputs<S>, TrainError> {
        let pass = self.model.forward(batch, &self.loss)?;
        self.model.store.zero_grads();
        pass.backward(&mut self.model.store)?;
        self.adam.step(&mut self.model.store)?;
        Ok(pass.outputs)
    }
}

/// Result of [`train`]: the best-epoch model and the full history.
pub struct TrainOutcome<S> {
    pub model: DcnModel<S>,
    pub history: TrainHistory,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Positive training samples (one per label-1 train interaction).
pub fn training_positives(data: &PreparedData, index: &HistoryIndex, seq_len: usize) -> Result<Vec<DualSample>, DataError> {
    data.splits
        .train
        .iter()
        .filter(|e| e.label == 1)
        .map(|e| make_dual_sample(index, e.user, e.item, e.timestamp, seq_len, 1))
        .collect()
}

/// Positives followed by their item-mode negatives for `epoch`. Negatives of
/// positive `j` come from `derive(seed, "train-negatives", epoch << 32 | j)`.
/// A positive whose negatives cannot be drawn is kept without negatives.
pub fn epoch_samples(
    positives: &[DualSample],
    index: &HistoryIndex,
    k_neg: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<DualSample>, DataError> {
    let mut out = Vec::with_capacity(positives.len() * (k_neg + 1));
    for (j, pos) in positives.iter().enumerate() {
        out.push(pos.clone());
        let mut rng = SeededRng::derive(seed, "train-negatives", ((epoch as u64) << 32) | j as u64);
        match sample_negatives(pos, index, NegativeMode::Item, k_neg, &mut rng) {
            Ok(negs) => out.extend(negs),
            Err(DataError::EmptyPool { .. } | DataError::SamplingExhausted { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Evaluation settings of the final test reports (negatives drawn from
/// streams of the root seed).
pub fn test_eval_config(cfg: &TrainConfig) -> EvalConfig {
    EvalConfig {
        k_neg: cfg.k_neg_eval,
        cutoff: cfg.cutoff,
        seed: cfg.seed,
    }
}

fn valid_eval_config(cfg: &TrainConfig) -> EvalConfig {
    EvalConfig {
        k_neg: cfg.k_neg_valid,
        cutoff: cfg.cutoff,
        seed: derive_seed(cfg.seed, "valid", 0),
    }
}

/// User-centric validation AUC, or `None` when nothing can be evaluated.
pub fn validation_auc<S: Scalar>(
    model: &DcnModel<S>,
    data: &PreparedData,
    index: &HistoryIndex,
    cfg: &TrainConfig,
) -> Result<Option<f64>, TrainError> {
    match evaluate(model, &data.splits.valid, index, Centricity::User, &valid_eval_config(cfg)) {
        Ok(r) => Ok(Some(r.auc)),
        Err(EvalError::EmptyTestSet | EvalError::NoEvaluableGroups) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Trains with shuffled batches and Adam, validating after every epoch.
///
/// Keeps the parameters of the epoch with the best user-centric validation
/// AUC and stops once `max(patience, 1)` consecutive epochs fail to improve
/// on it. Without a usable validation split every epoch counts as an
/// improvement, so the last epoch is kept.
pub fn train<S: Scalar>(cfg: &TrainConfig, data: &PreparedData) -> Result<TrainOutcome<S>, TrainError> {
    cfg.validate()?;
    let index = data.history_index();
    let positives = training_positives(data, &index, cfg.max_seq_len)?;
    if positives.is_empty() {
        return Err(TrainError::EmptyTrainSplit);
    }
    let model = DcnModel::new(cfg.model_config(data.n_users(), data.n_items()), cfg.seed)?;
    let mut trainer = Trainer::new(model, cfg)?;
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, DcnModel<S>, usize)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs_max {
        let samples = epoch_samples(&positives, &index, cfg.k_neg_train, cfg.seed, epoch)?;
        let mut rng = SeededRng::derive(cfg.seed, "shuffle", epoch as u64);
        let batches = batch_indices(samples.len(), cfg.batch_size, &mut rng, true);
        let mut sums = [0.0f64; 5];
        for (b, idx) in batches.iter().enumerate() {
            let batch = Batch::from_samples(idx.iter().map(|&i| &samples[i]), cfg.max_seq_len)?;
            let out = trainer.step(&batch).map_err(|e| match e {
                TrainError::Tensor(inner @ TensorError::NonFiniteGradient(_)) => TrainError::NonFinite {
                    epoch,
                    batch: b,
                    detail: inner.to_string(),
                },
                other => other,
            })?;
            let parts = [out.l_i, out.l_e, out.l_p, out.l_reg, out.l_total].map(Scalar::as_f64);
            if parts.iter().any(|v| !v.is_finite()) {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: b,
                    detail: format!("loss components {parts:?}"),
                });
            }
            for (s, v) in sums.iter_mut().zip(parts) {
                *s += v;
            }
        }
        let n = batches.len() as f64;
        let val_auc = validation_auc(&trainer.model, data, &index, cfg)?;
        history.epochs.push(EpochRecord {
            epoch,
            l_i: sums[0] / n,
            l_e: sums[1] / n,
            l_p: sums[2] / n,
            l_reg: sums[3] / n,
            l_total: sums[4] / n,
            val_auc,
        });
        let score = val_auc.unwrap_or(f64::INFINITY);
        let improved = best.as_ref().is_none_or(|(b, _, _)| score > *b || score == f64::INFINITY);
        if improved {
            best = Some((score, trainer.model.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience.max(1) {
                break;
            }
        }
    }
    let (_, model, best_epoch) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Final test reports for both centricities.
pub fn test_reports<S: Scalar>(
    model: &DcnModel<S>,
    data: &PreparedData,
    cfg: &TrainConfig,
) -> Result<[MetricReport; 2], TrainError> {
    let index = data.history_index();
    let ec = test_eval_config(cfg);
    Ok([
        evaluate(model, &data.splits.test, &index, Centricity::User, &ec)?,
        evaluate(model, &data.splits.test, &index, Centricity::Item, &ec)?,
    ])
}
