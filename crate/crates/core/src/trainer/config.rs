use crate::model::{Backbone, LossConfig, ModelConfig, StaticTowerInput};
use crate::numeric::AdamConfig;

use super::TrainError;

/// Everything a training run needs besides the data.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub max_seq_len: usize,
    pub epochs_max: usize,
    /// Non-improving epochs tolerated before stopping (0 behaves like 1).
    pub patience: usize,
    pub lambda_e: f64,
    pub lambda_p: f64,
    pub lambda_reg: f64,
    pub backbone: Backbone,
    pub static_tower_input: StaticTowerInput,
    pub aux_on_negatives: bool,
    pub hidden: [usize; 2],
    /// Item-mode negatives drawn per training positive, every epoch.
    pub k_neg_train: usize,
    /// Negatives per positive for the validation AUC used in model selection.
    pub k_neg_valid: usize,
    /// Negatives per positive for the final test reports.
    pub k_neg_eval: usize,
    /// NDCG cutoff.
    pub cutoff: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let loss = LossConfig::default();
        Self {
            embed_dim: 32,
            batch_size: 200,
            lr: 1e-3,
            max_seq_len: 20,
            epochs_max: 50,
            patience: 5,
            lambda_e: loss.lambda_e,
            lambda_p: loss.lambda_p,
            lambda_reg: loss.lambda_reg,
            backbone: Backbone::Gru,
            static_tower_input: StaticTowerInput::Embeddings,
            aux_on_negatives: loss.aux_on_negatives,
            hidden: [100, 64],
            k_neg_train: 1,
            k_neg_valid: 49,
            k_neg_eval: 49,
            cutoff: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("batch_size", self.batch_size),
            ("max_seq_len", self.max_seq_len),
            ("epochs_max", self.epochs_max),
            ("hidden[0]", self.hidden[0]),
            ("hidden[1]", self.hidden[1]),
            ("k_neg_train", self.k_neg_train),
            ("k_neg_valid", self.k_neg_valid),
            ("k_neg_eval", self.k_neg_eval),
            ("cutoff", self.cutoff),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(TrainError::Config(format!("{name} must be positive")));
        }
        for (name, v) in [("lambda_e", self.lambda_e), ("lambda_p", self.lambda_p), ("lambda_reg", self.lambda_reg)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(TrainError::Config(format!("{name} must be finite and non-negative")));
            }
        }
        self.adam().validate().map_err(|e| TrainError::Config(e.to_string()))
    }

    pub fn model_config(&self, n_users: usize, n_items: usize) -> ModelConfig {
        ModelConfig::new(n_users, n_items, self.embed_dim, self.max_seq_len)
            .with_backbone(self.backbone)
            .with_static_input(self.static_tower_input)
            .with_hidden(self.hidden)
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            lambda_e: self.lambda_e,
            lambda_p: self.lambda_p,
            lambda_reg: self.lambda_reg,
            aux_on_negatives: self.aux_on_negatives,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        }
    }

    /// Sets both contrastive weights.
    pub fn with_lambda_cl(mut self, lambda: f64) -> Self {
        self.lambda_e = lambda;
        self.lambda_p = lambda;
        self
    }
}
