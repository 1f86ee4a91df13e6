use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Sequence encoder used for both the user and the item sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Gru,
    Attention,
}

/// What the static-interest tower consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StaticTowerInput {
    /// Target user and target item embeddings.
    Embeddings,
    /// Encoded user sequence and encoded item sequence.
    Hidden,
}

macro_rules! name_enum {
    ($ty:ty, $($variant:path => $name:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $name),+ })
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($variant),)+
                    other => Err(format!("unknown value `{other}`")),
                }
            }
        }
    };
}

name_enum!(Backbone, Backbone::Gru => "gru", Backbone::Attention => "attention");
name_enum!(StaticTowerInput, StaticTowerInput::Embeddings => "embeddings", StaticTowerInput::Hidden => "hidden");

/// Architecture of a DCN model. Two models with equal configs have
/// identically shaped parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub embed_dim: usize,
    pub max_seq_len: usize,
    pub backbone: Backbone,
    pub static_tower_input: StaticTowerInput,
    pub hidden: [usize; 2],
}

impl ModelConfig {
    pub fn new(n_users: usize, n_items: usize, embed_dim: usize, max_seq_len: usize) -> Self {
        Self {
            n_users,
            n_items,
            embed_dim,
            max_seq_len,
            backbone: Backbone::Gru,
            static_tower_input: StaticTowerInput::Embeddings,
            hidden: [100, 64],
        }
    }

    pub fn with_backbone(mut self, backbone: Backbone) -> Self {
        self.backbone = backbone;
        self
    }

    pub fn with_static_input(mut self, input: StaticTowerInput) -> Self {
        self.static_tower_input = input;
        self
    }

    pub fn with_hidden(mut self, hidden: [usize; 2]) -> Self {
        self.hidden = hidden;
        self
    }

    /// Canonical `key=value` rendering hashed by [`ModelConfig::hash`].
    pub fn canonical(&self) -> String {
        format!(
            "n_users={}\nn_items={}\nembed_dim={}\nmax_seq_len={}\nbackbone={}\nstatic_tower_input={}\nhidden={},{}\n",
            self.n_users,
            self.n_items,
            self.embed_dim,
            self.max_seq_len,
            self.backbone,
            self.static_tower_input,
            self.hidden[0],
            self.hidden[1]
        )
    }

    /// First 16 hex digits of the SHA-256 of [`ModelConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Loss weights. All must be non-negative.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Representation contrastive weight.
    pub lambda_e: f64,
    /// Interest contrastive weight.
    pub lambda_p: f64,
    /// Squared-L2 penalty on the embedding rows a batch touches.
    pub lambda_reg: f64,
    /// Apply the two contrastive terms to negatives as well as positives.
    pub aux_on_negatives: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_e: 1e-4,
            lambda_p: 1e-4,
            lambda_reg: 1e-7,
            aux_on_negatives: true,
        }
    }
}

impl LossConfig {
    pub fn plain(lambda_reg: f64) -> Self {
        Self {
            lambda_e: 0.0,
            lambda_p: 0.0,
            lambda_reg,
            aux_on_negatives: true,
        }
    }
}
