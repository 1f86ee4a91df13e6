use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::trainer::{TrainConfig, DEFAULT_SWEEP_GRID};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("{path}:{line}: expected `key=value`")]
    Syntax { path: String, line: usize },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Floating-point precision of model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

/// Which evaluation perspectives to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CentricitySel {
    User,
    Item,
    Both,
}

/// A split boundary: explicit timestamp, or `auto` for a fraction of the
/// filtered log's events.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Auto,
    At(i64),
}

/// Every setting of a CLI run. Serialized as flat `key=value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub n_core: usize,
    pub train_end: Boundary,
    pub valid_end: Boundary,
    pub precision: Precision,
    pub centricity: CentricitySel,
    pub grid: Vec<f64>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            data: PathBuf::from("data"),
            out: PathBuf::from("out"),
            checkpoint: None,
            n_core: 10,
            train_end: Boundary::Auto,
            valid_end: Boundary::Auto,
            precision: Precision::F64,
            centricity: CentricitySel::Both,
            grid: DEFAULT_SWEEP_GRID.to_vec(),
            train: TrainConfig::default(),
        }
    }
}

/// Config keys with their documentation, in rendering order.
pub const KEYS: &[(&str, &str)] = &[
    ("input", "raw interaction CSV read by `prepare` (no default; required there)"),
    ("data", "directory of prepared splits (default: data)"),
    ("out", "output directory (default: out)"),
    ("checkpoint", "checkpoint path (default: <out>/model.ckpt)"),
    ("n_core", "minimum interactions per user and item (default: 10)"),
    ("train_end", "first timestamp outside train, or auto = 80% of events (default: auto)"),
    ("valid_end", "first timestamp of test, or auto = 90% of events (default: auto)"),
    ("precision", "f64 or f32 (default: f64)"),
    ("centricity", "user, item or both (default: both)"),
    ("grid", "comma-separated contrastive weights for `sweep` (default: 1e-6,1e-5,1e-4,1e-3)"),
    ("embed_dim", "embedding size D (default: 32)"),
    ("batch_size", "training batch size (default: 200)"),
    ("lr", "Adam learning rate (default: 0.001)"),
    ("max_seq_len", "sequence length T (default: 20)"),
    ("epochs_max", "maximum epochs (default: 50)"),
    ("patience", "non-improving epochs before stopping (default: 5)"),
    ("lambda_e", "representation contrastive weight (default: 0.0001)"),
    ("lambda_p", "interest contrastive weight (default: 0.0001)"),
    ("lambda_reg", "embedding L2 penalty (default: 1e-7)"),
    ("backbone", "gru or attention (default: gru)"),
    ("static_tower_input", "embeddings or hidden (default: embeddings)"),
    ("aux_on_negatives", "apply contrastive terms to negatives too (default: true)"),
    ("hidden", "tower widths `a,b` (default: 100,64)"),
    ("k_neg_train", "negatives per training positive (default: 1)"),
    ("k_neg_valid", "negatives per validation positive (default: 49)"),
    ("k_neg_eval", "negatives per test positive (default: 49)"),
    ("cutoff", "NDCG cutoff K (default: 10)"),
    ("seed", "root seed (default: 0)"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn invalid(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_boundary(key: &str, value: &str) -> Result<Boundary, ConfigError> {
    if value == "auto" {
        Ok(Boundary::Auto)
    } else {
        parse(key, value).map(Boundary::At)
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn fmt_boundary(b: Boundary) -> String {
    match b {
        Boundary::Auto => "auto".into(),
        Boundary::At(t) => t.to_string(),
    }
}

fn fmt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let t = &mut self.train;
        match key {
            "input" => self.input = opt_path(value),
            "data" => self.data = PathBuf::from(value),
            "out" => self.out = PathBuf::from(value),
            "checkpoint" => self.checkpoint = opt_path(value),
            "n_core" => self.n_core = parse(key, value)?,
            "train_end" => self.train_end = parse_boundary(key, value)?,
            "valid_end" => self.valid_end = parse_boundary(key, value)?,
            "precision" => {
                self.precision = match value {
                    "f64" => Precision::F64,
                    "f32" => Precision::F32,
                    _ => return Err(invalid(key, value, "expected f64 or f32")),
                }
            }
            "centricity" => {
                self.centricity = match value {
                    "user" => CentricitySel::User,
                    "item" => CentricitySel::Item,
                    "both" => CentricitySel::Both,
                    _ => return Err(invalid(key, value, "expected user, item or both")),
                }
            }
            "grid" => {
                let grid: Vec<f64> = parse_list(key, value)?;
                if grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid(key, value, "weights must be finite and non-negative"));
                }
                self.grid = grid;
            }
            "embed_dim" => t.embed_dim = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "lr" => t.lr = parse(key, value)?,
            "max_seq_len" => t.max_seq_len = parse(key, value)?,
            "epochs_max" => t.epochs_max = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "lambda_e" => t.lambda_e = parse(key, value)?,
            "lambda_p" => t.lambda_p = parse(key, value)?,
            "lambda_reg" => t.lambda_reg = parse(key, value)?,
            "backbone" => t.backbone = parse(key, value)?,
            "static_tower_input" => t.static_tower_input = parse(key, value)?,
            "aux_on_negatives" => t.aux_on_negatives = parse(key, value)?,
            "hidden" => {
                let h: Vec<usize> = parse_list(key, value)?;
                t.hidden = h.try_into().map_err(|_| invalid(key, value, "expected two widths `a,b`"))?;
            }
            "k_neg_train" => t.k_neg_train = parse(key, value)?,
            "k_neg_valid" => t.k_neg_valid = parse(key, value)?,
            "k_neg_eval" => t.k_neg_eval = parse(key, value)?,
            "cutoff" => t.cutoff = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let t = &self.train;
        match key {
            "input" => fmt_path(&self.input),
            "data" => self.data.display().to_string(),
            "out" => self.out.display().to_string(),
            "checkpoint" => fmt_path(&self.checkpoint),
            "n_core" => self.n_core.to_string(),
            "train_end" => fmt_boundary(self.train_end),
            "valid_end" => fmt_boundary(self.valid_end),
            "precision" => match self.precision {
                Precision::F64 => "f64".into(),
                Precision::F32 => "f32".into(),
            },
            "centricity" => match self.centricity {
                CentricitySel::User => "user".into(),
                CentricitySel::Item => "item".into(),
                CentricitySel::Both => "both".into(),
            },
            "grid" => self.grid.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            "embed_dim" => t.embed_dim.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "lr" => t.lr.to_string(),
            "max_seq_len" => t.max_seq_len.to_string(),
            "epochs_max" => t.epochs_max.to_string(),
            "patience" => t.patience.to_string(),
            "lambda_e" => t.lambda_e.to_string(),
            "lambda_p" => t.lambda_p.to_string(),
            "lambda_reg" => t.lambda_reg.to_string(),
            "backbone" => t.backbone.to_string(),
            "static_tower_input" => t.static_tower_input.to_string(),
            "aux_on_negatives" => t.aux_on_negatives.to_string(),
            "hidden" => format!("{},{}", t.hidden[0], t.hidden[1]),
            "k_neg_train" => t.k_neg_train.to_string(),
            "k_neg_valid" => t.k_neg_valid.to_string(),
            "k_neg_eval" => t.k_neg_eval.to_string(),
            "cutoff" => t.cutoff.to_string(),
            "seed" => t.seed.to_string(),
            other => unreachable!("key table out of sync: {other}"),
        }
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every key with its effective value.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            let _ = writeln!(out, "{key}={}", self.get(key));
        }
        out
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("model.ckpt"))
    }
}
