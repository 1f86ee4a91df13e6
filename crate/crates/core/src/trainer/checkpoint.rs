use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::model::{Backbone, DcnModel, ModelConfig, ModelError, StaticTowerInput};
use crate::numeric::{Scalar, Tensor};

const MAGIC: &str = "dcn-checkpoint 1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access checkpoint {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed checkpoint at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("checkpoint is truncated: {0}")]
    Truncated(String),
    #[error("tensor `{name}` has shape {found:?} in the checkpoint but {expected:?} in the model")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("config hash mismatch: checkpoint {found}, expected {expected}")]
    HashMismatch { expected: String, found: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A saved model: architecture, the seed it was trained with, and every
/// parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S> {
    pub seed: u64,
    pub model: DcnModel<S>,
}

/// Text rendering: a header, the canonical model config, then one block per
/// tensor with values as hexadecimal IEEE-754 double bit patterns, so a
/// round trip is exact.
pub fn render_checkpoint<S: Scalar>(model: &DcnModel<S>, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "config_hash {}", model.config.hash());
    let _ = writeln!(out, "seed {seed}");
    for line in model.config.canonical().lines() {
        let _ = writeln!(out, "config {line}");
    }
    for p in model.store.iter() {
        let shape: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "tensor {} {}", p.name, shape.join("x"));
        let cols = *p.value.shape().last().unwrap_or(&1);
        for row in p.value.data().chunks(cols.max(1)) {
            let words: Vec<String> = row.iter().map(|v| format!("{:016x}", v.as_f64().to_bits())).collect();
            let _ = writeln!(out, "{}", words.join(" "));
        }
    }
    out.push_str("end\n");
    out
}

pub fn save_checkpoint<S: Scalar>(model: &DcnModel<S>, seed: u64, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, render_checkpoint(model, seed)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a checkpoint. With `expected`, tensor shapes are checked against a
/// model built from that config first (so a wrong dimension names the
/// tensor), then the config hashes must agree.
pub fn load_checkpoint<S: Scalar>(path: &Path, expected: Option<&ModelConfig>) -> Result<Checkpoint<S>, CheckpointError> {
    let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_checkpoint(&text, expected)
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), CheckpointError> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| CheckpointError::Truncated(format!("expected {what}")))
    }

    fn peek_starts_with(&mut self, prefix: &str) -> bool {
        self.inner.peek().is_some_and(|(_, l)| l.starts_with(prefix))
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> CheckpointError {
    CheckpointError::Malformed {
        line,
        reason: reason.into(),
    }
}

fn field<'a>(line: (usize, &'a str), key: &str) -> Result<&'a str, CheckpointError> {
    line.1
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| malformed(line.0, format!("expected `{key}`")))
}

fn parse_config(lines: &[(usize, &str)]) -> Result<ModelConfig, CheckpointError> {
    let mut cfg = ModelConfig::new(0, 0, 0, 0);
    let mut seen = Vec::new();
    for &(n, l) in lines {
        let (k, v) = l.split_once('=').ok_or_else(|| malformed(n, "expected key=value"))?;
        let num = |v: &str| v.parse::<usize>().map_err(|e| malformed(n, format!("{k}: {e}")));
        match k {
            "n_users" => cfg.n_users = num(v)?,
            "n_items" => cfg.n_items = num(v)?,
            "embed_dim" => cfg.embed_dim = num(v)?,
            "max_seq_len" => cfg.max_seq_len = num(v)?,
            "backbone" => cfg.backbone = v.parse::<Backbone>().map_err(|e| malformed(n, e))?,
            "static_tower_input" => {
                cfg.static_tower_input = v.parse::<StaticTowerInput>().map_err(|e| malformed(n, e))?;
            }
            "hidden" => {
                let (a, b) = v.split_once(',').ok_or_else(|| malformed(n, "hidden must be `a,b`"))?;
                cfg.hidden = [num(a)?, num(b)?];
            }
            other => return Err(malformed(n, format!("unknown config key `{other}`"))),
        }
        seen.push(k);
    }
    if seen.len() != 7 {
        return Err(CheckpointError::Truncated("incomplete model config".into()));
    }
    Ok(cfg)
}

pub fn parse_checkpoint<S: Scalar>(text: &str, expected: Option<&ModelConfig>) -> Result<Checkpoint<S>, CheckpointError> {
    let mut lines = Lines {
        inner: text.lines().enumerate().peekable(),
    };
    let (n, magic) = lines.next("header")?;
    if magic != MAGIC {
        return Err(malformed(n, format!("expected `{MAGIC}`")));
    }
    let stored_hash = field(lines.next("config_hash")?, "config_hash")?.to_string();
    let seed_line = lines.next("seed")?;
    let seed = field(seed_line, "seed")?
        .parse::<u64>()
        .map_err(|e| malformed(seed_line.0, e.to_string()))?;
    let mut cfg_lines = Vec::new();
    while lines.peek_starts_with("config ") {
        let (n, l) = lines.next("config")?;
        cfg_lines.push((n, &l["config ".len()..]));
    }
    let config = parse_config(&cfg_lines)?;
    if config.hash() != stored_hash {
        return Err(CheckpointError::HashMismatch {
            expected: config.hash(),
            found: stored_hash,
        });
    }
    let target = expected.unwrap_or(&config);
    let mut model = DcnModel::<S>::new(target.clone(), 0)?;

    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        let line = lines.next("tensor")?;
        let rest = field(line, "tensor")?;
        let (name, shape) = rest.rsplit_once(' ').ok_or_else(|| malformed(line.0, "expected `tensor NAME SHAPE`"))?;
        let param = model.store.get_mut(id);
        if name != param.name {
            return Err(malformed(line.0, format!("expected tensor `{}`, found `{name}`", param.name)));
        }
        let found: Vec<usize> = shape
            .split('x')
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| malformed(line.0, format!("bad shape `{shape}`")))?;
        if found != param.value.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                expected: param.value.shape().to_vec(),
                found,
            });
        }
        let cols = (*found.last().unwrap_or(&1)).max(1);
        let rows = param.value.len() / cols;
        let mut values = Vec::with_capacity(param.value.len());
        for _ in 0..rows {
            let (n, l) = lines.next(&format!("values of `{name}`"))?;
            let before = values.len();
            for w in l.split_whitespace() {
                let bits = u64::from_str_radix(w, 16).map_err(|_| malformed(n, format!("bad value `{w}`")))?;
                values.push(S::lit(f64::from_bits(bits)));
            }
            if values.len() - before != cols {
                return Err(malformed(n, format!("expected {cols} values in a row of `{name}`")));
            }
        }
        param.value = Tensor::new(found, values).map_err(|e| malformed(line.0, e.to_string()))?;
    }
    let (n, end) = lines.next("`end`")?;
    if end != "end" {
        return Err(malformed(n, "expected `end`"));
    }
    if let Some(exp) = expected {
        if exp.hash() != config.hash() {
            return Err(CheckpointError::HashMismatch {
                expected: exp.hash(),
                found: config.hash(),
            });
        }
    }
    model.config = config;
    Ok(Checkpoint { seed, model })
}
