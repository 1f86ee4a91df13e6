use std::collections::HashMap;

use thiserror::Error;

use super::config::{Backbone, LossConfig, ModelConfig, StaticTowerInput};
use super::layers::{affine_graph, attention_graph, gru_graph, tower_graph, AffineVars, AttentionVars, GruVars};
use crate::data::DualSample;
use crate::numeric::{uniform_init, xavier_bound, Binding, ParamId, ParamStore, Scalar, SeededRng, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("sequence length {found} does not match model length {expected}")]
    SequenceLength { expected: usize, found: usize },
    #[error("{side} id {id} out of range (catalog has {count})")]
    IdOutOfRange {
        side: &'static str,
        id: usize,
        count: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// One of the three prediction heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tower {
    /// `(h_item ‖ M_item[target])`: supervised next-item probability.
    NextItem,
    /// `(h_user ‖ M_user[target])`: next-user probability.
    NextUser,
    /// Static user–item matching probability.
    Static,
}

impl Tower {
    pub fn name(self) -> &'static str {
        match self {
            Tower::NextItem => "next_item",
            Tower::NextUser => "next_user",
            Tower::Static => "static",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EncoderIds {
    Gru {
        w_z: ParamId,
        w_r: ParamId,
        w_h: ParamId,
    },
    Attention {
        positions: ParamId,
        w_q: ParamId,
        w_k: ParamId,
        w_v: ParamId,
        w_1: ParamId,
        b_1: ParamId,
        w_2: ParamId,
        b_2: ParamId,
    },
}

impl EncoderIds {
    pub fn params(&self) -> Vec<ParamId> {
        match self {
            EncoderIds::Gru { w_z, w_r, w_h } => vec![*w_z, *w_r, *w_h],
            EncoderIds::Attention {
                positions,
                w_q,
                w_k,
                w_v,
                w_1,
                b_1,
                w_2,
                b_2,
            } => vec![*positions, *w_q, *w_k, *w_v, *w_1, *b_1, *w_2, *b_2],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AffineIds {
    pub w: ParamId,
    pub b: ParamId,
}

/// Where each named tensor lives in the [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub user_embedding: ParamId,
    pub item_embedding: ParamId,
    pub user_encoder: EncoderIds,
    pub item_encoder: EncoderIds,
    pub item_to_user: AffineIds,
    pub user_to_item: AffineIds,
    pub next_item: [AffineIds; 3],
    pub next_user: [AffineIds; 3],
    pub static_tower: [AffineIds; 3],
}

impl Layout {
    pub fn tower(&self, tower: Tower) -> &[AffineIds; 3] {
        match tower {
            Tower::NextItem => &self.next_item,
            Tower::NextUser => &self.next_user,
            Tower::Static => &self.static_tower,
        }
    }

    pub fn tower_params(&self, tower: Tower) -> Vec<ParamId> {
        self.tower(tower).iter().flat_map(|a| [a.w, a.b]).collect()
    }

    pub fn transform_params(&self) -> Vec<ParamId> {
        vec![self.item_to_user.w, self.item_to_user.b, self.user_to_item.w, self.user_to_item.b]
    }
}

fn build_layout<S: Scalar>(store: &mut ParamStore<S>, cfg: &ModelConfig, rng: &mut SeededRng) -> Result<Layout, TensorError> {
    let d = cfg.embed_dim;
    // Bias vectors take the bound of the weight matrix they pair with.
    let mut add = |store: &mut ParamStore<S>, name: String, shape: &[usize], fans: &[usize]| -> Result<ParamId, TensorError> {
        Ok(store.add(name, uniform_init(shape, xavier_bound(fans)?, rng)?))
    };
    let user_embedding = add(store, "user_embedding".into(), &[cfg.n_users + 1, d], &[cfg.n_users + 1, d])?;
    let item_embedding = add(store, "item_embedding".into(), &[cfg.n_items + 1, d], &[cfg.n_items + 1, d])?;
    for id in [user_embedding, item_embedding] {
        store.get_mut(id).value.data_mut()[..d].fill(S::zero());
    }
    let mut encoder = |store: &mut ParamStore<S>, prefix: &str| -> Result<EncoderIds, TensorError> {
        let mut p = |name: &str, shape: &[usize], fans: &[usize]| add(store, format!("{prefix}.{name}"), shape, fans);
        let (sq, wide) = ([d, d], [d, 2 * d]);
        Ok(match cfg.backbone {
            Backbone::Gru => EncoderIds::Gru {
                w_z: p("w_z", &wide, &wide)?,
                w_r: p("w_r", &wide, &wide)?,
                w_h: p("w_h", &wide, &wide)?,
            },
            Backbone::Attention => EncoderIds::Attention {
                positions: p("positions", &[cfg.max_seq_len + 1, d], &[cfg.max_seq_len + 1, d])?,
                w_q: p("w_q", &sq, &sq)?,
                w_k: p("w_k", &sq, &sq)?,
                w_v: p("w_v", &sq, &sq)?,
                w_1: p("w_1", &sq, &sq)?,
                b_1: p("b_1", &[d], &sq)?,
                w_2: p("w_2", &sq, &sq)?,
                b_2: p("b_2", &[d], &sq)?,
            },
        })
    };
    let user_encoder = encoder(store, "user_encoder")?;
    let item_encoder = encoder(store, "item_encoder")?;
    for enc in [&user_encoder, &item_encoder] {
        if let EncoderIds::Attention { positions, .. } = enc {
            store.get_mut(*positions).value.data_mut()[..d].fill(S::zero());
        }
    }
    let mut affine = |store: &mut ParamStore<S>, prefix: &str, rows: usize, cols: usize| -> Result<AffineIds, TensorError> {
        Ok(AffineIds {
            w: add(store, format!("{prefix}.w"), &[rows, cols], &[rows, cols])?,
            b: add(store, format!("{prefix}.b"), &[cols], &[rows, cols])?,
        })
    };
    let item_to_user = affine(store, "item_to_user", d, d)?;
    let user_to_item = affine(store, "user_to_item", d, d)?;
    let widths = [2 * d, cfg.hidden[0], cfg.hidden[1], 1];
    let mut tower = |store: &mut ParamStore<S>, name: &str| -> Result<[AffineIds; 3], TensorError> {
        Ok([
            affine(store, &format!("tower.{name}.0"), widths[0], widths[1])?,
            affine(store, &format!("tower.{name}.1"), widths[1], widths[2])?,
            affine(store, &format!("tower.{name}.2"), widths[2], widths[3])?,
        ])
    };
    let next_item = tower(store, "next_item")?;
    let next_user = tower(store, "next_user")?;
    let static_tower = tower(store, "static")?;
    Ok(Layout {
        user_embedding,
        item_embedding,
        user_encoder,
        item_encoder,
        item_to_user,
        user_to_item,
        next_item,
        next_user,
        static_tower,
    })
}

/// Column-major view of a set of dual samples, ready for the graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub users: Vec<usize>,
    pub items: Vec<usize>,
    /// `B×T` item sequences, sample-major.
    pub item_seqs: Vec<usize>,
    /// `B×T` user sequences, sample-major.
    pub user_seqs: Vec<usize>,
    pub labels: Vec<u8>,
    pub seq_len: usize,
}

impl Batch {
    pub fn from_samples<'a, I>(samples: I, seq_len: usize) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = &'a DualSample>,
    {
        let mut b = Batch {
            users: Vec::new(),
            items: Vec::new(),
            item_seqs: Vec::new(),
            user_seqs: Vec::new(),
            labels: Vec::new(),
            seq_len,
        };
        for s in samples {
            for seq in [&s.item_seq, &s.user_seq] {
                if seq.len() != seq_len {
                    return Err(ModelError::SequenceLength {
                        expected: seq_len,
                        found: seq.len(),
                    });
                }
            }
            b.users.push(s.target_user);
            b.items.push(s.target_item);
            b.item_seqs.extend_from_slice(&s.item_seq);
            b.user_seqs.extend_from_slice(&s.user_seq);
            b.labels.push(s.label);
        }
        if b.users.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    fn validate(&self, cfg: &ModelConfig) -> Result<(), ModelError> {
        if self.seq_len != cfg.max_seq_len {
            return Err(ModelError::SequenceLength {
                expected: cfg.max_seq_len,
                found: self.seq_len,
            });
        }
        let check = |side, ids: &[usize], count: usize, allow_pad: bool| {
            match ids.iter().find(|&&id| id > count || (!allow_pad && id == 0)) {
                Some(&id) => Err(ModelError::IdOutOfRange { side, id, count }),
                None => Ok(()),
            }
        };
        check("user", &self.users, cfg.n_users, false)?;
        check("item", &self.items, cfg.n_items, false)?;
        check("item", &self.item_seqs, cfg.n_items, true)?;
        check("user", &self.user_seqs, cfg.n_users, true)
    }

    /// Distinct non-pad ids touched by this batch on each side.
    pub fn involved_ids(&self) -> (Vec<usize>, Vec<usize>) {
        let distinct = |a: &[usize], b: &[usize]| {
            let mut v: Vec<usize> = a.iter().chain(b).copied().filter(|&id| id != 0).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        (distinct(&self.users, &self.user_seqs), distinct(&self.items, &self.item_seqs))
    }
}

/// Per-batch probabilities and loss components.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutputs<S> {
    pub p_item: Vec<S>,
    pub p_user: Vec<S>,
    pub p_static: Vec<S>,
    /// Log loss of the next-item tower.
    pub l_i: S,
    /// Representation contrastive term.
    pub l_e: S,
    /// Interest contrastive term.
    pub l_p: S,
    /// Embedding penalty `λ‖Θ‖²` over the touched rows.
    pub l_reg: S,
    pub l_total: S,
    pub h_user: Tensor<S>,
    pub h_item: Tensor<S>,
}

/// A recorded forward pass that can be differentiated.
pub struct ForwardPass<S> {
    tape: Tape<S>,
    binding: Binding,
    total: Var,
    pub outputs: ForwardOutputs<S>,
}

impl<S: Scalar> ForwardPass<S> {
    /// Adds `∂L_total/∂θ` into the gradient slots of `store`.
    pub fn backward(&self, store: &mut ParamStore<S>) -> Result<(), TensorError> {
        let grads = self.tape.backward(self.total)?;
        store.accumulate(&self.binding, &grads);
        Ok(())
    }

    pub fn tape(&self) -> &Tape<S> {
        &self.tape
    }
}

struct Graph<'a, S> {
    tape: Tape<S>,
    binding: Binding,
    cfg: &'a ModelConfig,
    layout: &'a Layout,
}

impl<'a, S: Scalar> Graph<'a, S> {
    fn new(store: &ParamStore<S>, cfg: &'a ModelConfig, layout: &'a Layout) -> Self {
        let mut tape = Tape::new();
        let binding = store.bind(&mut tape);
        Self {
            tape,
            binding,
            cfg,
            layout,
        }
    }

    fn v(&self, id: ParamId) -> Var {
        self.binding.var(id)
    }

    fn affine(&self, a: &AffineIds) -> AffineVars {
        AffineVars {
            w: self.v(a.w),
            b: self.v(a.b),
        }
    }

    fn encode(&mut self, table: ParamId, enc: &EncoderIds, seqs: &[usize]) -> Result<Var, TensorError> {
        let len = self.cfg.max_seq_len;
        let b = seqs.len() / len;
        let table = self.v(table);
        match enc {
            EncoderIds::Gru { w_z, w_r, w_h } => {
                let w = GruVars {
                    w_z: self.v(*w_z),
                    w_r: self.v(*w_r),
                    w_h: self.v(*w_h),
                };
                // Leading steps where every sequence is padding keep H at
                // exactly zero, so they are skipped.
                let start = (0..len)
                    .find(|&t| (0..b).any(|s| seqs[s * len + t] != 0))
                    .unwrap_or(len - 1);
                let mut steps = Vec::with_capacity(len - start);
                for t in start..len {
                    let ids: Vec<usize> = (0..b).map(|s| seqs[s * len + t]).collect();
                    steps.push(self.tape.gather(table, &ids, true)?);
                }
                gru_graph(&mut self.tape, &steps, w)
            }
            EncoderIds::Attention {
                positions,
                w_q,
                w_k,
                w_v,
                w_1,
                b_1,
                w_2,
                b_2,
            } => {
                let w = AttentionVars {
                    positions: self.v(*positions),
                    w_q: self.v(*w_q),
                    w_k: self.v(*w_k),
                    w_v: self.v(*w_v),
                    w_1: self.v(*w_1),
                    b_1: self.v(*b_1),
                    w_2: self.v(*w_2),
                    b_2: self.v(*b_2),
                };
                let x = self.tape.gather(table, seqs, true)?;
                let mask: Vec<bool> = seqs.iter().map(|&id| id != 0).collect();
                attention_graph(&mut self.tape, x, &mask, len, w)
            }
        }
    }

    fn encode_items(&mut self, batch: &Batch) -> Result<Var, TensorError> {
        let (t, e) = (self.layout.item_embedding, self.layout.item_encoder.clone());
        self.encode(t, &e, &batch.item_seqs)
    }

    fn encode_users(&mut self, batch: &Batch) -> Result<Var, TensorError> {
        let (t, e) = (self.layout.user_embedding, self.layout.user_encoder.clone());
        self.encode(t, &e, &batch.user_seqs)
    }

    /// Encodes each distinct sequence once and expands back to one row per
    /// sample. Rows are encoded independently, so the values equal those of
    /// [`Graph::encode`]; only used where no gradient is needed.
    fn encode_distinct(&mut self, table: ParamId, enc: &EncoderIds, seqs: &[usize]) -> Result<Var, TensorError> {
        let len = self.cfg.max_seq_len;
        let mut slot: HashMap<&[usize], usize> = HashMap::new();
        let mut distinct = Vec::new();
        let rows: Vec<usize> = seqs
            .chunks(len)
            .map(|seq| {
                *slot.entry(seq).or_insert_with(|| {
                    distinct.extend_from_slice(seq);
                    distinct.len() / len - 1
                })
            })
            .collect();
        let h = self.encode(table, enc, &distinct)?;
        if distinct.len() == seqs.len() {
            return Ok(h);
        }
        self.tape.gather(h, &rows, false)
    }

    fn tower(&mut self, tower: Tower, left: Var, right: Var) -> Result<Var, TensorError> {
        let layers = self.layout.tower(tower);
        let layers = [self.affine(&layers[0]), self.affine(&layers[1]), self.affine(&layers[2])];
        let input = self.tape.concat(left, right, 1)?;
        tower_graph(&mut self.tape, input, &layers)
    }

    fn rows(&mut self, x: Var, rows: &[usize], all: bool) -> Result<Var, TensorError> {
        if all {
            Ok(x)
        } else {
            self.tape.gather(x, rows, false)
        }
    }
}

/// Parameters and architecture of a DCN model.
#[derive(Clone, Debug, PartialEq)]
pub struct DcnModel<S> {
    pub config: ModelConfig,
    pub store: ParamStore<S>,
    pub layout: Layout,
}

impl<S: Scalar> DcnModel<S> {
    /// Xavier-initialized model; the init stream is derived from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        if config.embed_dim == 0 || config.max_seq_len == 0 || config.hidden.contains(&0) {
            return Err(ModelError::InvalidConfig(
                "embed_dim, max_seq_len and hidden widths must be positive".into(),
            ));
        }
        let mut rng = SeededRng::derive(seed, "init", 0);
        let mut store = ParamStore::new();
        let layout = build_layout(&mut store, &config, &mut rng)?;
        Ok(Self { config, store, layout })
    }

    pub fn forward(&self, batch: &Batch, loss: &LossConfig) -> Result<ForwardPass<S>, ModelError> {
        forward_with(&self.store, &self.layout, &self.config, batch, loss)
    }

    /// Probabilities of one tower for `batch`, building only what it needs.
    pub fn score(&self, batch: &Batch, tower: Tower) -> Result<Vec<S>, ModelError> {
        batch.validate(&self.config)?;
        let mut g = Graph::new(&self.store, &self.config, &self.layout);
        let (ue, ie) = (g.v(self.layout.user_embedding), g.v(self.layout.item_embedding));
        let p = match tower {
            Tower::NextItem => {
                let h = g.encode_distinct(self.layout.item_embedding, &self.layout.item_encoder, &batch.item_seqs)?;
                let m = g.tape.gather(ie, &batch.items, true)?;
                g.tower(tower, h, m)?
            }
            Tower::NextUser => {
                let h = g.encode_distinct(self.layout.user_embedding, &self.layout.user_encoder, &batch.user_seqs)?;
                let m = g.tape.gather(ue, &batch.users, true)?;
                g.tower(tower, h, m)?
            }
            Tower::Static => {
                let (l, r) = match self.config.static_tower_input {
                    StaticTowerInput::Embeddings => (
                        g.tape.gather(ue, &batch.users, true)?,
                        g.tape.gather(ie, &batch.items, true)?,
                    ),
                    StaticTowerInput::Hidden => (
                        g.encode_distinct(self.layout.user_embedding, &self.layout.user_encoder, &batch.user_seqs)?,
                        g.encode_distinct(self.layout.item_embedding, &self.layout.item_encoder, &batch.item_seqs)?,
                    ),
                };
                g.tower(tower, l, r)?
            }
        };
        Ok(g.tape.value(p).data().to_vec())
    }

    /// Scores samples in chunks of `chunk`.
    pub fn score_samples(&self, samples: &[DualSample], tower: Tower, chunk: usize) -> Result<Vec<S>, ModelError> {
        let mut out = Vec::with_capacity(samples.len());
        for part in samples.chunks(chunk.max(1)) {
            let batch = Batch::from_samples(part, self.config.max_seq_len)?;
            out.extend(self.score(&batch, tower)?);
        }
        Ok(out)
    }

    pub fn embedding(&self, side: Side) -> &Tensor<S> {
        match side {
            Side::User => self.store.value(self.layout.user_embedding),
            Side::Item => self.store.value(self.layout.item_embedding),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    User,
    Item,
}

/// Full forward pass over explicit parameters (used directly by gradient
/// checks that perturb a store).
pub fn forward_with<S: Scalar>(
    store: &ParamStore<S>,
    layout: &Layout,
    cfg: &ModelConfig,
    batch: &Batch,
    loss: &LossConfig,
) -> Result<ForwardPass<S>, ModelError> {
    batch.validate(cfg)?;
    for (name, l) in [("lambda_e", loss.lambda_e), ("lambda_p", loss.lambda_p), ("lambda_reg", loss.lambda_reg)] {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(ModelError::InvalidConfig(format!("{name} must be a finite non-negative number")));
        }
    }
    let mut g = Graph::new(store, cfg, layout);
    let b = batch.len();
    let (ue, ie) = (g.v(layout.user_embedding), g.v(layout.item_embedding));

    let h_item = g.encode_items(batch)?;
    let h_user = g.encode_users(batch)?;
    let m_user = g.tape.gather(ue, &batch.users, true)?;
    let m_item = g.tape.gather(ie, &batch.items, true)?;

    let p_item = g.tower(Tower::NextItem, h_item, m_item)?;
    let p_user = g.tower(Tower::NextUser, h_user, m_user)?;
    let p_static = match cfg.static_tower_input {
        StaticTowerInput::Embeddings => g.tower(Tower::Static, m_user, m_item)?,
        StaticTowerInput::Hidden => g.tower(Tower::Static, h_user, h_item)?,
    };

    let labels: Vec<S> = batch.labels.iter().map(|&y| S::from_u8(y).expect("label")).collect();
    let l_i = g.tape.logloss(p_item, &labels)?;
    let mut total = l_i;

    let aux_rows: Vec<usize> = if loss.aux_on_negatives {
        (0..b).collect()
    } else {
        (0..b).filter(|&i| batch.labels[i] == 1).collect()
    };
    let all = aux_rows.len() == b;
    let n_aux = S::from_usize(aux_rows.len()).expect("row count");

    let mut l_e = None;
    if loss.lambda_e > 0.0 && !aux_rows.is_empty() {
        let hi = g.rows(h_item, &aux_rows, all)?;
        let hu = g.rows(h_user, &aux_rows, all)?;
        let mu = g.rows(m_user, &aux_rows, all)?;
        let mi = g.rows(m_item, &aux_rows, all)?;
        let to_user = g.affine(&layout.item_to_user);
        let to_item = g.affine(&layout.user_to_item);
        let u = affine_graph(&mut g.tape, hi, to_user)?;
        let v = affine_graph(&mut g.tape, hu, to_item)?;
        let du = g.tape.squared_l2(u, mu)?;
        let dv = g.tape.squared_l2(v, mi)?;
        let s = g.tape.add(du, dv)?;
        let term = g.tape.scale(s, S::lit(loss.lambda_e) / n_aux)?;
        total = g.tape.add(total, term)?;
        l_e = Some(term);
    }

    let mut l_p = None;
    if loss.lambda_p > 0.0 && !aux_rows.is_empty() {
        let pi = g.rows(p_item, &aux_rows, all)?;
        let ps = g.rows(p_static, &aux_rows, all)?;
        let pu = g.rows(p_user, &aux_rows, all)?;
        let a = g.tape.squared_l2(pi, ps)?;
        let c = g.tape.squared_l2(pi, pu)?;
        let s = g.tape.add(a, c)?;
        let term = g.tape.scale(s, S::lit(loss.lambda_p) / n_aux)?;
        total = g.tape.add(total, term)?;
        l_p = Some(term);
    }

    let mut l_reg = None;
    if loss.lambda_reg > 0.0 {
        let (users, items) = batch.involved_ids();
        let mut acc = None;
        for (table, ids) in [(ue, users), (ie, items)] {
            if ids.is_empty() {
                continue;
            }
            let rows = g.tape.gather(table, &ids, true)?;
            let sq = g.tape.sum_squares(rows)?;
            acc = Some(match acc {
                None => sq,
                Some(prev) => g.tape.add(prev, sq)?,
            });
        }
        if let Some(sq) = acc {
            let term = g.tape.scale(sq, S::lit(loss.lambda_reg))?;
            total = g.tape.add(total, term)?;
            l_reg = Some(term);
        }
    }

    let scalar = |tape: &Tape<S>, v: Option<Var>| v.map_or(S::zero(), |v| tape.value(v).data()[0]);
    let outputs = ForwardOutputs {
        p_item: g.tape.value(p_item).data().to_vec(),
        p_user: g.tape.value(p_user).data().to_vec(),
        p_static: g.tape.value(p_static).data().to_vec(),
        l_i: scalar(&g.tape, Some(l_i)),
        l_e: scalar(&g.tape, l_e),
        l_p: scalar(&g.tape, l_p),
        l_reg: scalar(&g.tape, l_reg),
        l_total: scalar(&g.tape, Some(total)),
        h_user: g.tape.value(h_user).clone(),
        h_item: g.tape.value(h_item).clone(),
    };
    Ok(ForwardPass {
        tape: g.tape,
        binding: g.binding,
        total,
        outputs,
    })
}
