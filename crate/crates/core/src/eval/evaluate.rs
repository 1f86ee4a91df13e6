use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde_json::{json, Map, Value};
use thiserror::Error;

use super::metrics::{gauc, mean_group_auc, mrr, ndcg_at_k, ScoredGroup};
use crate::data::{make_dual_sample, sample_negatives, DataError, DualSample, HistoryIndex, Interaction, NegativeMode};
use crate::model::{DcnModel, ModelError, Tower};
use crate::numeric::{Scalar, SeededRng};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set has no positive interactions")]
    EmptyTestSet,
    #[error("no group has both a positive and a negative candidate")]
    NoEvaluableGroups,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Ranking perspective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Centricity {
    /// Rank items for each user with the next-item tower.
    User,
    /// Rank users for each item with the next-user tower.
    Item,
}

impl Centricity {
    pub fn tower(self) -> Tower {
        match self {
            Centricity::User => Tower::NextItem,
            Centricity::Item => Tower::NextUser,
        }
    }

    pub fn negative_mode(self) -> NegativeMode {
        match self {
            Centricity::User => NegativeMode::Item,
            Centricity::Item => NegativeMode::User,
        }
    }
}

impl fmt::Display for Centricity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Centricity::User => "user",
            Centricity::Item => "item",
        })
    }
}

impl FromStr for Centricity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "user" => Ok(Centricity::User),
            "item" => Ok(Centricity::Item),
            other => Err(format!("unknown centricity `{other}`")),
        }
    }
}

/// Anything that can score dual samples with one of the towers.
pub trait Scorer {
    fn score(&self, samples: &[DualSample], tower: Tower) -> Result<Vec<f64>, EvalError>;
    fn seq_len(&self) -> usize;
    fn config_hash(&self) -> String;
}

impl<S: Scalar> Scorer for DcnModel<S> {
    fn score(&self, samples: &[DualSample], tower: Tower) -> Result<Vec<f64>, EvalError> {
        Ok(self
            .score_samples(samples, tower, 256)?
            .into_iter()
            .map(Scalar::as_f64)
            .collect())
    }

    fn seq_len(&self) -> usize {
        self.config.max_seq_len
    }

    fn config_hash(&self) -> String {
        self.config.hash()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalConfig {
    /// Sampled negatives per positive.
    pub k_neg: usize,
    /// NDCG cutoff.
    pub cutoff: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_neg: 49,
            cutoff: 10,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub centricity: Centricity,
    pub auc: f64,
    pub gauc: f64,
    pub mrr: f64,
    pub ndcg: f64,
    pub k: usize,
    pub k_neg: usize,
    pub groups_evaluated: usize,
    pub groups_skipped: usize,
    /// Positives dropped because no negative could be drawn for them.
    pub positives_dropped: usize,
    pub seed: u64,
    pub config_hash: String,
}

impl MetricReport {
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("centricity".into(), json!(self.centricity.to_string()));
        m.insert("auc".into(), json!(self.auc));
        m.insert("gauc".into(), json!(self.gauc));
        m.insert("mrr".into(), json!(self.mrr));
        m.insert(format!("ndcg@{}", self.k), json!(self.ndcg));
        m.insert("k_neg".into(), json!(self.k_neg));
        m.insert("groups_evaluated".into(), json!(self.groups_evaluated));
        m.insert("groups_skipped".into(), json!(self.groups_skipped));
        m.insert("positives_dropped".into(), json!(self.positives_dropped));
        m.insert("seed".into(), json!(self.seed));
        m.insert("config_hash".into(), json!(self.config_hash));
        Value::Object(m)
    }
}

/// Metrics over pre-scored groups.
pub fn summarize(groups: &[ScoredGroup], cutoff: usize) -> Result<(f64, f64, f64, f64, usize, usize), EvalError> {
    let (good, bad): (Vec<ScoredGroup>, Vec<ScoredGroup>) = groups.iter().cloned().partition(ScoredGroup::is_evaluable);
    let auc = mean_group_auc(&good).ok_or(EvalError::NoEvaluableGroups)?;
    let gauc = gauc(&good).ok_or(EvalError::NoEvaluableGroups)?;
    let mrr = mrr(&good).ok_or(EvalError::NoEvaluableGroups)?;
    let ndcg = ndcg_at_k(&good, cutoff).ok_or(EvalError::NoEvaluableGroups)?;
    Ok((auc, gauc, mrr, ndcg, good.len(), bad.len()))
}

/// Candidate lists for every positive in `events`: the positive first, then
/// its sampled negatives. Negatives for positive `j` come from the stream
/// `derive(seed, "eval-negatives/<mode>", j)`.
pub fn build_candidates(
    events: &[Interaction],
    index: &HistoryIndex,
    centricity: Centricity,
    seq_len: usize,
    cfg: &EvalConfig,
) -> Result<(Vec<(usize, Vec<DualSample>)>, usize), EvalError> {
    let mode = centricity.negative_mode();
    let stream = format!("eval-negatives/{}", mode.name());
    let mut out = Vec::new();
    let mut dropped = 0;
    for (j, e) in events.iter().filter(|e| e.label == 1).enumerate() {
        let pos = make_dual_sample(index, e.user, e.item, e.timestamp, seq_len, 1)?;
        let mut rng = SeededRng::derive(cfg.seed, &stream, j as u64);
        let negs = match sample_negatives(&pos, index, mode, cfg.k_neg, &mut rng) {
            Ok(n) => n,
            Err(DataError::EmptyPool { .. } | DataError::SamplingExhausted { .. }) => {
                dropped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let key = match centricity {
            Centricity::User => e.user,
            Centricity::Item => e.item,
        };
        let mut cands = Vec::with_capacity(negs.len() + 1);
        cands.push(pos);
        cands.extend(negs);
        out.push((key, cands));
    }
    Ok((out, dropped))
}

/// Scores each positive of `events` against sampled negatives, groups the
/// candidates by user (user-centric) or item (item-centric) and reports
/// AUC (unweighted group mean), GAUC, MRR and NDCG@cutoff.
pub fn evaluate<M: Scorer + ?Sized>(
    model: &M,
    events: &[Interaction],
    index: &HistoryIndex,
    centricity: Centricity,
    cfg: &EvalConfig,
) -> Result<MetricReport, EvalError> {
    if !events.iter().any(|e| e.label == 1) {
        return Err(EvalError::EmptyTestSet);
    }
    let (lists, dropped) = build_candidates(events, index, centricity, model.seq_len(), cfg)?;
    let flat: Vec<DualSample> = lists.iter().flat_map(|(_, c)| c.iter().cloned()).collect();
    let scores = if flat.is_empty() {
        Vec::new()
    } else {
        model.score(&flat, centricity.tower())?
    };
    let mut grouped: BTreeMap<usize, Vec<(f64, u8)>> = BTreeMap::new();
    let mut offset = 0;
    for (key, cands) in &lists {
        let entry = grouped.entry(*key).or_default();
        for (c, &s) in cands.iter().zip(&scores[offset..offset + cands.len()]) {
            entry.push((s, c.label));
        }
        offset += cands.len();
    }
    let groups: Vec<ScoredGroup> = grouped.into_iter().map(|(k, p)| ScoredGroup::new(k, p)).collect();
    let (auc, gauc, mrr, ndcg, evaluated, skipped) = summarize(&groups, cfg.cutoff)?;
    Ok(MetricReport {
        centricity,
        auc,
        gauc,
        mrr,
        ndcg,
        k: cfg.cutoff,
        k_neg: cfg.k_neg,
        groups_evaluated: evaluated,
        groups_skipped: skipped,
        positives_dropped: dropped,
        seed: cfg.seed,
        config_hash: model.config_hash(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{planted_dataset, PlantedConfig, PreparedData};
    use crate::numeric::derive_seed;

    /// Scores from a fixed rule rather than a model.
    struct FnScorer<F: Fn(&DualSample) -> f64>(F);

    impl<F: Fn(&DualSample) -> f64> Scorer for FnScorer<F> {
        fn score(&self, samples: &[DualSample], _tower: Tower) -> Result<Vec<f64>, EvalError> {
            Ok(samples.iter().map(&self.0).collect())
        }
        fn seq_len(&self) -> usize {
            5
        }
        fn config_hash(&self) -> String {
            "fixed".into()
        }
    }

    fn data() -> PreparedData {
        planted_dataset(&PlantedConfig::default(), 5, 0.7, 0.85).unwrap()
    }

    #[test]
    fn perfect_oracle_scores_one_everywhere() {
        let d = data();
        let index = d.history_index();
        let oracle = FnScorer(|s: &DualSample| f64::from(s.label));
        for centricity in [Centricity::User, Centricity::Item] {
            let r = evaluate(&oracle, &d.splits.test, &index, centricity, &EvalConfig::default()).unwrap();
            assert_eq!((r.auc, r.gauc, r.mrr, r.ndcg), (1.0, 1.0, 1.0, 1.0), "{centricity}");
            assert!(r.groups_evaluated > 0);
        }
    }

    #[test]
    fn label_blind_scores_give_chance_auc() {
        let d = data();
        let index = d.history_index();
        let noise = FnScorer(|s: &DualSample| {
            let key = (s.target_user as u64) << 32 | s.target_item as u64;
            SeededRng::new(derive_seed(99, "noise", key)).unit()
        });
        let events: Vec<Interaction> = d.splits.valid.iter().chain(&d.splits.test).cloned().collect();
        let r = evaluate(&noise, &events, &index, Centricity::Item, &EvalConfig::default()).unwrap();
        assert!(r.groups_evaluated >= 200, "{}", r.groups_evaluated);
        assert!((r.auc - 0.5).abs() < 0.05, "{}", r.auc);
    }

    #[test]
    fn fixed_seed_reproduces_the_report() {
        let d = data();
        let index = d.history_index();
        let scorer = FnScorer(|s: &DualSample| (s.target_item * 31 % 17 + s.target_user % 5) as f64);
        let cfg = EvalConfig { seed: 3, ..EvalConfig::default() };
        let a = evaluate(&scorer, &d.splits.test, &index, Centricity::User, &cfg).unwrap();
        let b = evaluate(&scorer, &d.splits.test, &index, Centricity::User, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().to_string(), b.to_json().to_string());
        let other = evaluate(&scorer, &d.splits.test, &index, Centricity::User, &EvalConfig { seed: 4, ..cfg }).unwrap();
        assert_ne!(a.auc, other.auc);
    }

    #[test]
    fn candidates_put_the_positive_first_with_fresh_negatives() {
        let d = data();
        let index = d.history_index();
        let cfg = EvalConfig::default();
        let (lists, _) = build_candidates(&d.splits.test, &index, Centricity::User, 5, &cfg).unwrap();
        for (user, cands) in &lists {
            assert_eq!(cands[0].label, 1);
            assert_eq!(cands[0].target_user, *user);
            assert_eq!(cands.len(), cfg.k_neg + 1);
            let mut items: Vec<usize> = cands.iter().map(|c| c.target_item).collect();
            items.sort_unstable();
            items.dedup();
            assert_eq!(items.len(), cands.len());
            assert!(cands[1..].iter().all(|c| c.label == 0 && c.target_user == *user));
        }
    }

    #[test]
    fn report_json_has_the_expected_keys() {
        let d = data();
        let index = d.history_index();
        let r = evaluate(&FnScorer(|s: &DualSample| f64::from(s.label)), &d.splits.test, &index, Centricity::Item, &EvalConfig::default()).unwrap();
        let json = r.to_json();
        for key in ["centricity", "auc", "gauc", "mrr", "ndcg@10", "k_neg", "groups_evaluated", "groups_skipped", "seed", "config_hash"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert_eq!(json["centricity"], "item");
    }

    #[test]
    fn no_positives_is_an_empty_test_set() {
        let d = data();
        let index = d.history_index();
        let scorer = FnScorer(|_: &DualSample| 0.0);
        assert!(matches!(
            evaluate(&scorer, &[], &index, Centricity::User, &EvalConfig::default()),
            Err(EvalError::EmptyTestSet)
        ));
    }

    #[test]
    fn centricity_names_round_trip() {
        for c in [Centricity::User, Centricity::Item] {
            assert_eq!(c.to_string().parse::<Centricity>().unwrap(), c);
        }
        assert!("both".parse::<Centricity>().is_err());
        assert_eq!(Centricity::Item.tower(), Tower::NextUser);
    }
}
