//! Rank-based metrics over scored candidate groups.
//!
//! Ties between a positive and a negative count ½ in AUC; every ranking
//! metric orders tied candidates negatives-first, so ties never help.

use std::cmp::Ordering;

/// Candidates scored for one user (user-centric) or one item (item-centric).
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredGroup {
    pub key: usize,
    pub pairs: Vec<(f64, u8)>,
}

impl ScoredGroup {
    pub fn new(key: usize, pairs: Vec<(f64, u8)>) -> Self {
        Self { key, pairs }
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.1 == 1).count()
    }

    /// At least one positive and one negative.
    pub fn is_evaluable(&self) -> bool {
        let pos = self.positives();
        pos > 0 && pos < self.pairs.len()
    }
}

/// AUC by the rank-sum (Mann–Whitney U) formula with mid-ranks for ties.
/// `None` when the input lacks a positive or a negative.
pub fn auc(pairs: &[(f64, u8)]) -> Option<f64> {
    let pos = pairs.iter().filter(|p| p.1 == 1).count();
    let neg = pairs.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut sorted: Vec<(f64, u8)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1].0.total_cmp(&sorted[i].0) == Ordering::Equal {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        let tied_pos = sorted[i..=j].iter().filter(|p| p.1 == 1).count();
        rank_sum += mid * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// AUC by explicit pair counting; quadratic, kept as a cross-check.
pub fn auc_pairwise(pairs: &[(f64, u8)]) -> Option<f64> {
    let (pos, neg): (Vec<f64>, Vec<f64>) = (
        pairs.iter().filter(|p| p.1 == 1).map(|p| p.0).collect(),
        pairs.iter().filter(|p| p.1 != 1).map(|p| p.0).collect(),
    );
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &sp in &pos {
        for &sn in &neg {
            wins += match sp.total_cmp(&sn) {
                Ordering::Greater => 1.0,
                Ordering::Equal => 0.5,
                Ordering::Less => 0.0,
            };
        }
    }
    Some(wins / (pos.len() * neg.len()) as f64)
}

/// Positive-count-weighted mean of per-group AUC over evaluable groups.
pub fn gauc(groups: &[ScoredGroup]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for g in groups {
        if let Some(a) = auc(&g.pairs) {
            let w = g.positives() as f64;
            num += w * a;
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Labels in ranked order: score descending, negatives first among ties.
fn ranked_labels(pairs: &[(f64, u8)]) -> Vec<u8> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    sorted.into_iter().map(|p| p.1).collect()
}

/// Reciprocal rank of the best-ranked positive; `None` without positives.
pub fn reciprocal_rank(pairs: &[(f64, u8)]) -> Option<f64> {
    ranked_labels(pairs)
        .iter()
        .position(|&y| y == 1)
        .map(|r| 1.0 / (r + 1) as f64)
}

pub fn mrr(groups: &[ScoredGroup]) -> Option<f64> {
    mean(groups.iter().filter_map(|g| reciprocal_rank(&g.pairs)))
}

/// Binary-relevance NDCG@k of one group; `None` without positives.
pub fn ndcg(pairs: &[(f64, u8)], k: usize) -> Option<f64> {
    let labels = ranked_labels(pairs);
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || k == 0 {
        return None;
    }
    let gain = |p: usize| 1.0 / ((p + 1) as f64).log2();
    let dcg: f64 = labels
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &y)| y == 1)
        .map(|(i, _)| gain(i + 1))
        .sum();
    let idcg: f64 = (1..=pos.min(k)).map(gain).sum();
    Some(dcg / idcg)
}

pub fn ndcg_at_k(groups: &[ScoredGroup], k: usize) -> Option<f64> {
    mean(groups.iter().filter_map(|g| ndcg(&g.pairs, k)))
}

/// Unweighted mean of per-group AUC over evaluable groups.
pub fn mean_group_auc(groups: &[ScoredGroup]) -> Option<f64> {
    mean(groups.iter().filter_map(|g| auc(&g.pairs)))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}
