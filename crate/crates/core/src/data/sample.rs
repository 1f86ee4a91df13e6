use super::error::DataError;
use super::history::HistoryIndex;
use crate::numeric::SeededRng;

/// A training/evaluation instance over both sequence views.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DualSample {
    pub target_user: usize,
    pub target_item: usize,
    pub timestamp: i64,
    /// Last `T` items of the target user before `timestamp`, left-padded with 0.
    pub item_seq: Vec<usize>,
    /// Last `T` users of the target item before `timestamp`, left-padded with 0.
    pub user_seq: Vec<usize>,
    pub label: u8,
}

fn left_padded(history: &[(usize, i64)], len: usize) -> Vec<usize> {
    let recent = &history[history.len().saturating_sub(len)..];
    let mut seq = vec![0; len - recent.len()];
    seq.extend(recent.iter().map(|&(id, _)| id));
    seq
}

pub fn make_dual_sample(
    index: &HistoryIndex,
    user: usize,
    item: usize,
    timestamp: i64,
    max_len: usize,
    label: u8,
) -> Result<DualSample, DataError> {
    if max_len == 0 {
        return Err(DataError::InvalidLength("max_seq_len"));
    }
    Ok(DualSample {
        target_user: user,
        target_item: item,
        timestamp,
        item_seq: left_padded(index.items_before(user, timestamp), max_len),
        user_seq: left_padded(index.users_before(item, timestamp), max_len),
        label,
    })
}

/// Which target a negative replaces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NegativeMode {
    /// Replace the target item; the user stays fixed.
    Item,
    /// Replace the target user; the item stays fixed.
    User,
}

impl NegativeMode {
    pub fn name(self) -> &'static str {
        match self {
            NegativeMode::Item => "item",
            NegativeMode::User => "user",
        }
    }
}

/// Rejection-sampling budget per negative draw.
pub const MAX_ATTEMPTS: usize = 1000;

/// Draws `k` distinct label-0 samples for `positive`.
///
/// Item mode draws items the target user never interacted with during
/// training (and never the positive item itself); the negative's user
/// sequence is the drawn item's own history before the positive's timestamp.
/// User mode is symmetric.
pub fn sample_negatives(
    positive: &DualSample,
    index: &HistoryIndex,
    mode: NegativeMode,
    k: usize,
    rng: &mut SeededRng,
) -> Result<Vec<DualSample>, DataError> {
    if k == 0 {
        return Err(DataError::InvalidLength("k"));
    }
    let (anchor, target, seen, total) = match mode {
        NegativeMode::Item => (
            positive.target_user,
            positive.target_item,
            index.train_items(positive.target_user),
            index.n_items(),
        ),
        NegativeMode::User => (
            positive.target_item,
            positive.target_user,
            index.train_users(positive.target_item),
            index.n_users(),
        ),
    };
    let excluded = |c: usize| c == target || seen.binary_search(&c).is_ok();
    let used = seen.len() + usize::from(seen.binary_search(&target).is_err() && target >= 1 && target <= total);
    let pool = total.saturating_sub(used);
    if pool == 0 {
        return Err(DataError::EmptyPool {
            mode: mode.name(),
            id: anchor,
            used,
            total,
        });
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut attempts = 0;
        let cand = loop {
            if attempts == MAX_ATTEMPTS {
                return Err(DataError::SamplingExhausted {
                    id: anchor,
                    k,
                    attempts,
                });
            }
            attempts += 1;
            let c = 1 + rng.below(total);
            if !excluded(c) && !chosen.contains(&c) {
                break c;
            }
        };
        chosen.push(cand);
    }
    let max_len = positive.item_seq.len();
    chosen
        .into_iter()
        .map(|c| match mode {
            NegativeMode::Item => make_dual_sample(index, positive.target_user, c, positive.timestamp, max_len, 0),
            NegativeMode::User => make_dual_sample(index, c, positive.target_item, positive.timestamp, max_len, 0),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Interaction;

    fn trace_index() -> HistoryIndex {
        let e = |user, item, timestamp| Interaction {
            user,
            item,
            timestamp,
            label: 1,
        };
        HistoryIndex::from_train(&[e(1, 1, 1), e(2, 1, 2), e(1, 2, 3)], 2, 2)
    }

    #[test]
    fn trace_samples() {
        let idx = trace_index();
        let s = make_dual_sample(&idx, 1, 2, 3, 3, 1).unwrap();
        assert_eq!(s.item_seq, vec![0, 0, 1]);
        assert_eq!(s.user_seq, vec![0, 0, 0]);
        let s = make_dual_sample(&idx, 2, 1, 2, 3, 1).unwrap();
        assert_eq!(s.item_seq, vec![0, 0, 0]);
        assert_eq!(s.user_seq, vec![0, 0, 1]);
    }

    #[test]
    fn truncates_to_most_recent() {
        let events: Vec<Interaction> = (1..=6)
            .map(|i| Interaction {
                user: 1,
                item: i,
                timestamp: i as i64,
                label: 1,
            })
            .collect();
        let idx = HistoryIndex::from_train(&events, 1, 7);
        let s = make_dual_sample(&idx, 1, 7, 100, 3, 1).unwrap();
        assert_eq!(s.item_seq, vec![4, 5, 6]);
    }

    #[test]
    fn empty_pool_errors() {
        let idx = trace_index();
        let pos = make_dual_sample(&idx, 1, 2, 3, 3, 1).unwrap();
        let err = sample_negatives(&pos, &idx, NegativeMode::Item, 1, &mut SeededRng::new(1));
        assert!(matches!(err, Err(DataError::EmptyPool { .. })));
    }

    #[test]
    fn item_negative_sequence_is_rebuilt() {
        let e = |user, item, timestamp| Interaction {
            user,
            item,
            timestamp,
            label: 1,
        };
        // u3 has seen nothing; item 1 has users [1, 2] before t=10.
        let idx = HistoryIndex::from_train(&[e(1, 1, 1), e(2, 1, 2), e(1, 2, 3)], 3, 2);
        let pos = make_dual_sample(&idx, 3, 2, 10, 3, 1).unwrap();
        assert_eq!(pos.user_seq, vec![0, 0, 1]);
        let negs = sample_negatives(&pos, &idx, NegativeMode::Item, 1, &mut SeededRng::new(9)).unwrap();
        assert_eq!(negs[0].target_item, 1);
        assert_eq!(negs[0].user_seq, vec![0, 1, 2]);
        assert_eq!(negs[0].item_seq, pos.item_seq);
        assert_eq!(negs[0].label, 0);
    }

    #[test]
    fn fifty_distinct_valid_negatives() {
        let events: Vec<Interaction> = (1..=30)
            .map(|i| Interaction {
                user: 1,
                item: i * 7,
                timestamp: i as i64,
                label: 1,
            })
            .collect();
        let idx = HistoryIndex::from_train(&events, 1, 1000);
        let pos = make_dual_sample(&idx, 1, 999, 100, 5, 1).unwrap();
        let negs = sample_negatives(&pos, &idx, NegativeMode::Item, 50, &mut SeededRng::new(4)).unwrap();
        let mut items: Vec<usize> = negs.iter().map(|n| n.target_item).collect();
        assert_eq!(items.len(), 50);
        for &it in &items {
            assert!(it != 999 && (1..=1000).contains(&it));
            assert!(!events.iter().any(|e| e.item == it));
        }
        items.sort_unstable();
        items.dedup();
        assert_eq!(items.len(), 50);
    }
}
