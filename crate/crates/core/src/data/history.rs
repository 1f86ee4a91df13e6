use super::log::Interaction;

/// Chronological per-user item histories and per-item user histories over
/// positive events, plus each side's training-period interaction sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryIndex {
    user_items: Vec<Vec<(usize, i64)>>,
    item_users: Vec<Vec<(usize, i64)>>,
    train_items_of_user: Vec<Vec<usize>>,
    train_users_of_item: Vec<Vec<usize>>,
    train_end: i64,
}

impl HistoryIndex {
    /// Builds the index over sorted `events`. Events with
    /// `timestamp < train_end` form the training interaction sets used to
    /// exclude negatives.
    pub fn build(events: &[Interaction], n_users: usize, n_items: usize, train_end: i64) -> Self {
        let mut user_items = vec![Vec::new(); n_users + 1];
        let mut item_users = vec![Vec::new(); n_items + 1];
        let mut train_items_of_user = vec![Vec::new(); n_users + 1];
        let mut train_users_of_item = vec![Vec::new(); n_items + 1];
        debug_assert!(events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        for e in events.iter().filter(|e| e.label == 1) {
            user_items[e.user].push((e.item, e.timestamp));
            item_users[e.item].push((e.user, e.timestamp));
            if e.timestamp < train_end {
                train_items_of_user[e.user].push(e.item);
                train_users_of_item[e.item].push(e.user);
            }
        }
        for v in train_items_of_user.iter_mut().chain(train_users_of_item.iter_mut()) {
            v.sort_unstable();
            v.dedup();
        }
        Self {
            user_items,
            item_users,
            train_items_of_user,
            train_users_of_item,
            train_end,
        }
    }

    /// Index whose every event counts as training data.
    pub fn from_train(events: &[Interaction], n_users: usize, n_items: usize) -> Self {
        Self::build(events, n_users, n_items, i64::MAX)
    }

    pub fn n_users(&self) -> usize {
        self.user_items.len() - 1
    }

    pub fn n_items(&self) -> usize {
        self.item_users.len() - 1
    }

    pub fn train_end(&self) -> i64 {
        self.train_end
    }

    /// Full chronological item history of `user` (empty if unknown).
    pub fn items_of(&self, user: usize) -> &[(usize, i64)] {
        self.user_items.get(user).map_or(&[], Vec::as_slice)
    }

    pub fn users_of(&self, item: usize) -> &[(usize, i64)] {
        self.item_users.get(item).map_or(&[], Vec::as_slice)
    }

    /// Items of `user` strictly before `t`.
    pub fn items_before(&self, user: usize, t: i64) -> &[(usize, i64)] {
        before(self.items_of(user), t)
    }

    pub fn users_before(&self, item: usize, t: i64) -> &[(usize, i64)] {
        before(self.users_of(item), t)
    }

    /// Sorted distinct items `user` interacted with during training.
    pub fn train_items(&self, user: usize) -> &[usize] {
        self.train_items_of_user.get(user).map_or(&[], Vec::as_slice)
    }

    pub fn train_users(&self, item: usize) -> &[usize] {
        self.train_users_of_item.get(item).map_or(&[], Vec::as_slice)
    }
}

fn before(list: &[(usize, i64)], t: i64) -> &[(usize, i64)] {
    &list[..list.partition_point(|&(_, ts)| ts < t)]
}
