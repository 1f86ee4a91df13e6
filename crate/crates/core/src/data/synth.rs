use super::error::DataError;
use super::log::{IdMap, Interaction, InteractionLog};
use super::prepared::PreparedData;
use super::split::SplitSpec;
use crate::numeric::SeededRng;

/// Parameters of the planted-pattern generator.
///
/// Every user belongs to one interest cluster. Every item starts in a
/// cluster, and a `drift_fraction` of items migrates once to another cluster
/// at a random time. Each event picks a user uniformly, then with
/// probability `affinity` an item currently in that user's cluster, else a
/// uniformly random item. Timestamps are the event ordinals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantedConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_clusters: usize,
    pub n_interactions: usize,
    pub affinity: f64,
    pub drift_fraction: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_items: 300,
            n_clusters: 5,
            n_interactions: 20_000,
            affinity: 0.95,
            drift_fraction: 0.5,
            seed: 7,
        }
    }
}

struct ItemTrack {
    from: usize,
    to: usize,
    at: i64,
}

impl ItemTrack {
    fn cluster(&self, t: i64) -> usize {
        if t < self.at {
            self.from
        } else {
            self.to
        }
    }
}

/// Generates the planted log (raw ids `u<n>` / `i<n>`).
pub fn planted_log(cfg: &PlantedConfig) -> Result<InteractionLog, DataError> {
    if cfg.n_users == 0 || cfg.n_items == 0 || cfg.n_clusters == 0 || cfg.n_interactions == 0 {
        return Err(DataError::Empty);
    }
    let mut rng = SeededRng::derive(cfg.seed, "planted", 0);
    let n = cfg.n_interactions as i64;
    let user_cluster: Vec<usize> = (0..cfg.n_users).map(|u| u % cfg.n_clusters).collect();
    let tracks: Vec<ItemTrack> = (0..cfg.n_items)
        .map(|i| {
            let from = i % cfg.n_clusters;
            if cfg.n_clusters > 1 && rng.unit() < cfg.drift_fraction {
                let to = (from + 1 + rng.below(cfg.n_clusters - 1)) % cfg.n_clusters;
                let at = ((0.2 + 0.5 * rng.unit()) * n as f64) as i64;
                ItemTrack { from, to, at }
            } else {
                ItemTrack { from, to: from, at: n }
            }
        })
        .collect();

    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut interactions = Vec::with_capacity(cfg.n_interactions);
    let mut pool = Vec::with_capacity(cfg.n_items);
    for t in 0..n {
        let u = rng.below(cfg.n_users);
        let c = user_cluster[u];
        pool.clear();
        pool.extend((0..cfg.n_items).filter(|&i| tracks[i].cluster(t) == c));
        let i = if !pool.is_empty() && rng.unit() < cfg.affinity {
            pool[rng.below(pool.len())]
        } else {
            rng.below(cfg.n_items)
        };
        interactions.push(Interaction {
            user: users.intern(&format!("u{u}")),
            item: items.intern(&format!("i{i}")),
            timestamp: t,
            label: 1,
        });
    }
    Ok(InteractionLog {
        interactions,
        users,
        items,
    })
}

/// The planted log, `n_core`-filtered and split chronologically at the
/// given fractions of the timeline.
pub fn planted_dataset(cfg: &PlantedConfig, n_core: usize, train_frac: f64, valid_frac: f64) -> Result<PreparedData, DataError> {
    let log = planted_log(cfg)?;
    let n = cfg.n_interactions as f64;
    let spec = SplitSpec::new((train_frac * n) as i64, (valid_frac * n) as i64)?;
    PreparedData::prepare(&log, n_core, spec)
}
