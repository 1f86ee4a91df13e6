use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::data::PreparedData;
use crate::eval::MetricReport;
use crate::numeric::Scalar;

use super::{test_reports, train, TrainConfig, TrainError, TrainHistory};

/// Contrastive weights swept by default (applied to both λ_e and λ_p).
pub const DEFAULT_SWEEP_GRID: [f64; 4] = [1e-6, 1e-5, 1e-4, 1e-3];

/// One trained-and-evaluated ablation setting.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub use_dr: bool,
    pub use_di: bool,
    pub seed: u64,
    pub history: TrainHistory,
    pub user: MetricReport,
    pub item: MetricReport,
}

/// One trained-and-evaluated sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub seed: u64,
    pub history: TrainHistory,
    pub user: MetricReport,
    pub item: MetricReport,
}

/// The four (DR, DI) switch settings, full model first.
pub fn ablation_grid() -> [(bool, bool); 4] {
    [(true, true), (true, false), (false, true), (false, false)]
}

/// Trains with `λ_e` zeroed unless `use_dr` and `λ_p` zeroed unless
/// `use_di`, then evaluates both centricities on the test split.
pub fn ablate<S: Scalar>(cfg: &TrainConfig, data: &PreparedData, use_dr: bool, use_di: bool) -> Result<AblationRow, TrainError> {
    let mut c = cfg.clone();
    if !use_dr {
        c.lambda_e = 0.0;
    }
    if !use_di {
        c.lambda_p = 0.0;
    }
    let outcome = train::<S>(&c, data)?;
    let [user, item] = test_reports(&outcome.model, data, &c)?;
    Ok(AblationRow {
        use_dr,
        use_di,
        seed: c.seed,
        history: outcome.history,
        user,
        item,
    })
}

/// One train + evaluate per grid value with `λ_e = λ_p = λ`; every point
/// uses `cfg.seed`.
pub fn sweep_lambda<S: Scalar>(cfg: &TrainConfig, data: &PreparedData, grid: &[f64]) -> Result<Vec<SweepRow>, TrainError> {
    grid.iter()
        .map(|&lambda| {
            let c = cfg.clone().with_lambda_cl(lambda);
            let outcome = train::<S>(&c, data)?;
            let [user, item] = test_reports(&outcome.model, data, &c)?;
            Ok(SweepRow {
                lambda,
                seed: c.seed,
                history: outcome.history,
                user,
                item,
            })
        })
        .collect()
}

const METRIC_COLUMNS: &str = "user_auc,user_gauc,user_mrr,user_ndcg,item_auc,item_gauc,item_mrr,item_ndcg";

fn metric_cells(user: &MetricReport, item: &MetricReport) -> String {
    [user, item]
        .iter()
        .flat_map(|r| [r.auc, r.gauc, r.mrr, r.ndcg])
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl AblationRow {
    pub fn csv_header() -> String {
        format!("use_dr,use_di,seed,epochs,{METRIC_COLUMNS}")
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.use_dr,
            self.use_di,
            self.seed,
            self.history.len(),
            metric_cells(&self.user, &self.item)
        )
    }

    pub fn to_json(&self) -> Value {
        json!({
            "use_dr": self.use_dr,
            "use_di": self.use_di,
            "seed": self.seed,
            "epochs": self.history.len(),
            "user": self.user.to_json(),
            "item": self.item.to_json(),
        })
    }
}

impl SweepRow {
    pub fn csv_header() -> String {
        format!("lambda_cl,seed,epochs,{METRIC_COLUMNS}")
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{}",
            self.lambda,
            self.seed,
            self.history.len(),
            metric_cells(&self.user, &self.item)
        )
    }

    pub fn to_json(&self) -> Value {
        json!({
            "lambda_cl": self.lambda,
            "seed": self.seed,
            "epochs": self.history.len(),
            "user": self.user.to_json(),
            "item": self.item.to_json(),
        })
    }
}

/// CSV table with a header line.
pub fn table_csv<I: IntoIterator<Item = String>>(header: String, lines: I) -> String {
    let mut out = header;
    out.push('\n');
    for l in lines {
        let _ = writeln!(out, "{l}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{planted_dataset, PlantedConfig};
    use crate::model::DcnModel;

    fn tiny_data() -> PreparedData {
        let planted = PlantedConfig {
            n_users: 40,
            n_items: 60,
            n_clusters: 4,
            n_interactions: 3000,
            ..PlantedConfig::default()
        };
        planted_dataset(&planted, 5, 0.8, 0.9).unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            embed_dim: 8,
            batch_size: 100,
            lr: 0.01,
            max_seq_len: 5,
            epochs_max: 2,
            hidden: [16, 8],
            lambda_e: 0.01,
            lambda_p: 0.01,
            k_neg_valid: 9,
            k_neg_eval: 9,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn both_switches_off_is_the_plain_model() {
        let data = tiny_data();
        let cfg = tiny_config();
        let row = ablate::<f64>(&cfg, &data, false, false).unwrap();
        for r in &row.history.epochs {
            assert_eq!((r.l_e, r.l_p), (0.0, 0.0));
            assert!((r.l_total - (r.l_i + r.l_reg)).abs() < 1e-12);
        }
        let sweep = sweep_lambda::<f64>(&cfg, &data, &[0.0]).unwrap();
        assert_eq!(sweep[0].history, row.history);
        assert_eq!(sweep[0].user, row.user);
        assert_eq!(sweep[0].item, row.item);
    }

    #[test]
    fn without_dual_representation_transforms_stay_at_init() {
        let data = tiny_data();
        let mut cfg = tiny_config();
        cfg.lambda_e = 0.0;
        let trained = train::<f64>(&cfg, &data).unwrap().model;
        let init = DcnModel::<f64>::new(cfg.model_config(data.n_users(), data.n_items()), cfg.seed).unwrap();
        for id in trained.layout.transform_params() {
            assert_eq!(trained.store.value(id), init.store.value(id));
        }
        let moved = trained
            .layout
            .tower_params(crate::model::Tower::NextItem)
            .into_iter()
            .any(|id| trained.store.value(id) != init.store.value(id));
        assert!(moved);
    }

    #[test]
    fn grid_enumeration_and_tables() {
        let data = tiny_data();
        let cfg = TrainConfig { epochs_max: 1, ..tiny_config() };
        let rows: Vec<AblationRow> = ablation_grid()
            .iter()
            .map(|&(dr, di)| ablate::<f64>(&cfg, &data, dr, di).unwrap())
            .collect();
        assert_eq!(rows.len(), 4);
        let table = table_csv(AblationRow::csv_header(), rows.iter().map(AblationRow::csv_line));
        assert_eq!(table.lines().count(), 5);
        assert!(table.starts_with("use_dr,use_di,seed,epochs,user_auc,"));
        assert_eq!(rows[0].to_json()["user"]["centricity"], "user");

        let sweep = sweep_lambda::<f64>(&cfg, &data, &DEFAULT_SWEEP_GRID).unwrap();
        assert_eq!(sweep.len(), 4);
        for (row, lambda) in sweep.iter().zip(DEFAULT_SWEEP_GRID) {
            assert_eq!(row.lambda, lambda);
            assert_eq!(row.item.centricity, crate::eval::Centricity::Item);
        }
        let again = sweep_lambda::<f64>(&cfg, &data, &DEFAULT_SWEEP_GRID[..1]).unwrap();
        assert_eq!(again[0], sweep[0]);
    }
}
