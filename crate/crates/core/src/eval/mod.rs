//! Dual-centric ranking evaluation.

mod evaluate;
mod metrics;

pub use evaluate::{build_candidates, evaluate, summarize, Centricity, EvalConfig, EvalError, MetricReport, Scorer};
pub use metrics::{auc, auc_pairwise, gauc, mean_group_auc, mrr, ndcg, ndcg_at_k, reciprocal_rank, ScoredGroup};
