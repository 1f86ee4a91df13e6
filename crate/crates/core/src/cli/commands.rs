use std::fs;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use super::config::{Boundary, CentricitySel, ConfigError, Precision, RunConfig};
use super::selftest::run_selftest;
use crate::data::{ingest, n_core_filter, planted_log, DataError, PlantedConfig, PreparedData, SplitSpec};
use crate::eval::{evaluate as evaluate_split, Centricity, EvalError, MetricReport};
use crate::model::DcnModel;
use crate::numeric::{OpKind, Scalar};
use crate::trainer::{
    ablate as ablate_one, ablation_grid, load_checkpoint, save_checkpoint, sweep_lambda, table_csv, test_eval_config, test_reports,
    train as train_model, AblationRow, CheckpointError, SweepRow, TrainError,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Artifact(String),
    #[error("selftest failed")]
    Selftest,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Selftest => 1,
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Artifact(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Data(d) => d.into(),
            EvalError::EmptyTestSet | EvalError::NoEvaluableGroups => CliError::Input(e.to_string()),
            EvalError::Model(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } | TrainError::Tensor(_) | TrainError::Model(_) => CliError::Numeric(e.to_string()),
            TrainError::Eval(inner) => inner.into(),
            TrainError::Config(_) | TrainError::EmptyTrainSplit | TrainError::Data(_) => CliError::Input(e.to_string()),
        }
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Artifact(e.to_string())
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("JSON values serialize");
    write(path, &(text + "\n"))
}

fn echo_config(cfg: &RunConfig) -> Result<(), CliError> {
    write(&cfg.out.join("config.txt"), &cfg.render())
}

/// Timestamp of the event at `frac` of the sorted log (or one past the last).
fn quantile_boundary(timestamps: &[i64], frac: f64) -> i64 {
    let idx = (frac * timestamps.len() as f64) as usize;
    match timestamps.get(idx) {
        Some(&t) => t,
        None => timestamps.last().map_or(0, |t| t.saturating_add(1)),
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<(), CliError> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| CliError::Input("prepare needs --input".into()))?;
    let log = ingest(input)?;
    let filtered = n_core_filter(&log, cfg.n_core)?;
    if filtered.is_empty() {
        eprintln!(
            "warning: {}-core filtering removed every interaction; writing empty splits",
            cfg.n_core
        );
    }
    let ts: Vec<i64> = filtered.interactions.iter().map(|e| e.timestamp).collect();
    let pick = |b: Boundary, frac| match b {
        Boundary::At(t) => t,
        Boundary::Auto => quantile_boundary(&ts, frac),
    };
    let spec = SplitSpec::new(pick(cfg.train_end, 0.8), pick(cfg.valid_end, 0.9))?;
    let data = PreparedData::prepare(&log, cfg.n_core, spec)?;
    data.write(&cfg.out)?;
    echo_config(cfg)?;
    let [tr, va, te] = data.metadata().counts;
    println!(
        "prepared {} users, {} items; train {tr}, valid {va}, test {te} -> {}",
        data.n_users(),
        data.n_items(),
        cfg.out.display()
    );
    Ok(())
}

pub fn generate(cfg: &RunConfig, users: usize, items: usize, clusters: usize, interactions: usize) -> Result<(), CliError> {
    let planted = PlantedConfig {
        n_users: users,
        n_items: items,
        n_clusters: clusters,
        n_interactions: interactions,
        seed: cfg.train.seed,
        ..PlantedConfig::default()
    };
    let log = planted_log(&planted)?;
    let path = cfg.out.join("interactions.csv");
    // Raw ids, so that `prepare` sees the same strings the generator made.
    let mut csv = String::from("user_id,item_id,timestamp\n");
    for e in &log.interactions {
        let user = log.users.raw(e.user).unwrap_or_default();
        let item = log.items.raw(e.item).unwrap_or_default();
        csv.push_str(&format!("{user},{item},{}\n", e.timestamp));
    }
    write(&path, &csv)?;
    println!("wrote {} interactions to {}", log.len(), path.display());
    Ok(())
}

fn load_data(cfg: &RunConfig) -> Result<PreparedData, CliError> {
    Ok(PreparedData::read(&cfg.data)?)
}

fn centricities(sel: CentricitySel) -> Vec<Centricity> {
    match sel {
        CentricitySel::User => vec![Centricity::User],
        CentricitySel::Item => vec![Centricity::Item],
        CentricitySel::Both => vec![Centricity::User, Centricity::Item],
    }
}

fn report_file(c: Centricity) -> String {
    format!("report_{c}.json")
}

fn summary(r: &MetricReport) -> String {
    format!(
        "{}-centric: auc {:.4} gauc {:.4} mrr {:.4} ndcg@{} {:.4} ({} groups, {} skipped)",
        r.centricity, r.auc, r.gauc, r.mrr, r.k, r.ndcg, r.groups_evaluated, r.groups_skipped
    )
}

fn train_as<S: Scalar>(cfg: &RunConfig, data: &PreparedData) -> Result<(), CliError> {
    let outcome = train_model::<S>(&cfg.train, data)?;
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::Input(format!("cannot create {}: {e}", cfg.out.display())))?;
    save_checkpoint(&outcome.model, cfg.train.seed, &cfg.checkpoint_path())?;
    write(&cfg.out.join("history.csv"), &outcome.history.to_csv())?;
    echo_config(cfg)?;
    println!("trained {} epochs, kept epoch {}", outcome.history.len(), outcome.best_epoch);
    match test_reports(&outcome.model, data, &cfg.train) {
        Ok(reports) => {
            for r in &reports {
                write_json(&cfg.out.join(report_file(r.centricity)), &r.to_json())?;
                println!("{}", summary(r));
            }
        }
        Err(TrainError::Eval(EvalError::EmptyTestSet | EvalError::NoEvaluableGroups)) => {
            eprintln!("warning: test split has nothing to evaluate; no reports written");
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    match cfg.precision {
        Precision::F64 => train_as::<f64>(cfg, &data),
        Precision::F32 => train_as::<f32>(cfg, &data),
    }
}

fn evaluate_as<S: Scalar>(cfg: &RunConfig, data: &PreparedData) -> Result<(), CliError> {
    let path = cfg.checkpoint_path();
    if !path.is_file() {
        return Err(CliError::Artifact(format!("checkpoint not found: {}", path.display())));
    }
    let expected = cfg.train.model_config(data.n_users(), data.n_items());
    let model: DcnModel<S> = load_checkpoint(&path, Some(&expected))?.model;
    let index = data.history_index();
    let ec = test_eval_config(&cfg.train);
    let mut reports = Vec::new();
    for c in centricities(cfg.centricity) {
        let r = evaluate_split(&model, &data.splits.test, &index, c, &ec)?;
        write_json(&cfg.out.join(report_file(c)), &r.to_json())?;
        reports.push(r.to_json());
    }
    let out = if reports.len() == 1 {
        reports.pop().expect("one report")
    } else {
        Value::Array(reports)
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("JSON values serialize"));
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    echo_config(cfg)?;
    match cfg.precision {
        Precision::F64 => evaluate_as::<f64>(cfg, &data),
        Precision::F32 => evaluate_as::<f32>(cfg, &data),
    }
}

fn ablate_as<S: Scalar>(cfg: &RunConfig, data: &PreparedData) -> Result<Vec<AblationRow>, CliError> {
    ablation_grid()
        .into_iter()
        .map(|(dr, di)| ablate_one::<S>(&cfg.train, data, dr, di).map_err(CliError::from))
        .collect()
}

pub fn ablate(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let rows = match cfg.precision {
        Precision::F64 => ablate_as::<f64>(cfg, &data)?,
        Precision::F32 => ablate_as::<f32>(cfg, &data)?,
    };
    let csv = table_csv(AblationRow::csv_header(), rows.iter().map(AblationRow::csv_line));
    write(&cfg.out.join("ablation.csv"), &csv)?;
    write_json(&cfg.out.join("ablation.json"), &Value::Array(rows.iter().map(AblationRow::to_json).collect()))?;
    echo_config(cfg)?;
    print!("{csv}");
    Ok(())
}

pub fn sweep(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_data(cfg)?;
    let rows = match cfg.precision {
        Precision::F64 => sweep_lambda::<f64>(&cfg.train, &data, &cfg.grid)?,
        Precision::F32 => sweep_lambda::<f32>(&cfg.train, &data, &cfg.grid)?,
    };
    let csv = table_csv(SweepRow::csv_header(), rows.iter().map(SweepRow::csv_line));
    write(&cfg.out.join("sweep.csv"), &csv)?;
    write_json(&cfg.out.join("sweep.json"), &Value::Array(rows.iter().map(SweepRow::to_json).collect()))?;
    echo_config(cfg)?;
    print!("{csv}");
    Ok(())
}

pub fn selftest(fault: Option<&str>) -> Result<(), CliError> {
    let fault = match fault {
        None => None,
        Some(name) => Some(OpKind::from_name(name).ok_or_else(|| CliError::Input(format!("unknown op `{name}`")))?),
    };
    let report = run_selftest(fault);
    for s in &report.suites {
        println!("{:<12} {}/{} passed", s.name, s.passed, s.total);
    }
    for f in &report.failures {
        println!("FAIL {f}");
    }
    if report.failures.is_empty() {
        println!("selftest ok");
        Ok(())
    } else {
        Err(CliError::Selftest)
    }
}
