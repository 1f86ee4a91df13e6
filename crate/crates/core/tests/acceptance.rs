//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dcn::data::{planted_dataset, PlantedConfig, PreparedData};
use dcn::eval::{auc, gauc, mrr, ndcg_at_k, ScoredGroup};
use dcn::model::{check_model_gradients, gru_encode, random_batch, Batch, DcnModel, GruWeights, LossConfig, ModelConfig, Tower};
use dcn::numeric::{xavier_uniform, ParamStore, SeededRng, Tensor};
use dcn::trainer::{ablate, epoch_samples, train, training_positives, TrainConfig, Trainer};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// 1. Finite-difference check of every parameter of a tiny full model.
fn gradient_soundness() -> Outcome {
    let start = Instant::now();
    let loss = LossConfig {
        lambda_e: 0.1,
        lambda_p: 0.1,
        lambda_reg: 1e-5,
        aux_on_negatives: true,
    };
    let cfg = ModelConfig::new(6, 8, 4, 5);
    let report = check_model_gradients(&cfg, &loss, 3, 2024, 1e-5).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(report.max_rel_error < 1e-4, || format!("max relative error {:.3e} at {:?}", report.max_rel_error, report.worst))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} entries, max relative error {:.2e}, {:.2}s",
        report.checked,
        report.max_rel_error,
        elapsed.as_secs_f64()
    ))
}

/// Brute-force Mann-Whitney count, independent of the library's rank sums.
fn pairwise_oracle(pairs: &[(f64, u8)]) -> f64 {
    let (mut wins, mut total) = (0.0, 0.0);
    for p in pairs.iter().filter(|p| p.1 == 1) {
        for n in pairs.iter().filter(|n| n.1 == 0) {
            total += 1.0;
            if p.0 > n.0 {
                wins += 1.0;
            } else if p.0 == n.0 {
                wins += 0.5;
            }
        }
    }
    wins / total
}

/// Groups whose only positive sits at `rank` among `len` candidates.
fn single_positive(rank: usize, len: usize) -> ScoredGroup {
    let pairs = (1..=len).map(|r| ((len - r) as f64, u8::from(r == rank))).collect();
    ScoredGroup::new(0, pairs)
}

/// 2. Metric oracles.
fn metric_oracles() -> Outcome {
    let mut rng = SeededRng::new(77);
    let mut worst: f64 = 0.0;
    let mut sets = 0;
    while sets < 1000 {
        let n = 2 + rng.below(60);
        let pairs: Vec<(f64, u8)> = (0..n).map(|_| ((rng.below(12) as f64) / 4.0, u8::from(rng.unit() < 0.3))).collect();
        if !pairs.iter().any(|p| p.1 == 1) || !pairs.iter().any(|p| p.1 == 0) {
            continue;
        }
        sets += 1;
        let got = auc(&pairs).ok_or("auc undefined on a two-class set")?;
        worst = worst.max((got - pairwise_oracle(&pairs)).abs());
    }
    ensure(worst <= 1e-12, || format!("auc vs pairwise differs by {worst:.3e}"))?;

    let a = ScoredGroup::new(1, vec![(0.9, 1), (0.8, 1), (0.1, 0)]);
    let b = ScoredGroup::new(2, vec![(0.3, 1), (0.5, 0), (0.1, 0)]);
    let g = gauc(&[a, b]).ok_or("gauc undefined")?;
    ensure((g - 2.5 / 3.0).abs() < 1e-12, || format!("gauc fixture {g}"))?;

    let cases = [(1, 1.0), (3, 0.5), (11, 0.0)];
    for (rank, expected) in cases {
        let v = ndcg_at_k(&[single_positive(rank, 20)], 10).ok_or("ndcg undefined")?;
        ensure((v - expected).abs() < 1e-12, || format!("ndcg rank {rank}: {v}"))?;
    }
    let m = mrr(&[single_positive(1, 5), single_positive(4, 5)]).ok_or("mrr undefined")?;
    ensure((m - 0.625).abs() < 1e-12, || format!("mrr fixture {m}"))?;
    Ok(format!("{sets} random sets, max |auc - pairwise| {worst:.1e}; gauc {g:.6}; ndcg 1/0.5/0; mrr {m}"))
}

fn small_planted() -> PreparedData {
    let planted = PlantedConfig {
        n_users: 60,
        n_items: 90,
        n_clusters: 4,
        n_interactions: 5000,
        ..PlantedConfig::default()
    };
    planted_dataset(&planted, 5, 0.8, 0.9).expect("planted data")
}

fn small_config() -> TrainConfig {
    TrainConfig {
        embed_dim: 8,
        max_seq_len: 5,
        batch_size: 100,
        lr: 0.01,
        epochs_max: 3,
        k_neg_valid: 9,
        k_neg_eval: 9,
        lambda_reg: 1e-3,
        ..TrainConfig::default()
    }
}

/// `λ Σ‖row‖²` over the non-pad embedding rows a batch touches.
fn penalty_oracle(model: &DcnModel<f64>, batch: &Batch, lambda: f64) -> f64 {
    let mut users: Vec<usize> = batch.users.iter().chain(&batch.user_seqs).copied().filter(|&u| u != 0).collect();
    let mut items: Vec<usize> = batch.items.iter().chain(&batch.item_seqs).copied().filter(|&i| i != 0).collect();
    users.sort_unstable();
    users.dedup();
    items.sort_unstable();
    items.dedup();
    let sq = |t: &Tensor<f64>, rows: &[usize]| -> f64 { rows.iter().flat_map(|&r| t.row(r)).map(|x| x * x).sum() };
    lambda * (sq(model.store.value(model.layout.user_embedding), &users) + sq(model.store.value(model.layout.item_embedding), &items))
}

fn grads(model: &mut DcnModel<f64>, batch: &Batch, loss: &LossConfig, ids: &[dcn::numeric::ParamId]) -> Result<Vec<f64>, String> {
    let pass = model.forward(batch, loss).map_err(|e| e.to_string())?;
    model.store.zero_grads();
    pass.backward(&mut model.store).map_err(|e| e.to_string())?;
    Ok(ids.iter().flat_map(|&id| model.store.grad(id).to_vec()).collect())
}

/// 3. Switch-off identities.
fn ablation_identities() -> Outcome {
    let data = small_planted();
    let cfg = small_config().with_lambda_cl(0.0);

    // Per batch: L_total against an independently computed penalty.
    let index = data.history_index();
    let positives = training_positives(&data, &index, cfg.max_seq_len).map_err(|e| e.to_string())?;
    let samples = epoch_samples(&positives, &index, 1, cfg.seed, 1).map_err(|e| e.to_string())?;
    let model = DcnModel::<f64>::new(cfg.model_config(data.n_users(), data.n_items()), cfg.seed).map_err(|e| e.to_string())?;
    let mut trainer = Trainer::new(model, &cfg).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut batches = 0;
    for chunk in samples.chunks(cfg.batch_size) {
        let batch = Batch::from_samples(chunk, cfg.max_seq_len).map_err(|e| e.to_string())?;
        let reg = penalty_oracle(&trainer.model, &batch, cfg.lambda_reg);
        let out = trainer.step(&batch).map_err(|e| e.to_string())?;
        worst = worst.max((out.l_total - (out.l_i + reg)).abs());
        batches += 1;
    }
    ensure(worst < 1e-10, || format!("per-batch decomposition off by {worst:.3e}"))?;

    // Per epoch: recorded history.
    let outcome = train::<f64>(&cfg, &data).map_err(|e| e.to_string())?;
    for r in &outcome.history.epochs {
        ensure(r.l_e == 0.0 && r.l_p == 0.0, || format!("epoch {} has contrastive terms", r.epoch))?;
        let gap = (r.l_total - (r.l_i + r.l_reg)).abs();
        ensure(gap < 1e-10, || format!("epoch {} decomposition off by {gap:.3e}", r.epoch))?;
    }

    // Exact zero gradients under each switch-off.
    let mcfg = ModelConfig::new(7, 9, 4, 5);
    let mut model = DcnModel::<f64>::new(mcfg.clone(), 3).map_err(|e| e.to_string())?;
    let mut rng = SeededRng::new(5);
    for _ in 0..10 {
        let batch = random_batch(&mcfg, 4, &mut rng);
        let transform = model.layout.transform_params();
        let next_user = model.layout.tower_params(Tower::NextUser);
        let no_dr = LossConfig { lambda_e: 0.0, lambda_p: 0.1, lambda_reg: 1e-5, aux_on_negatives: true };
        let no_di = LossConfig { lambda_e: 0.1, lambda_p: 0.0, lambda_reg: 1e-5, aux_on_negatives: true };
        ensure(grads(&mut model, &batch, &no_dr, &transform)?.iter().all(|&g| g == 0.0), || "transform gradient with DR off".into())?;
        ensure(grads(&mut model, &batch, &no_di, &next_user)?.iter().all(|&g| g == 0.0), || "next-user tower gradient with DI off".into())?;
    }
    Ok(format!(
        "{batches} batches max |L_total - L_i - penalty| {worst:.1e}; {} epochs decompose; switch-off gradients exactly zero",
        outcome.history.len()
    ))
}

/// Sets one tensor of a store in place.
fn set(store: &mut ParamStore<f64>, id: dcn::numeric::ParamId, f: impl Fn(&mut [f64])) {
    f(store.get_mut(id).value.data_mut());
}

/// 4. Structural invariants.
fn structural_invariants() -> Outcome {
    // Pad rows through 100 Adam steps.
    let data = small_planted();
    let cfg = small_config();
    let index = data.history_index();
    let positives = training_positives(&data, &index, cfg.max_seq_len).map_err(|e| e.to_string())?;
    let model = DcnModel::<f64>::new(cfg.model_config(data.n_users(), data.n_items()), 1).map_err(|e| e.to_string())?;
    let mut trainer = Trainer::new(model, &cfg).map_err(|e| e.to_string())?;
    let mut steps = 0;
    let mut epoch = 1;
    while steps < 100 {
        let samples = epoch_samples(&positives, &index, 1, cfg.seed, epoch).map_err(|e| e.to_string())?;
        for chunk in samples.chunks(cfg.batch_size) {
            if steps == 100 {
                break;
            }
            let batch = Batch::from_samples(chunk, cfg.max_seq_len).map_err(|e| e.to_string())?;
            trainer.step(&batch).map_err(|e| e.to_string())?;
            steps += 1;
        }
        epoch += 1;
    }
    for id in [trainer.model.layout.user_embedding, trainer.model.layout.item_embedding] {
        let row = trainer.model.store.value(id).row(0);
        ensure(row.iter().all(|&x| x == 0.0), || format!("pad row moved: {row:?}"))?;
    }

    // Left-pad invariance of the GRU.
    let mut rng = SeededRng::new(13);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = 1 + rng.below(6);
        let t = 1 + rng.below(10);
        let pads = rng.below(t);
        let w = GruWeights {
            w_z: xavier_uniform(&[d, 2 * d], &mut rng).map_err(|e| e.to_string())?,
            w_r: xavier_uniform(&[d, 2 * d], &mut rng).map_err(|e| e.to_string())?,
            w_h: xavier_uniform(&[d, 2 * d], &mut rng).map_err(|e| e.to_string())?,
        };
        let suffix: Vec<f64> = (0..(t - pads) * d).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let mut padded = vec![0.0; pads * d];
        padded.extend_from_slice(&suffix);
        let full = gru_encode(&Tensor::matrix(t, d, padded).map_err(|e| e.to_string())?, &w).map_err(|e| e.to_string())?;
        let short = gru_encode(&Tensor::matrix(t - pads, d, suffix).map_err(|e| e.to_string())?, &w).map_err(|e| e.to_string())?;
        for (a, b) in full.data().iter().zip(short.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("left-pad invariance off by {worst:.3e}"))?;

    // Contrastive terms: non-negative, and zero at equality.
    let mcfg = ModelConfig::new(7, 9, 4, 5);
    let loss = LossConfig { lambda_e: 0.5, lambda_p: 0.5, lambda_reg: 0.0, aux_on_negatives: true };
    let mut min_seen = f64::INFINITY;
    for seed in 0..50 {
        let model = DcnModel::<f64>::new(mcfg.clone(), seed).map_err(|e| e.to_string())?;
        let batch = random_batch(&mcfg, 6, &mut SeededRng::new(seed));
        let out = model.forward(&batch, &loss).map_err(|e| e.to_string())?.outputs;
        min_seen = min_seen.min(out.l_e).min(out.l_p);
    }
    ensure(min_seen >= 0.0, || format!("negative contrastive term {min_seen}"))?;

    let mut model = DcnModel::<f64>::new(mcfg.clone(), 99).map_err(|e| e.to_string())?;
    let batch = random_batch(&mcfg, 1, &mut SeededRng::new(99));
    let l = model.layout.clone();
    let target_user = model.store.value(l.user_embedding).row(batch.users[0]).to_vec();
    let target_item = model.store.value(l.item_embedding).row(batch.items[0]).to_vec();
    set(&mut model.store, l.item_to_user.w, |w| w.fill(0.0));
    set(&mut model.store, l.item_to_user.b, |b| b.copy_from_slice(&target_user));
    set(&mut model.store, l.user_to_item.w, |w| w.fill(0.0));
    set(&mut model.store, l.user_to_item.b, |b| b.copy_from_slice(&target_item));
    for tower in [Tower::NextItem, Tower::NextUser, Tower::Static] {
        let last = l.tower(tower)[2];
        set(&mut model.store, last.w, |w| w.fill(0.0));
        set(&mut model.store, last.b, |b| b.fill(0.0));
    }
    let out = model.forward(&batch, &loss).map_err(|e| e.to_string())?.outputs;
    ensure(out.l_e == 0.0 && out.l_p == 0.0, || format!("at equality L_e = {}, L_p = {}", out.l_e, out.l_p))?;
    Ok(format!(
        "pad rows zero after {steps} steps; 1000 left-pad draws max diff {worst:.1e}; min contrastive term {min_seen:.2e}; zero at equality"
    ))
}

fn planted_full() -> PreparedData {
    planted_dataset(&PlantedConfig::default(), 10, 0.8, 0.9).expect("planted data")
}

fn planted_config() -> TrainConfig {
    TrainConfig {
        embed_dim: 16,
        max_seq_len: 10,
        epochs_max: 50,
        patience: 3,
        k_neg_valid: 19,
        ..TrainConfig::default()
    }
    .with_lambda_cl(1e-4)
}

/// 5. Full DCN learns the planted clusters and their drift.
fn planted_learning() -> Outcome {
    let start = Instant::now();
    let data = planted_full();
    let cfg = planted_config();
    let row = ablate::<f32>(&cfg, &data, true, true).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let detail = format!(
        "{} users, {} items after 10-core; {} epochs; user AUC {:.4}, item AUC {:.4}; {:.0}s",
        data.n_users(),
        data.n_items(),
        row.history.len(),
        row.user.auc,
        row.item.auc,
        elapsed.as_secs_f64()
    );
    ensure(row.user.auc > 0.85 && row.item.auc > 0.80, || detail.clone())?;
    ensure(elapsed < Duration::from_secs(300), || detail.clone())?;
    Ok(detail)
}

/// 6. Contrastive terms help item-centric ranking more than user-centric.
fn directional_claim() -> Outcome {
    let data = planted_full();
    let seeds = 5;
    let (mut d_user, mut d_item) = (0.0, 0.0);
    for seed in 0..seeds {
        let cfg = TrainConfig {
            epochs_max: 8,
            seed,
            ..planted_config()
        };
        let full = ablate::<f32>(&cfg, &data, true, true).map_err(|e| e.to_string())?;
        let plain = ablate::<f32>(&cfg, &data, false, false).map_err(|e| e.to_string())?;
        d_user += full.user.auc - plain.user.auc;
        d_item += full.item.auc - plain.item.auc;
    }
    let (d_user, d_item) = (d_user / seeds as f64, d_item / seeds as f64);
    let detail = format!("{seeds} seeds: mean item-centric gain {d_item:+.4}, user-centric gain {d_user:+.4}");
    ensure(d_item > 0.0 && d_item > d_user, || detail.clone())?;
    Ok(detail)
}

fn dcn(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dcn")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("dcn {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// 7. Two identical `train` runs write identical bytes.
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    dcn(&["generate", "--out", path(&root.join("raw")), "--users", "60", "--items", "90", "--clusters", "4", "--interactions", "5000", "--seed", "3"])?;
    let csv = root.join("raw/interactions.csv");
    dcn(&["prepare", "--input", path(&csv), "--n-core", "5", "--out", path(&root.join("data"))])?;
    let data = root.join("data");
    let common = [
        "--data", path(&data), "--embed-dim", "8", "--max-seq-len", "5", "--hidden", "32,16", "--epochs-max", "3",
        "--k-neg-valid", "9", "--k-neg-eval", "19", "--seed", "11",
    ];
    let files = ["history.csv", "report_user.json", "report_item.json", "model.ckpt"];
    let mut contents = Vec::new();
    for run in ["a", "b"] {
        let out = root.join(run);
        let mut args = vec!["train", "--out", path(&out)];
        args.extend_from_slice(&common);
        dcn(&args)?;
        let mut bytes = Vec::new();
        for f in files {
            bytes.push(fs::read(out.join(f)).map_err(|e| format!("{f}: {e}"))?);
        }
        contents.push(bytes);
    }
    for (i, f) in files.iter().enumerate() {
        ensure(contents[0][i] == contents[1][i], || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} identical across two runs", files.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("gradient soundness", gradient_soundness),
        ("metric oracles", metric_oracles),
        ("ablation identities", ablation_identities),
        ("structural invariants", structural_invariants),
        ("planted-pattern learning", planted_learning),
        ("directional claim", directional_claim),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
