use crate::eval::{auc, auc_pairwise, gauc, mrr, ndcg_at_k, ScoredGroup};
use crate::model::{check_model_gradients, gru_encode, random_batch, Backbone, DcnModel, GruWeights, LossConfig, ModelConfig, StaticTowerInput};
use crate::numeric::gradcheck::op_cases;
use crate::numeric::{AdamConfig, AdamState, OpKind, SeededRng, Tensor};

/// Pass counts of one suite.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
    /// One line per failed check, naming the suite and the check.
    pub failures: Vec<String>,
}

struct Suite<'a> {
    result: SuiteResult,
    failures: &'a mut Vec<String>,
}

impl Suite<'_> {
    fn check(&mut self, name: &str, ok: bool, detail: impl FnOnce() -> String) {
        self.result.total += 1;
        if ok {
            self.result.passed += 1;
        } else {
            self.failures.push(format!("{}/{name}: {}", self.result.name, detail()));
        }
    }
}

fn suite<'a>(report: &'a mut SelftestReport, name: &'static str, body: impl FnOnce(&mut Suite<'_>)) {
    let mut s = Suite {
        result: SuiteResult {
            name,
            passed: 0,
            total: 0,
        },
        failures: &mut report.failures,
    };
    body(&mut s);
    let result = s.result;
    report.suites.push(result);
}

const OP_TOLERANCE: f64 = 1e-6;
const MODEL_TOLERANCE: f64 = 1e-4;

fn gradient_suite(s: &mut Suite<'_>, fault: Option<OpKind>) {
    for case in op_cases(1) {
        let name = case.kind.name();
        match case.check(1e-5, fault) {
            Ok(r) => s.check(name, r.max_rel_error < OP_TOLERANCE, || {
                format!("max relative error {:.3e} at {:?}", r.max_rel_error, r.worst)
            }),
            Err(e) => s.check(name, false, || e.to_string()),
        }
    }
    let loss = LossConfig {
        lambda_e: 0.1,
        lambda_p: 0.1,
        lambda_reg: 1e-5,
        aux_on_negatives: true,
    };
    for backbone in [Backbone::Gru, Backbone::Attention] {
        for input in [StaticTowerInput::Embeddings, StaticTowerInput::Hidden] {
            let cfg = ModelConfig::new(6, 7, 4, 5)
                .with_backbone(backbone)
                .with_static_input(input)
                .with_hidden([8, 6]);
            let name = format!("model[{backbone},{input}]");
            match check_model_gradients(&cfg, &loss, 3, 5, 1e-5) {
                Ok(r) => s.check(&name, r.max_rel_error < MODEL_TOLERANCE, || {
                    format!("max relative error {:.3e} at {:?}", r.max_rel_error, r.worst)
                }),
                Err(e) => s.check(&name, false, || e.to_string()),
            }
        }
    }
}

fn close(a: Option<f64>, b: f64, tol: f64) -> bool {
    a.is_some_and(|a| (a - b).abs() <= tol)
}

fn metric_suite(s: &mut Suite<'_>) {
    let mut rng = SeededRng::derive(0, "selftest-metrics", 0);
    let mut agree = true;
    for _ in 0..200 {
        let n = 2 + rng.below(30);
        let pairs: Vec<(f64, u8)> = (0..n)
            .map(|_| ((rng.below(8) as f64) / 8.0, u8::from(rng.unit() < 0.4)))
            .collect();
        agree &= auc(&pairs).zip(auc_pairwise(&pairs)).is_none_or(|(a, b)| (a - b).abs() <= 1e-12);
    }
    s.check("auc-vs-pairwise", agree, || "rank-sum and pairwise AUC disagree".into());
    s.check("auc-fixture", close(auc(&[(0.9, 1), (0.1, 0), (0.5, 0)]), 1.0, 0.0), || "expected 1.0".into());
    s.check("auc-half", close(auc(&[(0.3, 1), (0.5, 0), (0.1, 0)]), 0.5, 1e-15), || "expected 0.5".into());
    let a = ScoredGroup::new(1, vec![(0.9, 1), (0.8, 1), (0.1, 0)]);
    let b = ScoredGroup::new(2, vec![(0.3, 1), (0.5, 0), (0.1, 0)]);
    s.check("gauc-weighted", close(gauc(&[a, b]), 2.5 / 3.0, 1e-12), || "expected 0.8333".into());
    let at = |rank: usize| {
        let mut pairs: Vec<(f64, u8)> = (0..12).map(|i| (1.0 - i as f64 * 0.05, 0)).collect();
        pairs[rank - 1].1 = 1;
        ScoredGroup::new(0, pairs)
    };
    for (rank, want) in [(1, 1.0), (3, 0.5), (11, 0.0)] {
        s.check(&format!("ndcg-rank{rank}"), close(ndcg_at_k(&[at(rank)], 10), want, 1e-12), || {
            format!("expected {want}")
        });
    }
    s.check("mrr-fixture", close(mrr(&[at(1), at(4)]), 0.625, 1e-12), || "expected 0.625".into());
}

fn invariant_suite(s: &mut Suite<'_>) {
    let mut rng = SeededRng::derive(0, "selftest-invariants", 0);
    let mut invariant = true;
    for _ in 0..100 {
        let d = 1 + rng.below(4);
        let t = 1 + rng.below(5);
        let k = 1 + rng.below(4);
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect() };
        let w = GruWeights {
            w_z: Tensor::matrix(d, 2 * d, draw(2 * d * d)).expect("shape"),
            w_r: Tensor::matrix(d, 2 * d, draw(2 * d * d)).expect("shape"),
            w_h: Tensor::matrix(d, 2 * d, draw(2 * d * d)).expect("shape"),
        };
        let seq = draw(t * d);
        let mut padded = vec![0.0; k * d];
        padded.extend_from_slice(&seq);
        let plain = gru_encode(&Tensor::matrix(t, d, seq).expect("shape"), &w).expect("encode");
        let left = gru_encode(&Tensor::matrix(t + k, d, padded).expect("shape"), &w).expect("encode");
        invariant &= plain
            .data()
            .iter()
            .zip(left.data())
            .all(|(a, b)| (a - b).abs() <= 1e-12);
    }
    s.check("left-pad", invariant, || "left padding changed the GRU state".into());

    let cfg = ModelConfig::new(6, 7, 4, 5).with_hidden([8, 6]);
    let mut model = DcnModel::<f64>::new(cfg.clone(), 3).expect("model");
    let mut adam = AdamState::new(AdamConfig::default(), &model.store).expect("adam");
    let loss = LossConfig::default();
    let mut nonneg = true;
    for _ in 0..20 {
        let batch = random_batch(&cfg, 4, &mut rng);
        let pass = model.forward(&batch, &loss).expect("forward");
        nonneg &= pass.outputs.l_e >= 0.0 && pass.outputs.l_p >= 0.0;
        model.store.zero_grads();
        pass.backward(&mut model.store).expect("backward");
        adam.step(&mut model.store).expect("step");
    }
    let pad_zero = [model.layout.user_embedding, model.layout.item_embedding]
        .iter()
        .all(|&id| model.store.value(id).row(0).iter().all(|&v| v == 0.0));
    s.check("pad-row", pad_zero, || "pad embedding row moved during training".into());
    s.check("contrastive-nonnegative", nonneg, || "negative contrastive loss".into());

    let batch = random_batch(&cfg, 4, &mut rng);
    let plain = LossConfig::plain(1e-5);
    let pass = model.forward(&batch, &plain).expect("forward");
    model.store.zero_grads();
    pass.backward(&mut model.store).expect("backward");
    let zero = |ids: Vec<crate::numeric::ParamId>| ids.iter().all(|&id| model.store.grad(id).iter().all(|&g| g == 0.0));
    s.check("dr-off-transforms", zero(model.layout.transform_params()), || {
        "transform parameters received gradient with the representation term off".into()
    });
    s.check("di-off-user-tower", zero(model.layout.tower_params(crate::model::Tower::NextUser)), || {
        "next-user tower received gradient with the interest term off".into()
    });
    let o = &pass.outputs;
    s.check("loss-decomposition", (o.l_total - (o.l_i + o.l_reg)).abs() <= 1e-12, || {
        format!("L_total {} vs L_i + L_reg {}", o.l_total, o.l_i + o.l_reg)
    });
}

/// Runs every suite. `fault` corrupts one op's backward rule in the
/// per-op gradient checks.
pub fn run_selftest(fault: Option<OpKind>) -> SelftestReport {
    let mut report = SelftestReport::default();
    suite(&mut report, "gradient", |s| gradient_suite(s, fault));
    suite(&mut report, "metrics", metric_suite);
    suite(&mut report, "invariants", invariant_suite);
    report
}
