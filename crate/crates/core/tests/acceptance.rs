//! Acceptance criteria 1–10. Each test prints one `criterion N: PASS|FAIL`
//! line straight to stdout, so the lines appear even when output capture is
//! on, and then asserts the criterion.

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use mortality::cohort::{synth_cohort, Outcome, SynthConfig};
use mortality::eval::{auc, f1_score, perm_test_auc, stratified_kfold, stratified_split, undersample};
use mortality::experiment::{run_experiment, run_permtest, CohortSource, ExperimentConfig, FeatureSet, ResultsTable};
use mortality::impute::{impute_fit_transform, ImputeConfig, IncompleteMatrix};
use mortality::linmod::{logistic_objective, sigmoid, train_linear_svm, train_logreg, LinearModel, Regularizer};
use mortality::matrix::CsrMatrix;
use mortality::model::Algorithm;
use mortality::neural::gradcheck::{check_cnn, check_layer, check_mlp, LayerKind};
use mortality::neural::{train_cnn_fusion, CnnData, CnnParams, TrainParams};
use mortality::matrix::DenseMatrix;
use mortality::rng::derive_seed_str;
use mortality::trees::{train_gbt, BoostParams, Node};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn gauss(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn within(start: Instant, limit: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t < limit, format!("{:.1}s (limit {}s)", t.as_secs_f64(), limit.as_secs()))
}

#[test]
fn criterion_01_metric_arithmetic() {
    let a = f1_score(0.406, 0.692);
    let b = f1_score(0.383, 0.754);
    let pass = (a - 0.512).abs() <= 5e-4 && (b - 0.508).abs() <= 5e-4;
    report(1, pass, &format!("F1(0.406, 0.692) = {a:.4}, F1(0.383, 0.754) = {b:.4}"));
    assert!(pass);
}

#[test]
fn criterion_02_split_arithmetic() {
    let labels: Vec<bool> = (0..5396).map(|i| i < 698).collect();
    let s = stratified_split(&labels, 0.7, true, 1).unwrap();
    let plain = stratified_split(&labels, 0.7, false, 1).unwrap();
    let under: Vec<bool> = (0..3777).map(|i| i < 483).collect();
    let kept = undersample(&under, 4.0, 1).unwrap();
    let kept_pos = kept.iter().filter(|&&i| under[i]).count();
    let folds = stratified_kfold(&under, 5, 1).unwrap();
    let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let pass = s.train.len() == 3777
        && s.test.len() == 1619
        && plain.train.len() == 3777
        && plain.test.len() == 1619
        && kept_pos == 483
        && kept.len() - kept_pos == 1932
        && sizes == [756, 756, 755, 755, 755];
    report(
        2,
        pass,
        &format!(
            "train {} / test {}; undersampled {kept_pos}/{}; folds {sizes:?}",
            s.train.len(),
            s.test.len(),
            kept.len() - kept_pos
        ),
    );
    assert!(pass);
}

fn brute_auc(s: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &yi) in y.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

#[test]
fn criterion_03_auc_oracle() {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 1000 {
        let n = r.random_range(2..=50);
        let y: Vec<bool> = (0..n).map(|_| r.random::<bool>()).collect();
        if !y.iter().any(|&v| v) || y.iter().all(|&v| v) {
            continue;
        }
        // Coarse grid of values so ties are frequent.
        let s: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..8u8)) / 4.0).collect();
        worst = worst.max((auc(&s, &y).unwrap() - brute_auc(&s, &y)).abs());
        done += 1;
    }
    let (fast, t) = within(start, Duration::from_secs(5));
    let pass = worst <= 1e-12 && fast;
    report(3, pass, &format!("1000 instances, max |diff| {worst:.1e}, {t}"));
    assert!(pass);
}

fn fixed_dataset() -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut r = ChaCha8Rng::seed_from_u64(50);
    let beta: Vec<f64> = (0..10).map(|_| gauss(&mut r)).collect();
    let rows: Vec<Vec<f64>> = (0..50).map(|_| (0..10).map(|_| gauss(&mut r)).collect()).collect();
    let y = rows
        .iter()
        .map(|x| {
            let z: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
            r.random::<f64>() < sigmoid(0.5 * z)
        })
        .collect();
    (rows, y)
}

/// 10⁶ plain gradient-descent steps on Σ logloss + ½‖w‖²/C with step 1/L.
fn reference_l2(rows: &[Vec<f64>], y: &[bool], c: f64) -> f64 {
    let d = rows[0].len();
    let frob: f64 = rows.iter().map(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>()).sum();
    let step = 1.0 / (0.25 * frob + 1.0 / c);
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut gw = vec![0.0; d];
    for _ in 0..1_000_000 {
        gw.iter_mut().zip(&w).for_each(|(g, wj)| *g = wj / c);
        let mut gb = 0.0;
        for (x, &yi) in rows.iter().zip(y) {
            let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b;
            let g = sigmoid(s) - f64::from(u8::from(yi));
            gb += g;
            gw.iter_mut().zip(x).for_each(|(acc, v)| *acc += g * v);
        }
        w.iter_mut().zip(&gw).for_each(|(wj, g)| *wj -= step * g);
        b -= step * gb;
    }
    let m = LinearModel {
        weights: w,
        intercept: b,
        ..train_logreg(&CsrMatrix::from_dense_rows(rows).unwrap(), y, Regularizer::L2, c, None, 0).unwrap()
    };
    logistic_objective(&m, &CsrMatrix::from_dense_rows(rows).unwrap(), y, None)
}

/// Largest violation of the L1 optimality conditions, in the scaling where
/// the loss carries weight C and the penalty is ‖w‖₁.
fn l1_violation(m: &LinearModel, rows: &[Vec<f64>], y: &[bool], squared_hinge: bool) -> f64 {
    let d = rows[0].len();
    let mut g = vec![0.0; d + 1];
    for (x, &yi) in rows.iter().zip(y) {
        let s: f64 = x.iter().zip(&m.weights).map(|(a, b)| a * b).sum::<f64>() + m.intercept;
        let sign = if yi { 1.0 } else { -1.0 };
        let dl = if squared_hinge {
            -2.0 * sign * (1.0 - sign * s).max(0.0)
        } else {
            sigmoid(s) - f64::from(u8::from(yi))
        };
        for j in 0..d {
            g[j] += m.c * dl * x[j];
        }
        g[d] += m.c * dl;
    }
    let mut worst = g[d].abs();
    for j in 0..d {
        let w = m.weights[j];
        let v = if w != 0.0 { (g[j] + w.signum()).abs() } else { (g[j].abs() - 1.0).max(0.0) };
        worst = worst.max(v);
    }
    worst
}

#[test]
fn criterion_04_convex_solvers() {
    let start = Instant::now();
    let (rows, y) = fixed_dataset();
    let x = CsrMatrix::from_dense_rows(&rows).unwrap();
    let fitted = train_logreg(&x, &y, Regularizer::L2, 1.0, None, 0).unwrap();
    let ours = logistic_objective(&fitted, &x, &y, None);
    let reference = reference_l2(&rows, &y, 1.0);
    let rel = (ours - reference) / reference.abs();

    let mut l1_worst: f64 = 0.0;
    for c in [0.01, 0.1, 1.0, 10.0] {
        let lr = train_logreg(&x, &y, Regularizer::L1, c, None, 0).unwrap();
        let svm = train_linear_svm(&x, &y, Regularizer::L1, c, None, 0).unwrap();
        l1_worst = l1_worst.max(l1_violation(&lr, &rows, &y, false));
        l1_worst = l1_worst.max(l1_violation(&svm, &rows, &y, true));
    }

    // One informative column and nine noise columns.
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let rows1: Vec<Vec<f64>> = (0..100).map(|_| (0..10).map(|_| gauss(&mut r)).collect()).collect();
    let y1: Vec<bool> = rows1.iter().map(|x| x[0] + 0.3 * gauss(&mut r) > 0.0).collect();
    let x1 = CsrMatrix::from_dense_rows(&rows1).unwrap();
    let mut zeros = true;
    for c in [0.01, 0.005, 0.001] {
        for m in [
            train_logreg(&x1, &y1, Regularizer::L1, c, None, 0).unwrap(),
            train_linear_svm(&x1, &y1, Regularizer::L1, c, None, 0).unwrap(),
        ] {
            zeros &= m.weights[1..].iter().all(|&w| w == 0.0);
        }
    }
    let (fast, t) = within(start, Duration::from_secs(30));
    let pass = rel.abs() <= 1e-6 && l1_worst <= 1e-4 && zeros && fast;
    report(
        4,
        pass,
        &format!("L2 objective rel. gap {rel:.1e}; L1 max violation {l1_worst:.1e}; noise weights zero: {zeros}; {t}"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_gradient_checks() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        for kind in LayerKind::ALL {
            worst = worst.max(check_layer(kind, seed).unwrap().max_error());
        }
        worst = worst.max(check_mlp(seed).unwrap().max_error());
        worst = worst.max(check_cnn(seed).unwrap().max_error());
    }
    let (fast, t) = within(start, Duration::from_secs(60));
    let pass = worst < 1e-4 && fast;
    report(
        5,
        pass,
        &format!("{} layers + MLP + CNN over 10 seeds, max relative error {worst:.1e}, {t}", LayerKind::ALL.len()),
    );
    assert!(pass);
}

#[test]
fn criterion_06_boosting_descent() {
    let mut monotone = true;
    for seed in 0..5 {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..300).map(|_| (0..6).map(|_| gauss(&mut r)).collect()).collect();
        let y: Vec<bool> = rows
            .iter()
            .map(|x| r.random::<f64>() < sigmoid(x[0] * x[1] + x[2] - 0.5))
            .collect();
        let m = train_gbt(&CsrMatrix::from_dense_rows(&rows).unwrap(), &y, &BoostParams::default(), None, seed).unwrap();
        monotone &= m.train_loss.len() == 101 && m.train_loss.windows(2).all(|w| w[1] <= w[0]);
    }
    let single = |labels: &[bool]| {
        let x = CsrMatrix::from_dense_rows(&vec![vec![1.0]; labels.len()]).unwrap();
        let p = BoostParams {
            rounds: 1,
            max_depth: 0,
            lambda: 1.0,
            ..BoostParams::default()
        };
        match &train_gbt(&x, labels, &p, None, 0).unwrap().trees[0].tree {
            Node::Leaf { value } => *value,
            Node::Split { .. } => f64::NAN,
        }
    };
    let (w0, w1) = (single(&[true, false]), single(&[true, true]));
    let pass = monotone && w0.abs() < 1e-12 && (w1 - 2.0 / 3.0).abs() < 1e-12;
    report(
        6,
        pass,
        &format!("log-loss non-increasing on 5 datasets: {monotone}; leaf weights {w0:.4} and {w1:.4}"),
    );
    assert!(pass);
}

#[test]
fn criterion_07_imputation_quality() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + seed);
        let full: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let (a, b) = (gauss(&mut r), gauss(&mut r));
                let mut e = || 0.3 * gauss(&mut r);
                vec![a, b, a + b + e(), a - b + e(), 2.0 * a + e()]
            })
            .collect();
        let masked: Vec<Vec<Option<f64>>> = full
            .iter()
            .map(|row| row.iter().map(|&v| (r.random::<f64>() >= 0.3).then_some(v)).collect())
            .collect();
        let m = IncompleteMatrix::from_rows(&masked).unwrap();
        let (done, model) = impute_fit_transform(&m, &ImputeConfig { seed, ..ImputeConfig::default() }).unwrap();
        let (mut ce, mut me) = (0.0, 0.0);
        for (i, row) in masked.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if v.is_none() {
                    ce += (done.get(i, j) - full[i][j]).powi(2);
                    me += (model.column_means[j] - full[i][j]).powi(2);
                }
            }
        }
        worst = worst.max((ce / me).sqrt());
    }
    let (fast, t) = within(start, Duration::from_secs(30));
    let pass = worst <= 0.6 && fast;
    report(7, pass, &format!("worst RMSE ratio chained/mean over 10 seeds {worst:.3}, {t}"));
    assert!(pass);
}

#[test]
fn criterion_08_permutation_test() {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let labels: Vec<bool> = (0..300).map(|_| r.random::<f64>() < 0.3).collect();
    let s: Vec<f64> = (0..300).map(|_| gauss(&mut r)).collect();
    let identical = perm_test_auc(&s, &s, &labels, 1000, 1).unwrap().p_value;

    let mut small = 0;
    for trial in 0..200u64 {
        let mut r = ChaCha8Rng::seed_from_u64(1000 + trial);
        let n = 200;
        let y: Vec<bool> = (0..n).map(|_| r.random::<f64>() < 0.3).collect();
        let base: Vec<f64> = (0..n).map(|_| gauss(&mut r)).collect();
        let a: Vec<f64> = base.iter().map(|v| v + 1e-3 * gauss(&mut r)).collect();
        let b: Vec<f64> = base.iter().map(|v| v + 1e-3 * gauss(&mut r)).collect();
        if perm_test_auc(&a, &b, &y, 1000, trial).unwrap().p_value <= 0.05 {
            small += 1;
        }
    }
    let null_rate = f64::from(small) / 200.0;

    let mut detected = 0;
    for trial in 0..20u64 {
        let mut r = ChaCha8Rng::seed_from_u64(5000 + trial);
        let risk: Vec<f64> = (0..1000).map(|_| gauss(&mut r)).collect();
        let y: Vec<bool> = risk.iter().map(|&z| r.random::<f64>() < sigmoid(z - 1.5)).collect();
        let noise: Vec<f64> = (0..1000).map(|_| gauss(&mut r)).collect();
        if perm_test_auc(&risk, &noise, &y, 1000, trial).unwrap().p_value <= 0.05 {
            detected += 1;
        }
    }
    let (fast, t) = within(start, Duration::from_secs(120));
    let pass = identical == 1.0 && null_rate <= 0.08 && detected >= 19 && fast;
    report(
        8,
        pass,
        &format!("identical p = {identical}; null p<=0.05 rate {null_rate:.3}; signal detected {detected}/20; {t}"),
    );
    assert!(pass);
}

struct E2e {
    _dir: tempfile::TempDir,
    config: ExperimentConfig,
    table: ResultsTable,
    base_rate: f64,
    elapsed: Duration,
}

fn e2e() -> &'static E2e {
    static RUN: OnceLock<E2e> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let synth = SynthConfig::default().with_n(5396);
        let mut config = ExperimentConfig::new(CohortSource::Synth(synth.clone()), vec![Algorithm::L2Lr]);
        config.feature_sets = vec![FeatureSet::Structured, FeatureSet::Notes, FeatureSet::Combined];
        config.seed = 1;
        config.out_dir = dir.path().join("run");
        let cohort = synth_cohort(&synth, derive_seed_str(config.seed, "synth")).unwrap();
        let y = cohort.labels(Outcome::Hospital);
        let base_rate = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
        let start = Instant::now();
        let table = run_experiment(&config, 0).unwrap();
        E2e {
            _dir: dir,
            config,
            table,
            base_rate,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_09_end_to_end_ordering() {
    let run = e2e();
    let auc_of = |fs: &str| {
        run.table
            .get(&format!("{fs}:hospital:none:l2-lr"))
            .and_then(|c| c.test.as_ref())
            .and_then(|t| t.auc)
            .unwrap_or(f64::NAN)
    };
    let (s, n, c) = (auc_of("structured"), auc_of("notes"), auc_of("combined"));
    let p = run_permtest(&run.config.out_dir, "combined:hospital:none:l2-lr", "notes:hospital:none:l2-lr", None, None)
        .unwrap()
        .p_value;
    let rate_ok = (run.base_rate - 0.1294).abs() <= 0.01;
    let pass = rate_ok && c >= s + 0.01 && s >= n + 0.02 && p < 0.05 && run.elapsed < Duration::from_secs(600);
    report(
        9,
        pass,
        &format!(
            "base rate {:.4}; AUC combined {c:.4}, structured {s:.4}, notes {n:.4}; permtest p = {p:.4}; {:.0}s",
            run.base_rate,
            run.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

/// Sequences of random ids in `1..vocab`; label = id 0 present.
fn token_rule(n: usize, len: usize, vocab: u32, seed: u64) -> (CnnData, Vec<bool>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(n);
    let tokens = (0..n)
        .map(|i| {
            let mut t: Vec<u32> = (0..len).map(|_| r.random_range(1..vocab)).collect();
            if i % 2 == 0 {
                let at = r.random_range(0..len);
                t[at] = 0;
            }
            y.push(i % 2 == 0);
            t
        })
        .collect();
    (CnnData::new(tokens, DenseMatrix::zeros(n, 2)).unwrap(), y)
}

fn train_accuracy(model: &mortality::neural::CnnFusionModel, data: &CnnData, y: &[bool]) -> f64 {
    let p = model.predict_proba(data).unwrap();
    p.iter().zip(y).filter(|(p, &y)| (**p >= 0.5) == y).count() as f64 / y.len() as f64
}

#[test]
fn criterion_10_determinism_and_cnn() {
    let run = e2e();
    let dir = tempfile::tempdir().unwrap();
    let mut replay = ExperimentConfig::load(run.config.out_dir.join("manifest.json")).unwrap();
    replay.out_dir = dir.path().to_path_buf();
    let again = run_experiment(&replay, 1).unwrap();
    let same_metrics = again == run.table;
    let same_files = ["results_structured.tsv", "results_notes.tsv", "results_combined.tsv", "results.json"]
        .iter()
        .all(|f| std::fs::read(run.config.out_dir.join(f)).unwrap() == std::fs::read(dir.path().join(f)).unwrap());

    let start = Instant::now();
    let (toy, y_toy) = token_rule(500, 128, 2000, 10);
    let params = CnnParams {
        max_len: 128,
        ..CnnParams::default()
    };
    let toy_model = train_cnn_fusion(&toy, &y_toy, 2000, &params, None, None, 10).unwrap();
    let toy_epochs = toy_model.log.epochs.len();
    let toy_time = start.elapsed();

    // Eight-sample token-rule set: label = sequence contains token 0.
    let seqs: Vec<Vec<u32>> = vec![
        vec![0, 1, 2],
        vec![3, 4, 1],
        vec![2, 0, 4],
        vec![1, 2, 3],
        vec![4, 3, 0],
        vec![2, 2, 4],
        vec![0, 0, 1],
        vec![3, 1, 4],
    ];
    let y8: Vec<bool> = seqs.iter().map(|s| s.contains(&0)).collect();
    let data8 = CnnData::new(seqs, DenseMatrix::zeros(8, 0)).unwrap();
    let small = CnnParams {
        embedding_dim: 8,
        widths: vec![2, 3],
        filters: 4,
        hidden: 8,
        dropout: 0.0,
        max_len: 16,
        train: TrainParams {
            learning_rate: 0.01,
            batch_size: 4,
            max_epochs: 200,
            patience: 0,
            validation_fraction: 0.0,
        },
    };
    let m8 = train_cnn_fusion(&data8, &y8, 5, &small, None, None, 0).unwrap();
    let acc8 = train_accuracy(&m8, &data8, &y8);

    let pass = same_metrics && same_files && toy_time < Duration::from_secs(300) && acc8 == 1.0;
    report(
        10,
        pass,
        &format!(
            "manifest replay identical: metrics {same_metrics}, files {same_files}; CNN toy (n=500, len 128) {toy_epochs} epochs in {:.1}s; overfit accuracy {acc8}",
            toy_time.as_secs_f64()
        ),
    );
    assert!(pass);
}
