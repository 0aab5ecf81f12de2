//! Gating acceptance criteria. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fail.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use marrow_core::dataset::{generate_synthetic_fixture, scan_dataset, FixtureSpec};
use marrow_core::metrics::{
    accuracy, accuracy_gap, auc_macro, confusion_matrix, precision_macro, recall, recall_macro, Averaging,
    ConfusionMatrix,
};
use marrow_core::model::{build_classifier, ModelConfig, WeightSource, STUB_BACKBONE};
use marrow_core::reporting::{parse_report_struct, reference_results, render_report};
use marrow_core::training::{categorical_cross_entropy, train, TrainConfig};
use marrow_core::ClassTaxonomy;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn marrow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_marrow"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn marrow")
}

fn run_ok(args: &[&str]) -> Result<Output, String> {
    let out = marrow(args);
    if out.status.success() {
        Ok(out)
    } else {
        Err(format!(
            "`marrow {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn random_labels(rng: &mut ChaCha8Rng, k: usize) -> (Vec<usize>, Vec<usize>) {
    let n = rng.random_range(1..=1000);
    (0..n).map(|_| (rng.random_range(0..k), rng.random_range(0..k))).unzip()
}

/// Per-sample counting straight from the label vectors.
struct Brute {
    correct: u64,
    tp: Vec<u64>,
    predicted: Vec<u64>,
    support: Vec<u64>,
}

fn brute(pred: &[usize], actual: &[usize], k: usize) -> Brute {
    let mut b = Brute {
        correct: 0,
        tp: vec![0; k],
        predicted: vec![0; k],
        support: vec![0; k],
    };
    for (&p, &a) in pred.iter().zip(actual) {
        b.predicted[p] += 1;
        b.support[a] += 1;
        if p == a {
            b.correct += 1;
            b.tp[a] += 1;
        }
    }
    b
}

fn macro_of(tp: &[u64], denom: &[u64]) -> f64 {
    let sum: f64 = tp
        .iter()
        .zip(denom)
        .filter(|(_, &d)| d > 0)
        .map(|(&t, &d)| t as f64 / d as f64)
        .sum();
    sum / tp.len() as f64
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let k = 21;
    for set in 0..1000 {
        let (pred, actual) = random_labels(&mut rng, k);
        let n = pred.len();
        let b = brute(&pred, &actual, k);
        let cm = confusion_matrix(&pred, &actual, k).map_err(|e| e.to_string())?;
        let acc = accuracy(&cm).map_err(|e| e.to_string())?;
        let p = precision_macro(&cm).map_err(|e| e.to_string())?.value;
        let r = recall_macro(&cm).map_err(|e| e.to_string())?.value;
        ensure!(acc == b.correct as f64 / n as f64, "set {set}: accuracy {acc}");
        ensure!(p == macro_of(&b.tp, &b.predicted), "set {set}: precision {p}");
        ensure!(r == macro_of(&b.tp, &b.support), "set {set}: recall {r}");
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("1000 sets in {elapsed:.2?}"))
}

fn confusion_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for set in 0..1000 {
        let k = rng.random_range(1..=21);
        let (pred, actual) = random_labels(&mut rng, k);
        let n = pred.len() as u64;
        let b = brute(&pred, &actual, k);
        let cm = confusion_matrix(&pred, &actual, k).map_err(|e| e.to_string())?;
        ensure!(cm.total() == n, "set {set}: total {} != {n}", cm.total());
        for c in 0..k {
            ensure!(cm.row_sum(c) == b.support[c], "set {set}: row sum of {c}");
            ensure!(cm.col_sum(c) == b.predicted[c], "set {set}: column sum of {c}");
            let pc = cm.per_class_counts(c).map_err(|e| e.to_string())?;
            ensure!(pc.tp + pc.tn + pc.fp + pc.fn_ == n, "set {set}: partition of class {c}");
            ensure!(pc.tp == b.tp[c], "set {set}: tp of {c}");
            ensure!(pc.fp == b.predicted[c] - b.tp[c], "set {set}: fp of {c}");
            ensure!(pc.fn_ == b.support[c] - b.tp[c], "set {set}: fn of {c}");
        }
    }
    Ok("1000 instances".into())
}

fn accuracy_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for m in 0..200 {
        let k = rng.random_range(1..=21);
        let counts: Vec<u64> = (0..k * k).map(|_| rng.random_range(0..50)).collect();
        let mut counts = counts;
        counts[0] += 1;
        let trace: u64 = (0..k).map(|c| counts[c * k + c]).sum();
        let total: u64 = counts.iter().sum();
        let cm = ConfusionMatrix::from_counts(k, counts).map_err(|e| e.to_string())?;
        let acc = accuracy(&cm).map_err(|e| e.to_string())?;
        let micro = recall(&cm, Averaging::Micro).map_err(|e| e.to_string())?.value;
        ensure!(acc == trace as f64 / total as f64, "matrix {m}: accuracy {acc}");
        ensure!(acc == micro, "matrix {m}: micro recall {micro} != accuracy {acc}");
    }
    Ok("200 matrices".into())
}

fn cross_entropy_values() -> Outcome {
    let ce = |p: Array2<f64>, labels: &[usize]| categorical_cross_entropy(&p, labels).map_err(|e| e.to_string());
    let uniform = ce(Array2::from_elem((4, 21), 1.0 / 21.0), &[0, 5, 13, 20])?;
    ensure!((uniform - 21f64.ln()).abs() < 1e-6, "uniform over 21 gave {uniform}");
    let mut certain = Array2::zeros((3, 21));
    for (i, &c) in [2usize, 7, 19].iter().enumerate() {
        certain[[i, c]] = 1.0;
    }
    let zero = ce(certain, &[2, 7, 19])?;
    ensure!(zero.abs() < 1e-12, "certainty gave {zero}");
    let half = ce(Array2::from_elem((2, 2), 0.5), &[0, 1])?;
    ensure!((half - 2f64.ln()).abs() < 1e-6, "p = 0.5 gave {half}");
    Ok(format!("ln21 {uniform:.9}, certain {zero}, ln2 {half:.9}"))
}

/// Pair counting over every (positive, negative) pair.
fn pairwise_auc(probs: &Array2<f64>, actual: &[usize]) -> f64 {
    let mut aucs = Vec::new();
    for c in 0..probs.ncols() {
        let pos: Vec<f64> = (0..actual.len()).filter(|&i| actual[i] == c).map(|i| probs[[i, c]]).collect();
        let neg: Vec<f64> = (0..actual.len()).filter(|&i| actual[i] != c).map(|i| probs[[i, c]]).collect();
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let mut wins = 0.0;
        for &p in &pos {
            for &q in &neg {
                wins += if p > q {
                    1.0
                } else if p == q {
                    0.5
                } else {
                    0.0
                };
            }
        }
        aucs.push(wins / (pos.len() * neg.len()) as f64);
    }
    aucs.iter().sum::<f64>() / aucs.len() as f64
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0f64;
    for inst in 0..100 {
        let k = rng.random_range(2..=5);
        let n = rng.random_range(2..=500);
        // Coarse integer weights so that ties are common.
        let levels = if inst % 2 == 0 { 4 } else { 1000 };
        let mut probs = Array2::from_shape_fn((n, k), |_| rng.random_range(1..=levels) as f64);
        for mut row in probs.rows_mut() {
            let sum = row.sum();
            row /= sum;
        }
        let mut actual: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        actual[0] = 0;
        actual[1] = 1;
        let got = auc_macro(&probs, &actual).map_err(|e| e.to_string())?.value;
        let want = pairwise_auc(&probs, &actual);
        worst = worst.max((got - want).abs());
        ensure!((got - want).abs() <= 1e-9, "instance {inst}: {got} vs {want}");
    }
    let actual: Vec<usize> = (0..60).map(|i| i % 3).collect();
    let perfect = Array2::from_shape_fn((60, 3), |(i, c)| if actual[i] == c { 0.8 } else { 0.1 });
    let p = auc_macro(&perfect, &actual).map_err(|e| e.to_string())?.value;
    ensure!(p == 1.0, "perfect separation gave {p}");
    let constant = Array2::from_elem((60, 3), 1.0 / 3.0);
    let c = auc_macro(&constant, &actual).map_err(|e| e.to_string())?.value;
    ensure!(c == 0.5, "constant scores gave {c}");
    Ok(format!("100 instances, max deviation {worst:e}"))
}

fn learnability(work: &Path) -> Outcome {
    let tax = ClassTaxonomy::bone_marrow();
    let root = work.join("learn");
    let spec = FixtureSpec::uniform(["BAS", "BLA", "EOS"], 20);
    generate_synthetic_fixture(&spec, 64, 0, &root, &tax).map_err(|e| e.to_string())?;
    let index = scan_dataset(&root, &tax).map_err(|e| e.to_string())?.index;
    let model_cfg = ModelConfig {
        backbone_name: STUB_BACKBONE.into(),
        ..ModelConfig::default()
    };
    let weights = WeightSource {
        random_fallback: true,
        ..WeightSource::default()
    };
    let model = build_classifier(&model_cfg, &weights).map_err(|e| e.to_string())?;
    let config = TrainConfig {
        batch_size: 32,
        epochs: 20,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let (_, history) = train(model, &index, &index, &config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let first = &history.epochs[0];
    ensure!(
        first.train_loss < history.initial_train_loss,
        "epoch-1 loss {} not below initial {}",
        first.train_loss,
        history.initial_train_loss
    );
    let best = history
        .epochs
        .iter()
        .find(|r| r.train_accuracy >= 0.95)
        .ok_or_else(|| format!("accuracy never reached 95%: {:?}", history.epochs.last()))?;
    ensure!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    Ok(format!(
        "{:.2}% at epoch {}, loss {:.4} -> {:.4}, {elapsed:.2?}",
        best.train_accuracy * 100.0,
        best.epoch,
        history.initial_train_loss,
        first.train_loss
    ))
}

fn end_to_end(work: &Path) -> Outcome {
    let data = work.join("e2e-data");
    let out = run_ok(&["dataset", "fixture", "--per-class", "10", "--classes", "all", "--out", s(&data)])?;
    ensure!(
        String::from_utf8_lossy(&out.stdout).contains("wrote 210 images"),
        "fixture summary: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    let cfg = work.join("e2e.toml");
    std::fs::write(
        &cfg,
        "[dataset]\nroot = \"e2e-data\"\n\n[model]\nbackbone_name = \"stub\"\n\n[weights]\nrandom_fallback = true\n",
    )
    .map_err(|e| e.to_string())?;
    let run1 = work.join("e2e-run1");
    run_ok(&["train", "--config", s(&cfg), "--run-dir", s(&run1)])?;

    let history = std::fs::read_to_string(run1.join("history.csv")).map_err(|e| e.to_string())?;
    ensure!(history.lines().count() == 6, "history.csv has {} lines", history.lines().count());
    for epoch in 1..=5 {
        ensure!(run1.join(format!("checkpoints/epoch_{epoch}")).is_file(), "missing checkpoint {epoch}");
    }
    let eval_dir = work.join("e2e-eval");
    let ckpt = run1.join("checkpoints/epoch_5");
    run_ok(&[
        "evaluate",
        "--checkpoint",
        s(&ckpt),
        "--index",
        s(&run1.join("train.index")),
        "--index",
        s(&run1.join("val.index")),
        "--run-dir",
        s(&eval_dir),
    ])?;
    let read = |dir: &PathBuf| std::fs::read_to_string(dir.join("report.struct")).map_err(|e| e.to_string());
    for dir in [&run1, &eval_dir] {
        let reports = parse_report_struct(&read(dir)?, "report.struct").map_err(|e| e.to_string())?;
        let names: Vec<&str> = reports.iter().map(|r| r.set_name.as_str()).collect();
        ensure!(names == ["Training", "Validation"], "rows {names:?} in {}", dir.display());
        ensure!(reports.iter().all(|r| r.is_finite()), "non-finite metrics in {}", dir.display());
        let table = std::fs::read_to_string(dir.join("report.txt")).map_err(|e| e.to_string())?;
        ensure!(
            table.starts_with("Set") && table.contains("AUC"),
            "bad table in {}",
            dir.display()
        );
    }
    ensure!(read(&run1)? == read(&eval_dir)?, "evaluate disagrees with the training report");

    let run2 = work.join("e2e-run2");
    run_ok(&["train", "--manifest", s(&run1.join("manifest")), "--run-dir", s(&run2)])?;
    ensure!(read(&run1)? == read(&run2)?, "re-run from manifest changed report.struct");
    Ok("report complete, re-run byte-identical".into())
}

fn determinism(work: &Path) -> Outcome {
    let tax = ClassTaxonomy::bone_marrow();
    let codes: Vec<&str> = tax.codes().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for tree in 0..50 {
        let dir = work.join(format!("tree{tree}"));
        let mut spec = FixtureSpec::default();
        for code in &codes {
            if rng.random_bool(0.5) {
                spec.counts.insert(code.to_string(), rng.random_range(1..=12));
            }
        }
        if spec.counts.is_empty() {
            spec.counts.insert("BLA".into(), 3);
        }
        generate_synthetic_fixture(&spec, 4, tree, &dir.join("data"), &tax).map_err(|e| e.to_string())?;
        let all = dir.join("all.index");
        run_ok(&["dataset", "scan", s(&dir.join("data")), "--out", s(&all)])?;
        let fraction = format!("{:.2}", rng.random_range(0.05..=1.0));
        let seed = rng.random_range(0..1_000_000u64).to_string();
        let stratified = rng.random_bool(0.5);
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let sub = dir.join(format!("sub{rep}.index"));
            let split = dir.join(format!("split{rep}"));
            let mut args = vec!["dataset", "subset", s(&all), "--fraction", &fraction, "--seed", &seed, "--out", s(&sub)];
            if stratified {
                args.push("--stratified");
            }
            run_ok(&args)?;
            run_ok(&["dataset", "split", s(&all), "--seed", &seed, "--out", s(&split)])?;
            let read = |p: PathBuf| std::fs::read(p).map_err(|e| e.to_string());
            outputs.push((read(sub)?, read(split.join("train.index"))?, read(split.join("val.index"))?));
        }
        ensure!(outputs[0] == outputs[1], "tree {tree}: repeated invocations differ");
    }
    Ok("50 trees".into())
}

fn report_fidelity(work: &Path) -> Outcome {
    let [train_row, val_row] = reference_results();
    let gap_pp = accuracy_gap(&train_row, &val_row) * 100.0;
    ensure!((gap_pp - 0.2).abs() < 1e-9, "gap {gap_pp} pp");

    let library = render_report(&reference_results()).map_err(|e| e.to_string())?;
    let dir = work.join("reference");
    let out = run_ok(&["evaluate", "--reference", "--run-dir", s(&dir)])?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    let written = std::fs::read_to_string(dir.join("report.txt")).map_err(|e| e.to_string())?;
    ensure!(written == library, "CLI table differs from the library rendering");
    ensure!(stdout.contains("train/val accuracy gap: 0.20 pp"), "gap line missing: {stdout}");
    let row = written
        .lines()
        .find(|l| l.starts_with("Validation"))
        .ok_or("no Validation row")?;
    let cells: Vec<&str> = row.split('|').map(str::trim).collect();
    ensure!(
        cells == ["Validation", "7.2734", "96.19%", "0.6000", "0.5968", "0.8297"],
        "Validation row {cells:?}"
    );
    Ok(format!("{row}; gap {gap_pp:.2} pp"))
}

fn main() {
    let work = tempfile::tempdir().expect("temp dir");
    let w = work.path();
    let criteria: Vec<Criterion> = vec![
        ("metric oracle equivalence", Box::new(metric_oracle)),
        ("confusion-matrix invariants", Box::new(confusion_invariants)),
        ("accuracy = trace/total = micro recall", Box::new(accuracy_identities)),
        ("cross-entropy analytic values", Box::new(cross_entropy_values)),
        ("AUC oracle", Box::new(auc_oracle)),
        ("learnability smoke test", Box::new(|| learnability(w))),
        ("end-to-end pipeline", Box::new(|| end_to_end(w))),
        ("subset/split determinism", Box::new(|| determinism(w))),
        ("report fidelity", Box::new(|| report_fidelity(w))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
