//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) and exits non-zero when any
//! criterion fails. The optional full-data criterion runs only when
//! `PROTOSCOPE_GENIMAGE_DIR` points at extracted GenImage features.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use protoscope::report;
use protoscope_core::data::LabeledData;
use protoscope_core::evaluation::EvalMatrix;
use protoscope_core::explain::{expected_gradients, expected_gradients_all_classes};
use protoscope_core::feature_store::attribution_label;
use protoscope_core::knn::{KnnClassifier, SupportEntry, SupportSet, GRID_KS};
use protoscope_core::metrics::{distance, DistanceMetric};
use protoscope_core::neural::{
    train_early_stop, AdamW, AdamWConfig, LayerParams, Mlp, MlpArchitecture, OutputHead, TrainConfig,
};
use protoscope_core::seed;
use protoscope_core::synthetic::{bayes_oracle, generate, Partition};
use rand::Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

struct Report {
    failures: usize,
    /// Substrings from the command line; when non-empty only matching
    /// criteria run.
    filters: Vec<String>,
}

impl Report {
    fn check(&mut self, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) {
        if !self.filters.is_empty() && !self.filters.iter().any(|p| name.contains(p.as_str())) {
            return;
        }
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(d), Some(l)) if elapsed > l => Err(format!("{d}; took {elapsed:.1?}, limit {l:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                self.failures += 1;
                println!("FAIL {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ------------------------------------------------------------ metric axioms

fn metric_axioms() -> Outcome {
    let mut rng = seed::rng(1);
    let tol = 1e-9;
    for t in 0..1000 {
        let dim = rng.random_range(2..64);
        let mut v = || (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<f64>>();
        let (a, b, c) = (v(), v(), v());
        for m in DistanceMetric::ALL {
            let ab = distance(&a, &b, m);
            ensure(ab >= -tol, || format!("{m} negative on pair {t}: {ab}"))?;
            ensure((ab - distance(&b, &a, m)).abs() <= tol, || format!("{m} asymmetric on pair {t}"))?;
            ensure(distance(&a, &a, m).abs() <= tol, || format!("{m} d(x, x) != 0 on pair {t}"))?;
            if matches!(m, DistanceMetric::Euclidean | DistanceMetric::Manhattan) {
                let (ac, bc) = (distance(&a, &c, m), distance(&b, &c, m));
                ensure(ac <= ab + bc + tol, || format!("{m} triangle violated on triple {t}"))?;
            }
        }
    }
    Ok("1000 pairs/triples x 4 metrics within 1e-9".into())
}

// --------------------------------------------------------------- k-NN oracle

/// Sorts every support point by (distance, index), votes over the first k
/// and breaks vote ties by summed distance, then by smaller label.
fn knn_oracle(query: &[f32], support: &[(Vec<f32>, usize)], classes: usize, k: usize, metric: DistanceMetric) -> usize {
    let mut pairs: Vec<(f64, usize)> =
        support.iter().enumerate().map(|(i, (f, _))| (distance(query, f, metric), i)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; classes];
    let mut sums = vec![0.0f64; classes];
    for &(d, i) in &pairs[..k] {
        votes[support[i].1] += 1;
        sums[support[i].1] += d;
    }
    (0..classes)
        .reduce(|best, c| if votes[c] > votes[best] || (votes[c] == votes[best] && sums[c] < sums[best]) { c } else { best })
        .expect("at least one class")
}

fn knn_equivalence() -> Outcome {
    let mut rng = seed::rng(2);
    let dim = 12;
    let mut checked = 0usize;
    for q in 0..1000 {
        let classes = if q % 2 == 0 { 2 } else { 9 };
        let size = classes * rng.random_range(1..=500 / classes);
        let support: Vec<(Vec<f32>, usize)> = (0..size)
            .map(|i| {
                let label = i % classes;
                ((0..dim).map(|_| rng.random::<f32>() + 0.1 * label as f32).collect(), label)
            })
            .collect();
        let set = SupportSet::new(dim, classes, support.iter().map(|(f, l)| SupportEntry::new(f.clone(), *l)).collect())
            .map_err(|e| e.to_string())?;
        let query: Vec<f32> = (0..dim).map(|_| rng.random::<f32>()).collect();
        for metric in DistanceMetric::ALL {
            let clf = KnnClassifier::new(&set, metric);
            for k in GRID_KS.into_iter().filter(|&k| k <= size) {
                let got = clf.predict(&query, k).map_err(|e| e.to_string())?.label;
                let want = knn_oracle(&query, &support, classes, k, metric);
                ensure(got == want, || format!("query {q} {metric} k={k} |S|={size}: {got} != {want}"))?;
                checked += 1;
            }
        }
    }
    Ok(format!("1000 queries, {checked} (query, metric, k) predictions identical"))
}

// ------------------------------------------------------- gradient correctness

fn max_relative_error(model: &Mlp<f64>, x: &[f64], y: &[usize], max_weights: usize) -> f64 {
    let (_, grads) = model.backward(x, y).expect("valid batch");
    let h = 1e-5;
    let mut rng = seed::rng(3);
    let loss_at = |m: &Mlp<f64>| m.backward(x, y).expect("valid batch").0;
    let mut worst = 0.0f64;
    for l in 0..model.layers().len() {
        let n_w = model.layers()[l].weights.len();
        let mut targets: Vec<(bool, usize)> = (0..model.layers()[l].bias.len()).map(|i| (false, i)).collect();
        targets.extend((0..max_weights.min(n_w)).map(|_| (true, rng.random_range(0..n_w))));
        for (is_weight, i) in targets {
            let (mut plus, mut minus) = (model.clone(), model.clone());
            let analytic = if is_weight {
                plus.layers_mut()[l].weights[i] += h;
                minus.layers_mut()[l].weights[i] -= h;
                grads[l].weights[i]
            } else {
                plus.layers_mut()[l].bias[i] += h;
                minus.layers_mut()[l].bias[i] -= h;
                grads[l].bias[i]
            };
            let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}

fn gradient_check() -> Outcome {
    let heads = [OutputHead::Sigmoid, OutputHead::Softmax(2), OutputHead::Softmax(9)];
    let hiddens: [&[usize]; 4] = [&[], &[320], &[640], &[640, 320]];
    let mut worst = 0.0f64;
    for hidden in hiddens {
        for head in heads {
            let arch = MlpArchitecture::new(6, hidden, head).map_err(|e| e.to_string())?;
            let model = Mlp::<f64>::new(arch, 99);
            let mut rng = seed::rng(7);
            let x: Vec<f64> = (0..18).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<usize> = (0..3).map(|i| i % head.class_count()).collect();
            let err = max_relative_error(&model, &x, &y, 120);
            ensure(err < 1e-4, || format!("{hidden:?} {head:?}: relative error {err:.2e}"))?;
            worst = worst.max(err);
        }
    }
    Ok(format!("12 architectures, worst relative error {worst:.2e} < 1e-4"))
}

// ---------------------------------------------------------------- AdamW

fn scalar_model(w: f64) -> Mlp<f64> {
    let arch = MlpArchitecture::new(1, &[], OutputHead::Sigmoid).expect("valid");
    let layer = LayerParams { inputs: 1, outputs: 1, weights: vec![w], bias: vec![0.0] };
    Mlp::from_layers(arch, vec![layer], 0).expect("valid")
}

fn scalar_grad(g: f64) -> Vec<LayerParams<f64>> {
    vec![LayerParams { inputs: 1, outputs: 1, weights: vec![g], bias: vec![0.0] }]
}

fn adamw_closed_form() -> Outcome {
    // One step with gradient g: m_hat = g, v_hat = g^2, so
    // w1 = w0 - lr * (g / (|g| + eps) + wd * w0).
    let (w0, g, lr, wd, eps) = (0.8, -0.37, 1e-3, 0.01, 1e-8);
    let mut m = scalar_model(w0);
    let cfg = AdamWConfig { learning_rate: lr, weight_decay: wd, epsilon: eps, ..AdamWConfig::default() };
    AdamW::new(&m, cfg).step(&mut m, &scalar_grad(g));
    let expected = w0 - lr * (g / (g.abs() + eps) + wd * w0);
    let got = m.layers()[0].weights[0];
    ensure((got - expected).abs() < 1e-10, || format!("step gave {got}, closed form {expected}"))?;

    let mut z = scalar_model(2.5);
    AdamW::new(&z, cfg).step(&mut z, &scalar_grad(0.0));
    let shrunk = z.layers()[0].weights[0];
    ensure(shrunk == 2.5 * (1.0 - lr * wd), || format!("zero-gradient step gave {shrunk}"))?;
    Ok(format!("|error| {:.1e}; zero-gradient decay exact", (got - expected).abs()))
}

// ------------------------------------------------------------ early stopping

fn clusters(n: usize, seed_value: u64) -> LabeledData {
    let mut rng = seed::rng(seed_value);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2 * n {
        let sign = if i % 2 == 0 { -1.0 } else { 1.0 };
        features.extend((0..2).map(|_| sign * 0.6 + rng.random_range(-1.0f32..1.0)));
        labels.push(i % 2);
    }
    LabeledData::new(2, 2, features, labels).expect("consistent")
}

fn early_stopping() -> Outcome {
    let (train, val) = (clusters(100, 1), clusters(50, 2));
    let cfg = TrainConfig { batch_size: 32, max_epochs: 200, seed: 11, ..TrainConfig::default() };
    let arch = MlpArchitecture::new(2, &[8], OutputHead::Softmax(2)).map_err(|e| e.to_string())?;
    let run = train_early_stop(Mlp::<f32>::new(arch.clone(), 3), &train, &val, &cfg, |_| {}).map_err(|e| e.to_string())?;
    let best = run
        .history
        .iter()
        .fold((0, f64::NEG_INFINITY), |b, r| if r.val_accuracy > b.1 { (r.epoch, r.val_accuracy) } else { b });
    ensure(run.best_epoch == best.0, || format!("best epoch {} but history peaks at {}", run.best_epoch, best.0))?;
    ensure(run.history.len() == best.0 + 15, || format!("stopped at {} instead of {}", run.history.len(), best.0 + 15))?;
    let replay_cfg = TrainConfig { max_epochs: best.0, ..cfg };
    let replay = train_early_stop(Mlp::<f32>::new(arch, 3), &train, &val, &replay_cfg, |_| {}).map_err(|e| e.to_string())?;
    ensure(replay.model == run.model, || "returned weights differ from the epoch-e* weights".into())?;
    Ok(format!("e* = {}, stopped at {}, weights equal an e*-epoch replay", best.0, run.history.len()))
}

// --------------------------------------------------------------- explainer

fn gaussian(n: usize, seed_value: u64) -> Vec<f32> {
    let mut rng = seed::rng(seed_value);
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect()
}

fn explainer() -> Outcome {
    let dim = 8;
    let w: Vec<f64> = gaussian(3 * dim, 5).iter().map(|&v| v as f64).collect();
    let arch = MlpArchitecture::new(dim, &[], OutputHead::Softmax(3)).map_err(|e| e.to_string())?;
    let layer = LayerParams { inputs: dim, outputs: 3, weights: w.clone(), bias: vec![0.2, -0.4, 0.1] };
    let linear = Mlp::from_layers(arch, vec![layer], 0).map_err(|e| e.to_string())?;
    let background = gaussian(9 * dim, 6);
    let mean: Vec<f64> =
        (0..dim).map(|i| background.chunks(dim).map(|r| r[i] as f64).sum::<f64>() / 9.0).collect();
    let x = gaussian(dim, 7);
    let mut worst_linear = 0.0f64;
    for seed_value in [0, 1, 2, 42, 12345] {
        let all = expected_gradients_all_classes(&linear, &x, &background, 50, seed_value).map_err(|e| e.to_string())?;
        for (c, attr) in all.iter().enumerate() {
            for i in 0..dim {
                worst_linear = worst_linear.max((attr[i] - w[c * dim + i] * (x[i] as f64 - mean[i])).abs());
            }
        }
    }
    ensure(worst_linear < 1e-9, || format!("linear model error {worst_linear:.2e}"))?;

    let toy = Mlp::<f64>::new(MlpArchitecture::new(4, &[16], OutputHead::Softmax(9)).map_err(|e| e.to_string())?, 17);
    let bg = gaussian(5 * 4, 1);
    let logit = |x: &[f64], c: usize| toy.class_logits(x, c).expect("valid")[0];
    let mut worst_gap = 0.0f64;
    for (case, class) in [(0u64, 0usize), (1, 3), (2, 8)] {
        let x: Vec<f64> = gaussian(4, 100 + case).iter().map(|&v| 2.0 * v as f64).collect();
        let delta = bg
            .chunks(4)
            .map(|b| logit(&x, class) - logit(&b.iter().map(|&v| v as f64).collect::<Vec<_>>(), class))
            .sum::<f64>()
            / 5.0;
        let total: f64 = expected_gradients(&toy, &x, class, &bg, 1000, 9).map_err(|e| e.to_string())?.iter().sum();
        let gap = (total - delta).abs() / delta.abs();
        ensure(gap < 0.02, || format!("class {class}: completeness gap {:.2}%", 100.0 * gap))?;
        worst_gap = worst_gap.max(gap);
    }
    Ok(format!(
        "linear error {worst_linear:.1e} < 1e-9; 4-16-9 completeness gap {:.2}% < 2%",
        100.0 * worst_gap
    ))
}

// ------------------------------------------------------ synthetic end-to-end

fn run_cli(cwd: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_protoscope"))
        .current_dir(cwd)
        .args(args)
        .arg("--quiet")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`protoscope {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

/// `.fpro` files under `base/rel`, as sorted paths `rel/<name>`.
fn fpro_list(base: &Path, rel: &str) -> Result<Vec<String>, String> {
    let mut files = Vec::new();
    for entry in fs::read_dir(base.join(rel)).map_err(|e| format!("{rel}: {e}"))? {
        let name = entry.map_err(|e| e.to_string())?.file_name().to_string_lossy().into_owned();
        if name.ends_with(".fpro") {
            files.push(format!("{rel}/{name}"));
        }
    }
    files.sort();
    Ok(files)
}

fn with_files(base: &[&str], flag: &str, files: &[String]) -> Vec<String> {
    let mut v: Vec<String> = base.iter().map(|s| s.to_string()).collect();
    v.push(flag.into());
    v.extend(files.iter().cloned());
    v
}

fn call(cwd: &Path, args: Vec<String>) -> Result<(), String> {
    run_cli(cwd, &args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn read_matrix(path: &Path) -> Result<EvalMatrix, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    report::parse_matrix_csv(&text).map_err(|e| e.to_string())
}

fn read_accuracy(path: &Path) -> Result<f64, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    Ok(v["accuracy"].as_f64().ok_or("summary has no accuracy")? * 100.0)
}

struct Pipeline {
    knn_detection: f64,
    knn_config: String,
    mlp_attribution: f64,
}

fn pipeline(cwd: &Path) -> Result<Pipeline, String> {
    run_cli(cwd, &["synth", "--preset", "demo"])?;
    let subsets = fpro_list(cwd, "out/synth/seed-0/subsets")?;
    let tests = fpro_list(cwd, "out/synth/seed-0/test")?;

    let grid_args = ["grid-knn", "--support-sizes", "100,400", "--ks", "1,5,19,51"];
    call(cwd, with_files(&grid_args, "--features", &subsets))?;
    let grid_text = fs::read_to_string(cwd.join("out/grid-knn/seed-0/grid.csv")).map_err(|e| e.to_string())?;
    let grid = report::parse_grid_csv(&grid_text).map_err(|e| e.to_string())?;
    let best = *grid.best().ok_or("grid has no feasible cell")?;
    let (size, k) = (best.support_size.to_string(), best.k.to_string());
    let detect_args = ["detect", "--metric", best.metric.name(), "--support-size", &size, "--k", &k];
    let mut detect = with_files(&detect_args, "--features", &subsets);
    detect.push("--eval".into());
    detect.extend(tests.iter().cloned());
    call(cwd, detect)?;
    let matrix = read_matrix(&cwd.join("out/detect/seed-0/matrix.csv"))?;

    let model = "out/train-mlp/attr/attributor.fmlp";
    let train_args = ["train-mlp", "--task", "attribute", "--hidden", "640", "--tag", "attr"];
    call(cwd, with_files(&train_args, "--features", &subsets))?;
    call(cwd, with_files(&["attribute", "--model", model], "--features", &tests))?;
    let mlp_attribution = read_accuracy(&cwd.join("out/attribute/seed-0/summary.json"))?;

    let explain_args =
        ["explain", "--model", model, "--samples", "20", "--background", "100", "--n-samples", "50"];
    call(cwd, with_files(&explain_args, "--features", &tests))?;
    let inputs = [
        "out/grid-knn/seed-0",
        "out/detect/seed-0",
        "out/attribute/seed-0",
        "out/explain/seed-0/explain.json",
    ];
    run_cli(cwd, &[&["report", "--inputs"][..], &inputs[..]].concat())?;
    Ok(Pipeline {
        knn_detection: matrix.grand_mean(),
        knn_config: format!("{} |S|={} k={}", best.metric, best.support_size, best.k),
        mlp_attribution,
    })
}

fn snapshot(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, fs::read(&path).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(out)
}

/// Bayes accuracies (percent) on the test partition of the generated world:
/// real-vs-fake over every record, and nine-way over the attribution set.
fn bayes_bounds(world_conf: &Path) -> Result<(f64, f64), String> {
    let layout = protoscope::world_config::read_layout(world_conf).map_err(|e| e.to_string())?;
    let spec = layout.build().map_err(|e| e.to_string())?;
    let sets = generate(&spec, Partition::Test).map_err(|e| e.to_string())?;
    let real_source = sets[0].0;
    let (mut det, mut det_n, mut att, mut att_n) = (0usize, 0usize, 0usize, 0usize);
    for (g, set) in &sets {
        for r in set.records() {
            let truth = attribution_label(r.generator);
            let guess = attribution_label(spec.classes[bayes_oracle(&spec, &r.features).map_err(|e| e.to_string())?].source);
            det += usize::from((guess == 0) == (truth == 0));
            det_n += 1;
            if r.generator.is_some() || *g == real_source {
                att += usize::from(guess == truth);
                att_n += 1;
            }
        }
    }
    Ok((100.0 * det as f64 / det_n as f64, 100.0 * att as f64 / att_n as f64))
}

fn end_to_end() -> Outcome {
    let first = tempfile::tempdir().map_err(|e| e.to_string())?;
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let a = pipeline(first.path())?;
    let one_run = started.elapsed();
    let b = pipeline(second.path())?;
    let (snap_a, snap_b) = (snapshot(first.path())?, snapshot(second.path())?);
    ensure(snap_a.keys().eq(snap_b.keys()), || "the two runs produced different file sets".into())?;
    for (path, bytes) in &snap_a {
        ensure(snap_b[path] == *bytes, || format!("{} differs between runs", path.display()))?;
    }
    ensure(a.knn_detection == b.knn_detection && a.mlp_attribution == b.mlp_attribution, || "metrics differ".into())?;
    let (bayes_det, bayes_att) = bayes_bounds(&first.path().join("out/synth/seed-0/world.conf"))?;
    ensure(a.knn_detection >= 95.0, || format!("k-NN detection {:.2}% < 95%", a.knn_detection))?;
    ensure(a.mlp_attribution >= 90.0, || format!("MLP attribution {:.2}% < 90%", a.mlp_attribution))?;
    ensure(a.knn_detection <= bayes_det + 1.0, || format!("k-NN {:.2}% above Bayes {bayes_det:.2}% + 1", a.knn_detection))?;
    ensure(a.mlp_attribution <= bayes_att + 1.0, || format!("MLP {:.2}% above Bayes {bayes_att:.2}% + 1", a.mlp_attribution))?;
    ensure(one_run < Duration::from_secs(600), || format!("one pipeline run took {one_run:.0?}"))?;
    Ok(format!(
        "k-NN detection {:.2}% ({}; Bayes {bayes_det:.2}%), MLP attribution {:.2}% (Bayes {bayes_att:.2}%), \
         {} artifacts byte-identical across runs, one run {one_run:.0?}",
        a.knn_detection,
        a.knn_config,
        a.mlp_attribution,
        snap_a.len()
    ))
}

// -------------------------------------------------------------- throughput

fn throughput() -> Outcome {
    let (dim, size, k) = (1280, 2000, 101);
    let mut rng = seed::rng(4);
    let entries = (0..size)
        .map(|i| SupportEntry::new((0..dim).map(|_| rng.random::<f32>()).collect(), i % 2))
        .collect();
    let set = SupportSet::new(dim, 2, entries).map_err(|e| e.to_string())?;
    let queries: Vec<Vec<f32>> = (0..200).map(|_| (0..dim).map(|_| rng.random::<f32>()).collect()).collect();
    let mut lines = Vec::new();
    for metric in DistanceMetric::ALL {
        let clf = KnnClassifier::new(&set, metric);
        clf.predict(&queries[0], k).map_err(|e| e.to_string())?;
        let mut times: Vec<Duration> = queries
            .iter()
            .map(|q| {
                let t = Instant::now();
                let p = clf.predict(q, k);
                let e = t.elapsed();
                p.map(|_| e)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        times.sort();
        let worst = *times.last().expect("queries");
        let median = times[times.len() / 2];
        let refs: Vec<&[f32]> = queries.iter().map(Vec::as_slice).collect();
        let t = Instant::now();
        clf.predict_batch(&refs, k).map_err(|e| e.to_string())?;
        let batched = t.elapsed() / queries.len() as u32;
        ensure(median < Duration::from_millis(5), || format!("{metric}: median single query {median:.2?}"))?;
        ensure(batched <= Duration::from_millis(2), || format!("{metric}: batched mean {batched:.2?}"))?;
        lines.push(format!("{metric} median {median:.2?} max {worst:.2?} batched {batched:.2?}"));
    }
    Ok(format!("|S|=2000 D=1280 k=101: {}", lines.join("; ")))
}

// -------------------------------------------------- optional full-data run

fn within(name: &str, got: f64, target: f64) -> Result<String, String> {
    ensure((got - target).abs() <= 2.0, || format!("{name} {got:.2} not within 2.0 of {target}"))?;
    Ok(format!("{name} {got:.2} (target {target})"))
}

/// Expects `<dir>/subsets/<generator>.fpro` (best-layer subsets, split
/// 80/20 internally), `<dir>/test/<generator>.fpro` and optionally
/// `<dir>/layers/*.fpro` holding every layer's subsets.
fn full_data(dir: &Path) -> Outcome {
    let dir = dir.canonicalize().map_err(|e| format!("{}: {e}", dir.display()))?;
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cwd = work.path();
    let absolute = |rel: &str| -> Result<Vec<String>, String> {
        Ok(fpro_list(&dir, rel)?.iter().map(|f| dir.join(f).display().to_string()).collect())
    };
    let (subsets, tests) = (absolute("subsets")?, absolute("test")?);
    let knn = ["--metric", "correlation", "--support-size", "2000", "--k", "101"];
    call(cwd, with_files(&[&["detect", "--tag", "val"][..], &knn[..]].concat(), "--features", &subsets))?;
    let mut test_run = with_files(&[&["detect", "--tag", "test"][..], &knn[..]].concat(), "--features", &subsets);
    test_run.push("--eval".into());
    test_run.extend(tests.iter().cloned());
    call(cwd, test_run)?;
    let train_args = ["train-mlp", "--task", "attribute", "--hidden", "640", "--tag", "attr"];
    call(cwd, with_files(&train_args, "--features", &subsets))?;
    call(cwd, with_files(&["attribute", "--model", "out/train-mlp/attr/attributor.fmlp"], "--features", &tests))?;
    let mut lines = vec![
        within("validation grand mean", read_matrix(&cwd.join("out/detect/val/matrix.csv"))?.grand_mean(), 85.3)?,
        within("test grand mean", read_matrix(&cwd.join("out/detect/test/matrix.csv"))?.grand_mean(), 88.1)?,
        within("attribution accuracy", read_accuracy(&cwd.join("out/attribute/seed-0/summary.json"))?, 84.36)?,
    ];
    if dir.join("layers").is_dir() {
        call(cwd, with_files(&["probe-layers"], "--features", &absolute("layers")?))?;
        let text = fs::read_to_string(cwd.join("out/probe-layers/seed-0/layers.csv")).map_err(|e| e.to_string())?;
        let mut peak: Option<(String, f64)> = None;
        for line in text.lines().skip(1) {
            let (layer, acc) = line.rsplit_once(',').ok_or("bad layers.csv row")?;
            let acc: f64 = acc.parse().map_err(|_| "bad layers.csv accuracy".to_string())?;
            if peak.as_ref().is_none_or(|(_, best)| acc > *best) {
                peak = Some((layer.to_string(), acc));
            }
        }
        let (layer, acc) = peak.ok_or("layers.csv is empty")?;
        ensure(layer == "decoder_16_0", || format!("probe peak at {layer} ({acc:.2}), expected decoder_16_0"))?;
        lines.push(format!("probe peak {layer} ({acc:.2})"));
    } else {
        lines.push("probe peak not checked (no layers/ directory)".into());
    }
    Ok(lines.join("; "))
}

fn main() {
    let filters = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut report = Report { failures: 0, filters };
    report.check("metric axioms", Some(Duration::from_secs(5)), metric_axioms);
    report.check("k-NN oracle equivalence", Some(Duration::from_secs(60)), knn_equivalence);
    report.check("gradient correctness", Some(Duration::from_secs(30)), gradient_check);
    report.check("AdamW single-step closed form", None, adamw_closed_form);
    report.check("early stopping contract", None, early_stopping);
    report.check("explainer exactness and completeness", None, explainer);
    report.check("synthetic end-to-end", Some(Duration::from_secs(1200)), end_to_end);
    report.check("k-NN throughput", None, throughput);
    match std::env::var_os("PROTOSCOPE_GENIMAGE_DIR") {
        None => println!(
            "FAIL full-data GenImage reproduction: not attempted, PROTOSCOPE_GENIMAGE_DIR not set (optional, not counted)"
        ),
        Some(dir) => report.check("full-data GenImage reproduction", None, || full_data(Path::new(&dir))),
    }
    if report.failures > 0 {
        eprintln!("{} criteria failed", report.failures);
        std::process::exit(1);
    }
}
