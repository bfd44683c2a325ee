use protoscope_core::data::LabeledData;
use protoscope_core::neural::{
    linear_probe, loss, train_early_stop, Mlp, MlpArchitecture, OutputHead, TrainConfig,
};
use protoscope_core::seed;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

fn clusters(n_per_class: usize, dim: usize, offset: f64, noise: f64, seed_value: u64) -> LabeledData {
    let mut rng = seed::rng(seed_value);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2 * n_per_class {
        let label = i % 2;
        let sign = if label == 0 { -1.0 } else { 1.0 };
        for _ in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            features.push((sign * offset + noise * z) as f32);
        }
        labels.push(label);
    }
    LabeledData::new(dim, 2, features, labels).unwrap()
}

fn quick_config(seed_value: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 32,
        max_epochs: 200,
        seed: seed_value,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_run_stops_patience_epochs_after_best() {
    let train = clusters(100, 2, 3.0, 0.5, 1);
    let val = clusters(50, 2, 3.0, 0.5, 2);
    let cfg = TrainConfig {
        learning_rate: 3e-4,
        ..quick_config(11)
    };
    let arch = MlpArchitecture::new(2, &[8], OutputHead::Softmax(2)).unwrap();
    let out = train_early_stop(Mlp::<f32>::new(arch.clone(), 3), &train, &val, &cfg, |_| {}).unwrap();
    assert_eq!(out.best_accuracy, 1.0);
    let first_best = out.history.iter().position(|r| r.val_accuracy == 1.0).unwrap() + 1;
    assert_eq!(out.best_epoch, first_best);
    assert_eq!(out.history.len(), out.best_epoch + 15);

    // The returned weights are those at the end of the best epoch.
    let truncated = TrainConfig {
        max_epochs: out.best_epoch,
        ..cfg
    };
    let replay = train_early_stop(Mlp::<f32>::new(arch, 3), &train, &val, &truncated, |_| {}).unwrap();
    assert_eq!(replay.model, out.model);
}

#[test]
fn constant_features_pin_majority_class() {
    let n = 50;
    let features = vec![1.0f32; 3 * n];
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i % 5 < 2)).collect(); // 60% class 0
    let train = LabeledData::new(3, 2, features.clone(), labels.clone()).unwrap();
    let val = LabeledData::new(3, 2, features, labels).unwrap();
    let arch = MlpArchitecture::new(3, &[4], OutputHead::Softmax(2)).unwrap();
    let out = train_early_stop(Mlp::<f32>::new(arch, 0), &train, &val, &quick_config(4), |_| {}).unwrap();
    assert!((out.best_accuracy - 0.6).abs() < 1e-12);
    assert_eq!(out.history.len(), out.best_epoch + 15);
    let best = out.history.iter().map(|r| r.val_accuracy).fold(f64::MIN, f64::max);
    assert_eq!(best, out.best_accuracy);
}

#[test]
fn identical_seeds_give_identical_runs() {
    let train = clusters(60, 4, 0.5, 1.0, 5);
    let val = clusters(30, 4, 0.5, 1.0, 6);
    let arch = MlpArchitecture::new(4, &[16], OutputHead::Softmax(2)).unwrap();
    let run = || train_early_stop(Mlp::<f32>::new(arch.clone(), 8), &train, &val, &quick_config(9), |_| {}).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
}

#[test]
fn best_model_accuracy_is_history_maximum() {
    let train = clusters(80, 6, 0.3, 1.0, 12);
    let val = clusters(40, 6, 0.3, 1.0, 13);
    let arch = MlpArchitecture::new(6, &[10], OutputHead::Softmax(2)).unwrap();
    let out = train_early_stop(Mlp::<f32>::new(arch, 1), &train, &val, &quick_config(2), |_| {}).unwrap();
    let max = out.history.iter().map(|r| r.val_accuracy).fold(f64::MIN, f64::max);
    let earliest = out.history.iter().position(|r| r.val_accuracy == max).unwrap() + 1;
    assert_eq!(out.best_epoch, earliest);
    assert_eq!(protoscope_core::neural::accuracy(&out.model, &val).unwrap(), max);
}

#[test]
fn softmax_rows_stay_normalized() {
    let train = clusters(40, 5, 1.0, 1.0, 3);
    let arch = MlpArchitecture::new(5, &[7], OutputHead::Softmax(9)).unwrap();
    let data9 = LabeledData::new(5, 9, train.features().to_vec(), train.labels().iter().map(|l| l * 4).collect()).unwrap();
    let out = train_early_stop(Mlp::<f32>::new(arch, 0), &data9, &data9, &quick_config(0), |_| {}).unwrap();
    let probs = out.model.forward(data9.features()).unwrap();
    for row in probs.chunks(9) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn full_batch_descent_never_increases_loss() {
    let data = clusters(20, 3, 0.7, 1.0, 21);
    let arch = MlpArchitecture::new(3, &[6], OutputHead::Softmax(2)).unwrap();
    let mut model = Mlp::<f64>::new(arch, 5);
    let x: Vec<f64> = data.features().iter().map(|&v| v as f64).collect();
    let mut previous = f64::INFINITY;
    for _ in 0..50 {
        let (l, g) = model.backward(&x, data.labels()).unwrap();
        assert!(l <= previous + 1e-12, "{l} > {previous}");
        previous = l;
        for (layer, grad) in model.layers_mut().iter_mut().zip(&g) {
            layer.weights.iter_mut().zip(&grad.weights).for_each(|(w, d)| *w -= 1e-3 * d);
            layer.bias.iter_mut().zip(&grad.bias).for_each(|(w, d)| *w -= 1e-3 * d);
        }
    }
    let probs = model.forward(&x).unwrap();
    assert!((loss(&probs, 2, data.labels(), model.architecture().output.loss_kind()).unwrap() - previous).abs() < 1e-2);
}

#[test]
fn linear_probe_separable_and_chance() {
    let train = clusters(300, 8, 1.5, 1.0, 31);
    let val = clusters(300, 8, 1.5, 1.0, 32);
    let cfg = TrainConfig {
        batch_size: 64,
        ..TrainConfig::default()
    };
    let (_, acc) = linear_probe(&train, &val, &cfg).unwrap();
    assert!(acc >= 0.99, "{acc}");

    let mut rng = seed::rng(33);
    let shuffle = |d: &LabeledData, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut labels = d.labels().to_vec();
        labels.shuffle(rng);
        LabeledData::new(d.dim(), 2, d.features().to_vec(), labels).unwrap()
    };
    let train = clusters(1000, 8, 1.5, 1.0, 34);
    let val = clusters(1000, 8, 1.5, 1.0, 35);
    let (_, acc) = linear_probe(&shuffle(&train, &mut rng), &shuffle(&val, &mut rng), &cfg).unwrap();
    assert!((acc - 0.5).abs() <= 0.05, "{acc}");
}

#[test]
fn empty_sets_rejected() {
    let empty = LabeledData::new(2, 2, vec![], vec![]).unwrap();
    let data = clusters(5, 2, 1.0, 1.0, 0);
    let arch = MlpArchitecture::linear_probe(2).unwrap();
    assert!(train_early_stop(Mlp::<f32>::new(arch.clone(), 0), &empty, &data, &TrainConfig::default(), |_| {}).is_err());
    assert!(train_early_stop(Mlp::<f32>::new(arch, 0), &data, &empty, &TrainConfig::default(), |_| {}).is_err());
}
