use protoscope_core::data::LabeledData;
use protoscope_core::feature_store::{sample_support, split_train_val, Generator};
use protoscope_core::knn::KnnClassifier;
use protoscope_core::metrics::DistanceMetric;
use protoscope_core::synthetic::{
    bayes_oracle_among, generate, Covariance, FingerprintLayout, Partition, WorldClass, WorldSpec,
};

fn two_class_world(dim: usize, gap_sigma: f64, samples: usize, seed: u64) -> WorldSpec {
    let mut fake_mean = vec![0.0; dim];
    fake_mean[0] = gap_sigma;
    WorldSpec {
        dim,
        classes: vec![
            WorldClass {
                source: None,
                mean: vec![0.0; dim],
                covariance: Covariance::Isotropic(1.0),
            },
            WorldClass {
                source: Some(Generator::Adm),
                mean: fake_mean,
                covariance: Covariance::Isotropic(1.0),
            },
        ],
        samples_per_class: samples,
        test_samples_per_class: 0,
        seed,
    }
}

/// (k-NN accuracy, Bayes accuracy) on the validation split, in [0, 1].
fn knn_and_bayes(spec: &WorldSpec, support: usize, k: usize, metric: DistanceMetric) -> (f64, f64) {
    let (_, set) = generate(spec, Partition::Subsets).unwrap().remove(0);
    let split = split_train_val(&set, 0.5, spec.seed).unwrap();
    let clf = KnnClassifier::new(&sample_support(&split.train, support, 1).unwrap(), metric);
    let val = LabeledData::detection(&split.validation).unwrap();
    let (mut knn, mut bayes) = (0usize, 0usize);
    for (row, &truth) in val.rows().zip(val.labels()) {
        knn += usize::from(clf.predict(row, k).unwrap().label == truth);
        bayes += usize::from(bayes_oracle_among(spec, row, &[0, 1]).unwrap() == truth);
    }
    (knn as f64 / val.len() as f64, bayes as f64 / val.len() as f64)
}

#[test]
fn ten_sigma_classes_are_nearly_perfect() {
    let spec = two_class_world(32, 10.0, 1500, 3);
    let (knn, bayes) = knn_and_bayes(&spec, 200, 1, DistanceMetric::Euclidean);
    assert!(knn >= 0.999, "{knn}");
    assert_eq!(bayes, 1.0);
}

#[test]
fn identical_means_sit_at_chance() {
    let spec = two_class_world(16, 0.0, 1000, 4);
    let (knn, _) = knn_and_bayes(&spec, 200, 5, DistanceMetric::Euclidean);
    assert!((knn - 0.5).abs() <= 0.05, "{knn}");
}

#[test]
fn bayes_oracle_bounds_knn() {
    for seed in 0..10 {
        let spec = two_class_world(8, 1.5, 600, 100 + seed);
        for metric in [DistanceMetric::Euclidean, DistanceMetric::Manhattan] {
            let (knn, bayes) = knn_and_bayes(&spec, 200, 9, metric);
            assert!(knn <= bayes + 0.01, "seed {seed} {metric:?}: {knn} > {bayes}");
        }
    }
}

#[test]
fn layout_means_have_requested_geometry() {
    let layout = FingerprintLayout {
        dim: 64,
        families: vec![(Generator::Sdv14, Generator::Sdv15, 2.0)],
        samples_per_class: 4,
        ..FingerprintLayout::default()
    };
    let spec = layout.build().unwrap();
    assert_eq!(spec.classes.len(), 9);
    let dist = |a: usize, b: usize| {
        spec.classes[a].mean.iter().zip(&spec.classes[b].mean).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let sd14 = 1 + Generator::Sdv14.index();
    let sd15 = 1 + Generator::Sdv15.index();
    assert!((dist(sd14, sd15) - 2.0).abs() < 1e-9);
    for a in 1..9 {
        for b in (a + 1)..9 {
            if (a, b) != (sd14, sd15) && a != sd15 && b != sd15 {
                assert!((dist(a, b) - 6.0).abs() < 1e-9, "{a} {b}");
            }
        }
        if a != sd15 {
            assert!(dist(0, a) > 30.0);
        }
    }
}

#[test]
fn generation_is_deterministic_and_partitions_differ() {
    let layout = FingerprintLayout {
        dim: 16,
        samples_per_class: 5,
        test_samples_per_class: 5,
        seed: 9,
        ..FingerprintLayout::default()
    };
    let spec = layout.build().unwrap();
    let a = generate(&spec, Partition::Subsets).unwrap();
    let b = generate(&spec, Partition::Subsets).unwrap();
    let t = generate(&spec, Partition::Test).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 8);
    assert_ne!(a[0].1.records()[0].features, t[0].1.records()[0].features);
    for (g, set) in &a {
        assert_eq!(set.count_real(), 5);
        assert_eq!(set.count_fake(), 5);
        assert_eq!(set.generators(), vec![*g]);
    }
}
