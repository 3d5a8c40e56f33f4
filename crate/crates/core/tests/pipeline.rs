//! Dataset on disk -> training -> saved model -> identical predictions.

use std::collections::BTreeSet;

use kshape::dataio::{generate_synthetic, write_dataset, Dataset, SynthStyle, SyntheticSpec};
use kshape::geomlayers::{DmlVariant, GtlVariant};
use kshape::model::{build_model, evaluate, load_model, prepare_samples, save_model, train, ModelConfig, Sample};

fn small_config(n_joints: usize) -> ModelConfig {
    ModelConfig {
        gtl: Some(GtlVariant::RigidConstrained),
        dml: Some(DmlVariant::Gh),
        ref_index: 0,
        conv_layers: 1,
        conv_kernel: 3,
        conv_channels: 4,
        lstm_units: 3,
        fc_hidden: 6,
        n_classes: 2,
        seq_len: 16,
        n_joints,
        batch_size: 4,
        epochs: 3,
        lr: 1e-2,
        grad_clip: 1.0,
        seed: 3,
    }
}

#[test]
fn disk_round_trip_preserves_every_coordinate() {
    let spec = SyntheticSpec::new(SynthStyle::Action, 3, 4, 12, 7, 9);
    let (manifest, generated) = generate_synthetic(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &manifest, &generated).unwrap();
    let loaded = Dataset::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(loaded.len(), 12);
    assert_eq!(loaded.class_names, generated.class_names);
    for (a, b) in loaded.sequences.iter().zip(&generated.sequences) {
        assert_eq!(a.coords(), b.coords());
        assert_eq!((a.label, &a.subject_id, &a.exercise_id), (b.label, &b.subject_id, &b.exercise_id));
    }
}

#[test]
fn cross_subject_folds_partition_subjects() {
    let spec = SyntheticSpec::new(SynthStyle::Rehab, 2, 20, 8, 5, 1);
    let (_, ds) = generate_synthetic(&spec).unwrap();
    let mut seen_test = BTreeSet::new();
    for fold in 0..5 {
        let (tr, te) = ds.cross_subject_split(5, fold, 11).unwrap();
        assert_eq!(tr.len() + te.len(), ds.len());
        let train_subjects: BTreeSet<&str> = tr.iter().map(|&i| ds.sequences[i].subject_id.as_str()).collect();
        let test_subjects: BTreeSet<&str> = te.iter().map(|&i| ds.sequences[i].subject_id.as_str()).collect();
        assert!(train_subjects.is_disjoint(&test_subjects));
        for s in test_subjects {
            assert!(seen_test.insert(s.to_string()), "subject {s} tested twice");
        }
    }
    assert_eq!(seen_test.len(), 10);
}

#[test]
fn trained_model_survives_save_and_load() {
    let spec = SyntheticSpec::new(SynthStyle::Rehab, 2, 6, 20, 8, 2);
    let (_, ds) = generate_synthetic(&spec).unwrap();
    let cfg = small_config(8);
    let samples: Vec<Sample> = prepare_samples(&ds, &cfg).unwrap();
    let model = train(build_model(&cfg).unwrap(), &samples, None).unwrap();
    assert_eq!(model.history.len(), 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.txt");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back.config, cfg);
    let (a, b) = (evaluate(&model, &samples).unwrap(), evaluate(&back, &samples).unwrap());
    assert_eq!(a.softmax, b.softmax);
    assert_eq!(a.report, b.report);
}

#[test]
fn rehab_classes_differ_in_range_of_motion() {
    use kshape::shapespace::geodesic_distance_exact;
    let spec = SyntheticSpec::new(SynthStyle::Rehab, 2, 10, 40, 12, 5);
    let (_, ds) = generate_synthetic(&spec).unwrap();
    // largest excursion from the first frame, averaged per class
    let mut range = [0.0; 2];
    for seq in &ds.sequences {
        let pre = seq.to_preshape().unwrap();
        let first = pre.frame(0);
        let max = (1..pre.len())
            .map(|f| geodesic_distance_exact(&first, &pre.frame(f)).unwrap())
            .fold(0.0, f64::max);
        range[seq.label] += max / 10.0;
    }
    assert!(range[1] < 0.7 * range[0], "normal {} vs abnormal {}", range[0], range[1]);
    assert_eq!(ds.class_names, ["normal", "abnormal"]);
}
