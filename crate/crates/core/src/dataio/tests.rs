use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffcore::Tensor;
use crate::shapespace::geodesic_distance_exact;

fn seq_from(coords: Tensor) -> SkeletonSequence {
    SkeletonSequence::new(coords, "s", 0).unwrap()
}

fn random_seq(rng: &mut ChaCha8Rng, f: usize, n: usize) -> SkeletonSequence {
    seq_from(Tensor::from_fn(&[f, n, 3], |_| rng.random_range(-2.0..2.0)))
}

// ---- CSV -------------------------------------------------------------------------

#[test]
fn csv_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = random_seq(&mut rng, 2, 2);
    let text = format_sequence(&s);
    assert!(text.starts_with("2,2,3\n0,0,"));
    let back = parse_sequence(&text, "mem").unwrap();
    assert_eq!(back.coords(), s.coords());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.csv");
    write_sequence(&path, &s).unwrap();
    assert_eq!(read_sequence(&path).unwrap().coords(), s.coords());
}

#[test]
fn csv_exact_layout() {
    let s = seq_from(Tensor::new(&[2, 2, 3], vec![0.0, 0.5, -1.0, 1.0, 2.0, 3.0, 0.1, 0.2, 0.3, 4.0, 5.0, 6.0]).unwrap());
    assert_eq!(
        format_sequence(&s),
        "2,2,3\n0,0,0.0,0.5,-1.0\n0,1,1.0,2.0,3.0\n1,0,0.1,0.2,0.3\n1,1,4.0,5.0,6.0\n"
    );
}

#[test]
fn csv_header_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s = random_seq(&mut rng, 100, 25);
    let back = parse_sequence(&format_sequence(&s), "mem").unwrap();
    assert_eq!(back.coords().shape(), &[100, 25, 3]);
}

#[test]
fn csv_missing_row_names_the_gap() {
    let text = "2,2,3\n0,0,0,0,0\n0,1,1,0,0\n1,1,2,0,0\n";
    let err = parse_sequence(text, "mem").unwrap_err().to_string();
    assert!(err.contains("frame 1 joint 0") && err.contains("line 4"), "{err}");
    let text = "2,2,3\n0,0,0,0,0\n0,1,1,0,0\n1,0,2,0,0\n";
    let err = parse_sequence(text, "mem").unwrap_err().to_string();
    assert!(err.contains("missing row for frame 1 joint 1"), "{err}");
}

#[test]
fn csv_malformed_inputs() {
    assert!(parse_sequence("frames,joints,dims\n", "mem").unwrap_err().to_string().contains("line 1"));
    assert!(parse_sequence("2,2,2\n", "mem").is_err());
    let err = parse_sequence("2,2,3\n0,0,0,x,0\n", "mem").unwrap_err().to_string();
    assert!(err.contains("line 2") && err.contains("non-numeric"), "{err}");
    let err = parse_sequence("2,2,3\n0,0,0,0\n", "mem").unwrap_err().to_string();
    assert!(err.contains("5 fields"), "{err}");
    let err = parse_sequence("2,2,3\n0,0,0,0,0\n0,5,0,0,0\n", "mem").unwrap_err().to_string();
    assert!(err.contains("out of range"), "{err}");
}

// ---- spline ----------------------------------------------------------------------

#[test]
fn spline_constant_and_linear() {
    let c = seq_from(Tensor::full(&[6, 3, 3], 1.25));
    let r = spline_resample(&c, 17).unwrap();
    assert_eq!(r.frames(), 17);
    assert!(r.coords().data().iter().all(|&v| (v - 1.25).abs() < 1e-14));

    let lin = seq_from(Tensor::from_fn(&[9, 2, 3], |k| {
        let t = (k / 6) as f64 / 8.0;
        0.3 + (k % 6) as f64 * t - 2.0 * t
    }));
    let r = spline_resample(&lin, 23).unwrap();
    for (k, v) in r.coords().data().iter().enumerate() {
        let t = (k / 6) as f64 / 22.0;
        let expected = 0.3 + (k % 6) as f64 * t - 2.0 * t;
        assert!((v - expected).abs() < 1e-12, "{v} vs {expected}");
    }
}

#[test]
fn spline_interpolates_knots_and_endpoints() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_seq(&mut rng, 30, 5);
    let same = spline_resample(&s, 30).unwrap();
    assert!(same.coords().max_abs_diff(s.coords()) < 1e-10);
    let up = spline_resample(&s, 101).unwrap();
    let n = 15;
    assert_eq!(&up.coords().data()[..n], &s.coords().data()[..n]);
    assert_eq!(&up.coords().data()[100 * n..], &s.coords().data()[29 * n..]);
}

#[test]
fn spline_matches_hand_solved_natural_spline() {
    // y = (0, 1, 0, 1): interior system 4 M1 + M2 = -12, M1 + 4 M2 = 12
    // gives M1 = -4, M2 = 4; midpoint of the first interval is
    // 0.5 + (0.125 - 0.5) * (-4) / 6 = 0.75
    let out = natural_spline_resample(&[0.0, 1.0, 0.0, 1.0], 7);
    assert!((out[1] - 0.75).abs() < 1e-15);
    assert_eq!(out[2], 1.0);
    assert!((out[3] - 0.5).abs() < 1e-15);
}

#[test]
fn spline_rejects_short_sequences() {
    let s = seq_from(Tensor::zeros(&[3, 2, 3]));
    assert!(spline_resample(&s, 10).unwrap_err().to_string().contains("at least 4"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spline_commutes_with_translation_and_scale(seed in any::<u64>(), tx in -5.0..5.0f64, s in 0.1..10.0f64, target in 2usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_seq(&mut rng, 12, 4);
        let moved = seq_from(a.coords().map(|v| s * v + tx));
        let lhs = spline_resample(&moved, target).unwrap();
        let rhs = spline_resample(&a, target).unwrap().coords().map(|v| s * v + tx);
        prop_assert!(lhs.coords().max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn kfold_never_splits_a_subject(seed in any::<u64>(), n_subj in 5usize..40, k in 2usize..6, reps in 1usize..4) {
        let subjects: Vec<String> = (0..n_subj * reps).map(|i| format!("p{}", i % n_subj)).collect();
        let spec = kfold_split(&subjects, k, seed).unwrap();
        prop_assert_eq!(spec.assignment.len(), n_subj);
        let refs: Vec<&str> = subjects.iter().map(String::as_str).collect();
        for fold in 0..k {
            let (train, test) = spec.split(&refs, fold).unwrap();
            prop_assert_eq!(train.len() + test.len(), subjects.len());
            for &i in &test {
                prop_assert!(train.iter().all(|&j| subjects[j] != subjects[i]));
            }
        }
    }
}

// ---- folds -----------------------------------------------------------------------

#[test]
fn kfold_ten_subjects_five_folds() {
    let subjects: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
    let spec = kfold_split(&subjects, 5, 9).unwrap();
    let mut union = Vec::new();
    for f in 0..5 {
        let t = spec.test_subjects(f);
        assert_eq!(t.len(), 2);
        union.extend(t);
    }
    union.sort();
    union.dedup();
    assert_eq!(union.len(), 10);
    assert_eq!(kfold_split(&subjects, 5, 9).unwrap(), spec);
    assert!(kfold_split(&subjects[..4], 5, 9).is_err());
}

// ---- synthetic ------------------------------------------------------------------

#[test]
fn synth_counts_and_dense_labels() {
    let spec = SyntheticSpec::new(SynthStyle::Rehab, 2, 100, 20, 12, 7);
    let (m, d) = generate_synthetic(&spec).unwrap();
    assert_eq!(m.entries.len(), 200);
    assert_eq!(d.len(), 200);
    m.validate().unwrap();
    assert_eq!(m.subjects().len(), 10);
    assert_eq!(m.class_names, vec!["normal", "abnormal"]);
}

#[test]
fn synth_deterministic_and_noise_free_classes() {
    let mut spec = SyntheticSpec::new(SynthStyle::Action, 3, 1, 12, 10, 4);
    spec.noise_sd = 0.0;
    let (_, a) = generate_synthetic(&spec).unwrap();
    let (_, b) = generate_synthetic(&spec).unwrap();
    for (x, y) in a.sequences.iter().zip(&b.sequences) {
        assert_eq!(x.coords(), y.coords());
    }
    spec.seed = 5;
    let (_, c) = generate_synthetic(&spec).unwrap();
    assert_ne!(a.sequences[0].coords(), c.sequences[0].coords());
}

#[test]
fn synth_frames_are_finite_and_non_degenerate() {
    for style in [SynthStyle::Rehab, SynthStyle::Action] {
        for joints in [2, 5, 12, 25, 31] {
            let spec = SyntheticSpec::new(style, 3, 4, 15, joints, 11);
            let (_, d) = generate_synthetic(&spec).unwrap();
            for s in &d.sequences {
                assert!(s.coords().is_finite());
                s.to_preshape().unwrap();
            }
        }
    }
}

fn mean_step(s: &SkeletonSequence) -> f64 {
    let p = s.to_preshape().unwrap();
    let steps: f64 = (1..p.len())
        .map(|f| geodesic_distance_exact(&p.frame(f - 1), &p.frame(f)).unwrap())
        .sum();
    steps / (p.len() - 1) as f64
}

#[test]
fn rehab_abnormal_class_moves_less() {
    let spec = SyntheticSpec::new(SynthStyle::Rehab, 2, 30, 60, 12, 5);
    let (_, d) = generate_synthetic(&spec).unwrap();
    let avg = |label| {
        let v: Vec<f64> = d.sequences.iter().filter(|s| s.label == label).map(mean_step).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(avg(1) < avg(0), "abnormal {} vs normal {}", avg(1), avg(0));
}

#[test]
fn dataset_round_trips_through_disk() {
    let spec = SyntheticSpec::new(SynthStyle::Rehab, 2, 3, 8, 5, 1);
    let (m, d) = generate_synthetic(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &m, &d).unwrap();
    let back = Dataset::load(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(back.len(), d.len());
    for (x, y) in back.sequences.iter().zip(&d.sequences) {
        assert_eq!(x, y);
    }
}

#[test]
fn manifest_rejects_sparse_labels_and_unknown_keys() {
    let m = DatasetManifest {
        n_joints: 3,
        class_names: vec!["a".into(), "b".into()],
        entries: vec![ManifestEntry { path: "x.csv".into(), subject: "s".into(), label: 0, exercise: None }],
    };
    assert!(m.validate().unwrap_err().to_string().contains("class 1"));
    let bad = r#"{"n_joints": 3, "class_names": ["a"], "entries": [], "extra": 1}"#;
    assert!(serde_json::from_str::<DatasetManifest>(bad).is_err());
}
