use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::diffcore::{grad_check, Tape, Tensor};
use crate::shapespace::{
    exp_map, geodesic_distance_exact, log_map, to_preshape, PreShapeSequence, RotationMatrix3, TangentVector,
};

/// A moving skeleton: a random rest pose plus per-frame jitter of size `spread`.
fn random_sequence(rng: &mut ChaCha8Rng, frames: usize, joints: usize, spread: f64) -> PreShapeSequence {
    let rest: Vec<f64> = (0..joints * 3).map(|_| rng.sample(StandardNormal)).collect();
    let coords = Tensor::from_fn(&[frames, joints, 3], |k| {
        rest[k % (joints * 3)] + spread * rng.sample::<f64, _>(StandardNormal)
    });
    PreShapeSequence::from_skeletons(&coords).unwrap()
}

fn random_gtl(rng: &mut ChaCha8Rng, variant: GtlVariant, frames: usize, rows: usize) -> GtlParams {
    let mut p = GtlParams::identity(variant, frames, rows);
    let scale = if variant.is_constrained() { 1.0 } else { 0.2 };
    for v in p.value.data_mut() {
        *v += scale * rng.random_range(-1.0..1.0);
    }
    p
}

#[test]
fn euler_identity_and_x_axis() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[3]));
    let r = euler_to_rotation(&mut tape, a).unwrap();
    assert_eq!(tape.value(r).data(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);

    let a = tape.constant(Tensor::new(&[3], vec![FRAC_PI_2, 0.0, 0.0]).unwrap());
    let r = euler_to_rotation(&mut tape, a).unwrap();
    let expected: Vec<f64> = RotationMatrix3::rx(FRAC_PI_2).entries().iter().flatten().copied().collect();
    assert!(tape.value(r).max_abs_diff(&Tensor::new(&[3, 3], expected).unwrap()) < 1e-15);
    // (0, 1, 0) -> (0, 0, 1) under a quarter turn about x
    assert!((tape.value(r).data()[7] - 1.0).abs() < 1e-15);
}

#[test]
fn euler_matches_pure_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..50 {
        let (x, y, z) = (rng.random_range(-PI..PI), rng.random_range(-PI..PI), rng.random_range(-PI..PI));
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(&[3], vec![x, y, z]).unwrap());
        let r = euler_to_rotation(&mut tape, a).unwrap();
        let pure: Vec<f64> = RotationMatrix3::from_euler(x, y, z).entries().iter().flatten().copied().collect();
        assert!(tape.value(r).max_abs_diff(&Tensor::new(&[3, 3], pure.clone()).unwrap()) < 1e-15);
        let e: Vec<[f64; 3]> = pure.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        assert!(RotationMatrix3::new([e[0], e[1], e[2]]).is_ok());
    }
}

#[test]
fn euler_trace_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let angles = Tensor::from_fn(&[3], |_| rng.random_range(-PI..PI));
    let err = grad_check(
        |tape, p| {
            let r = euler_to_rotation(tape, p[0])?;
            let eye = tape.constant(Tensor::from_fn(&[3, 3], |k| if k % 4 == 0 { 1.0 } else { 0.0 }));
            let d = tape.mul(r, eye)?;
            Ok(tape.sum(d))
        },
        &[angles],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-7, "{err:e}");
}

#[test]
fn identity_parameters_give_plain_log_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let seq = random_sequence(&mut rng, 7, 6, 0.4);
    for variant in GtlVariant::ALL {
        for ref_index in [0, 3, 6] {
            let mut tape = Tape::new();
            let p = tape.leaf(GtlParams::identity(variant, 7, 5).value);
            let out = gtl_forward(&mut tape, &seq, variant, p, ref_index).unwrap();
            let reference = seq.frame(ref_index);
            assert!(out.reference.config().max_abs_diff(reference.config()) < 1e-15);
            for f in 0..7 {
                let oracle = log_map(&reference, &seq.frame(f)).unwrap();
                let got = tape.value(out.tangents).index_outer(f);
                assert!(got.max_abs_diff(oracle.vec()) < 1e-10, "{variant} frame {f}");
            }
        }
    }
}

#[test]
fn plain_log_map_sequence_matches_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let seq = random_sequence(&mut rng, 5, 8, 0.5);
    let mut tape = Tape::new();
    let out = log_map_sequence(&mut tape, &seq, 2).unwrap();
    for f in 0..5 {
        let oracle = log_map(&seq.frame(2), &seq.frame(f)).unwrap();
        assert!(tape.value(out.tangents).index_outer(f).max_abs_diff(oracle.vec()) < 1e-10);
    }
    assert!(out.max_tangency_defect(&tape) < 1e-12);
}

#[test]
fn constrained_transforms_keep_unit_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let seq = random_sequence(&mut rng, 6, 9, 0.5);
    let (f, m) = (seq.len(), seq.rows());
    // rigid
    let angles = random_gtl(&mut rng, GtlVariant::RigidConstrained, f, m).value;
    let mut tape = Tape::new();
    let a = tape.constant(angles);
    let r = euler_to_rotation_batch(&mut tape, a).unwrap();
    let p = tape.constant(seq.tensor().clone());
    let moved = tape.matmul(p, r).unwrap();
    let norms = tape.frobenius_norm(moved, 1).unwrap();
    for n in tape.value(norms).data() {
        assert!((n - 1.0).abs() < 1e-12);
    }
    // per joint
    let angles = random_gtl(&mut rng, GtlVariant::NonrigidConstrained, f, m).value;
    let a = tape.constant(angles.reshape(&[f * m, 3]).unwrap());
    let r = euler_to_rotation_batch(&mut tape, a).unwrap();
    let rows = tape.reshape(p, &[f * m, 1, 3]).unwrap();
    let moved = tape.matmul(rows, r).unwrap();
    let moved = tape.reshape(moved, &[f, m, 3]).unwrap();
    let norms = tape.frobenius_norm(moved, 1).unwrap();
    for n in tape.value(norms).data() {
        assert!((n - 1.0).abs() < 1e-12);
    }
}

#[test]
fn rigid_forward_matches_pure_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let seq = random_sequence(&mut rng, 4, 5, 0.3);
    let params = random_gtl(&mut rng, GtlVariant::RigidConstrained, 4, 4);
    let mut tape = Tape::new();
    let p = tape.leaf(params.value.clone());
    let out = gtl_forward(&mut tape, &seq, GtlVariant::RigidConstrained, p, 1).unwrap();
    let rotated: Vec<_> = (0..4)
        .map(|f| {
            let a = params.value.index_outer(f);
            let d = a.data();
            seq.frame(f).rotate(&RotationMatrix3::from_euler(d[0], d[1], d[2]))
        })
        .collect();
    for f in 0..4 {
        let oracle = log_map(&rotated[1], &rotated[f]).unwrap();
        assert!(tape.value(out.tangents).index_outer(f).max_abs_diff(oracle.vec()) < 1e-10);
    }
}

#[test]
fn tangents_are_tangent() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    for variant in GtlVariant::ALL {
        let seq = random_sequence(&mut rng, 10, 12, 0.5);
        let params = random_gtl(&mut rng, variant, 10, 11);
        let mut tape = Tape::new();
        let p = tape.leaf(params.value);
        let out = gtl_forward(&mut tape, &seq, variant, p, 4).unwrap();
        assert!(out.max_tangency_defect(&tape) < 1e-9, "{variant}");
    }
}

#[test]
fn collapsed_frame_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let seq = random_sequence(&mut rng, 3, 4, 0.5);
    let mut zeros = GtlParams::identity(GtlVariant::RigidUnconstrained, 3, 3).value;
    zeros.data_mut()[9..18].fill(0.0);
    let mut tape = Tape::new();
    let p = tape.leaf(zeros);
    let err = gtl_forward(&mut tape, &seq, GtlVariant::RigidUnconstrained, p, 0).unwrap_err();
    assert!(err.to_string().contains("frame 1"), "{err}");
}

#[test]
fn bad_shapes_and_reference_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(28);
    let seq = random_sequence(&mut rng, 3, 4, 0.5);
    let mut tape = Tape::new();
    let p = tape.leaf(Tensor::zeros(&[3, 4, 3]));
    assert!(gtl_forward(&mut tape, &seq, GtlVariant::NonrigidConstrained, p, 0).is_err());
    let p = tape.leaf(Tensor::zeros(&[3, 3]));
    assert!(gtl_forward(&mut tape, &seq, GtlVariant::RigidConstrained, p, 3).is_err());
    let out = gtl_forward(&mut tape, &seq, GtlVariant::RigidConstrained, p, 0).unwrap();
    let raw = tape.leaf(Tensor::zeros(&[4]));
    assert!(dml_forward(&mut tape, &out, DmlVariant::Lh, raw).is_err());
}

#[test]
fn variant_names_round_trip() {
    for v in GtlVariant::ALL {
        assert_eq!(v.name().parse::<GtlVariant>().unwrap(), v);
    }
    for v in DmlVariant::ALL {
        assert_eq!(v.name().parse::<DmlVariant>().unwrap(), v);
    }
    assert!("rigid".parse::<GtlVariant>().is_err());
}

// ---- DML --------------------------------------------------------------------------

#[test]
fn dml_identity_at_zero_raw() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let seq = random_sequence(&mut rng, 6, 7, 0.5);
    for variant in DmlVariant::ALL {
        let mut tape = Tape::new();
        let t = log_map_sequence(&mut tape, &seq, 0).unwrap();
        let raw = tape.leaf(DmlParams::identity(variant, 6, 6).raw);
        let out = dml_forward(&mut tape, &t, variant, raw).unwrap();
        assert_eq!(tape.value(out.tangents), tape.value(t.tangents));
        assert_eq!(out.reference, t.reference);
    }
}

#[test]
fn dml_broadcasting_rules() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let seq = random_sequence(&mut rng, 4, 5, 0.5);
    let (f, m) = (4, 4);
    for variant in DmlVariant::ALL {
        let params = DmlParams::init(variant, f, m, &mut rng);
        let alpha = params.alpha();
        let mut tape = Tape::new();
        let t = log_map_sequence(&mut tape, &seq, 0).unwrap();
        let raw = tape.leaf(params.raw.clone());
        let out = dml_forward(&mut tape, &t, variant, raw).unwrap();
        let (zin, zout) = (tape.value(t.tangents), tape.value(out.tangents));
        for fi in 0..f {
            for r in 0..m {
                let a = match variant {
                    DmlVariant::Gh => alpha.item(),
                    DmlVariant::Gin => alpha.data()[r],
                    DmlVariant::Lh => alpha.data()[fi],
                    DmlVariant::Lin => alpha.data()[fi * m + r],
                };
                for d in 0..3 {
                    let k = (fi * m + r) * 3 + d;
                    assert_eq!(zout.data()[k], zin.data()[k] * a);
                }
            }
        }
    }
}

#[test]
fn dml_gin_with_equal_alphas_matches_gh() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let seq = random_sequence(&mut rng, 5, 6, 0.5);
    let raw_value = rng.random_range(-1.0..1.0);
    let mut tape = Tape::new();
    let t = log_map_sequence(&mut tape, &seq, 0).unwrap();
    let gh = tape.leaf(Tensor::scalar(raw_value));
    let gin = tape.leaf(Tensor::full(&[5], raw_value));
    let a = dml_forward(&mut tape, &t, DmlVariant::Gh, gh).unwrap();
    let b = dml_forward(&mut tape, &t, DmlVariant::Gin, gin).unwrap();
    assert_eq!(tape.value(a.tangents), tape.value(b.tangents));
}

#[test]
fn dml_alpha_is_positive() {
    let p = DmlParams::from_tensor(DmlVariant::Lh, 3, 2, Tensor::new(&[3], vec![-700.0, 0.0, 5.0]).unwrap()).unwrap();
    assert!(p.alpha().data().iter().all(|&a| a > 0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let init = DmlParams::init(DmlVariant::Lin, 10, 10, &mut rng);
    assert!(init.raw.data().iter().all(|&r| r > -1.0 && r < 1.0));
}

#[test]
fn gh_scaling_follows_the_geodesic() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let seq = random_sequence(&mut rng, 6, 8, 0.6);
    let alpha: f64 = 0.6;
    let mut tape = Tape::new();
    let t = log_map_sequence(&mut tape, &seq, 0).unwrap();
    let raw = tape.leaf(Tensor::scalar(alpha.ln()));
    let out = dml_forward(&mut tape, &t, DmlVariant::Gh, raw).unwrap();
    let before = tape.len();
    for f in 1..6 {
        let z = TangentVector::new(t.reference.clone(), tape.value(t.tangents).index_outer(f), 1e-9).unwrap();
        let za = TangentVector::new(t.reference.clone(), tape.value(out.tangents).index_outer(f), 1e-9).unwrap();
        assert!((za.norm() - alpha * z.norm()).abs() < 1e-12);
        let dir_a = za.vec().map(|v| v / za.norm());
        let dir = z.vec().map(|v| v / z.norm());
        assert!(dir_a.max_abs_diff(&dir) < 1e-12);
        let moved = exp_map(&za).unwrap();
        let theta = geodesic_distance_exact(&t.reference, &seq.frame(f)).unwrap();
        assert!((geodesic_distance_exact(&t.reference, &moved).unwrap() - alpha * theta).abs() < 1e-9);
    }
    // the exponential map is evaluated off the tape
    assert_eq!(tape.len(), before);
}

// ---- end to end gradients -------------------------------------------------------

#[test]
fn gradients_for_every_variant_pair() {
    let mut rng = ChaCha8Rng::seed_from_u64(35);
    let (frames, joints) = (5, 4);
    let rows = joints - 1;
    for gv in GtlVariant::ALL {
        for dv in DmlVariant::ALL {
            let seq = random_sequence(&mut rng, frames, joints, 0.5);
            let g = random_gtl(&mut rng, gv, frames, rows).value;
            let d = DmlParams::init(dv, frames, rows, &mut rng).raw;
            let weights = Tensor::from_fn(&[frames, rows, 3], |_| rng.random_range(-1.0..1.0));
            let err = grad_check(
                |tape, p| {
                    let t = gtl_forward(tape, &seq, gv, p[0], 2)?;
                    let t = dml_forward(tape, &t, dv, p[1])?;
                    let w = tape.constant(weights.clone());
                    let prod = tape.mul(t.tangents, w)?;
                    let norms = tape.frobenius_norm(t.tangents, 1)?;
                    let a = tape.sum(prod);
                    let b = tape.sum(norms);
                    tape.add(a, b)
                },
                &[g, d],
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-5, "{gv} + {dv}: {err:e}");
        }
    }
}

#[test]
fn log_norm_gradient_wrt_angles() {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let seq = random_sequence(&mut rng, 3, 10, 0.7);
    let angles = random_gtl(&mut rng, GtlVariant::RigidConstrained, 3, 9).value;
    let err = grad_check(
        |tape, p| {
            let t = gtl_forward(tape, &seq, GtlVariant::RigidConstrained, p[0], 0)?;
            let n = tape.frobenius_norm(t.tangents, 0)?;
            Ok(n)
        },
        &[angles],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-5, "{err:e}");
}

// ---- distortion -----------------------------------------------------------------

#[test]
fn distortion_zero_for_constant_sequence() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let x = Tensor::from_fn(&[5, 3], |_| rng.sample(StandardNormal));
    let p = to_preshape(&x).unwrap();
    let seq = PreShapeSequence::from_points(&[p.clone(), p.clone(), p.clone()]).unwrap();
    let mut tape = Tape::new();
    let t = log_map_sequence(&mut tape, &seq, 0).unwrap();
    let rep = distortion_report(&seq, &t.reference, tape.value(t.tangents)).unwrap();
    assert!(rep.frames.iter().all(|f| f.theta == 0.0 && f.tangent_norm < 1e-12 && f.ratio == 1.0));
    assert!(rep.pairs.iter().all(|p| p.distortion < 1e-12));
    assert_eq!(rep.pairs.len(), 3);
}

#[test]
fn distortion_of_orthogonal_triple() {
    let unit = |k: usize| {
        let mut t = Tensor::zeros(&[1, 3]);
        t.data_mut()[k] = 1.0;
        crate::shapespace::PreShapePoint::new(t).unwrap()
    };
    let seq = PreShapeSequence::from_points(&[unit(0), unit(1), unit(2)]).unwrap();
    let mut tape = Tape::new();
    let t = log_map_sequence(&mut tape, &seq, 0).unwrap();
    let rep = distortion_report(&seq, &t.reference, tape.value(t.tangents)).unwrap();
    let pair = rep.pairs.iter().find(|p| p.f == 1 && p.g == 2).unwrap();
    assert!((pair.tangent_distance - FRAC_PI_2 * 2f64.sqrt()).abs() < 1e-12);
    assert!((pair.geodesic - FRAC_PI_2).abs() < 1e-15);
    assert!((pair.distortion - FRAC_PI_2 * (2f64.sqrt() - 1.0)).abs() < 1e-12);
    assert!((rep.frames[1].ratio - FRAC_PI_2).abs() < 1e-15);
}

#[test]
fn distortion_after_gh_scales_norms() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let seq = random_sequence(&mut rng, 5, 6, 0.5);
    let alpha: f64 = 0.5;
    let mut tape = Tape::new();
    let t = log_map_sequence(&mut tape, &seq, 0).unwrap();
    let raw = tape.leaf(Tensor::scalar(alpha.ln()));
    let s = dml_forward(&mut tape, &t, DmlVariant::Gh, raw).unwrap();
    let before = distortion_report(&seq, &t.reference, tape.value(t.tangents)).unwrap();
    let after = distortion_report(&seq, &s.reference, tape.value(s.tangents)).unwrap();
    for (b, a) in before.frames.iter().zip(&after.frames) {
        assert!((a.tangent_norm - alpha * b.tangent_norm).abs() < 1e-12);
    }
}
