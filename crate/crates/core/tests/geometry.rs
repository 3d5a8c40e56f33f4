//! Invariants of the pre-shape geometry and the geometric layers, exercised
//! through the public API.

use kshape::diffcore::{Tape, Tensor};
use kshape::geomlayers::{dml_forward, gtl_forward, log_map_sequence, DmlParams, DmlVariant, GtlParams, GtlVariant};
use kshape::shapespace::{
    exp_map, geodesic_distance_exact, log_map, pole_ladder_transport, to_preshape, transport_closed_form,
    PreShapeSequence, RotationMatrix3, TangentVector,
};
use proptest::prelude::*;

fn skeleton(values: &[f64], n: usize) -> Tensor {
    Tensor::new(&[n, 3], values[..n * 3].to_vec()).unwrap()
}

fn coords() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_inverts_log(a in coords(), b in coords()) {
        let p = to_preshape(&skeleton(&a, 10)).unwrap();
        let q = to_preshape(&skeleton(&b, 10)).unwrap();
        let theta = geodesic_distance_exact(&p, &q).unwrap();
        prop_assume!(theta < std::f64::consts::PI - 1e-3);
        let z = log_map(&p, &q).unwrap();
        prop_assert!((z.norm() - theta).abs() < 1e-10);
        prop_assert!(geodesic_distance_exact(&exp_map(&z).unwrap(), &q).unwrap() < 1e-9);
    }

    #[test]
    fn distance_is_invariant_to_a_common_rotation(a in coords(), b in coords(), x in -3.0f64..3.0, y in -3.0f64..3.0, z in -3.0f64..3.0) {
        let p = to_preshape(&skeleton(&a, 10)).unwrap();
        let q = to_preshape(&skeleton(&b, 10)).unwrap();
        let r = RotationMatrix3::from_euler(x, y, z);
        let before = geodesic_distance_exact(&p, &q).unwrap();
        let after = geodesic_distance_exact(&p.rotate(&r), &q.rotate(&r)).unwrap();
        prop_assert!((before - after).abs() < 1e-10);
    }

    #[test]
    fn transport_preserves_inner_products(a in coords(), b in coords(), c in coords(), d in coords()) {
        let p = to_preshape(&skeleton(&a, 10)).unwrap();
        let q = to_preshape(&skeleton(&b, 10)).unwrap();
        prop_assume!(geodesic_distance_exact(&p, &q).unwrap() < 2.5);
        let u = log_map(&p, &to_preshape(&skeleton(&c, 10)).unwrap()).unwrap();
        let v = log_map(&p, &to_preshape(&skeleton(&d, 10)).unwrap()).unwrap();
        let (tu, tv) = (transport_closed_form(&u, &q).unwrap(), transport_closed_form(&v, &q).unwrap());
        prop_assert!((tu.vec().dot(tv.vec()) - u.vec().dot(v.vec())).abs() < 1e-10);
        prop_assert!(tu.tangency_defect() < 1e-10);
        let ladder = pole_ladder_transport(&u, &q, 20).unwrap();
        prop_assert!(ladder.vec().max_abs_diff(tu.vec()) < 1e-9);
    }

    #[test]
    fn homogeneous_distortion_scales_every_tangent(raw in -1.5f64..1.5, a in coords(), b in coords()) {
        let frames = Tensor::from_fn(&[2, 10, 3], |k| if k < 30 { a[k] } else { b[k - 30] });
        let seq = PreShapeSequence::from_skeletons(&frames).unwrap();
        let mut tape = Tape::new();
        let plain = log_map_sequence(&mut tape, &seq, 0).unwrap();
        let before = plain.tangent_values(&tape).clone();
        let p = tape.leaf(Tensor::scalar(raw));
        let scaled = dml_forward(&mut tape, &plain, DmlVariant::Gh, p).unwrap();
        let expected = before.map(|v| v * raw.exp());
        prop_assert!(scaled.tangent_values(&tape).max_abs_diff(&expected) < 1e-12);
    }
}

#[test]
fn rigid_layer_with_identity_matches_plain_log_map() {
    let frames = Tensor::from_fn(&[4, 6, 3], |k| ((k * 37 % 11) as f64 - 5.0) * 0.3);
    let seq = PreShapeSequence::from_skeletons(&frames).unwrap();
    for variant in GtlVariant::ALL {
        let mut tape = Tape::new();
        let plain = log_map_sequence(&mut tape, &seq, 1).unwrap();
        let params = tape.leaf(GtlParams::identity(variant, 4, 5).value);
        let out = gtl_forward(&mut tape, &seq, variant, params, 1).unwrap();
        let diff = out.tangent_values(&tape).max_abs_diff(plain.tangent_values(&tape));
        assert!(diff < 1e-12, "{variant}: {diff}");
        for f in 0..4 {
            let z = log_map(&seq.frame(1), &seq.frame(f)).unwrap();
            let got = TangentVector::new(seq.frame(1), out.tangent_values(&tape).index_outer(f), 1e-9).unwrap();
            assert!(got.vec().max_abs_diff(z.vec()) < 1e-9);
        }
    }
    let alpha = DmlParams::identity(DmlVariant::Lin, 4, 5).alpha();
    assert!(alpha.data().iter().all(|&a| a == 1.0));
}
