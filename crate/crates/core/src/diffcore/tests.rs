use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Result;

const H: f64 = 1e-6;
const TOL: f64 = 1e-6;
const INSTANCES: usize = 100;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Reduce an arbitrary-shape output to a scalar with fixed random weights so
/// the check sees the full Jacobian, not only its column sums.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.shape(out).to_vec();
    let w = tape.constant(random_tensor(&mut rng, &shape, -1.0, 1.0));
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

fn check_primitive<F>(name: &str, mut sample: impl FnMut(&mut ChaCha8Rng) -> Vec<Tensor>, build: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ name.len() as u64);
    for case in 0..INSTANCES {
        let params = sample(&mut rng);
        let err = grad_check(
            |t, v| {
                let out = build(t, v)?;
                weighted_sum(t, out, case as u64)
            },
            &params,
            H,
        )
        .unwrap();
        assert!(err < TOL, "{name}: case {case} relative error {err:e}");
    }
}

#[test]
fn matmul_identity_padded() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let b = tape.constant(Tensor::new(&[3, 2], vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap());
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).shape(), &[2, 2]);
    assert_eq!(tape.value(c).data(), &[1.0, 2.0, 4.0, 5.0]);
}

#[test]
fn matmul_shape_error_names_op() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 2]));
    let err = tape.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
}

#[test]
fn arccos_safe_at_one_is_finite() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(1.0));
    let y = tape.arccos_safe(x);
    let expected = (1.0 - ARCCOS_EPS).acos();
    assert!((tape.value(y).item() - expected).abs() < 1e-15);
    assert!((expected - 4.47e-4).abs() < 1e-6);
    tape.backward(y).unwrap();
    assert!(tape.grad(x).is_finite());
}

#[test]
fn softmax_ce_uniform_logits() {
    let mut tape = Tape::new();
    let l = tape.leaf(Tensor::new(&[2], vec![0.0, 0.0]).unwrap());
    let loss = tape.softmax_cross_entropy(l, 0).unwrap();
    assert!((tape.value(loss).item() - 2f64.ln()).abs() < 1e-15);
}

#[test]
fn backward_sum_gives_ones() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_fn(&[2, 3, 4], |k| k as f64 * 0.1));
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x), Tensor::ones(&[2, 3, 4]));
}

#[test]
fn backward_norm_gives_unit_vector() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::new(&[2], vec![3.0, 4.0]).unwrap());
    let n = tape.frobenius_norm(x, 0).unwrap();
    tape.backward(n).unwrap();
    let g = tape.grad(x);
    assert!((g.data()[0] - 0.6).abs() < 1e-15 && (g.data()[1] - 0.8).abs() < 1e-15);
}

#[test]
fn backward_rejects_non_scalar() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::zeros(&[3]));
    assert!(tape.backward(x).is_err());
}

#[test]
fn unreachable_leaf_keeps_zero_grad() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::ones(&[2]));
    let y = tape.leaf(Tensor::ones(&[3]));
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(y), Tensor::zeros(&[3]));
}

#[test]
fn gradcheck_square() {
    let err = grad_check(
        |t, v| t.mul(v[0], v[0]),
        &[Tensor::scalar(2.0)],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn gradcheck_reports_nonfinite_probe() {
    // sqrt(-x) at x = 0 is finite, but x + h makes it NaN.
    let err = grad_check(
        |t, v| {
            let n = t.neg(v[0]);
            Ok(t.sqrt(n))
        },
        &[Tensor::scalar(0.0)],
        1e-6,
    )
    .unwrap_err();
    assert!(err.to_string().contains("parameter 0"), "{err}");
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let x = tape.leaf(random_tensor(&mut rng, &[20, 6], -1.0, 1.0));
        let w = tape.leaf(random_tensor(&mut rng, &[4, 6, 3], -1.0, 1.0));
        let b = tape.leaf(random_tensor(&mut rng, &[4], -1.0, 1.0));
        let y = tape.conv1d(x, w, b).unwrap();
        let r = tape.relu(y);
        let p = tape.maxpool1d(r, 2).unwrap();
        let n = tape.frobenius_norm(p, 0).unwrap();
        tape.backward(n).unwrap();
        (tape.grad(x), tape.grad(w))
    };
    let (a, b) = (run(), run());
    let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.0), bits(&b.0));
    assert_eq!(bits(&a.1), bits(&b.1));
}

// ---- per-primitive finite-difference checks --------------------------------

#[test]
fn grad_elementwise_binary() {
    check_primitive(
        "add",
        |r| vec![random_tensor(r, &[3, 4], -2.0, 2.0), random_tensor(r, &[4], -2.0, 2.0)],
        |t, v| t.add(v[0], v[1]),
    );
    check_primitive(
        "sub",
        |r| vec![random_tensor(r, &[2, 3, 1], -2.0, 2.0), random_tensor(r, &[3, 5], -2.0, 2.0)],
        |t, v| t.sub(v[0], v[1]),
    );
    check_primitive(
        "mul",
        |r| vec![random_tensor(r, &[4, 3, 3], -2.0, 2.0), random_tensor(r, &[4, 1, 1], -2.0, 2.0)],
        |t, v| t.mul(v[0], v[1]),
    );
    check_primitive(
        "div",
        |r| vec![random_tensor(r, &[5, 2], -2.0, 2.0), random_tensor(r, &[5, 1], 0.5, 2.0)],
        |t, v| t.div(v[0], v[1]),
    );
    check_primitive(
        "scalar_mul",
        |r| vec![random_tensor(r, &[6], -2.0, 2.0)],
        |t, v| Ok(t.scalar_mul(v[0], -1.7)),
    );
}

#[test]
fn grad_matmul() {
    check_primitive(
        "matmul",
        |r| vec![random_tensor(r, &[3, 4], -1.0, 1.0), random_tensor(r, &[4, 2], -1.0, 1.0)],
        |t, v| t.matmul(v[0], v[1]),
    );
    check_primitive(
        "batched matmul",
        |r| vec![random_tensor(r, &[3, 2, 3], -1.0, 1.0), random_tensor(r, &[3, 3, 3], -1.0, 1.0)],
        |t, v| t.matmul(v[0], v[1]),
    );
}

#[test]
fn grad_reductions() {
    check_primitive("sum", |r| vec![random_tensor(r, &[3, 4], -1.0, 1.0)], |t, v| Ok(t.sum(v[0])));
    check_primitive(
        "sum_keep",
        |r| vec![random_tensor(r, &[3, 4, 2], -1.0, 1.0)],
        |t, v| t.sum_keep(v[0], 1),
    );
    check_primitive("mean", |r| vec![random_tensor(r, &[7], -1.0, 1.0)], |t, v| Ok(t.mean(v[0])));
    check_primitive(
        "frobenius_norm",
        |r| vec![random_tensor(r, &[4, 3, 3], -1.0, 1.0)],
        |t, v| t.frobenius_norm(v[0], 1),
    );
    check_primitive(
        "frobenius_inner",
        |r| vec![random_tensor(r, &[4, 5], -1.0, 1.0), random_tensor(r, &[4, 5], -1.0, 1.0)],
        |t, v| t.frobenius_inner(v[0], v[1], 1),
    );
}

#[test]
fn grad_unary() {
    check_primitive("sin", |r| vec![random_tensor(r, &[5], -3.0, 3.0)], |t, v| Ok(t.sin(v[0])));
    check_primitive("cos", |r| vec![random_tensor(r, &[5], -3.0, 3.0)], |t, v| Ok(t.cos(v[0])));
    check_primitive("exp", |r| vec![random_tensor(r, &[5], -2.0, 2.0)], |t, v| Ok(t.exp(v[0])));
    check_primitive("sqrt", |r| vec![random_tensor(r, &[5], 0.2, 3.0)], |t, v| Ok(t.sqrt(v[0])));
    check_primitive(
        "relu",
        |r| {
            // keep probes away from the kink
            let x = Tensor::from_fn(&[8], |_| {
                let m: f64 = r.random_range(0.01..2.0);
                if r.random::<bool>() { m } else { -m }
            });
            vec![x]
        },
        |t, v| Ok(t.relu(v[0])),
    );
    check_primitive(
        "clamp",
        |r| vec![random_tensor(r, &[6], -0.9, 0.9)],
        |t, v| Ok(t.clamp(v[0], -0.95, 0.95)),
    );
    // probes stay at least 1e-4 away from the clamp boundary
    check_primitive(
        "arccos_safe",
        |r| vec![random_tensor(r, &[6], -0.999, 0.999)],
        |t, v| Ok(t.arccos_safe(v[0])),
    );
}

#[test]
fn grad_structural() {
    check_primitive(
        "reshape",
        |r| vec![random_tensor(r, &[2, 6], -1.0, 1.0)],
        |t, v| t.reshape(v[0], &[3, 4]),
    );
    check_primitive(
        "slice",
        |r| vec![random_tensor(r, &[3, 5, 2], -1.0, 1.0)],
        |t, v| t.slice(v[0], 1, 1, 4),
    );
    check_primitive(
        "concat",
        |r| vec![random_tensor(r, &[2, 3], -1.0, 1.0), random_tensor(r, &[2, 1], -1.0, 1.0)],
        |t, v| t.concat(&[v[0], v[1], v[0]], 1),
    );
}

#[test]
fn grad_network_layers() {
    check_primitive(
        "conv1d",
        |r| {
            vec![
                random_tensor(r, &[9, 4], -1.0, 1.0),
                random_tensor(r, &[3, 4, 3], -1.0, 1.0),
                random_tensor(r, &[3], -1.0, 1.0),
            ]
        },
        |t, v| t.conv1d(v[0], v[1], v[2]),
    );
    check_primitive(
        "maxpool1d",
        |r| vec![random_tensor(r, &[9, 3], -1.0, 1.0)],
        |t, v| t.maxpool1d(v[0], 2),
    );
    check_primitive(
        "linear",
        |r| {
            vec![
                random_tensor(r, &[2, 5], -1.0, 1.0),
                random_tensor(r, &[3, 5], -1.0, 1.0),
                random_tensor(r, &[3], -1.0, 1.0),
            ]
        },
        |t, v| t.linear(v[0], v[1], v[2]),
    );
    check_primitive(
        "lstm_step",
        |r| {
            vec![
                random_tensor(r, &[4], -1.0, 1.0),
                random_tensor(r, &[6], -1.0, 1.0),
                random_tensor(r, &[12, 4], -1.0, 1.0),
                random_tensor(r, &[12, 3], -1.0, 1.0),
                random_tensor(r, &[12], -1.0, 1.0),
            ]
        },
        |t, v| t.lstm_step(v[0], v[1], v[2], v[3], v[4]),
    );
    check_primitive(
        "softmax_cross_entropy",
        |r| vec![random_tensor(r, &[5], -3.0, 3.0)],
        |t, v| t.softmax_cross_entropy(v[0], 2),
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn layer_output_shapes(l in 3usize..40, cin in 1usize..6, cout in 1usize..6,
                           k in 1usize..4, pool in 1usize..4, hidden in 1usize..5) {
        prop_assume!(l >= k);
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[l, cin]));
        let w = tape.constant(Tensor::zeros(&[cout, cin, k]));
        let b = tape.constant(Tensor::zeros(&[cout]));
        let y = tape.conv1d(x, w, b).unwrap();
        prop_assert_eq!(tape.shape(y), &[l - k + 1, cout][..]);
        if l - k + 1 >= pool {
            let p = tape.maxpool1d(y, pool).unwrap();
            prop_assert_eq!(tape.shape(p), &[(l - k + 1) / pool, cout][..]);
        }
        let wi = tape.constant(Tensor::zeros(&[4 * hidden, cout]));
        let wh = tape.constant(Tensor::zeros(&[4 * hidden, hidden]));
        let bb = tape.constant(Tensor::zeros(&[4 * hidden]));
        let s = tape.constant(Tensor::zeros(&[2 * hidden]));
        let xt = tape.slice(y, 0, 0, 1).unwrap();
        let s2 = tape.lstm_step(xt, s, wi, wh, bb).unwrap();
        prop_assert_eq!(tape.shape(s2), &[2 * hidden][..]);
    }
}
