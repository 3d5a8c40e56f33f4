use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::diffcore::{grad_check, Tape, Tensor, Var};
use crate::error::Result;
use crate::geomlayers::{dml_forward, gtl_forward, DmlParams, DmlVariant, GtlParams, GtlVariant};
use crate::shapespace::PreShapeSequence;

/// Relative-error bound for the geometric layers.
pub const GEOMETRY_TOLERANCE: f64 = 1e-5;
/// Relative-error bound for the convolution / LSTM / dense layers.
pub const NETWORK_TOLERANCE: f64 = 1e-6;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckRow {
    pub component: String,
    pub max_rel_err: f64,
    pub threshold: f64,
}

impl GradCheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.threshold
    }
}

fn normal(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Scalar probe `sum(w * x)` so every output entry gets a distinct weight.
fn probe(tape: &mut Tape, x: Var, w: &Tensor) -> Result<Var> {
    let w = tape.constant(w.clone());
    let y = tape.mul(x, w)?;
    Ok(tape.sum(y))
}

/// Finite-difference check of every transformation x distortion pairing
/// (16 rows) and of the convolution, LSTM and dense layers (3 rows).
pub fn gradient_suite(seed: u64) -> Result<Vec<GradCheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (frames, joints, ref_index) = (5, 5, 2);
    let rest = normal(&[joints, 3], 1.0, &mut rng);
    let coords = Tensor::from_fn(&[frames, joints, 3], |k| {
        rest.data()[k % (joints * 3)] + 0.3 * rng.sample::<f64, _>(StandardNormal)
    });
    let seq = PreShapeSequence::from_skeletons(&coords)?;
    let rows = seq.rows();
    let weights = normal(&[frames, rows, 3], 1.0, &mut rng);

    let mut out = Vec::new();
    for gtl in GtlVariant::ALL {
        for dml in DmlVariant::ALL {
            let mut g = GtlParams::init(gtl, frames, rows, &mut rng).value;
            let jitter = if gtl.is_constrained() { 0.5 } else { 0.1 };
            for v in g.data_mut() {
                *v += jitter * rng.random_range(-1.0..1.0);
            }
            let d = DmlParams::init(dml, frames, rows, &mut rng).raw;
            let err = grad_check(
                |tape, vars| {
                    let t = gtl_forward(tape, &seq, gtl, vars[0], ref_index)?;
                    let t = dml_forward(tape, &t, dml, vars[1])?;
                    probe(tape, t.tangents, &weights)
                },
                &[g, d],
                FD_STEP,
            )?;
            out.push(GradCheckRow {
                component: format!("gtl:{gtl}+dml:{dml}"),
                max_rel_err: err,
                threshold: GEOMETRY_TOLERANCE,
            });
        }
    }

    let (len, cin, cout, k) = (9, 4, 3, 3);
    let x = normal(&[len, cin], 1.0, &mut rng);
    let w_out = normal(&[len - k + 1, cout], 1.0, &mut rng);
    let conv = grad_check(
        |tape, v| {
            let y = tape.conv1d(v[0], v[1], v[2])?;
            probe(tape, y, &w_out)
        },
        &[x, normal(&[cout, cin, k], 0.5, &mut rng), normal(&[cout], 0.5, &mut rng)],
        FD_STEP,
    )?;
    out.push(GradCheckRow {
        component: "conv1d".into(),
        max_rel_err: conv,
        threshold: NETWORK_TOLERANCE,
    });

    let (steps, input, hidden) = (4, 3, 2);
    let xs = normal(&[steps, input], 1.0, &mut rng);
    let w_h = normal(&[2 * hidden], 1.0, &mut rng);
    let lstm = grad_check(
        |tape, v| {
            let mut state = tape.constant(Tensor::zeros(&[2 * hidden]));
            for t in 0..steps {
                let xt = tape.slice(v[0], 0, t, t + 1)?;
                state = tape.lstm_step(xt, state, v[1], v[2], v[3])?;
            }
            probe(tape, state, &w_h)
        },
        &[
            xs,
            normal(&[4 * hidden, input], 0.5, &mut rng),
            normal(&[4 * hidden, hidden], 0.5, &mut rng),
            normal(&[4 * hidden], 0.5, &mut rng),
        ],
        FD_STEP,
    )?;
    out.push(GradCheckRow {
        component: "lstm".into(),
        max_rel_err: lstm,
        threshold: NETWORK_TOLERANCE,
    });

    let label = 1;
    let dense = grad_check(
        |tape, v| {
            let z = tape.linear(v[0], v[1], v[2])?;
            tape.softmax_cross_entropy(z, label)
        },
        &[
            normal(&[5], 1.0, &mut rng),
            normal(&[3, 5], 0.5, &mut rng),
            normal(&[3], 0.5, &mut rng),
        ],
        FD_STEP,
    )?;
    out.push(GradCheckRow {
        component: "dense+cross-entropy".into(),
        max_rel_err: dense,
        threshold: NETWORK_TOLERANCE,
    });
    Ok(out)
}
