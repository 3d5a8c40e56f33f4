use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TangentSequence;
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::shapespace::{PreShapePoint, PreShapeSequence, CUT_LOCUS_MARGIN, DEGENERATE_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GtlVariant {
    RigidConstrained,
    RigidUnconstrained,
    NonrigidConstrained,
    NonrigidUnconstrained,
}

impl GtlVariant {
    pub const ALL: [GtlVariant; 4] = [
        GtlVariant::RigidConstrained,
        GtlVariant::RigidUnconstrained,
        GtlVariant::NonrigidConstrained,
        GtlVariant::NonrigidUnconstrained,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GtlVariant::RigidConstrained => "rigid-constrained",
            GtlVariant::RigidUnconstrained => "rigid-unconstrained",
            GtlVariant::NonrigidConstrained => "nonrigid-constrained",
            GtlVariant::NonrigidUnconstrained => "nonrigid-unconstrained",
        }
    }

    pub fn is_rigid(self) -> bool {
        matches!(self, GtlVariant::RigidConstrained | GtlVariant::RigidUnconstrained)
    }

    pub fn is_constrained(self) -> bool {
        matches!(self, GtlVariant::RigidConstrained | GtlVariant::NonrigidConstrained)
    }

    /// Parameter shape for `frames` frames of `rows` pre-shape rows.
    pub fn param_shape(self, frames: usize, rows: usize) -> Vec<usize> {
        match self {
            GtlVariant::RigidConstrained => vec![frames, 3],
            GtlVariant::RigidUnconstrained => vec![frames, 3, 3],
            GtlVariant::NonrigidConstrained => vec![frames, rows, 3],
            GtlVariant::NonrigidUnconstrained => vec![frames, rows, 3, 3],
        }
    }
}

impl fmt::Display for GtlVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GtlVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GtlVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid("gtl variant", format!("unknown variant {s:?}")))
    }
}

/// Parameter values of a transformation layer; turned into a tape leaf for
/// each forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct GtlParams {
    pub variant: GtlVariant,
    pub value: Tensor,
}

impl GtlParams {
    /// Parameters that make the transform the identity: zero angles or
    /// identity matrices.
    pub fn identity(variant: GtlVariant, frames: usize, rows: usize) -> Self {
        let shape = variant.param_shape(frames, rows);
        let value = if variant.is_constrained() {
            Tensor::zeros(&shape)
        } else {
            Tensor::from_fn(&shape, |k| if k % 9 == 0 || k % 9 == 4 || k % 9 == 8 { 1.0 } else { 0.0 })
        };
        GtlParams { variant, value }
    }

    /// Training initialization: zero angles for the constrained variants,
    /// identity plus `U(-0.01, 0.01)` for the matrix variants.
    pub fn init(variant: GtlVariant, frames: usize, rows: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::identity(variant, frames, rows);
        if !variant.is_constrained() {
            for v in p.value.data_mut() {
                *v += rng.random_range(-0.01..0.01);
            }
        }
        p
    }

    pub fn from_tensor(variant: GtlVariant, frames: usize, rows: usize, value: Tensor) -> Result<Self> {
        let shape = variant.param_shape(frames, rows);
        if value.shape() != shape.as_slice() {
            return Err(Error::shape(
                "gtl params",
                format!("{variant} expects {shape:?}, got {:?}", value.shape()),
            ));
        }
        Ok(GtlParams { variant, value })
    }
}

/// `Rz(z) Ry(y) Rx(x)` for a batch of angle triples `[B, 3]` (order x, y, z),
/// as a `[B, 3, 3]` tape node.
pub fn euler_to_rotation_batch(tape: &mut Tape, angles: Var) -> Result<Var> {
    let &[b, 3] = tape.shape(angles) else {
        return Err(Error::shape("euler_to_rotation", format!("expected [B, 3], got {:?}", tape.shape(angles))));
    };
    let a = tape.slice(angles, 1, 0, 1)?;
    let be = tape.slice(angles, 1, 1, 2)?;
    let g = tape.slice(angles, 1, 2, 3)?;
    let (ca, sa) = (tape.cos(a), tape.sin(a));
    let (cb, sb) = (tape.cos(be), tape.sin(be));
    let (cg, sg) = (tape.cos(g), tape.sin(g));

    let cgcb = tape.mul(cg, cb)?;
    let sgcb = tape.mul(sg, cb)?;
    let cgsb = tape.mul(cg, sb)?;
    let sgsb = tape.mul(sg, sb)?;
    let cgsbsa = tape.mul(cgsb, sa)?;
    let sgca = tape.mul(sg, ca)?;
    let r01 = tape.sub(cgsbsa, sgca)?;
    let cgsbca = tape.mul(cgsb, ca)?;
    let sgsa = tape.mul(sg, sa)?;
    let r02 = tape.add(cgsbca, sgsa)?;
    let sgsbsa = tape.mul(sgsb, sa)?;
    let cgca = tape.mul(cg, ca)?;
    let r11 = tape.add(sgsbsa, cgca)?;
    let sgsbca = tape.mul(sgsb, ca)?;
    let cgsa = tape.mul(cg, sa)?;
    let r12 = tape.sub(sgsbca, cgsa)?;
    let r20 = tape.neg(sb);
    let r21 = tape.mul(cb, sa)?;
    let r22 = tape.mul(cb, ca)?;

    let flat = tape.concat(&[cgcb, r01, r02, sgcb, r11, r12, r20, r21, r22], 1)?;
    tape.reshape(flat, &[b, 3, 3])
}

/// Differentiable rotation matrix `[3, 3]` from three angles `[3]`.
pub fn euler_to_rotation(tape: &mut Tape, angles: Var) -> Result<Var> {
    if tape.shape(angles) != [3] {
        return Err(Error::shape("euler_to_rotation", format!("expected [3], got {:?}", tape.shape(angles))));
    }
    let batched = tape.reshape(angles, &[1, 3])?;
    let r = euler_to_rotation_batch(tape, batched)?;
    tape.reshape(r, &[3, 3])
}

/// Renormalize every frame of `points` (`[F, m, 3]`) to unit norm and log-map
/// all of them at frame `ref_index`.
fn renormalize_and_log(tape: &mut Tape, points: Var, ref_index: usize) -> Result<TangentSequence> {
    let shape = tape.shape(points).to_vec();
    let &[f, m, 3] = shape.as_slice() else {
        return Err(Error::shape("log_map_sequence", format!("expected [F, m, 3], got {shape:?}")));
    };
    if ref_index >= f {
        return Err(Error::invalid(
            "log_map_sequence",
            format!("reference index {ref_index} out of range for {f} frames"),
        ));
    }
    let norms = tape.frobenius_norm(points, 1)?;
    if let Some((i, n)) = tape
        .value(norms)
        .data()
        .iter()
        .enumerate()
        .find(|(_, n)| !(**n > DEGENERATE_EPS))
    {
        return Err(Error::Degenerate(format!("transformed frame {i} has norm {n:e}")));
    }
    let norms = tape.reshape(norms, &[f, 1, 1])?;
    let unit = tape.div(points, norms)?;

    let reference = tape.slice(unit, 0, ref_index, ref_index + 1)?;
    let prod = tape.mul(unit, reference)?;
    let cos = tape.sum_keep(prod, 1)?;
    let cut = (std::f64::consts::PI - CUT_LOCUS_MARGIN).cos();
    if let Some(i) = tape.value(cos).data().iter().position(|&c| c <= cut) {
        return Err(Error::CutLocus(format!(
            "frame {i} is within {CUT_LOCUS_MARGIN:e} of the antipode of reference frame {ref_index}"
        )));
    }
    let theta = tape.arccos_safe(cos);
    let sin = tape.sin(theta);
    let ratio = tape.div(theta, sin)?;
    let ratio = tape.reshape(ratio, &[f, 1, 1])?;
    let cos3 = tape.reshape(cos, &[f, 1, 1])?;
    let along = tape.mul(cos3, reference)?;
    let w = tape.sub(unit, along)?;
    let tangents = tape.mul(ratio, w)?;

    let reference = PreShapePoint::from_raw_unchecked(m, tape.value(reference).data().to_vec());
    Ok(TangentSequence {
        reference,
        ref_index,
        points: unit,
        tangents,
    })
}

/// Log map of an untransformed sequence at frame `ref_index`, on the tape.
pub fn log_map_sequence(tape: &mut Tape, seq: &PreShapeSequence, ref_index: usize) -> Result<TangentSequence> {
    let points = tape.constant(seq.tensor().clone());
    renormalize_and_log(tape, points, ref_index)
}

/// Apply the variant's transform to every frame, renormalize, and log-map at
/// frame `ref_index` of the transformed sequence.
pub fn gtl_forward(
    tape: &mut Tape,
    seq: &PreShapeSequence,
    variant: GtlVariant,
    params: Var,
    ref_index: usize,
) -> Result<TangentSequence> {
    let (f, m) = (seq.len(), seq.rows());
    let expected = variant.param_shape(f, m);
    if tape.shape(params) != expected.as_slice() {
        return Err(Error::shape(
            "gtl_forward",
            format!("{variant} on {f} frames x {m} rows expects {expected:?}, got {:?}", tape.shape(params)),
        ));
    }
    let p = tape.constant(seq.tensor().clone());
    let transformed = match variant {
        GtlVariant::RigidConstrained => {
            let r = euler_to_rotation_batch(tape, params)?;
            tape.matmul(p, r)?
        }
        GtlVariant::RigidUnconstrained => tape.matmul(p, params)?,
        GtlVariant::NonrigidConstrained | GtlVariant::NonrigidUnconstrained => {
            let mats = if variant == GtlVariant::NonrigidConstrained {
                let flat = tape.reshape(params, &[f * m, 3])?;
                euler_to_rotation_batch(tape, flat)?
            } else {
                tape.reshape(params, &[f * m, 3, 3])?
            };
            let rows = tape.reshape(p, &[f * m, 1, 3])?;
            let moved = tape.matmul(rows, mats)?;
            tape.reshape(moved, &[f, m, 3])?
        }
    };
    renormalize_and_log(tape, transformed, ref_index)
}
