//! Learnable geometric layers on top of the tape: the transformation layer
//! (per-frame or per-joint rotations / linear maps followed by the log-map
//! activation at a reference frame) and the distortion layer (positive
//! scaling of tangent vectors).

mod distortion;
mod dml;
mod gtl;

pub use distortion::{distortion_report, DistortionReport, FrameDistortion, PairDistortion};
pub use dml::{dml_forward, DmlParams, DmlVariant};
pub use gtl::{euler_to_rotation, euler_to_rotation_batch, gtl_forward, log_map_sequence, GtlParams, GtlVariant};

use crate::diffcore::{Tape, Tensor, Var};
use crate::shapespace::PreShapePoint;

/// Tangent representatives of every frame at a common reference.
#[derive(Clone, Debug)]
pub struct TangentSequence {
    /// Value of the reference point (frame `ref_index` of `points`).
    pub reference: PreShapePoint,
    pub ref_index: usize,
    /// `F x (n-1) x 3` unit-norm frames the tangents were taken from.
    pub points: Var,
    /// `F x (n-1) x 3` tangents at the reference.
    pub tangents: Var,
}

impl TangentSequence {
    pub fn tangent_values<'t>(&self, tape: &'t Tape) -> &'t Tensor {
        tape.value(self.tangents)
    }

    /// Largest `|<reference, Z_f>|` over frames.
    pub fn max_tangency_defect(&self, tape: &Tape) -> f64 {
        let z = tape.value(self.tangents);
        let r = self.reference.config().data();
        z.data()
            .chunks(r.len())
            .map(|zf| zf.iter().zip(r).map(|(a, b)| a * b).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests;
