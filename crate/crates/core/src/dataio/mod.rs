//! Skeleton-sequence ingestion, temporal resampling, cross-subject folds and
//! the synthetic benchmark generator.

mod csvio;
mod folds;
mod manifest;
mod spline;
mod synth;

pub use csvio::{format_sequence, parse_sequence, read_sequence, write_sequence};
pub use folds::{kfold_split, FoldSpec};
pub use manifest::{Dataset, DatasetManifest, ManifestEntry};
pub use spline::{natural_spline_resample, spline_resample};
pub use synth::{generate_synthetic, write_dataset, SynthStyle, SyntheticSpec};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::shapespace::PreShapeSequence;

/// Raw `F x n x 3` joint trajectories of one recording.
#[derive(Clone, Debug, PartialEq)]
pub struct SkeletonSequence {
    coords: Tensor,
    pub subject_id: String,
    pub label: usize,
    pub exercise_id: Option<String>,
}

impl SkeletonSequence {
    pub fn new(coords: Tensor, subject_id: impl Into<String>, label: usize) -> Result<Self> {
        let &[f, n, 3] = coords.shape() else {
            return Err(Error::shape("skeleton_sequence", format!("expected [F, n, 3], got {:?}", coords.shape())));
        };
        if f < 2 || n < 2 {
            return Err(Error::invalid(
                "skeleton_sequence",
                format!("need at least 2 frames and 2 joints, got {f} x {n}"),
            ));
        }
        if !coords.is_finite() {
            return Err(Error::NonFinite("skeleton_sequence: non-finite coordinate".into()));
        }
        Ok(SkeletonSequence {
            coords,
            subject_id: subject_id.into(),
            label,
            exercise_id: None,
        })
    }

    pub fn with_exercise(mut self, exercise: Option<String>) -> Self {
        self.exercise_id = exercise;
        self
    }

    pub fn coords(&self) -> &Tensor {
        &self.coords
    }

    pub fn frames(&self) -> usize {
        self.coords.shape()[0]
    }

    pub fn joints(&self) -> usize {
        self.coords.shape()[1]
    }

    /// Joint `j` of frame `f`.
    pub fn joint(&self, f: usize, j: usize) -> [f64; 3] {
        let k = (f * self.joints() + j) * 3;
        let d = self.coords.data();
        [d[k], d[k + 1], d[k + 2]]
    }

    pub fn to_preshape(&self) -> Result<PreShapeSequence> {
        PreShapeSequence::from_skeletons(&self.coords)
    }
}

#[cfg(test)]
mod tests;
