use super::{helmert_submatrix, PreShapePoint};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// `F` pre-shape frames of equal size, stored as one `F x (n-1) x 3` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct PreShapeSequence {
    frames: Tensor,
}

impl PreShapeSequence {
    /// Project every frame of a raw `F x n x 3` trajectory.
    pub fn from_skeletons(coords: &Tensor) -> Result<Self> {
        let &[f, n, 3] = coords.shape() else {
            return Err(Error::shape(
                "preshape_sequence",
                format!("expected [F, n, 3], got {:?}", coords.shape()),
            ));
        };
        let h = helmert_submatrix(n)?;
        let mut data = Vec::with_capacity(f * (n - 1) * 3);
        for i in 0..f {
            let p = h.project(&coords.index_outer(i)).map_err(|e| match e {
                Error::Degenerate(msg) => Error::Degenerate(format!("frame {i}: {msg}")),
                other => other,
            })?;
            data.extend_from_slice(p.config().data());
        }
        Ok(PreShapeSequence {
            frames: Tensor::new(&[f, n - 1, 3], data)?,
        })
    }

    /// Wrap an `F x m x 3` tensor whose frames already have unit norm.
    pub fn from_tensor(frames: Tensor) -> Result<Self> {
        let &[f, m, 3] = frames.shape() else {
            return Err(Error::shape(
                "preshape_sequence",
                format!("expected [F, m, 3], got {:?}", frames.shape()),
            ));
        };
        for (i, chunk) in frames.data().chunks(m * 3).enumerate() {
            let norm = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::invalid(
                    "preshape_sequence",
                    format!("frame {i} of {f} has norm {norm}, not 1"),
                ));
            }
        }
        Ok(PreShapeSequence { frames })
    }

    pub fn from_points(points: &[PreShapePoint]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::invalid("preshape_sequence", "no frames"))?;
        let rows = first.rows();
        let mut data = Vec::with_capacity(points.len() * rows * 3);
        for (i, p) in points.iter().enumerate() {
            if p.rows() != rows {
                return Err(Error::shape(
                    "preshape_sequence",
                    format!("frame {i} has {} rows, frame 0 has {rows}", p.rows()),
                ));
            }
            data.extend_from_slice(p.config().data());
        }
        Ok(PreShapeSequence {
            frames: Tensor::new(&[points.len(), rows, 3], data)?,
        })
    }

    /// The `F x (n-1) x 3` tensor of all frames.
    pub fn tensor(&self) -> &Tensor {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn rows(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn frame(&self, f: usize) -> PreShapePoint {
        PreShapePoint::from_raw_unchecked(self.rows(), self.frames.index_outer(f).into_data())
    }

    pub fn points(&self) -> Vec<PreShapePoint> {
        (0..self.len()).map(|f| self.frame(f)).collect()
    }
}
