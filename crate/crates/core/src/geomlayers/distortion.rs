use serde::Serialize;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::shapespace::{geodesic_distance_exact, PreShapePoint, PreShapeSequence};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameDistortion {
    pub frame: usize,
    /// Geodesic distance from the reference.
    pub theta: f64,
    pub tangent_norm: f64,
    /// `theta / sin(theta)`, the stretch the log map applies to the chord;
    /// 1 at the reference.
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairDistortion {
    pub f: usize,
    pub g: usize,
    pub tangent_distance: f64,
    pub geodesic: f64,
    /// `|tangent_distance - geodesic|`.
    pub distortion: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionReport {
    pub frames: Vec<FrameDistortion>,
    pub pairs: Vec<PairDistortion>,
}

impl DistortionReport {
    pub fn max_pair_distortion(&self) -> f64 {
        self.pairs.iter().map(|p| p.distortion).fold(0.0, f64::max)
    }

    pub fn mean_pair_distortion(&self) -> f64 {
        if self.pairs.is_empty() {
            return 0.0;
        }
        self.pairs.iter().map(|p| p.distortion).sum::<f64>() / self.pairs.len() as f64
    }
}

/// Compare distances on the sphere (`seq`, the frames the tangents came from)
/// with distances between their tangent representatives `[F, m, 3]` at
/// `reference`.
pub fn distortion_report(seq: &PreShapeSequence, reference: &PreShapePoint, tangents: &Tensor) -> Result<DistortionReport> {
    let (f, m) = (seq.len(), seq.rows());
    if tangents.shape() != [f, m, 3] || reference.rows() != m {
        return Err(Error::shape(
            "distortion_report",
            format!(
                "sequence [{f}, {m}, 3], reference {} rows, tangents {:?}",
                reference.rows(),
                tangents.shape()
            ),
        ));
    }
    let points = seq.points();
    let z: Vec<Tensor> = (0..f).map(|i| tangents.index_outer(i)).collect();
    let mut frames = Vec::with_capacity(f);
    for (i, p) in points.iter().enumerate() {
        let theta = geodesic_distance_exact(reference, p)?;
        let ratio = if theta < 1e-8 { 1.0 + theta * theta / 6.0 } else { theta / theta.sin() };
        frames.push(FrameDistortion {
            frame: i,
            theta,
            tangent_norm: z[i].norm(),
            ratio,
        });
    }
    let mut pairs = Vec::with_capacity(f * (f - 1) / 2);
    for a in 0..f {
        for b in a + 1..f {
            let tangent_distance = z[a]
                .data()
                .iter()
                .zip(z[b].data())
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            let geodesic = geodesic_distance_exact(&points[a], &points[b])?;
            pairs.push(PairDistortion {
                f: a,
                g: b,
                tangent_distance,
                geodesic,
                distortion: (tangent_distance - geodesic).abs(),
            });
        }
    }
    Ok(DistortionReport { frames, pairs })
}
