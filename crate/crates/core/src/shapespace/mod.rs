//! Kendall pre-shape geometry.
//!
//! Configurations of `n` joints in 3-D are centered with the Helmert
//! sub-matrix and scaled to unit Frobenius norm, which puts them on the unit
//! sphere of dimension `3(n-1) - 1`. Everything here is a pure function of
//! its inputs and never touches an autodiff tape.

mod maps;
mod rotation;
mod sequence;
mod transport;

pub use maps::{exp_map, geodesic_distance, geodesic_distance_exact, log_map, CUT_LOCUS_MARGIN};
pub use rotation::{rotation_angle, RotationMatrix3};
pub use sequence::PreShapeSequence;
pub use transport::{pole_ladder_transport, transport_closed_form, DEFAULT_RUNGS};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Below this centered norm a configuration is treated as collapsed.
pub const DEGENERATE_EPS: f64 = 1e-9;

/// The `(n-1) x n` Helmert sub-matrix (first row of the full Helmert matrix
/// removed). Row `j` (1-based) holds `-1/sqrt(j(j+1))` in its first `j`
/// entries and `j/sqrt(j(j+1))` in entry `j+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct HelmertSub {
    n_joints: usize,
    matrix: Vec<f64>,
}

pub fn helmert_submatrix(n: usize) -> Result<HelmertSub> {
    if n < 2 {
        return Err(Error::invalid("helmert_submatrix", format!("need n >= 2 joints, got {n}")));
    }
    let mut matrix = vec![0.0; (n - 1) * n];
    for j in 1..n {
        let d = ((j * (j + 1)) as f64).sqrt();
        let row = &mut matrix[(j - 1) * n..j * n];
        for v in row.iter_mut().take(j) {
            *v = -1.0 / d;
        }
        row[j] = j as f64 / d;
    }
    Ok(HelmertSub { n_joints: n, matrix })
}

impl HelmertSub {
    pub fn n_joints(&self) -> usize {
        self.n_joints
    }

    pub fn rows(&self) -> usize {
        self.n_joints - 1
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[row * self.n_joints + col]
    }

    /// `H X` for a raw `n x 3` configuration.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != [self.n_joints, 3] {
            return Err(Error::shape(
                "helmert",
                format!("expected [{}, 3], got {:?}", self.n_joints, x.shape()),
            ));
        }
        let n = self.n_joints;
        let mut out = vec![0.0; (n - 1) * 3];
        for r in 0..n - 1 {
            for c in 0..n {
                let h = self.matrix[r * n + c];
                if h != 0.0 {
                    for d in 0..3 {
                        out[r * 3 + d] += h * x.data()[c * 3 + d];
                    }
                }
            }
        }
        Tensor::new(&[n - 1, 3], out)
    }

    /// Center with `H`, then scale to unit Frobenius norm.
    pub fn project(&self, x: &Tensor) -> Result<PreShapePoint> {
        let hx = self.apply(x)?;
        let norm = hx.norm();
        if !(norm > DEGENERATE_EPS) {
            return Err(Error::Degenerate(format!(
                "centered norm {norm:e} (all joints coincide)"
            )));
        }
        Ok(PreShapePoint {
            config: hx.map(|v| v / norm),
        })
    }
}

/// Centered, unit-norm `(n-1) x 3` configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct PreShapePoint {
    config: Tensor,
}

impl PreShapePoint {
    /// Wrap an `(n-1) x 3` matrix that already has unit Frobenius norm.
    pub fn new(config: Tensor) -> Result<Self> {
        if config.ndim() != 2 || config.shape()[1] != 3 {
            return Err(Error::shape("preshape", format!("expected [m, 3], got {:?}", config.shape())));
        }
        let norm = config.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::invalid("preshape", format!("Frobenius norm {norm} is not 1")));
        }
        Ok(PreShapePoint { config })
    }

    /// Normalize an arbitrary nonzero `(n-1) x 3` matrix onto the sphere.
    pub fn normalized(config: Tensor) -> Result<Self> {
        let norm = config.norm();
        if !(norm > DEGENERATE_EPS) {
            return Err(Error::Degenerate(format!("norm {norm:e}")));
        }
        Self::new(config.map(|v| v / norm))
    }

    pub(crate) fn from_raw_unchecked(rows: usize, data: Vec<f64>) -> Self {
        PreShapePoint {
            config: Tensor::new(&[rows, 3], data).expect("rows x 3"),
        }
    }

    pub fn config(&self) -> &Tensor {
        &self.config
    }

    pub fn rows(&self) -> usize {
        self.config.shape()[0]
    }

    pub fn n_joints(&self) -> usize {
        self.rows() + 1
    }

    /// Right-multiply every row by `r`.
    pub fn rotate(&self, r: &RotationMatrix3) -> PreShapePoint {
        let e = r.entries();
        let mut out = vec![0.0; self.config.numel()];
        for (row, o) in self.config.data().chunks(3).zip(out.chunks_mut(3)) {
            for j in 0..3 {
                o[j] = (0..3).map(|k| row[k] * e[k][j]).sum();
            }
        }
        PreShapePoint::from_raw_unchecked(self.rows(), out)
    }
}

/// Pre-shape of a raw `n x 3` skeleton.
pub fn to_preshape(x: &Tensor) -> Result<PreShapePoint> {
    if x.ndim() != 2 || x.shape()[1] != 3 {
        return Err(Error::shape("to_preshape", format!("expected [n, 3], got {:?}", x.shape())));
    }
    helmert_submatrix(x.shape()[0])?.project(x)
}

/// Ambient tangent vector at a pre-shape point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    base: PreShapePoint,
    vec: Tensor,
}

impl TangentVector {
    /// Pair a base point with a vector; fails when `|<base, vec>| > tol`.
    pub fn new(base: PreShapePoint, vec: Tensor, tol: f64) -> Result<Self> {
        if vec.shape() != base.config.shape() {
            return Err(Error::shape(
                "tangent",
                format!("base {:?} vs vector {:?}", base.config.shape(), vec.shape()),
            ));
        }
        let inner = base.config.dot(&vec);
        if inner.abs() > tol {
            return Err(Error::invalid(
                "tangent",
                format!("vector is not tangent: <base, v> = {inner:e}"),
            ));
        }
        Ok(TangentVector { base, vec })
    }

    pub(crate) fn from_parts_unchecked(base: PreShapePoint, vec: Vec<f64>) -> Self {
        let rows = base.rows();
        TangentVector {
            base,
            vec: Tensor::new(&[rows, 3], vec).expect("rows x 3"),
        }
    }

    pub fn base(&self) -> &PreShapePoint {
        &self.base
    }

    pub fn vec(&self) -> &Tensor {
        &self.vec
    }

    pub fn norm(&self) -> f64 {
        self.vec.norm()
    }

    /// `<base, vec>`; zero for an exact tangent.
    pub fn tangency_defect(&self) -> f64 {
        self.base.config.dot(&self.vec)
    }

    pub fn scaled(&self, s: f64) -> TangentVector {
        TangentVector {
            base: self.base.clone(),
            vec: self.vec.map(|v| v * s),
        }
    }
}
