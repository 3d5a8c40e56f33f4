use crate::diffcore::ARCCOS_EPS;
use crate::error::{Error, Result};

/// Element of SO(3), validated on construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix3 {
    entries: [[f64; 3]; 3],
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

impl RotationMatrix3 {
    /// Accepts `m` when `m^T m = I` and `det m = 1` within `1e-10`.
    pub fn new(entries: [[f64; 3]; 3]) -> Result<Self> {
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let g: f64 = (0..3).map(|k| entries[k][i] * entries[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        let det = det3(&entries);
        if worst > 1e-10 || (det - 1.0).abs() > 1e-10 {
            return Err(Error::invalid(
                "rotation",
                format!("not a rotation: |R^T R - I| = {worst:e}, det = {det}"),
            ));
        }
        Ok(RotationMatrix3 { entries })
    }

    pub fn identity() -> Self {
        RotationMatrix3 {
            entries: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn rx(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        RotationMatrix3 {
            entries: [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        }
    }

    pub fn ry(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        RotationMatrix3 {
            entries: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        }
    }

    pub fn rz(a: f64) -> Self {
        let (s, c) = a.sin_cos();
        RotationMatrix3 {
            entries: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// `Rz(z) Ry(y) Rx(x)`, the same convention the transform layer uses.
    pub fn from_euler(x: f64, y: f64, z: f64) -> Self {
        Self::rz(z).mul(&Self::ry(y)).mul(&Self::rx(x))
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.entries
    }

    pub fn mul(&self, other: &RotationMatrix3) -> RotationMatrix3 {
        let mut e = [[0.0; 3]; 3];
        for (i, row) in e.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.entries[i][k] * other.entries[k][j]).sum();
            }
        }
        RotationMatrix3 { entries: e }
    }

    pub fn transpose(&self) -> RotationMatrix3 {
        let mut e = [[0.0; 3]; 3];
        for (i, row) in e.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.entries[j][i];
            }
        }
        RotationMatrix3 { entries: e }
    }

    pub fn trace(&self) -> f64 {
        self.entries[0][0] + self.entries[1][1] + self.entries[2][2]
    }
}

/// Angle of the relative rotation `r2 r1^T`, in `[0, pi]`.
pub fn rotation_angle(r1: &RotationMatrix3, r2: &RotationMatrix3) -> Result<f64> {
    // re-validate: callers may have built these from unchecked parts
    RotationMatrix3::new(r1.entries)?;
    RotationMatrix3::new(r2.entries)?;
    let rel = r2.mul(&r1.transpose());
    let c = (rel.trace() - 1.0) / 2.0;
    Ok(c.clamp(-1.0 + ARCCOS_EPS, 1.0 - ARCCOS_EPS).acos())
}
