use super::{PreShapePoint, TangentVector};
use crate::diffcore::ARCCOS_EPS;
use crate::error::{Error, Result};

/// Points closer than this to the antipode are rejected by the log map.
pub const CUT_LOCUS_MARGIN: f64 = 1e-6;

/// Residual norms below this are rounding noise from comparing a point with
/// itself.
const SAME_POINT_EPS: f64 = 1e-13;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn same_shape(op: &'static str, a: &PreShapePoint, b: &PreShapePoint) -> Result<()> {
    if a.config.shape() != b.config.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.config.shape(), b.config.shape()),
        ));
    }
    Ok(())
}

/// `arccos` of the Frobenius inner product, with the same argument clamp the
/// differentiable layers use.
pub fn geodesic_distance(p1: &PreShapePoint, p2: &PreShapePoint) -> Result<f64> {
    same_shape("geodesic_distance", p1, p2)?;
    let c = p1.config.dot(&p2.config);
    Ok(c.clamp(-1.0 + ARCCOS_EPS, 1.0 - ARCCOS_EPS).acos())
}

/// Unclamped arc length, accurate near 0 and pi; used on analysis paths.
pub fn geodesic_distance_exact(p1: &PreShapePoint, p2: &PreShapePoint) -> Result<f64> {
    same_shape("geodesic_distance", p1, p2)?;
    let (a, b) = (p1.config.data(), p2.config.data());
    let c = dot(a, b);
    let s = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let w = y - c * x;
            w * w
        })
        .sum::<f64>()
        .sqrt();
    if s < SAME_POINT_EPS && c > 0.0 {
        return Ok(0.0);
    }
    Ok(s.atan2(c))
}

/// Log map on slices. Returns the tangent at `p1` pointing to `pf` whose
/// norm equals the arc length.
pub(crate) fn log_raw(p1: &[f64], pf: &[f64]) -> Result<Vec<f64>> {
    let c = dot(p1, pf);
    let w: Vec<f64> = pf.iter().zip(p1).map(|(y, x)| y - c * x).collect();
    let s = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    // sin = s, cos = c on the unit sphere; atan2 stays accurate at both ends
    let theta = s.atan2(c);
    if theta > std::f64::consts::PI - CUT_LOCUS_MARGIN {
        return Err(Error::CutLocus(format!(
            "geodesic distance {theta} is within {CUT_LOCUS_MARGIN:e} of pi"
        )));
    }
    if s < SAME_POINT_EPS {
        return Ok(vec![0.0; p1.len()]);
    }
    let k = theta / s;
    Ok(w.into_iter().map(|v| k * v).collect())
}

/// `cos(|z|) base + sin(|z|)/|z| z`.
pub(crate) fn exp_raw(base: &[f64], z: &[f64]) -> Vec<f64> {
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    // sin(x)/x to full precision for tiny x
    let sinc = if norm < 1e-8 { 1.0 - norm * norm / 6.0 } else { norm.sin() / norm };
    let c = norm.cos();
    base.iter().zip(z).map(|(b, v)| c * b + sinc * v).collect()
}

/// Riemannian logarithm at `p1`: `theta/sin(theta) (pf - cos(theta) p1)`,
/// with the zero vector as the `theta -> 0` limit.
pub fn log_map(p1: &PreShapePoint, pf: &PreShapePoint) -> Result<TangentVector> {
    same_shape("log_map", p1, pf)?;
    let z = log_raw(p1.config.data(), pf.config.data())?;
    Ok(TangentVector::from_parts_unchecked(p1.clone(), z))
}

/// Riemannian exponential at the tangent's base point.
pub fn exp_map(z: &TangentVector) -> Result<PreShapePoint> {
    let defect = z.tangency_defect();
    if defect.abs() > 1e-6 {
        return Err(Error::invalid(
            "exp_map",
            format!("vector is not tangent at its base: <base, z> = {defect:e}"),
        ));
    }
    let out = exp_raw(z.base.config.data(), z.vec.data());
    Ok(PreShapePoint::from_raw_unchecked(z.base.rows(), out))
}
