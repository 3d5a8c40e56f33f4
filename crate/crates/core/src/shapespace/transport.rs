use super::maps::{exp_raw, log_raw};
use super::{PreShapePoint, TangentVector};
use crate::error::{Error, Result};

/// Rung count used when callers do not choose one.
pub const DEFAULT_RUNGS: usize = 20;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_pair(op: &'static str, z: &TangentVector, pb: &PreShapePoint) -> Result<()> {
    if z.base().config().shape() != pb.config().shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", z.base().config().shape(), pb.config().shape()),
        ));
    }
    Ok(())
}

/// Exact parallel transport along the minimizing geodesic from the tangent's
/// base to `pb`. The component along the geodesic direction turns with the
/// geodesic, everything orthogonal to it is carried over unchanged.
pub fn transport_closed_form(z: &TangentVector, pb: &PreShapePoint) -> Result<TangentVector> {
    check_pair("transport_closed_form", z, pb)?;
    let pa = z.base().config().data();
    let u = log_raw(pa, pb.config().data())?;
    let theta = norm(&u);
    if theta == 0.0 {
        return Err(Error::invalid("transport_closed_form", "base and target coincide"));
    }
    let back = log_raw(pb.config().data(), pa)?;
    let zv = z.vec().data();
    let c: f64 = zv.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() / theta;
    let out = zv
        .iter()
        .zip(&u)
        .zip(&back)
        .map(|((zi, ui), bi)| zi - c * ui / theta - c * bi / theta)
        .collect();
    Ok(TangentVector::from_parts_unchecked(pb.clone(), out))
}

/// Pole-ladder transport from the tangent's base to `pb`.
///
/// The geodesic is cut into `rungs` segments and the tangent is scaled down
/// by `rungs` before shooting. Each rung reflects the current shoot point
/// through the midpoint of its segment; the reflection flips the sign of the
/// transported vector, so an odd rung count is corrected at the end.
pub fn pole_ladder_transport(z: &TangentVector, pb: &PreShapePoint, rungs: usize) -> Result<TangentVector> {
    check_pair("pole_ladder_transport", z, pb)?;
    if rungs == 0 {
        return Err(Error::invalid("pole_ladder_transport", "need at least one rung"));
    }
    let pa = z.base().config().data();
    let direction = log_raw(pa, pb.config().data())?;
    let theta = norm(&direction);
    if theta == 0.0 {
        return Ok(TangentVector::from_parts_unchecked(pb.clone(), z.vec().data().to_vec()));
    }
    if theta / rungs as f64 >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::invalid(
            "pole_ladder_transport",
            format!("segment length {} must stay below pi/2", theta / rungs as f64),
        ));
    }
    let n = rungs as f64;
    let scaled: Vec<f64> = z.vec().data().iter().map(|v| v / n).collect();
    let mut shoot = exp_raw(pa, &scaled);
    let mut current = pa.to_vec();
    for i in 1..=rungs {
        let frac: Vec<f64> = direction.iter().map(|d| d * i as f64 / n).collect();
        let next = exp_raw(pa, &frac);
        let half: Vec<f64> = log_raw(&current, &next)?.into_iter().map(|v| 0.5 * v).collect();
        let mid = exp_raw(&current, &half);
        let to_shoot: Vec<f64> = log_raw(&mid, &shoot)?.into_iter().map(|v| -v).collect();
        shoot = exp_raw(&mid, &to_shoot);
        current = next;
    }
    let sign = if rungs % 2 == 1 { -1.0 } else { 1.0 };
    let out = log_raw(&current, &shoot)?
        .into_iter()
        .map(|v| sign * n * v)
        .collect();
    // the last rung ends at exp(direction) rather than pb itself; both agree
    // to rounding, and the result is reported at pb
    Ok(TangentVector::from_parts_unchecked(pb.clone(), out))
}
