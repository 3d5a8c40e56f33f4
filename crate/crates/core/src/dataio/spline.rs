use super::SkeletonSequence;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Second derivatives of the natural cubic spline through `y` at unit-spaced
/// knots (Thomas algorithm on the tridiagonal system).
fn second_derivatives(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let inner = n - 2;
    let mut c = vec![0.0; inner];
    let mut d = vec![0.0; inner];
    for i in 0..inner {
        let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]);
        if i == 0 {
            c[0] = 1.0 / 4.0;
            d[0] = rhs / 4.0;
        } else {
            let denom = 4.0 - c[i - 1];
            c[i] = 1.0 / denom;
            d[i] = (rhs - d[i - 1]) / denom;
        }
    }
    m[inner] = d[inner - 1];
    for i in (0..inner - 1).rev() {
        m[i + 1] = d[i] - c[i] * m[i + 2];
    }
    m
}

/// Natural cubic spline through `y` (knots equally spaced over `[0, 1]`),
/// evaluated at `target_len` equally spaced times. Both endpoints are
/// reproduced exactly.
pub fn natural_spline_resample(y: &[f64], target_len: usize) -> Vec<f64> {
    let n = y.len();
    let m = second_derivatives(y);
    (0..target_len)
        .map(|j| {
            if j + 1 == target_len {
                return y[n - 1];
            }
            // position in knot units; the spline in these units is the same
            // curve as in normalized time
            let s = j as f64 * (n - 1) as f64 / (target_len - 1) as f64;
            let i = (s.floor() as usize).min(n - 2);
            let u = s - i as f64;
            let v = 1.0 - u;
            v * y[i] + u * y[i + 1] + ((v * v * v - v) * m[i] + (u * u * u - u) * m[i + 1]) / 6.0
        })
        .collect()
}

/// Resample every coordinate channel of `seq` to `target_len` frames.
pub fn spline_resample(seq: &SkeletonSequence, target_len: usize) -> Result<SkeletonSequence> {
    let (f, n) = (seq.frames(), seq.joints());
    if f < 4 {
        return Err(Error::invalid(
            "spline_resample",
            format!("cubic spline needs at least 4 frames, got {f}"),
        ));
    }
    if target_len < 2 {
        return Err(Error::invalid("spline_resample", format!("target length {target_len} < 2")));
    }
    let src = seq.coords().data();
    let mut out = vec![0.0; target_len * n * 3];
    let mut channel = vec![0.0; f];
    for c in 0..n * 3 {
        for (t, v) in channel.iter_mut().enumerate() {
            *v = src[t * n * 3 + c];
        }
        for (t, v) in natural_spline_resample(&channel, target_len).into_iter().enumerate() {
            out[t * n * 3 + c] = v;
        }
    }
    let coords = Tensor::new(&[target_len, n, 3], out)?;
    Ok(SkeletonSequence::new(coords, seq.subject_id.clone(), seq.label)?.with_exercise(seq.exercise_id.clone()))
}
