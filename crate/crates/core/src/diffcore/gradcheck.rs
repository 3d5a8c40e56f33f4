use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Compare reverse-mode gradients of a scalar function against central
/// finite differences.
///
/// `f` builds the computation on a fresh tape from one leaf per parameter
/// tensor and returns the scalar output. The result is the maximum over all
/// parameter entries of `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::invalid("grad_check", format!("step must be positive, got {h}")));
    }
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.numel() != 1 {
            return Err(Error::shape("grad_check", format!("output {:?} is not scalar", v.shape())));
        }
        Ok(v.item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| tape.grad(v)).collect();

    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, param) in params.iter().enumerate() {
        for k in 0..param.numel() {
            let orig = param.data()[k];
            probe[pi].data_mut()[k] = orig + h;
            let plus = eval(&probe)?;
            probe[pi].data_mut()[k] = orig - h;
            let minus = eval(&probe)?;
            probe[pi].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "grad_check: f is not finite when probing parameter {pi}, entry {k}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi].data()[k];
            worst = worst.max((a - numeric).abs() / numeric.abs().max(1.0));
        }
    }
    Ok(worst)
}
