use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
    step_count: u64,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new(params: &[Tensor], lr: f64) -> Result<Self> {
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::invalid("adam", format!("learning rate {lr}")));
        }
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Ok(AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first_moment: zeros.clone(),
            second_moment: zeros,
            step_count: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update in place. `names` is only used in error messages.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], names: &[&str]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam",
                format!(
                    "{} params, {} grads, {} moment slots",
                    params.len(),
                    grads.len(),
                    self.first_moment.len()
                ),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            let name = names.get(i).copied().unwrap_or("?");
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(Error::shape(
                    "adam",
                    format!("parameter {name}: {:?} vs grad {:?}", p.shape(), g.shape()),
                ));
            }
            if g.data().iter().any(|x| x.is_nan()) {
                return Err(Error::NonFinite(format!("adam: NaN gradient for parameter {name}")));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for k in 0..p.numel() {
                let gk = g.data()[k];
                let mk = self.beta1 * m.data()[k] + (1.0 - self.beta1) * gk;
                let vk = self.beta2 * v.data()[k] + (1.0 - self.beta2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let update = self.lr * (mk / bc1) / ((vk / bc2).sqrt() + self.eps);
                p.data_mut()[k] -= update;
            }
        }
        Ok(())
    }
}
