use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::Result;
use crate::geomlayers::{dml_forward, gtl_forward, log_map_sequence, DmlParams, GtlParams};
use crate::shapespace::PreShapeSequence;

/// One training or evaluation example: a `F x (n-1) x 3` input (pre-shapes,
/// or precomputed tangents when the geometric layers are off) and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub label: usize,
}

/// Parameter names and shapes in declaration order, derived from the config.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (f, m) = (cfg.seq_len, cfg.rows());
    let (c, k, h) = (cfg.conv_channels, cfg.conv_kernel, cfg.lstm_units);
    let mut out = Vec::new();
    if let Some(g) = cfg.gtl {
        out.push(("gtl".to_string(), g.param_shape(f, m)));
    }
    if let Some(d) = cfg.dml {
        out.push(("dml.raw".to_string(), d.param_shape(f, m)));
    }
    let mut cin = cfg.feature_width();
    for l in 1..=cfg.conv_layers {
        out.push((format!("conv{l}.w"), vec![c, cin, k]));
        out.push((format!("conv{l}.b"), vec![c]));
        cin = c;
    }
    out.push(("lstm.w_ih".into(), vec![4 * h, c]));
    out.push(("lstm.w_hh".into(), vec![4 * h, h]));
    out.push(("lstm.b".into(), vec![4 * h]));
    out.push(("fc1.w".into(), vec![cfg.fc_hidden, h]));
    out.push(("fc1.b".into(), vec![cfg.fc_hidden]));
    out.push(("fc2.w".into(), vec![cfg.n_classes, cfg.fc_hidden]));
    out.push(("fc2.b".into(), vec![cfg.n_classes]));
    out
}

fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-bound..bound))
}

/// Fresh parameters: geometric layers at (near) identity, network weights
/// uniform in `+-1/sqrt(fan_in)`, LSTM forget-gate bias 1.
pub fn init_params(cfg: &ModelConfig) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (f, m, h) = (cfg.seq_len, cfg.rows(), cfg.lstm_units);
    param_shapes(cfg)
        .into_iter()
        .map(|(name, shape)| match name.as_str() {
            "gtl" => GtlParams::init(cfg.gtl.expect("gtl present"), f, m, &mut rng).value,
            "dml.raw" => DmlParams::init(cfg.dml.expect("dml present"), f, m, &mut rng).raw,
            "lstm.w_ih" => uniform(&shape, 1.0 / (shape[1] as f64).sqrt(), &mut rng),
            "lstm.w_hh" => uniform(&shape, 1.0 / (h as f64).sqrt(), &mut rng),
            "lstm.b" => {
                let mut b = uniform(&shape, 1.0 / (h as f64).sqrt(), &mut rng);
                b.data_mut()[h..2 * h].fill(1.0);
                b
            }
            n if n.ends_with(".w") => {
                let fan_in: usize = shape[1..].iter().product();
                uniform(&shape, 1.0 / (fan_in as f64).sqrt(), &mut rng)
            }
            _ => {
                // biases share the bound of their weight matrix
                let fan_in = bias_fan_in(cfg, &name);
                uniform(&shape, 1.0 / (fan_in as f64).sqrt(), &mut rng)
            }
        })
        .collect()
}

fn bias_fan_in(cfg: &ModelConfig, name: &str) -> usize {
    match name {
        "conv1.b" => cfg.feature_width() * cfg.conv_kernel,
        "conv2.b" => cfg.conv_channels * cfg.conv_kernel,
        "fc1.b" => cfg.lstm_units,
        _ => cfg.fc_hidden,
    }
}

/// Record the full forward pass of one sample on `tape`; `vars` are the
/// parameters in declaration order. Returns the class logits.
pub fn forward(tape: &mut Tape, cfg: &ModelConfig, vars: &[Var], input: &Tensor) -> Result<Var> {
    let mut it = vars.iter().copied();
    let gtl = cfg.gtl.map(|_| it.next().expect("gtl parameter"));
    let dml = cfg.dml.map(|_| it.next().expect("dml parameter"));
    let features = if cfg.gtl.is_none() && cfg.dml.is_none() {
        tape.constant(input.clone())
    } else {
        let seq = PreShapeSequence::from_tensor(input.clone())?;
        let t = match (cfg.gtl, gtl) {
            (Some(v), Some(p)) => gtl_forward(tape, &seq, v, p, cfg.ref_index)?,
            _ => log_map_sequence(tape, &seq, cfg.ref_index)?,
        };
        match (cfg.dml, dml) {
            (Some(v), Some(p)) => dml_forward(tape, &t, v, p)?.tangents,
            _ => t.tangents,
        }
    };
    let f = tape.shape(features)[0];
    let mut x = tape.reshape(features, &[f, cfg.feature_width()])?;
    for _ in 0..cfg.conv_layers {
        let (w, b) = (it.next().expect("conv w"), it.next().expect("conv b"));
        let y = tape.conv1d(x, w, b)?;
        x = tape.relu(y);
    }
    let pooled = tape.maxpool1d(x, 2)?;
    let (w_ih, w_hh, b) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    let h = cfg.lstm_units;
    let mut state = tape.constant(Tensor::zeros(&[2 * h]));
    for t in 0..tape.shape(pooled)[0] {
        let xt = tape.slice(pooled, 0, t, t + 1)?;
        state = tape.lstm_step(xt, state, w_ih, w_hh, b)?;
    }
    let hidden = tape.slice(state, 0, 0, h)?;
    let (w1, b1, w2, b2) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    let z = tape.linear(hidden, w1, b1)?;
    let z = tape.relu(z);
    tape.linear(z, w2, b2)
}
