use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TangentSequence;
use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DmlVariant {
    /// One `alpha` for everything.
    Gh,
    /// One `alpha` per joint row, shared over frames.
    Gin,
    /// One `alpha` per frame.
    Lh,
    /// One `alpha` per frame and joint row.
    Lin,
}

impl DmlVariant {
    pub const ALL: [DmlVariant; 4] = [DmlVariant::Gh, DmlVariant::Gin, DmlVariant::Lh, DmlVariant::Lin];

    pub fn name(self) -> &'static str {
        match self {
            DmlVariant::Gh => "gh",
            DmlVariant::Gin => "gin",
            DmlVariant::Lh => "lh",
            DmlVariant::Lin => "lin",
        }
    }

    pub fn param_shape(self, frames: usize, rows: usize) -> Vec<usize> {
        match self {
            DmlVariant::Gh => vec![],
            DmlVariant::Gin => vec![rows],
            DmlVariant::Lh => vec![frames],
            DmlVariant::Lin => vec![frames, rows],
        }
    }

    /// Shape the `alpha` tensor takes to broadcast against `[F, m, 3]`.
    fn broadcast_shape(self, frames: usize, rows: usize) -> Vec<usize> {
        match self {
            DmlVariant::Gh => vec![],
            DmlVariant::Gin => vec![rows, 1],
            DmlVariant::Lh => vec![frames, 1, 1],
            DmlVariant::Lin => vec![frames, rows, 1],
        }
    }
}

impl fmt::Display for DmlVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DmlVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DmlVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid("dml variant", format!("unknown variant {s:?}")))
    }
}

/// Raw (pre-exponentiation) scaling parameters; the effective scale is
/// `exp(raw)`, positive for every finite raw value.
#[derive(Clone, Debug, PartialEq)]
pub struct DmlParams {
    pub variant: DmlVariant,
    pub raw: Tensor,
}

impl DmlParams {
    /// `raw = 0`, i.e. `alpha = 1`.
    pub fn identity(variant: DmlVariant, frames: usize, rows: usize) -> Self {
        DmlParams {
            variant,
            raw: Tensor::zeros(&variant.param_shape(frames, rows)),
        }
    }

    /// Raw values drawn uniformly from `(-1, 1)`.
    pub fn init(variant: DmlVariant, frames: usize, rows: usize, rng: &mut impl Rng) -> Self {
        DmlParams {
            variant,
            raw: Tensor::from_fn(&variant.param_shape(frames, rows), |_| rng.random_range(-1.0..1.0)),
        }
    }

    pub fn from_tensor(variant: DmlVariant, frames: usize, rows: usize, raw: Tensor) -> Result<Self> {
        let shape = variant.param_shape(frames, rows);
        if raw.shape() != shape.as_slice() {
            return Err(Error::shape(
                "dml params",
                format!("{variant} expects {shape:?}, got {:?}", raw.shape()),
            ));
        }
        Ok(DmlParams { variant, raw })
    }

    pub fn alpha(&self) -> Tensor {
        self.raw.map(f64::exp)
    }
}

/// Scale the tangents by `exp(raw)`, broadcast per the variant.
pub fn dml_forward(tape: &mut Tape, tseq: &TangentSequence, variant: DmlVariant, raw: Var) -> Result<TangentSequence> {
    let shape = tape.shape(tseq.tangents).to_vec();
    let (f, m) = (shape[0], shape[1]);
    let expected = variant.param_shape(f, m);
    if tape.shape(raw) != expected.as_slice() {
        return Err(Error::shape(
            "dml_forward",
            format!("{variant} on {f} frames x {m} rows expects {expected:?}, got {:?}", tape.shape(raw)),
        ));
    }
    let alpha = tape.exp(raw);
    let alpha = tape.reshape(alpha, &variant.broadcast_shape(f, m))?;
    let tangents = tape.mul(tseq.tangents, alpha)?;
    Ok(TangentSequence {
        tangents,
        ..tseq.clone()
    })
}
