use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomlayers::{DmlVariant, GtlVariant};

/// Domain presets for the network shape and optimizer schedule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Action,
    Disease,
    Rehab,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "action" => Ok(Preset::Action),
            "disease" => Ok(Preset::Disease),
            "rehab" => Ok(Preset::Rehab),
            other => Err(Error::invalid("preset", format!("unknown preset {other:?}"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Action => "action",
            Preset::Disease => "disease",
            Preset::Rehab => "rehab",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `None` skips the transformation layer.
    pub gtl: Option<GtlVariant>,
    /// `None` skips the distortion layer.
    pub dml: Option<DmlVariant>,
    pub ref_index: usize,
    pub conv_layers: usize,
    pub conv_kernel: usize,
    pub conv_channels: usize,
    pub lstm_units: usize,
    pub fc_hidden: usize,
    pub n_classes: usize,
    pub seq_len: usize,
    pub n_joints: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Rescale the batch gradient to at most this global L2 norm; 0 disables.
    #[serde(default = "default_grad_clip")]
    pub grad_clip: f64,
    pub seed: u64,
}

fn default_grad_clip() -> f64 {
    1.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::preset(Preset::Rehab, 2, 12)
    }
}

impl ModelConfig {
    pub fn preset(preset: Preset, n_classes: usize, n_joints: usize) -> Self {
        let base = ModelConfig {
            gtl: Some(GtlVariant::RigidConstrained),
            dml: Some(DmlVariant::Gh),
            ref_index: 0,
            conv_layers: 1,
            conv_kernel: 3,
            conv_channels: 32,
            lstm_units: 12,
            fc_hidden: 32,
            n_classes,
            seq_len: 150,
            n_joints,
            batch_size: 16,
            epochs: 40,
            lr: 1e-3,
            grad_clip: default_grad_clip(),
            seed: 0,
        };
        match preset {
            Preset::Rehab => base,
            Preset::Disease => ModelConfig {
                batch_size: 12,
                epochs: 35,
                seq_len: 221,
                ..base
            },
            Preset::Action => ModelConfig {
                gtl: Some(GtlVariant::NonrigidUnconstrained),
                dml: Some(DmlVariant::Gin),
                conv_layers: 2,
                fc_hidden: 512,
                seq_len: 100,
                batch_size: 64,
                epochs: 50,
                lr: 1e-4,
                ..base
            },
        }
    }

    /// Pre-shape rows per frame.
    pub fn rows(&self) -> usize {
        self.n_joints.saturating_sub(1)
    }

    /// Per-frame feature width fed to the first convolution.
    pub fn feature_width(&self) -> usize {
        3 * self.rows()
    }

    /// Time steps seen by the LSTM.
    pub fn pooled_len(&self) -> usize {
        self.seq_len
            .saturating_sub(self.conv_layers * (self.conv_kernel.saturating_sub(1)))
            / 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid("model config", msg));
        if self.n_joints < 2 {
            return bad(format!("n_joints = {} (need >= 2)", self.n_joints));
        }
        if self.n_classes < 2 {
            return bad(format!("n_classes = {} (need >= 2)", self.n_classes));
        }
        if !(1..=2).contains(&self.conv_layers) {
            return bad(format!("conv_layers = {} (must be 1 or 2)", self.conv_layers));
        }
        for (name, v) in [
            ("conv_kernel", self.conv_kernel),
            ("conv_channels", self.conv_channels),
            ("lstm_units", self.lstm_units),
            ("fc_hidden", self.fc_hidden),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.seq_len < 2 {
            return bad(format!("seq_len = {} (need >= 2)", self.seq_len));
        }
        if self.pooled_len() == 0 {
            return bad(format!(
                "seq_len {} is too short for {} convolution(s) of kernel {} and pooling",
                self.seq_len, self.conv_layers, self.conv_kernel
            ));
        }
        if self.ref_index >= self.seq_len {
            return bad(format!("ref_index {} >= seq_len {}", self.ref_index, self.seq_len));
        }
        if !(self.grad_clip >= 0.0) || !self.grad_clip.is_finite() {
            return bad(format!("grad_clip = {}", self.grad_clip));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad(format!("lr = {}", self.lr));
        }
        Ok(())
    }
}
