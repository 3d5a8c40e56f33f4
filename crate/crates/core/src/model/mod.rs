//! The end-to-end classifier: optional geometric layers in front of a
//! Conv1D / LSTM / fully connected head, trained with Adam.

mod config;
mod experiments;
mod gradsuite;
mod network;
mod serialize;
mod train;

pub use config::{ModelConfig, Preset};
pub use experiments::{
    ablation_grid, prepare_samples, rotation_coherence_report, run_ablation, run_pt_comparison,
    transported_tangents, AblationCell, PtRow, PT_RUNGS,
};
pub use gradsuite::{gradient_suite, GradCheckRow, FD_STEP, GEOMETRY_TOLERANCE, NETWORK_TOLERANCE};
pub use network::{forward, init_params, param_shapes, Sample};
pub use serialize::{load_model, save_model, FORMAT_TAG};
pub use train::{evaluate, train, EpochRecord, Evaluation};

use crate::diffcore::Tensor;
use crate::error::Result;

/// Configuration, parameters in declaration order, and training history.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub params: Vec<Tensor>,
    pub history: Vec<EpochRecord>,
}

impl Model {
    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Parameters outside the geometric layers.
    pub fn head_param_count(&self) -> usize {
        self.names
            .iter()
            .zip(&self.params)
            .filter(|(n, _)| n.as_str() != "gtl" && n.as_str() != "dml.raw")
            .map(|(_, p)| p.numel())
            .sum()
    }
}

/// Validate `config` and draw fresh parameters from its seed.
pub fn build_model(config: &ModelConfig) -> Result<Model> {
    config.validate()?;
    let names = param_shapes(config).into_iter().map(|(n, _)| n).collect();
    Ok(Model {
        config: config.clone(),
        names,
        params: init_params(config),
        history: Vec::new(),
    })
}
