use rayon::prelude::*;
use serde::Serialize;

use super::network::Sample;
use super::train::{evaluate, train};
use super::{build_model, Model, ModelConfig};
use crate::dataio::{spline_resample, Dataset};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::evalmetrics::AccuracyReport;
use crate::geomlayers::{DmlVariant, GtlVariant};
use crate::shapespace::{
    log_map, pole_ladder_transport, rotation_angle, PreShapeSequence, RotationMatrix3,
};

/// Pole-ladder rungs used by the transport baseline.
pub const PT_RUNGS: usize = 20;

/// Resample every sequence to `cfg.seq_len` (natural cubic spline, only when
/// the length differs) and project it to pre-shapes.
pub fn prepare_samples(dataset: &Dataset, cfg: &ModelConfig) -> Result<Vec<Sample>> {
    if dataset.n_joints != cfg.n_joints {
        return Err(Error::invalid(
            "prepare_samples",
            format!("dataset has {} joints, model expects {}", dataset.n_joints, cfg.n_joints),
        ));
    }
    dataset
        .sequences
        .par_iter()
        .map(|seq| {
            let pre = if seq.frames() == cfg.seq_len {
                seq.to_preshape()?
            } else {
                spline_resample(seq, cfg.seq_len)?.to_preshape()?
            };
            Ok(Sample {
                input: pre.tensor().clone(),
                label: seq.label,
            })
        })
        .collect()
}

/// Tangent features of the transport baseline: each consecutive
/// displacement `log(P_{f-1}, P_f)` carried to the tangent space at the
/// reference frame by pole ladder. Frame 0 gets a zero tangent.
pub fn transported_tangents(seq: &PreShapeSequence, ref_index: usize, rungs: usize) -> Result<Tensor> {
    if ref_index >= seq.len() {
        return Err(Error::invalid(
            "transported_tangents",
            format!("ref_index {ref_index} >= {} frames", seq.len()),
        ));
    }
    let points = seq.points();
    let reference = &points[ref_index];
    let width = seq.rows() * 3;
    let mut data = vec![0.0; seq.len() * width];
    for f in 1..points.len() {
        let z = log_map(&points[f - 1], &points[f])?;
        let moved = if f - 1 == ref_index {
            z
        } else {
            pole_ladder_transport(&z, reference, rungs)?
        };
        data[f * width..(f + 1) * width].copy_from_slice(moved.vec().data());
    }
    Tensor::new(&[seq.len(), seq.rows(), 3], data)
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationCell {
    pub gtl: Option<GtlVariant>,
    pub dml: Option<DmlVariant>,
    pub label: String,
    pub accuracy: f64,
    pub report: AccuracyReport,
}

/// Baseline, baseline + transformation layer (`base_gtl`), then every
/// transformation x distortion combination.
pub fn ablation_grid(base_gtl: GtlVariant) -> Vec<(Option<GtlVariant>, Option<DmlVariant>)> {
    let mut grid = vec![(None, None), (Some(base_gtl), None)];
    for g in GtlVariant::ALL {
        for d in DmlVariant::ALL {
            grid.push((Some(g), Some(d)));
        }
    }
    grid
}

fn cell_label(gtl: Option<GtlVariant>, dml: Option<DmlVariant>) -> String {
    match (gtl, dml) {
        (None, None) => "BL".into(),
        (Some(g), None) => format!("BL+{g}"),
        (None, Some(d)) => format!("BL+{d}"),
        (Some(g), Some(d)) => format!("{g}+{d}"),
    }
}

fn fit_and_score(cfg: &ModelConfig, train_set: &[Sample], test_set: &[Sample]) -> Result<(Model, AccuracyReport)> {
    let model = train(build_model(cfg)?, train_set, None)?;
    let report = evaluate(&model, test_set)?.report;
    Ok((model, report))
}

/// Train and test one model per grid cell, all from the same seed.
pub fn run_ablation(
    train_set: &[Sample],
    test_set: &[Sample],
    base: &ModelConfig,
    grid: &[(Option<GtlVariant>, Option<DmlVariant>)],
) -> Result<Vec<AblationCell>> {
    grid.par_iter()
        .map(|&(gtl, dml)| {
            let cfg = ModelConfig { gtl, dml, ..base.clone() };
            let (_, report) = fit_and_score(&cfg, train_set, test_set)?;
            Ok(AblationCell {
                gtl,
                dml,
                label: cell_label(gtl, dml),
                accuracy: report.overall,
                report,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PtRow {
    pub pipeline: String,
    pub accuracy: f64,
    pub report: AccuracyReport,
}

/// Compare the transformation layer alone ("FS"), pole-ladder transported
/// consecutive displacements ("PT"), and transformation + distortion ("DML").
/// Samples must hold pre-shapes.
pub fn run_pt_comparison(train_set: &[Sample], test_set: &[Sample], base: &ModelConfig) -> Result<Vec<PtRow>> {
    let gtl = base.gtl.unwrap_or(GtlVariant::RigidConstrained);
    let dml = base.dml.unwrap_or(DmlVariant::Gh);
    let to_pt = |set: &[Sample]| -> Result<Vec<Sample>> {
        set.par_iter()
            .map(|s| {
                let seq = PreShapeSequence::from_tensor(s.input.clone())?;
                Ok(Sample {
                    input: transported_tangents(&seq, base.ref_index, PT_RUNGS)?,
                    label: s.label,
                })
            })
            .collect()
    };
    let pt_train = to_pt(train_set)?;
    let pt_test = to_pt(test_set)?;
    let runs: [(&str, ModelConfig, &[Sample], &[Sample]); 3] = [
        ("FS", ModelConfig { gtl: Some(gtl), dml: None, ..base.clone() }, train_set, test_set),
        ("PT", ModelConfig { gtl: None, dml: None, ..base.clone() }, &pt_train, &pt_test),
        ("DML", ModelConfig { gtl: Some(gtl), dml: Some(dml), ..base.clone() }, train_set, test_set),
    ];
    runs.into_par_iter()
        .map(|(name, cfg, tr, te)| {
            let (_, report) = fit_and_score(&cfg, tr, te)?;
            Ok(PtRow {
                pipeline: name.to_string(),
                accuracy: report.overall,
                report,
            })
        })
        .collect()
}

/// Angles (radians) between the learned rotations of consecutive frames.
/// Only defined for the rigid, constrained transformation layer.
pub fn rotation_coherence_report(model: &Model) -> Result<Vec<f64>> {
    if model.config.gtl != Some(GtlVariant::RigidConstrained) {
        return Err(Error::invalid(
            "rotation_coherence_report",
            format!(
                "needs the rigid-constrained transformation layer, model has {}",
                model.config.gtl.map_or("none".to_string(), |g| g.to_string())
            ),
        ));
    }
    let angles = model.param("gtl").expect("gtl parameter present");
    let rotations: Vec<RotationMatrix3> = angles
        .data()
        .chunks(3)
        .map(|a| RotationMatrix3::from_euler(a[0], a[1], a[2]))
        .collect();
    rotations
        .windows(2)
        .map(|w| rotation_angle(&w[0], &w[1]))
        .collect()
}
