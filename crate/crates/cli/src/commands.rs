use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use kshape::dataio::{generate_synthetic, write_dataset, Dataset, SyntheticSpec};
use kshape::diffcore::Tape;
use kshape::evalmetrics::{cross_correlation, euclidean_distance, mean_distance_metric, separation_degree};
use kshape::geomlayers::{distortion_report, dml_forward, gtl_forward, log_map_sequence, DmlVariant, GtlVariant};
use kshape::model::{
    ablation_grid, build_model, evaluate, load_model, prepare_samples, rotation_coherence_report, run_ablation,
    run_pt_comparison, save_model, train as train_model, Model, ModelConfig, Sample,
};
use kshape::shapespace::PreShapeSequence;

use crate::config::RunConfig;
use crate::output::{ensure_dir, num, write_csv};

fn variant_name<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

pub fn synth(spec: &SyntheticSpec, out: &Path) -> Result<()> {
    let (manifest, dataset) = generate_synthetic(spec).context("dataio: generating synthetic data")?;
    write_dataset(out, &manifest, &dataset).context("dataio: writing dataset")?;
    println!("wrote {} sequences to {}", dataset.len(), out.display());
    Ok(())
}

fn load_data(rc: &RunConfig) -> Result<(Dataset, ModelConfig)> {
    let data = rc.data.as_deref().context("no dataset given (use --data or the `data` config key)")?;
    let path = crate::manifest_path(data);
    let dataset = Dataset::load(&path).with_context(|| format!("dataio: loading {}", path.display()))?;
    let cfg = ModelConfig {
        n_classes: dataset.n_classes(),
        n_joints: dataset.n_joints,
        ..rc.model.clone()
    };
    cfg.validate().context("model: configuration")?;
    Ok((dataset, cfg))
}

/// Cross-subject train/test samples for the configured fold.
fn split_samples(rc: &RunConfig, dataset: &Dataset, cfg: &ModelConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let (train_idx, test_idx) = dataset
        .cross_subject_split(rc.folds, rc.fold, cfg.seed)
        .context("dataio: cross-subject split")?;
    ensure!(!train_idx.is_empty() && !test_idx.is_empty(), "fold {} leaves an empty train or test part", rc.fold);
    let samples = prepare_samples(dataset, cfg).context("dataio: preparing samples")?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect();
    Ok((pick(&train_idx), pick(&test_idx)))
}

fn accuracy_rows(model: &Model, class_names: &[String], samples: &[Sample]) -> Result<(Vec<Vec<String>>, kshape::model::Evaluation)> {
    let eval = evaluate(model, samples).context("model: evaluation")?;
    let mut rows = vec![vec!["accuracy".into(), "-".into(), num(eval.report.overall)]];
    for &(c, correct, total) in &eval.report.per_class {
        let acc = if total > 0 { num(correct as f64 / total as f64) } else { "nan".into() };
        let name = class_names.get(c).cloned().unwrap_or_else(|| format!("class{c}"));
        rows.push(vec![format!("class_accuracy:{name}"), "-".into(), acc]);
    }
    Ok((rows, eval))
}

pub fn train(rc: &RunConfig) -> Result<()> {
    let (dataset, cfg) = load_data(rc)?;
    let (train_set, test_set) = split_samples(rc, &dataset, &cfg)?;
    let model = build_model(&cfg).context("model: building")?;
    let model = train_model(model, &train_set, None).context("model: training")?;
    ensure_dir(&rc.out)?;
    save_model(&model, &rc.out.join("model.txt")).context("model: saving")?;
    let history: Vec<Vec<String>> = model
        .history
        .iter()
        .map(|h| {
            vec![
                h.epoch.to_string(),
                format!("{:.8}", h.loss),
                num(h.train_acc),
                h.val_acc.map_or_else(String::new, num),
            ]
        })
        .collect();
    write_csv(&rc.out.join("history.csv"), &["epoch", "loss", "train_acc", "val_acc"], &history)?;
    let (rows, eval) = accuracy_rows(&model, &dataset.class_names, &test_set)?;
    write_csv(&rc.out.join("metrics.csv"), &["metric", "readout", "value"], &rows)?;
    fs::write(rc.out.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    println!(
        "gtl={} dml={}: held-out accuracy {:.4} on {} sequences ({} training)",
        variant_name(cfg.gtl),
        variant_name(cfg.dml),
        eval.report.overall,
        test_set.len(),
        train_set.len()
    );
    Ok(())
}

fn read_scores(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading scores {}", path.display()))?;
    let mut scores = vec![None; n];
    for (line, raw) in text.lines().enumerate().skip(1) {
        if raw.trim().is_empty() {
            continue;
        }
        let (i, s) = raw
            .split_once(',')
            .with_context(|| format!("{}: line {}: expected index,score", path.display(), line + 1))?;
        let i: usize = i.trim().parse().with_context(|| format!("{}: line {}: bad index", path.display(), line + 1))?;
        let s: f64 = s.trim().parse().with_context(|| format!("{}: line {}: bad score", path.display(), line + 1))?;
        ensure!(i < n, "{}: line {}: index {i} beyond {n} sequences", path.display(), line + 1);
        scores[i] = Some(s);
    }
    scores
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.with_context(|| format!("{}: no score for sequence {i}", path.display())))
        .collect()
}

pub fn eval(rc: &RunConfig, model_path: &Path, scores: Option<&Path>, score_class: usize) -> Result<()> {
    let model = load_model(model_path).with_context(|| format!("model: loading {}", model_path.display()))?;
    let data = rc.data.as_deref().context("no dataset given (use --data)")?;
    let path = crate::manifest_path(data);
    let dataset = Dataset::load(&path).with_context(|| format!("dataio: loading {}", path.display()))?;
    ensure!(
        dataset.n_joints == model.config.n_joints,
        "model expects {} joints, dataset {} has {}",
        model.config.n_joints,
        path.display(),
        dataset.n_joints
    );
    ensure!(score_class < model.config.n_classes, "score class {score_class} out of range");
    let samples = prepare_samples(&dataset, &model.config).context("dataio: preparing samples")?;
    let (mut rows, eval) = accuracy_rows(&model, &dataset.class_names, &samples)?;
    let reference = scores.map(|p| read_scores(p, samples.len())).transpose()?;
    for (readout, probs) in [("softmax", &eval.softmax), ("sigmoid", &eval.sigmoid)] {
        let x: Vec<f64> = probs.iter().map(|p| p[score_class]).collect();
        let (inside, outside): (Vec<f64>, Vec<f64>) = {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (v, &l) in x.iter().zip(&eval.labels) {
                if l == score_class { a.push(*v) } else { b.push(*v) }
            }
            (a, b)
        };
        if !inside.is_empty() && !outside.is_empty() {
            rows.push(vec!["separation_degree".into(), readout.into(), num(separation_degree(&inside, &outside)?)]);
        }
        if let Some(y) = &reference {
            rows.push(vec!["distance_metric".into(), readout.into(), num(mean_distance_metric(&x, y)?)]);
            rows.push(vec!["cross_correlation".into(), readout.into(), num(cross_correlation(&x, y)?)]);
            rows.push(vec!["euclidean_distance".into(), readout.into(), num(euclidean_distance(&x, y)?)]);
        }
    }
    ensure_dir(&rc.out)?;
    write_csv(&rc.out.join("metrics.csv"), &["metric", "readout", "value"], &rows)?;
    let k = model.config.n_classes;
    let mut header = vec!["index".to_string(), "label".into(), "predicted".into()];
    header.extend((0..k).map(|c| format!("softmax_{c}")));
    header.extend((0..k).map(|c| format!("sigmoid_{c}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let preds: Vec<Vec<String>> = (0..samples.len())
        .map(|i| {
            let mut row = vec![i.to_string(), eval.labels[i].to_string(), eval.predictions[i].to_string()];
            row.extend(eval.softmax[i].iter().map(|&p| num(p)));
            row.extend(eval.sigmoid[i].iter().map(|&p| num(p)));
            row
        })
        .collect();
    write_csv(&rc.out.join("predictions.csv"), &header, &preds)?;
    println!("accuracy {:.4} on {} sequences", eval.report.overall, samples.len());
    Ok(())
}

pub fn ablate(rc: &RunConfig) -> Result<()> {
    let (dataset, cfg) = load_data(rc)?;
    let (train_set, test_set) = split_samples(rc, &dataset, &cfg)?;
    let base_gtl = cfg.gtl.unwrap_or(GtlVariant::RigidConstrained);
    let cells = run_ablation(&train_set, &test_set, &cfg, &ablation_grid(base_gtl)).context("model: ablation")?;
    ensure_dir(&rc.out)?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| vec![c.label.clone(), variant_name(c.gtl), variant_name(c.dml), num(c.accuracy)])
        .collect();
    write_csv(&rc.out.join("ablation.csv"), &["row", "gtl", "dml", "accuracy"], &rows)?;
    // distortion variants down, transformation variants across
    let mut header = vec!["dml".to_string()];
    header.extend(GtlVariant::ALL.iter().map(|g| g.to_string()));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let matrix: Vec<Vec<String>> = DmlVariant::ALL
        .iter()
        .map(|&d| {
            let mut row = vec![d.to_string()];
            for g in GtlVariant::ALL {
                let cell = cells.iter().find(|c| c.gtl == Some(g) && c.dml == Some(d)).expect("grid is complete");
                row.push(num(cell.accuracy));
            }
            row
        })
        .collect();
    write_csv(&rc.out.join("ablation_matrix.csv"), &header, &matrix)?;
    for c in &cells {
        println!("{:<40} {:.4}", c.label, c.accuracy);
    }
    Ok(())
}

pub fn compare_pt(rc: &RunConfig) -> Result<()> {
    let (dataset, cfg) = load_data(rc)?;
    let (train_set, test_set) = split_samples(rc, &dataset, &cfg)?;
    let rows = run_pt_comparison(&train_set, &test_set, &cfg).context("model: transport comparison")?;
    ensure_dir(&rc.out)?;
    let csv: Vec<Vec<String>> = rows.iter().map(|r| vec![r.pipeline.clone(), num(r.accuracy)]).collect();
    write_csv(&rc.out.join("pt_comparison.csv"), &["pipeline", "accuracy"], &csv)?;
    for r in &rows {
        println!("{:<4} {:.4}", r.pipeline, r.accuracy);
    }
    Ok(())
}

pub fn coherence(model_path: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_path).with_context(|| format!("model: loading {}", model_path.display()))?;
    let series = rotation_coherence_report(&model).context("model: rotation coherence")?;
    ensure_dir(out)?;
    let rows: Vec<Vec<String>> = series
        .iter()
        .enumerate()
        .map(|(f, t)| vec![(f + 1).to_string(), num(*t)])
        .collect();
    write_csv(&out.join("coherence.csv"), &["frame", "theta_rad"], &rows)?;
    println!("{} consecutive-frame angles, max {:.6} rad", series.len(), series.iter().cloned().fold(0.0, f64::max));
    Ok(())
}

pub fn distortion(rc: &RunConfig, index: usize, model_path: Option<&Path>) -> Result<()> {
    let (dataset, mut cfg) = load_data(rc)?;
    let model = model_path
        .map(|p| load_model(p).with_context(|| format!("model: loading {}", p.display())))
        .transpose()?;
    if let Some(m) = &model {
        ensure!(m.config.n_joints == dataset.n_joints, "model and dataset joint counts differ");
        cfg = m.config.clone();
    }
    if index >= dataset.len() {
        bail!("sequence index {index} out of range ({} sequences)", dataset.len());
    }
    let sample = prepare_samples(&dataset.subset(&[index]), &cfg)?.remove(0);
    let seq = PreShapeSequence::from_tensor(sample.input)?;
    let mut stages = Vec::new();
    let mut tape = Tape::new();
    let plain = log_map_sequence(&mut tape, &seq, cfg.ref_index).context("geomlayers: log map")?;
    stages.push(("log", seq.clone(), plain.reference.clone(), plain.tangent_values(&tape).clone()));
    if let Some(m) = &model {
        let mut t = match (m.config.gtl, m.param("gtl")) {
            (Some(v), Some(p)) => {
                let p = tape.constant(p.clone());
                gtl_forward(&mut tape, &seq, v, p, cfg.ref_index)?
            }
            _ => plain.clone(),
        };
        if let (Some(v), Some(p)) = (m.config.dml, m.param("dml.raw")) {
            let p = tape.constant(p.clone());
            t = dml_forward(&mut tape, &t, v, p)?;
        }
        let points = PreShapeSequence::from_tensor(tape.value(t.points).clone())?;
        stages.push(("model", points, t.reference.clone(), t.tangent_values(&tape).clone()));
    }
    ensure_dir(&rc.out)?;
    let (mut frames, mut pairs) = (Vec::new(), Vec::new());
    for (stage, points, reference, tangents) in &stages {
        let report = distortion_report(points, reference, tangents).context("geomlayers: distortion report")?;
        for fr in &report.frames {
            frames.push(vec![stage.to_string(), fr.frame.to_string(), num(fr.theta), num(fr.tangent_norm), num(fr.ratio)]);
        }
        for p in &report.pairs {
            pairs.push(vec![
                stage.to_string(),
                p.f.to_string(),
                p.g.to_string(),
                num(p.tangent_distance),
                num(p.geodesic),
                num(p.distortion),
            ]);
        }
        println!("{stage}: mean pair distortion {:.6}, max {:.6}", report.mean_pair_distortion(), report.max_pair_distortion());
    }
    write_csv(&rc.out.join("distortion_frames.csv"), &["stage", "frame", "theta", "tangent_norm", "ratio"], &frames)?;
    write_csv(
        &rc.out.join("distortion_pairs.csv"),
        &["stage", "f", "g", "tangent_distance", "geodesic", "distortion"],
        &pairs,
    )?;
    Ok(())
}
