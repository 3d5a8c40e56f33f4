//! Score-level evaluation metrics: separation degree and normalized distance
//! (how well model scores separate groups), correlation and Euclidean
//! distance (how well model scores track reference scores), plus accuracy.

use serde::Serialize;

use crate::error::{Error, Result};

fn check_finite(op: &'static str, x: &[f64]) -> Result<()> {
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{op}: entry {i} is {}", x[i])));
    }
    Ok(())
}

fn check_nonempty(op: &'static str, x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid(op, "empty sequence"));
    }
    Ok(())
}

fn check_same_len(op: &'static str, x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape(op, format!("lengths {} and {} differ", x.len(), y.len())));
    }
    Ok(())
}

/// Mean over all pairs of `(x_i - y_j) / (x_i + y_j)`; in `[-1, 1]`.
pub fn separation_degree(x: &[f64], y: &[f64]) -> Result<f64> {
    for (name, v) in [("x", x), ("y", y)] {
        check_nonempty("separation_degree", v)?;
        check_finite("separation_degree", v)?;
        if let Some(i) = v.iter().position(|&a| a <= 0.0) {
            return Err(Error::invalid(
                "separation_degree",
                format!("{name}[{i}] = {} is not positive", v[i]),
            ));
        }
    }
    let total: f64 = x.iter().map(|&a| y.iter().map(|&b| (a - b) / (a + b)).sum::<f64>()).sum();
    Ok(total / (x.len() * y.len()) as f64)
}

/// `|x_n - y_n|` divided by the root-mean-square of `x - y` over the whole
/// sequence (`index` is 0-based).
pub fn distance_metric(x: &[f64], y: &[f64], index: usize) -> Result<f64> {
    check_same_len("distance_metric", x, y)?;
    check_nonempty("distance_metric", x)?;
    check_finite("distance_metric", x)?;
    check_finite("distance_metric", y)?;
    if index >= x.len() {
        return Err(Error::invalid(
            "distance_metric",
            format!("index {index} out of range for length {}", x.len()),
        ));
    }
    let rms = (x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64).sqrt();
    if rms == 0.0 {
        return Err(Error::Degenerate("distance_metric: identical sequences".into()));
    }
    Ok((x[index] - y[index]).abs() / rms)
}

/// [`distance_metric`] averaged over every index.
pub fn mean_distance_metric(x: &[f64], y: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..x.len() {
        total += distance_metric(x, y, i)?;
    }
    Ok(total / x.len().max(1) as f64)
}

/// Pearson correlation coefficient.
pub fn cross_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_same_len("cross_correlation", x, y)?;
    check_nonempty("cross_correlation", x)?;
    check_finite("cross_correlation", x)?;
    check_finite("cross_correlation", y)?;
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("cross_correlation: constant sequence".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn euclidean_distance(x: &[f64], y: &[f64]) -> Result<f64> {
    check_same_len("euclidean_distance", x, y)?;
    check_finite("euclidean_distance", x)?;
    check_finite("euclidean_distance", y)?;
    Ok(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub overall: f64,
    /// `(class, correct, total)`; classes without samples have total 0.
    pub per_class: Vec<(usize, usize, usize)>,
}

impl AccuracyReport {
    pub fn class_accuracy(&self, class: usize) -> Option<f64> {
        let (_, c, t) = self.per_class.get(class)?;
        (*t > 0).then(|| *c as f64 / *t as f64)
    }
}

pub fn accuracy(predicted: &[usize], labels: &[usize], n_classes: usize) -> Result<AccuracyReport> {
    if predicted.len() != labels.len() {
        return Err(Error::shape(
            "accuracy",
            format!("{} predictions for {} labels", predicted.len(), labels.len()),
        ));
    }
    if labels.is_empty() {
        return Err(Error::invalid("accuracy", "no samples"));
    }
    let mut per_class: Vec<(usize, usize, usize)> = (0..n_classes).map(|c| (c, 0, 0)).collect();
    let mut correct = 0;
    for (&p, &l) in predicted.iter().zip(labels) {
        let row = per_class
            .get_mut(l)
            .ok_or_else(|| Error::invalid("accuracy", format!("label {l} >= {n_classes} classes")))?;
        row.2 += 1;
        if p == l {
            row.1 += 1;
            correct += 1;
        }
    }
    Ok(AccuracyReport {
        overall: correct as f64 / labels.len() as f64,
        per_class,
    })
}
