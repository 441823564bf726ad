use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub total: usize,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// `(user, accuracy)` in ascending user order; empty without user ids.
    pub per_user_accuracy: Vec<(usize, f64)>,
}

impl MetricsReport {
    pub fn mean_user_accuracy(&self) -> Option<f64> {
        (!self.per_user_accuracy.is_empty()).then(|| {
            self.per_user_accuracy.iter().map(|(_, a)| a).sum::<f64>()
                / self.per_user_accuracy.len() as f64
        })
    }
}

/// Confusion-matrix metrics over `classes` labels. With `users`, also the
/// accuracy of every user's subset.
pub fn compute_metrics(
    predictions: &[usize],
    labels: &[usize],
    users: Option<&[usize]>,
    classes: usize,
) -> Result<MetricsReport> {
    if predictions.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if let Some(u) = users {
        if u.len() != labels.len() {
            return Err(Error::Config(format!("{} user ids for {} labels", u.len(), labels.len())));
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if let Some(&bad) = predictions.iter().chain(labels).find(|&&c| c >= classes) {
        return Err(Error::Config(format!("class {bad} out of range for {classes} classes")));
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        confusion[y][p] += 1;
    }
    let total = labels.len();
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let per_class = (0..classes)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = (0..classes).map(|r| confusion[r][c]).sum();
            let ratio = |num: f64, den: usize| if den == 0 { 0.0 } else { num / den as f64 };
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let per_user_accuracy = users.map_or_else(Vec::new, |u| {
        let mut tally = std::collections::BTreeMap::<usize, (usize, usize)>::new();
        for ((&p, &y), &user) in predictions.iter().zip(labels).zip(u) {
            let e = tally.entry(user).or_default();
            e.0 += usize::from(p == y);
            e.1 += 1;
        }
        tally
            .into_iter()
            .map(|(user, (ok, n))| (user, ok as f64 / n as f64))
            .collect()
    });
    Ok(MetricsReport {
        accuracy: correct as f64 / total as f64,
        total,
        per_class,
        confusion,
        per_user_accuracy,
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, std, n }
    }
}
