use serde::{Deserialize, Serialize};

use super::TrainState;
use crate::datasets::LabeledDataset;
use crate::error::{DcpError, Result};
use crate::networks::predict;
use crate::pseudo_label::PseudoLabelBatch;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub count: usize,
    pub correct: usize,
    /// `None` when the class has no samples.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Adversarial-branch argmax predictions.
pub fn predict_labels(state: &TrainState, x: &Tensor) -> Result<Vec<usize>> {
    let arch = &state.architecture;
    let features = predict(&state.networks.adv_extractor, &arch.extractor, x)?;
    let logits = predict(&state.networks.adv_head, &arch.head, &features)?;
    Ok(logits.argmax_rows())
}

/// Scores predictions against labels over `classes` classes.
pub fn score(predicted: &[usize], labels: &[i64], classes: usize) -> Result<EvalReport> {
    if labels.is_empty() {
        return Err(DcpError::Evaluation("dataset is empty".into()));
    }
    if let Some(row) = labels.iter().position(|&l| l < 0) {
        return Err(DcpError::Evaluation(format!("row {row} has no label")));
    }
    if let Some((row, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= classes) {
        return Err(DcpError::LabelOutOfRange { row, label: l, classes });
    }
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&p, &l) in predicted.iter().zip(labels) {
        confusion[l as usize][p] += 1;
    }
    let correct: usize = (0..classes).map(|k| confusion[k][k]).sum();
    let per_class = (0..classes)
        .map(|k| {
            let count: usize = confusion[k].iter().sum();
            ClassAccuracy {
                class: k,
                count,
                correct: confusion[k][k],
                accuracy: (count > 0).then(|| confusion[k][k] as f64 / count as f64),
            }
        })
        .collect();
    Ok(EvalReport {
        accuracy: correct as f64 / labels.len() as f64,
        per_class,
        confusion,
    })
}

/// Accuracy of the adversarial branch on a fully labelled dataset.
pub fn evaluate(state: &TrainState, dataset: &LabeledDataset) -> Result<EvalReport> {
    if dataset.dim() != state.architecture.extractor.input_dim() {
        return Err(DcpError::Evaluation(format!(
            "dataset has {} features, model expects {}",
            dataset.dim(),
            state.architecture.extractor.input_dim()
        )));
    }
    let labels = dataset.evaluation_labels();
    if labels.iter().any(|&l| l < 0) {
        return Err(DcpError::Evaluation(format!(
            "dataset {:?} contains unlabelled samples",
            dataset.name()
        )));
    }
    let predicted = predict_labels(state, dataset.features())?;
    score(&predicted, labels, state.classes)
}

/// Fraction of selected samples whose pseudo-label matches the truth;
/// `None` when nothing was selected or a selected sample has no label.
pub fn pseudo_precision(selected: &PseudoLabelBatch, true_labels: &[i64]) -> Option<f64> {
    if selected.is_empty() {
        return None;
    }
    let mut correct = 0usize;
    for (&i, &l) in selected.selected_indices.iter().zip(&selected.labels) {
        let truth = *true_labels.get(i)?;
        if truth < 0 {
            return None;
        }
        correct += usize::from(truth as usize == l);
    }
    Some(correct as f64 / selected.len() as f64)
}

/// Fraction of `predicted` equal to `truth`; `None` if any truth is unknown.
pub fn label_precision(predicted: &[usize], truth: &[i64]) -> Option<f64> {
    if predicted.is_empty() || predicted.len() != truth.len() || truth.iter().any(|&l| l < 0) {
        return None;
    }
    let correct = predicted.iter().zip(truth).filter(|(&p, &t)| p as i64 == t).count();
    Some(correct as f64 / predicted.len() as f64)
}
