//! Linear-probe evaluation on frozen encoder outputs.
//!
//! The probe persists between evaluations: each call continues training from
//! the parameters left by the previous one.

use serde::{Deserialize, Serialize};

use crate::data::{ClientDataset, Dataset};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::numerics::Matrix;

/// Which training labels the probe may see.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpMode {
    /// Every client sample is treated as annotated for probing.
    FullLabels,
    /// Only the samples flagged as labelled in the partition.
    LabelledSubset,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    /// `num_classes × rep_dim`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    version: u64,
}

impl LinearProbe {
    pub fn new(num_classes: usize, rep_dim: usize) -> Self {
        Self {
            weight: Matrix::zeros(num_classes, rep_dim),
            bias: vec![0.0; num_classes],
            version: 0,
        }
    }

    /// Number of training calls this probe has been through.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn num_classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn logits(&self, reps: &Matrix) -> Result<Matrix> {
        let mut out = reps.matmul_t(&self.weight)?;
        out.add_row_broadcast(&self.bias);
        Ok(out)
    }
}

/// Encoder output for un-augmented inputs.
pub fn extract_representations(params: &ModelParams, x: &Matrix) -> Result<Matrix> {
    Ok(params.encoder.forward(x)?.output)
}

fn check_labels(reps: &Matrix, labels: &[usize], classes: usize) -> Result<()> {
    if reps.rows() != labels.len() {
        return Err(Error::dims("probe", format!("{} rows, {} labels", reps.rows(), labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::config(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// Mean softmax cross-entropy of the probe and its logit gradient.
fn loss_and_grad(probe: &LinearProbe, reps: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let logits = probe.logits(reps)?;
    let n = reps.rows() as f64;
    let mut d = logits.clone();
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = d.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        loss -= (row[y] / total).ln() / n;
        row.iter_mut().for_each(|v| *v /= total * n);
        row[y] -= 1.0 / n;
    }
    Ok((loss, d))
}

pub fn probe_loss(probe: &LinearProbe, reps: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(reps, labels, probe.num_classes())?;
    Ok(loss_and_grad(probe, reps, labels)?.0)
}

/// Full-batch gradient descent on multinomial logistic loss, starting from
/// the probe's current parameters.
pub fn train_probe(
    probe: &LinearProbe,
    reps: &Matrix,
    labels: &[usize],
    epochs: usize,
    lr: f64,
) -> Result<LinearProbe> {
    check_labels(reps, labels, probe.num_classes())?;
    if !reps.is_finite() {
        return Err(Error::NonFinite("probe representations".into()));
    }
    let mut out = probe.clone();
    out.version += 1;
    if reps.rows() == 0 {
        return Ok(out);
    }
    for _ in 0..epochs {
        let (_, d) = loss_and_grad(&out, reps, labels)?;
        out.weight.axpy(-lr, &d.t_matmul(reps)?);
        for (b, g) in out.bias.iter_mut().zip(d.column_sums().as_slice()) {
            *b -= lr * g;
        }
    }
    Ok(out)
}

/// Fraction of rows whose arg-max logit is the label; ties resolve to the
/// lowest class index.
pub fn accuracy(probe: &LinearProbe, reps: &Matrix, labels: &[usize]) -> Result<f64> {
    check_labels(reps, labels, probe.num_classes())?;
    if labels.is_empty() {
        return Ok(0.0);
    }
    let logits = probe.logits(reps)?;
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(r, &y)| logits.row_argmax(r) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Un-rotated training features and labels the probe is fit on.
pub fn probe_training_set(train: &Dataset, clients: &[ClientDataset], mode: LpMode) -> (Matrix, Vec<usize>) {
    let mut idx: Vec<usize> = clients
        .iter()
        .flat_map(|c| {
            c.indices
                .iter()
                .zip(&c.labelled)
                .filter(move |&(_, &l)| mode == LpMode::FullLabels || l)
                .map(|(&i, _)| i)
        })
        .collect();
    idx.sort_unstable();
    (train.x.select_rows(&idx), idx.iter().map(|&i| train.y[i]).collect())
}

/// Warm-started probe bound to fixed train and test sets.
#[derive(Clone, Debug)]
pub struct ProbeEvaluator {
    pub probe: LinearProbe,
    train_x: Matrix,
    train_y: Vec<usize>,
    test_x: Matrix,
    test_y: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
}

impl ProbeEvaluator {
    pub fn new(
        rep_dim: usize,
        num_classes: usize,
        train: (Matrix, Vec<usize>),
        test: &Dataset,
        epochs: usize,
        lr: f64,
    ) -> Self {
        Self {
            probe: LinearProbe::new(num_classes, rep_dim),
            train_x: train.0,
            train_y: train.1,
            test_x: test.x.clone(),
            test_y: test.y.clone(),
            epochs,
            lr,
        }
    }

    pub fn num_train(&self) -> usize {
        self.train_y.len()
    }

    /// Trains the probe further on current representations and returns
    /// `(train_accuracy, test_accuracy)`.
    pub fn evaluate(&mut self, params: &ModelParams) -> Result<(f64, f64)> {
        let train_reps = extract_representations(params, &self.train_x)?;
        self.probe = train_probe(&self.probe, &train_reps, &self.train_y, self.epochs, self.lr)?;
        let train_acc = accuracy(&self.probe, &train_reps, &self.train_y)?;
        let test_reps = extract_representations(params, &self.test_x)?;
        let test_acc = accuracy(&self.probe, &test_reps, &self.test_y)?;
        Ok((train_acc, test_acc))
    }
}
