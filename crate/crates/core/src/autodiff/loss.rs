//! Softmax cross-entropy over readout rows.

use super::{ModelError, Result};
use crate::tensor::Tensor;

fn check(readout: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    let &[n, k] = readout.shape() else {
        return Err(ModelError::Batch(format!(
            "readout must be (N, K), got {:?}",
            readout.shape()
        )));
    };
    if labels.len() != n {
        return Err(ModelError::Batch(format!(
            "{} labels for {n} readout rows",
            labels.len()
        )));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(ModelError::LabelOutOfRange { label, classes: k });
    }
    Ok((n, k))
}

/// Per-row log-softmax. Infinite maxima are handled so that a row whose
/// true class alone is `+inf` scores exactly zero loss.
fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = row
        .iter()
        .map(|&x| if x == m { 0.0 } else { x - m })
        .collect();
    let lse = shifted.iter().map(|z| z.exp()).sum::<f64>().ln();
    shifted.iter().map(|z| z - lse).collect()
}

/// Mean over the batch of `-log softmax(readout)[label]`.
pub fn cross_entropy(readout: &Tensor, labels: &[usize]) -> Result<f64> {
    cross_entropy_with_grad(readout, labels).map(|(loss, _)| loss)
}

/// Loss and its gradient w.r.t. the readout, `(softmax - onehot) / N`.
pub fn cross_entropy_with_grad(readout: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (n, k) = check(readout, labels)?;
    let values = readout.to_real_vec();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n * k);
    for (row, &label) in values.chunks(k).zip(labels) {
        let logp = log_softmax(row);
        loss -= logp[label];
        grad.extend(logp.iter().enumerate().map(|(j, lp)| {
            let target = if j == label { 1.0 } else { 0.0 };
            (lp.exp() - target) / n as f64
        }));
    }
    Ok((loss / n as f64, Tensor::from_real(&[n, k], grad)?))
}

/// Rows whose first maximal readout entry equals the label.
pub fn accuracy_count(readout: &Tensor, labels: &[usize]) -> Result<usize> {
    let (_, k) = check(readout, labels)?;
    let values = readout.to_real_vec();
    Ok(values
        .chunks(k)
        .zip(labels)
        .filter(|(row, &label)| {
            let best = row
                .iter()
                .enumerate()
                .fold(0, |best, (j, &v)| if v > row[best] { j } else { best });
            best == label
        })
        .count())
}
