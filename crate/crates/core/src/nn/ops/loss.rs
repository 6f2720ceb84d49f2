use alloc::vec::Vec;

use crate::nn::{NnError, Scalar, Tensor};

/// Max-shifted softmax, evaluated in f64.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<f64> {
    let max = logits
        .iter()
        .map(|v| v.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| libm::exp(v.as_f64() - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax of `[N, C]` logits.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Vec<Vec<f64>>, NnError> {
    let [_, c] = logits.dims2("softmax")?;
    Ok(logits.data().chunks_exact(c).map(softmax).collect())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct CrossEntropy<T: Scalar> {
    /// Mean of `-log p[target]` over the batch.
    pub loss: f64,
    /// Per-example losses, in batch order.
    pub per_example: Vec<f64>,
    /// `(softmax - one_hot) / N`.
    pub grad: Tensor<T>,
}

pub fn cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
) -> Result<CrossEntropy<T>, NnError> {
    let [n, c] = logits.dims2("cross_entropy")?;
    if targets.len() != n {
        return Err(crate::nn::shape_err("cross_entropy", n, targets.len()));
    }
    if let Some(&target) = targets.iter().find(|&&t| t >= c) {
        return Err(NnError::TargetOutOfRange { target, classes: c });
    }
    let mut grad = Vec::with_capacity(n * c);
    let mut per_example = Vec::with_capacity(n);
    for (row, &t) in logits.data().chunks_exact(c).zip(targets) {
        let max = row
            .iter()
            .map(|v| v.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let log_sum = libm::log(row.iter().map(|v| libm::exp(v.as_f64() - max)).sum::<f64>()) + max;
        per_example.push(log_sum - row[t].as_f64());
        for (j, v) in row.iter().enumerate() {
            let p = libm::exp(v.as_f64() - log_sum);
            let onehot = if j == t { 1.0 } else { 0.0 };
            grad.push(T::from_f64((p - onehot) / n as f64));
        }
    }
    let loss = per_example.iter().sum::<f64>() / n as f64;
    Ok(CrossEntropy {
        loss,
        per_example,
        grad: Tensor::new(&[n, c], grad)?,
    })
}
