use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Floor applied to probabilities inside the logarithm, so that `0 * log 0`
/// evaluates to zero.
pub const PROB_FLOOR: f64 = 1e-12;

/// Max-subtracted softmax of one logit vector, in double precision.
pub fn softmax_row(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Row-wise softmax of a `(N, K)` tensor.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (n, k) = logits.dims2()?;
    let mut out = Vec::with_capacity(n * k);
    for row in logits.data().chunks_exact(k) {
        out.extend(softmax_row(row).into_iter().map(|p| p as f32));
    }
    Tensor::new(vec![n, k], out)
}

/// Shannon entropy of `pi` divided by `ln K`, in `[0, 1]`.
pub fn normalized_entropy(pi: &[f64]) -> Result<f64> {
    let k = pi.len();
    if k < 2 {
        return Err(Error::arg(format!("entropy needs at least 2 classes, got {k}")));
    }
    let sum: f64 = pi.iter().sum();
    if (sum - 1.0).abs() > 1e-4 || pi.iter().any(|&p| !(p >= 0.0)) {
        return Err(Error::arg(format!("not a probability vector (sum = {sum})")));
    }
    let h: f64 = pi.iter().map(|&p| -p * p.max(PROB_FLOOR).ln()).sum();
    Ok((h / (k as f64).ln()).clamp(0.0, 1.0))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = j;
        }
    }
    best
}
