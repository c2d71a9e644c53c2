use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Which outputs the cross-entropy is applied to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Cross-entropy of the T-step mean output only.
    Standard,
    /// Mean over t of the cross-entropy of each timestep output.
    PerTimestep,
}

/// What "the output at timestep t" means for [`LossMode::PerTimestep`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestepTarget {
    /// Running mean of the first t step logits.
    #[default]
    RunningMean,
    /// The logits of step t alone.
    StepOutput,
}

fn check_labels(n: usize, k: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::arg(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::arg(format!("label {bad} is out of range for {k} classes")));
    }
    Ok(())
}

/// Mean-over-batch cross-entropy and its gradient w.r.t. the logits,
/// scaled by `weight`.
pub(crate) fn cross_entropy(logits: &Tensor, labels: &[usize], weight: f64) -> Result<(f64, Tensor)> {
    let (n, k) = logits.dims2()?;
    check_labels(n, k, labels)?;
    let mut grad = Tensor::zeros(&[n, k]);
    let mut total = 0.0f64;
    for (b, (row, g)) in logits
        .data()
        .chunks_exact(k)
        .zip(grad.data_mut().chunks_exact_mut(k))
        .enumerate()
    {
        let max = row.iter().fold(f32::NEG_INFINITY, |m, &v| m.max(v)) as f64;
        let denom: f64 = row.iter().map(|&v| (v as f64 - max).exp()).sum();
        let log_z = max + denom.ln();
        total += log_z - row[labels[b]] as f64;
        for (j, gj) in g.iter_mut().enumerate() {
            let p = (row[j] as f64 - log_z).exp();
            let target = if j == labels[b] { 1.0 } else { 0.0 };
            *gj = (weight * (p - target) / n as f64) as f32;
        }
    }
    Ok((total / n as f64, grad))
}

/// Cross-entropy of the T-step mean output, averaged over the batch.
pub fn loss_standard(mean_logits: &Tensor, labels: &[usize]) -> Result<f64> {
    cross_entropy(mean_logits, labels, 1.0).map(|(l, _)| l)
}

/// Mean over timesteps of [`loss_standard`] applied to each timestep's output.
pub fn loss_per_timestep(step_outputs: &[Tensor], labels: &[usize]) -> Result<f64> {
    if step_outputs.is_empty() {
        return Err(Error::arg("per-timestep loss needs at least one timestep output"));
    }
    let mut sum = 0.0;
    for out in step_outputs {
        sum += loss_standard(out, labels)?;
    }
    Ok(sum / step_outputs.len() as f64)
}

/// Running means `f_t = (1/t) * sum_{s <= t} step_s` for t = 1..=T.
pub fn running_means(step_logits: &[Tensor]) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(step_logits.len());
    let mut acc: Option<Tensor> = None;
    for (i, step) in step_logits.iter().enumerate() {
        match &mut acc {
            Some(a) => a.add_assign(step)?,
            None => acc = Some(step.clone()),
        }
        let mut mean = acc.clone().expect("set above");
        let t = (i + 1) as f32;
        mean.data_mut().iter_mut().for_each(|v| *v /= t);
        out.push(mean);
    }
    Ok(out)
}

/// Loss for a recorded sequence of step logits together with the gradient
/// w.r.t. each step's logits.
pub fn loss_and_step_grads(
    step_logits: &[Tensor],
    labels: &[usize],
    mode: LossMode,
    target: TimestepTarget,
) -> Result<(f64, Vec<Tensor>)> {
    let t_steps = step_logits.len();
    if t_steps == 0 {
        return Err(Error::arg("no timesteps recorded"));
    }
    let shape = step_logits[0].shape().to_vec();
    let mut grads: Vec<Tensor> = (0..t_steps).map(|_| Tensor::zeros(&shape)).collect();
    let loss = match (mode, target) {
        (LossMode::Standard, _) => {
            let mean = running_means(step_logits)?.pop().expect("non-empty");
            let (loss, g) = cross_entropy(&mean, labels, 1.0 / t_steps as f64)?;
            for gs in &mut grads {
                gs.add_assign(&g)?;
            }
            loss
        }
        (LossMode::PerTimestep, TimestepTarget::RunningMean) => {
            let means = running_means(step_logits)?;
            let mut total = 0.0;
            for (t, mean) in means.iter().enumerate() {
                // d f_t / d step_s = 1/t for every s <= t
                let (loss, g) = cross_entropy(mean, labels, 1.0 / (t_steps as f64 * (t + 1) as f64))?;
                total += loss;
                for gs in &mut grads[..=t] {
                    gs.add_assign(&g)?;
                }
            }
            total / t_steps as f64
        }
        (LossMode::PerTimestep, TimestepTarget::StepOutput) => {
            let mut total = 0.0;
            for (step, gs) in step_logits.iter().zip(&mut grads) {
                let (loss, g) = cross_entropy(step, labels, 1.0 / t_steps as f64)?;
                total += loss;
                *gs = g;
            }
            total / t_steps as f64
        }
    };
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: usize, cols: usize, v: &[f32]) -> Tensor {
        Tensor::new(vec![rows, cols], v.to_vec()).unwrap()
    }

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::full(&[3, 10], 0.7);
        let l = loss_standard(&logits, &[0, 4, 9]).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn confident_correct_logit_drives_loss_to_zero() {
        let mut prev = f64::INFINITY;
        for margin in [1.0f32, 5.0, 10.0, 30.0] {
            let l = loss_standard(&t2(1, 3, &[margin, 0.0, 0.0]), &[0]).unwrap();
            assert!(l < prev && l >= 0.0);
            prev = l;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn hand_computed_two_by_four() {
        let logits = t2(2, 4, &[0.5, -1.0, 2.0, 0.0, 1.5, 0.3, -0.7, 0.2]);
        // row 0, label 2: lse = ln(e^.5 + e^-1 + e^2 + e^0)
        let lse0 = (0.5f64.exp() + (-1.0f64).exp() + 2.0f64.exp() + 1.0).ln();
        let lse1 = (1.5f64.exp() + 0.3f64.exp() + (-0.7f64).exp() + 0.2f64.exp()).ln();
        let want = ((lse0 - 2.0) + (lse1 - 0.3)) / 2.0;
        let got = loss_standard(&logits, &[2, 1]).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn label_out_of_range() {
        assert!(matches!(
            loss_standard(&Tensor::zeros(&[1, 3]), &[3]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn per_timestep_degenerate_cases() {
        let a = t2(2, 3, &[0.1, 0.9, -0.3, 1.2, 0.0, 0.4]);
        let b = t2(2, 3, &[-0.5, 0.2, 0.8, 0.3, 0.3, -1.0]);
        let labels = [1, 0];
        assert_eq!(
            loss_per_timestep(std::slice::from_ref(&a), &labels).unwrap(),
            loss_standard(&a, &labels).unwrap()
        );
        let same = loss_per_timestep(&[a.clone(), a.clone(), a.clone()], &labels).unwrap();
        assert!((same - loss_standard(&a, &labels).unwrap()).abs() < 1e-12);
        let two = loss_per_timestep(&[a.clone(), b.clone()], &labels).unwrap();
        let want = (loss_standard(&a, &labels).unwrap() + loss_standard(&b, &labels).unwrap()) / 2.0;
        assert!((two - want).abs() < 1e-6);
        assert!(loss_per_timestep(&[], &labels).is_err());
    }

    #[test]
    fn step_grads_match_finite_differences() {
        let steps = vec![
            t2(2, 3, &[0.1, 0.9, -0.3, 1.2, 0.0, 0.4]),
            t2(2, 3, &[-0.5, 0.2, 0.8, 0.3, 0.3, -1.0]),
            t2(2, 3, &[0.0, 0.6, 0.1, -0.2, 0.9, 0.5]),
        ];
        let labels = [2, 0];
        for (mode, target) in [
            (LossMode::Standard, TimestepTarget::RunningMean),
            (LossMode::PerTimestep, TimestepTarget::RunningMean),
            (LossMode::PerTimestep, TimestepTarget::StepOutput),
        ] {
            let (_, grads) = loss_and_step_grads(&steps, &labels, mode, target).unwrap();
            for t in 0..steps.len() {
                for i in 0..6 {
                    let eps = 1e-2f32;
                    let mut plus = steps.clone();
                    plus[t].data_mut()[i] += eps;
                    let mut minus = steps.clone();
                    minus[t].data_mut()[i] -= eps;
                    let lp = loss_and_step_grads(&plus, &labels, mode, target).unwrap().0;
                    let lm = loss_and_step_grads(&minus, &labels, mode, target).unwrap().0;
                    let fd = (lp - lm) / (2.0 * eps as f64);
                    let g = grads[t].data()[i] as f64;
                    assert!((fd - g).abs() < 1e-4, "{mode:?} {target:?} t={t} i={i}: {fd} vs {g}");
                }
            }
        }
    }
}
