use std::f64::consts::PI;

use super::tape::{Gradients, LayerGrads};
use crate::error::{Error, Result};
use crate::snn::{LayerParams, Model};

/// Cosine-annealed learning rate, `lr0 * (1 + cos(pi * epoch / epochs)) / 2`.
pub fn cosine_lr(lr0: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs == 0 {
        return lr0;
    }
    lr0 * 0.5 * (1.0 + (PI * epoch as f64 / epochs as f64).cos())
}

fn param_slots(p: &mut LayerParams) -> Vec<&mut [f32]> {
    match p {
        LayerParams::Conv { weight } => vec![weight.data_mut()],
        LayerParams::Fc { weight, bias } | LayerParams::Classifier { weight, bias } => {
            vec![weight.data_mut(), bias.data_mut()]
        }
        LayerParams::Norm(n) => vec![&mut n.gamma[..], &mut n.beta[..]],
        LayerParams::Stateless => Vec::new(),
    }
}

fn grad_slots(g: &LayerGrads) -> Vec<&[f32]> {
    match g {
        LayerGrads::Conv { weight } => vec![weight.data()],
        LayerGrads::Fc { weight, bias } | LayerGrads::Classifier { weight, bias } => {
            vec![weight.data(), bias.data()]
        }
        LayerGrads::Norm { gamma, beta } => vec![&gamma[..], &beta[..]],
        LayerGrads::None => Vec::new(),
    }
}

/// SGD with heavy-ball momentum and coupled L2 weight decay:
/// `v = m * v + (g + wd * w)`, `w -= lr * v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub momentum: f32,
    pub weight_decay: f32,
    velocity: Vec<Vec<Vec<f32>>>,
}

impl Sgd {
    pub fn new(momentum: f32, weight_decay: f32) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, model: &mut Model, grads: &Gradients, lr: f32) -> Result<()> {
        let params = model.params_mut();
        if grads.layers.len() != params.len() {
            return Err(Error::state(format!(
                "{} gradient layers for {} model layers",
                grads.layers.len(),
                params.len()
            )));
        }
        if self.velocity.is_empty() {
            self.velocity = grads
                .layers
                .iter()
                .map(|g| grad_slots(g).iter().map(|s| vec![0.0; s.len()]).collect())
                .collect();
        }
        for ((p, g), vel) in params.iter_mut().zip(&grads.layers).zip(&mut self.velocity) {
            let ps = param_slots(p);
            let gs = grad_slots(g);
            if ps.len() != gs.len() || gs.len() != vel.len() {
                return Err(Error::state("gradient layout does not match the parameters"));
            }
            for ((w, g), v) in ps.into_iter().zip(gs).zip(vel.iter_mut()) {
                if w.len() != g.len() || g.len() != v.len() {
                    return Err(Error::state("gradient length does not match the parameter"));
                }
                for i in 0..w.len() {
                    let d = g[i] + self.weight_decay * w[i];
                    v[i] = self.momentum * v[i] + d;
                    w[i] -= lr * v[i];
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_endpoints() {
        assert!((cosine_lr(0.1, 0, 40) - 0.1).abs() < 1e-12);
        assert!((cosine_lr(0.1, 20, 40) - 0.05).abs() < 1e-12);
        assert!(cosine_lr(0.1, 40, 40).abs() < 1e-12);
    }
}
