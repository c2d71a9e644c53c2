use super::lif::{lif_step, LifState};
use super::model::{LayerParams, Model};
use super::spec::LayerSpec;
use crate::error::{Error, Result};
use crate::numerics::{avg_pool2d, batch_norm, conv2d, fully_connected, NormMode, Tensor};

/// Inference state of one network on one input batch.
///
/// The model is borrowed read-only, so several instances can share one set
/// of weights. Timesteps of two different inputs must not be interleaved on
/// one instance; call [`SnnInstance::reset`] between inputs.
#[derive(Clone, Debug)]
pub struct SnnInstance<'m> {
    model: &'m Model,
    lif: Vec<Option<LifState>>,
    accumulated: Option<Tensor>,
    timestep: usize,
    activity: Vec<f64>,
}

impl<'m> SnnInstance<'m> {
    pub fn new(model: &'m Model) -> Self {
        let n_weighted = model.spec().layers.iter().filter(|l| l.is_weighted()).count();
        Self {
            model,
            lif: vec![None; model.spec().layers.len()],
            accumulated: None,
            timestep: 0,
            activity: vec![0.0; n_weighted],
        }
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    /// Zeroes every membrane potential, the accumulated output and the
    /// timestep counter.
    pub fn reset(&mut self) {
        for st in self.lif.iter_mut().flatten() {
            st.reset();
        }
        self.accumulated = None;
        self.timestep = 0;
        self.activity.iter_mut().for_each(|a| *a = 0.0);
    }

    pub fn timestep(&self) -> usize {
        self.timestep
    }

    /// Sum of the step logits since the last reset.
    pub fn accumulated_logits(&self) -> Option<&Tensor> {
        self.accumulated.as_ref()
    }

    /// Nonzero input elements presented to each weighted layer during the
    /// most recent timestep, summed over the batch.
    pub fn last_activity(&self) -> &[f64] {
        &self.activity
    }

    /// Spike outputs of every LIF layer from the most recent timestep.
    pub fn last_spikes(&self) -> impl Iterator<Item = &Tensor> {
        self.lif.iter().flatten().map(|s| &s.last_spikes)
    }

    /// Runs every block and the classifier once on the analog input `x`
    /// and adds the resulting logits into the running sum.
    pub fn forward_timestep(&mut self, x: &Tensor) -> Result<Tensor> {
        let spec = self.model.spec();
        if self.timestep >= spec.t_max {
            return Err(Error::state(format!(
                "timestep {} would exceed t_max = {}; reset the instance first",
                self.timestep + 1,
                spec.t_max
            )));
        }
        let (_, c, h, w) = x.dims4()?;
        if [c, h, w] != spec.input_shape[..] {
            return Err(Error::dim(format!(
                "input item shape {:?} does not match the network input {:?}",
                &x.shape()[1..],
                spec.input_shape
            )));
        }
        let n = x.batch();
        if let Some(acc) = &self.accumulated {
            if acc.batch() != n {
                return Err(Error::state(format!(
                    "batch size changed from {} to {n} mid-inference; reset the instance first",
                    acc.batch()
                )));
            }
        }

        let mut cur = x.clone();
        let mut weighted = 0;
        for (i, (layer, params)) in spec.layers.iter().zip(self.model.params()).enumerate() {
            cur = match (layer, params) {
                (LayerSpec::Conv { .. }, LayerParams::Conv { weight }) => {
                    self.activity[weighted] = cur.count_nonzero() as f64;
                    weighted += 1;
                    conv2d(&cur, weight, &layer.conv_params().expect("conv"))?
                }
                (LayerSpec::Fc { .. }, LayerParams::Fc { weight, bias })
                | (LayerSpec::Classifier { .. }, LayerParams::Classifier { weight, bias }) => {
                    let flat_len = cur.item_len();
                    let flat = cur.reshape(&[n, flat_len])?;
                    self.activity[weighted] = flat.count_nonzero() as f64;
                    weighted += 1;
                    fully_connected(&flat, weight, bias)?
                }
                (LayerSpec::Norm, LayerParams::Norm(p)) => batch_norm(&cur, p, NormMode::Eval)?.output,
                (LayerSpec::Lif, _) => {
                    let state = self.lif[i].get_or_insert_with(|| LifState::new(cur.shape()));
                    if state.u.shape() != cur.shape() {
                        *state = LifState::new(cur.shape());
                    }
                    lif_step(state, &cur, &spec.lif)?
                }
                (LayerSpec::Pool { window }, _) => avg_pool2d(&cur, *window)?,
                _ => return Err(Error::state(format!("layer {i} parameters do not match its kind"))),
            };
        }

        match &mut self.accumulated {
            Some(acc) => acc.add_assign(&cur)?,
            None => self.accumulated = Some(cur.clone()),
        }
        self.timestep += 1;
        Ok(cur)
    }

    /// Running mean of the step logits, `accumulated / t`.
    pub fn mean_output(&self) -> Result<Tensor> {
        let acc = self
            .accumulated
            .as_ref()
            .filter(|_| self.timestep > 0)
            .ok_or_else(|| Error::state("mean output requested before any timestep ran"))?;
        let t = self.timestep as f32;
        let mut out = acc.clone();
        out.data_mut().iter_mut().for_each(|v| *v /= t);
        Ok(out)
    }

    /// Static-T inference: reset, run `t` timesteps, return the mean output.
    pub fn static_forward(&mut self, x: &Tensor, t: usize) -> Result<Tensor> {
        let t_max = self.model.spec().t_max;
        if t == 0 || t > t_max {
            return Err(Error::arg(format!("static timestep count {t} outside 1..={t_max}")));
        }
        self.reset();
        for _ in 0..t {
            self.forward_timestep(x)?;
        }
        self.mean_output()
    }
}
