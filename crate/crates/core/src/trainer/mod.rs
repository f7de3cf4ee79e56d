//! Fitting per-step one-layer fields on synthetic data.
//!
//! Each training item is a clean sample `x₀`, a step `t ∼ U{1..T}` and its
//! noised state `x_t`. The field `F_t` is trained so that the clean estimate
//! `f(x_t) = x_t − F_t(x_t)` is close to `x₀` under the chosen distance.
//! Fields carrying a context block additionally see the item's iterated
//! estimate `x₀⁽ⁿ⁾`, which starts at `x_t` and is replaced by the model's
//! clean prediction at the start of every refresh epoch.

mod data;
mod loss;
mod optim;

pub use data::DataSource;
pub use loss::{graph_mse, pseudo_huber, pseudo_huber_grad, LossKind, LossSpec, DEFAULT_PSEUDO_HUBER_C};
pub use optim::{AdamW, LrSchedule};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{Activation, DenoisingField, OneLayerField, OneLayerMap};
use crate::schedule::Schedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Size of the fixed training set.
    pub items: usize,
    pub warmup_steps: usize,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    /// Epoch interval between refreshes of `x₀⁽ⁿ⁾`; 0 disables refreshing.
    pub refresh_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            items: 2048,
            warmup_steps: 100,
            peak_lr: 3e-4,
            min_lr: 3e-5,
            weight_decay: 0.1,
            betas: (0.9, 0.95),
            eps: 1e-20,
            refresh_every: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn batches_per_epoch(&self) -> usize {
        self.items.div_ceil(self.batch_size.max(1))
    }

    pub fn total_steps(&self) -> usize {
        self.epochs * self.batches_per_epoch()
    }

    pub fn lr_schedule(&self) -> LrSchedule {
        LrSchedule {
            warmup: self.warmup_steps,
            total: self.total_steps(),
            peak: self.peak_lr,
            min: self.min_lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.items == 0 {
            return invalid("batch_size and items must be positive");
        }
        if !(0.0..1.0).contains(&self.betas.0) || !(0.0..1.0).contains(&self.betas.1) {
            return invalid("optimizer betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return invalid("eps must be positive and weight_decay non-negative");
        }
        self.lr_schedule().validate()
    }
}

/// Per-epoch mean loss of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub optimizer_steps: usize,
}

impl TrainReport {
    /// CSV with header `epoch,loss`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (e, l) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{e},{l:e}\n"));
        }
        out
    }
}

/// `T` freshly initialized fields of dimension `d`, `fields[k]` serving
/// forward index `t = T − k`.
pub fn init_fields(
    steps: usize,
    d: usize,
    hidden: usize,
    activation: Activation,
    context: bool,
    scale: f64,
    rng: &mut (impl RngCore + ?Sized),
) -> Result<Vec<OneLayerField>> {
    if steps == 0 || d == 0 || hidden == 0 {
        return invalid("steps, dimension and hidden width must be positive");
    }
    (0..steps)
        .map(|_| {
            let input = if context { 2 * d } else { d };
            let map = OneLayerMap::random(input, hidden, d, activation, scale, rng);
            if context {
                OneLayerField::with_context(map, vec![0.0; d])
            } else {
                OneLayerField::new(map)
            }
        })
        .collect()
}

/// `[W1 (row-major), b1, W2 (row-major)]`.
pub fn flatten_params(map: &OneLayerMap) -> Vec<f64> {
    let mut p = Vec::with_capacity(param_count(map));
    p.extend_from_slice(map.w1.as_slice());
    p.extend_from_slice(&map.b1);
    p.extend_from_slice(map.w2.as_slice());
    p
}

pub fn load_params(map: &mut OneLayerMap, params: &[f64]) {
    let n1 = map.w1.as_slice().len();
    let nb = map.b1.len();
    map.w1.as_mut_slice().copy_from_slice(&params[..n1]);
    map.b1.copy_from_slice(&params[n1..n1 + nb]);
    map.w2.as_mut_slice().copy_from_slice(&params[n1 + nb..]);
}

pub fn param_count(map: &OneLayerMap) -> usize {
    map.w1.as_slice().len() + map.b1.len() + map.w2.as_slice().len()
}

/// Weight decay applies to the weight matrices, not to `b1`.
fn decay_mask(map: &OneLayerMap) -> Vec<bool> {
    let n1 = map.w1.as_slice().len();
    let nb = map.b1.len();
    let mut mask = vec![true; param_count(map)];
    mask[n1..n1 + nb].fill(false);
    mask
}

fn field_input(field: &OneLayerField, x_t: &[f64], context: Option<&[f64]>) -> Vec<f64> {
    let mut input = x_t.to_vec();
    let cd = field.context_dim();
    if cd > 0 {
        match context {
            Some(c) => input.extend_from_slice(c),
            None => match &field.context {
                Some(c) => input.extend_from_slice(c),
                None => input.extend(std::iter::repeat(0.0).take(cd)),
            },
        }
    }
    input
}

/// Clean estimate `x_t − F(x_t; context)`.
pub fn clean_estimate(field: &OneLayerField, x_t: &[f64], context: Option<&[f64]>) -> Vec<f64> {
    let f = field.map.forward(&field_input(field, x_t, context));
    x_t.iter().zip(f).map(|(x, fi)| x - fi).collect()
}

/// Loss of one item and its gradient with respect to [`flatten_params`],
/// accumulated into `grad` with weight `weight`.
pub fn accumulate_item_grad(
    field: &OneLayerField,
    x_t: &[f64],
    x0: &[f64],
    context: Option<&[f64]>,
    loss: &LossSpec,
    weight: f64,
    grad: &mut [f64],
) -> f64 {
    let map = &field.map;
    let input = field_input(field, x_t, context);
    let u = map.pre_activation(&input);
    let act = map.activation;
    let hidden: Vec<f64> = u.iter().map(|&v| act.value(v)).collect();
    let f = map.w2.matvec(&hidden);
    let residual: Vec<f64> = x_t
        .iter()
        .zip(&f)
        .zip(x0)
        .map(|((x, fi), t)| x - fi - t)
        .collect();
    let (value, d_pred) = loss.value_and_grad(&residual);

    let (h, n_in) = (map.hidden_dim(), map.input_dim());
    let n1 = h * n_in;
    // prediction = x_t − F, so ∂L/∂F = −∂L/∂prediction
    let d_f: Vec<f64> = d_pred.iter().map(|g| -g * weight).collect();
    let w2_off = n1 + h;
    for (i, dfi) in d_f.iter().enumerate() {
        for k in 0..h {
            grad[w2_off + i * h + k] += dfi * hidden[k];
        }
    }
    let d_hidden = map.w2.tr_matvec(&d_f);
    for k in 0..h {
        let du = d_hidden[k] * act.derivative(u[k]);
        grad[n1 + k] += du;
        for (j, xj) in input.iter().enumerate() {
            grad[k * n_in + j] += du * xj;
        }
    }
    value
}

struct Item {
    x0: Vec<f64>,
    t: usize,
    x_t: Vec<f64>,
    estimate: Vec<f64>,
}

/// Trains `fields` in place and returns the per-epoch mean loss.
pub fn train_dddm(
    fields: &mut [OneLayerField],
    data: &DataSource,
    schedule: &Schedule,
    loss: &LossSpec,
    config: &TrainConfig,
    rng: &mut (impl RngCore + ?Sized),
) -> Result<TrainReport> {
    data.validate()?;
    loss.validate()?;
    config.validate()?;
    let steps = schedule.steps();
    if fields.len() != steps {
        return invalid(format!("need {steps} fields, got {}", fields.len()));
    }
    let d = data.dim();
    for f in fields.iter() {
        if f.dim() != d || (f.context_dim() != 0 && f.context_dim() != d) {
            return invalid("field dimensions do not match the data");
        }
    }

    let mut items: Vec<Item> = (0..config.items)
        .map(|_| {
            let x0 = data.sample(rng);
            let t = rng.random_range(1..=steps);
            let x_t = schedule.forward_sample(&x0, t, rng)?;
            Ok(Item {
                estimate: x_t.clone(),
                x0,
                t,
                x_t,
            })
        })
        .collect::<Result<_>>()?;

    let mut params: Vec<Vec<f64>> = fields.iter().map(|f| flatten_params(&f.map)).collect();
    let masks: Vec<Vec<bool>> = fields.iter().map(|f| decay_mask(&f.map)).collect();
    let mut opts: Vec<AdamW> = params
        .iter()
        .map(|p| AdamW::new(p.len(), config.betas, config.eps, config.weight_decay))
        .collect();
    let lr = config.lr_schedule();
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut grads: Vec<Vec<f64>> = params.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut touched = vec![false; steps];
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut item_losses = vec![0.0; items.len()];
    let mut step = 0;

    for epoch in 0..config.epochs {
        if epoch > 0 && config.refresh_every > 0 && epoch % config.refresh_every == 0 {
            for item in items.iter_mut() {
                let field = &fields[steps - item.t];
                if field.context_dim() > 0 {
                    item.estimate = clean_estimate(field, &item.x_t, Some(&item.estimate));
                }
            }
        }
        order.shuffle(rng);
        for batch in order.chunks(config.batch_size) {
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let item = &items[i];
                let k = steps - item.t;
                let ctx = (fields[k].context_dim() > 0).then_some(item.estimate.as_slice());
                let value = accumulate_item_grad(
                    &fields[k], &item.x_t, &item.x0, ctx, loss, weight, &mut grads[k],
                );
                if !value.is_finite() {
                    return Err(Error::Diverged(format!(
                        "non-finite loss at epoch {epoch}; the learning rate is likely too high"
                    )));
                }
                item_losses[i] = value;
                touched[k] = true;
            }
            let rate = lr.rate(step);
            for k in 0..steps {
                if !touched[k] {
                    continue;
                }
                opts[k].step(&mut params[k], &grads[k], rate, &masks[k]);
                load_params(&mut fields[k].map, &params[k]);
                grads[k].fill(0.0);
                touched[k] = false;
            }
            step += 1;
        }
        // summed in item order so the mean does not depend on the shuffle
        let mean = item_losses.iter().sum::<f64>() / items.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss at epoch {epoch}; the learning rate is likely too high"
            )));
        }
        epoch_losses.push(mean);
    }
    Ok(TrainReport {
        epoch_losses,
        optimizer_steps: step,
    })
}
