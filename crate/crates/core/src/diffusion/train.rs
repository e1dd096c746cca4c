use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{DenoiserNetwork, NoisePredictor};
use super::schedule::{forward_diffuse, NoiseSchedule};
use crate::encoders::ConditionVector;
use crate::error::{Error, Result};
use crate::nn::{self, Adam};
use crate::rng;

/// One `(x0, cond)` training pair. Examples are visited in key order, so
/// the order they are supplied in does not matter.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub key: String,
    pub x0: Vec<f64>,
    pub cond: ConditionVector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    pub grad_clip: f64,
    /// Exponential smoothing factor of the recorded loss.
    pub smoothing: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch: 64,
            lr: 1e-4,
            seed: 0,
            grad_clip: 1.0,
            smoothing: 0.98,
        }
    }
}

pub struct TrainState {
    pub net: DenoiserNetwork,
    pub optimizer: Adam,
    pub step: usize,
    /// Mean batch loss per step.
    pub loss_history: Vec<f64>,
    pub smoothed_loss: Vec<f64>,
    pub config: TrainConfig,
    order: Vec<usize>,
}

/// Per-sample work items are processed in fixed-size chunks whose partial
/// gradients are summed in chunk order, so results do not depend on the
/// thread count.
const CHUNK: usize = 8;

/// Mean noise-prediction loss of `net` on a single `(x0, t, noise)` draw.
pub fn training_loss<P: NoisePredictor + ?Sized>(
    net: &P,
    schedule: &NoiseSchedule,
    x0: &[f64],
    cond: &ConditionVector,
    t: usize,
    noise: &[f64],
) -> Result<f64> {
    if t == 0 {
        return Err(Error::invalid("training steps are drawn from 1..=T"));
    }
    if x0.len() != net.visual_width() {
        return Err(Error::WidthMismatch {
            expected: net.visual_width(),
            actual: x0.len(),
        });
    }
    let x_t = forward_diffuse(schedule, x0, t, noise)?;
    let eps = net.predict(&x_t, t, cond)?;
    Ok(eps.iter().zip(noise).map(|(e, z)| (z - e) * (z - e)).sum::<f64>() / eps.len() as f64)
}

impl TrainState {
    pub fn new(net: DenoiserNetwork, examples: &[TrainExample], config: TrainConfig) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::invalid("diffusion training needs at least one example"));
        }
        if config.batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.sort_by(|&a, &b| examples[a].key.cmp(&examples[b].key));
        let optimizer = Adam::new(net.params.len(), config.lr);
        Ok(Self {
            net,
            optimizer,
            step: 0,
            loss_history: Vec::new(),
            smoothed_loss: Vec::new(),
            config,
            order,
        })
    }

    /// Runs `n` optimisation steps. Every step draws its example indices,
    /// timesteps and noise from a stream derived from `(seed, step)`.
    pub fn run(&mut self, schedule: &NoiseSchedule, examples: &[TrainExample], n: usize) -> Result<()> {
        if self.order.len() != examples.len() {
            return Err(Error::invalid("example set changed between training calls"));
        }
        let big_t = schedule.steps();
        let width = self.net.config().visual_width;
        for _ in 0..n {
            let mut r = rng::stream(self.config.seed, &[self.step as u64]);
            let draws: Vec<(usize, usize, Vec<f64>)> = (0..self.config.batch)
                .map(|_| {
                    let i = self.order[r.random_range(0..examples.len())];
                    let t = r.random_range(1..=big_t);
                    (i, t, nn::gaussian_vec(&mut r, width))
                })
                .collect();

            let net = &self.net;
            let partials: Vec<Result<(f64, Vec<f64>)>> = draws
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut g = vec![0.0; net.params.len()];
                    let mut loss = 0.0;
                    for (i, t, noise) in chunk {
                        let ex = &examples[*i];
                        let x_t = forward_diffuse(schedule, &ex.x0, *t, noise)?;
                        loss += net.loss_and_grad(&x_t, *t, &ex.cond, noise, Some(&mut g))?;
                    }
                    Ok((loss, g))
                })
                .collect();
            let mut grad = vec![0.0; self.net.params.len()];
            let mut loss = 0.0;
            for p in partials {
                let (l, g) = p?;
                loss += l;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / self.config.batch as f64;
            loss *= scale;
            grad.iter_mut().for_each(|g| *g *= scale);

            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    step: self.step,
                    timesteps: draws.iter().map(|d| d.1).collect(),
                    batch: draws.iter().map(|d| d.0).collect(),
                });
            }
            nn::clip_grad_norm(&mut grad, self.config.grad_clip);
            self.optimizer.step(&mut self.net.params, &grad);

            let smooth = match self.smoothed_loss.last() {
                Some(&prev) => self.config.smoothing * prev + (1.0 - self.config.smoothing) * loss,
                None => loss,
            };
            self.loss_history.push(loss);
            self.smoothed_loss.push(smooth);
            self.step += 1;
        }
        Ok(())
    }
}

/// Trains `net` for `config.steps` steps.
pub fn train(
    examples: &[TrainExample],
    schedule: &NoiseSchedule,
    net: DenoiserNetwork,
    config: TrainConfig,
) -> Result<TrainState> {
    let steps = config.steps;
    let mut state = TrainState::new(net, examples, config)?;
    state.run(schedule, examples, steps)?;
    Ok(state)
}
