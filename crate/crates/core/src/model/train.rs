//! Deterministic single-sample training with the Adam optimizer.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::TrainingSample;
use crate::model::backward::backward;
use crate::model::{ModelConfig, ModelParams};
use crate::objective::LossConfig;
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Step count, learning rate, and seed for one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: u64,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps: 2000, lr: 1e-3, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

/// Everything needed to continue or reproduce a training run: parameters,
/// both Adam moment sets, the step counter, and the run seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub m: ModelParams,
    pub v: ModelParams,
    pub step: u64,
    pub seed: u64,
}

impl TrainState {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if !self.params.all_finite() || !self.m.all_finite() || !self.v.all_finite() {
            return Err(Error::Numeric("training state contains non-finite values".into()));
        }
        Ok(())
    }
}

/// Fresh state: randomly initialized parameters, zero moments, step zero.
pub fn init_state(cfg: &ModelConfig, seed: u64) -> Result<TrainState> {
    Ok(TrainState {
        config: *cfg,
        params: ModelParams::init(cfg, seed)?,
        m: ModelParams::zeros(cfg),
        v: ModelParams::zeros(cfg),
        step: 0,
        seed,
    })
}

/// Outcome of a training run: the per-step loss values and, if a step
/// produced a non-finite loss or update, the index at which training
/// stopped (the state keeps the last good parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub trace: Vec<f64>,
    pub diverged_at: Option<u64>,
}

/// Keys each step's sample choice off (seed, step) so a resumed run draws
/// the same sequence it would have drawn uninterrupted.
fn step_sample_index(seed: u64, step: u64, len: usize) -> usize {
    // splitmix64 finalizer over the combined counter.
    let mut z = seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    let mut rng = ChaCha8Rng::seed_from_u64(z);
    (rng.next_u64() % len as u64) as usize
}

/// Runs `steps` Adam updates on `state`, drawing one uniformly chosen sample
/// per step. Parameters and moments are rounded to f32 precision after every
/// update so saved checkpoints reproduce the state exactly. On divergence
/// the last good state is kept and the run reports where it stopped.
pub fn train(
    state: &mut TrainState,
    dataset: &[TrainingSample],
    loss_cfg: &LossConfig,
    tc: &TrainConfig,
) -> Result<TrainRun> {
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    tc.validate()?;
    loss_cfg.validate()?;
    state.validate()?;

    let mut trace = Vec::with_capacity(tc.steps as usize);
    for _ in 0..tc.steps {
        let idx = step_sample_index(state.seed, state.step, dataset.len());
        let sample = &dataset[idx];
        let result = match backward(sample, &state.params, &state.config, loss_cfg, sample.seed) {
            Ok(r) if r.loss.is_finite() => r,
            Ok(_) | Err(Error::Numeric(_)) => {
                return Ok(TrainRun { trace, diverged_at: Some(state.step) });
            }
            Err(e) => return Err(e),
        };

        let before = (state.params.clone(), state.m.clone(), state.v.clone());
        let t = (state.step + 1) as i32;
        let bias1 = 1.0 - ADAM_BETA1.powi(t);
        let bias2 = 1.0 - ADAM_BETA2.powi(t);
        {
            let grads = result.grads.named();
            let params = state.params.named_mut();
            let ms = state.m.named_mut();
            let vs = state.v.named_mut();
            for (((g, p), m), v) in grads.into_iter().zip(params).zip(ms).zip(vs) {
                let gs = g.1.as_slice();
                let ps = p.1.into_slice_mut();
                let msl = m.1.into_slice_mut();
                let vsl = v.1.into_slice_mut();
                for i in 0..gs.len() {
                    let grad = gs[i];
                    msl[i] = ADAM_BETA1 * msl[i] + (1.0 - ADAM_BETA1) * grad;
                    vsl[i] = ADAM_BETA2 * vsl[i] + (1.0 - ADAM_BETA2) * grad * grad;
                    let mhat = msl[i] / bias1;
                    let vhat = vsl[i] / bias2;
                    ps[i] -= tc.lr * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            }
        }
        state.params.round_to_f32();
        state.m.round_to_f32();
        state.v.round_to_f32();

        if !state.params.all_finite() || !state.m.all_finite() || !state.v.all_finite() {
            (state.params, state.m, state.v) = before;
            return Ok(TrainRun { trace, diverged_at: Some(state.step) });
        }
        trace.push(result.loss);
        state.step += 1;
    }
    Ok(TrainRun { trace, diverged_at: None })
}
