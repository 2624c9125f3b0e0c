//! Clipped-surrogate PPO with GAE, separate actor and critic networks.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::agents::PolicyHandle;
use crate::nn::{masked_log_softmax, sample_log_probs, Adam, Gradients, Mlp, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub learning_rate: f64,
    /// Linearly decay the learning rate to zero over training.
    pub lr_decay: bool,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub gae_lambda: f64,
    pub gamma: f64,
    /// Steps collected per environment stream before each update.
    pub rollout_len: usize,
    pub minibatch_size: usize,
    pub epochs: usize,
    pub num_envs: usize,
    pub total_timesteps: u64,
    pub seed: u64,
    pub max_grad_norm: f64,
    /// A value loss above this aborts training.
    pub value_loss_limit: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            learning_rate: 3e-4,
            lr_decay: true,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            gae_lambda: 0.95,
            gamma: 0.99,
            rollout_len: 256,
            minibatch_size: 2048,
            epochs: 4,
            num_envs: 8,
            total_timesteps: 1_000_000,
            seed: 0,
            max_grad_norm: 0.5,
            value_loss_limit: 1e8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0) || !(self.value_coef > 0.0) || self.entropy_coef < 0.0 {
            return bad("learning rate and value coefficient must be positive, entropy non-negative");
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return bad("clip must lie in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || !(self.gae_lambda > 0.0 && self.gae_lambda <= 1.0) {
            return bad("gamma and lambda must lie in (0, 1]");
        }
        if self.rollout_len == 0 || self.minibatch_size == 0 || self.epochs == 0 || self.num_envs == 0 {
            return bad("rollout length, minibatch size, epochs and env count must be positive");
        }
        Ok(())
    }
}

/// What a learner seat sees before acting.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub input: Vec<f32>,
    /// Allowed actions; `None` allows all.
    pub mask: Option<Vec<bool>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeatStep {
    pub reward: f32,
    pub done: bool,
    /// Set when an episode finished; logged on the learning curve.
    pub episode_return: Option<f64>,
}

/// An environment with one or more seats driven by the learning policy.
/// Episodes reset automatically.
pub trait LearnerEnv {
    fn seats(&self) -> usize;
    fn observe(&mut self) -> Result<Vec<Observation>, TrainError>;
    fn step(&mut self, actions: &[usize]) -> Result<Vec<SeatStep>, TrainError>;
    /// Fraction of the training budget spent so far.
    fn set_progress(&mut self, _fraction: f64) {}
}

pub type EnvFactory<'a> = dyn FnMut(usize) -> Result<Box<dyn LearnerEnv>, TrainError> + 'a;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub timesteps: u64,
    pub mean_return: f64,
    pub sem: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timesteps,mean_return,sem\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.timesteps, p.mean_return, p.sem));
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut f = std::fs::File::create(path).map_err(|e| TrainError::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| TrainError::io(path, e))
    }

    pub fn last_mean(&self) -> Option<f64> {
        self.points.last().map(|p| p.mean_return)
    }
}

pub fn mean_sem(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Summary of one PPO update passed to the observer callback.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateReport {
    pub update: usize,
    pub num_updates: usize,
    pub timesteps: u64,
    pub episode_returns: Vec<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    /// Fraction of final-epoch samples whose probability ratio stayed
    /// within `[1 - 2 clip, 1 + 2 clip]`.
    pub ratio_in_band: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub policy: PolicyHandle,
    pub curve: LearningCurve,
    pub updates: usize,
    pub timesteps: u64,
    /// Ratio-band fraction pooled over all updates.
    pub ratio_in_band: f64,
}

/// One minibatch for the policy loss.
pub struct PolicyBatch<'a, F> {
    pub inputs: ArrayView2<'a, F>,
    /// Row-major `[batch, actions]`; `None` allows everything.
    pub masks: Option<&'a [bool]>,
    pub actions: &'a [usize],
    pub old_log_probs: &'a [F],
    pub advantages: &'a [F],
}

pub struct PolicyLoss<F> {
    pub loss: F,
    pub entropy: F,
    pub grads: Gradients<F>,
    pub ratios: Vec<F>,
}

/// Clipped surrogate plus entropy bonus, averaged over the batch, and its
/// gradient with respect to the actor parameters.
pub fn policy_loss_and_grad<F: Scalar>(
    actor: &Mlp<F>,
    batch: &PolicyBatch<'_, F>,
    clip: F,
    entropy_coef: F,
) -> PolicyLoss<F> {
    let cache = actor.forward_cached(batch.inputs);
    let logits = cache.output();
    let (n, k) = logits.dim();
    let nf = F::from_usize(n).expect("batch size");
    let mut grad = Array2::<F>::zeros((n, k));
    let mut loss = F::zero();
    let mut entropy_sum = F::zero();
    let mut ratios = Vec::with_capacity(n);
    let one = F::one();
    for i in 0..n {
        let row: Vec<F> = logits.row(i).to_vec();
        let mask = batch.masks.map(|m| &m[i * k..(i + 1) * k]);
        let lp = masked_log_softmax(&row, mask);
        let a = batch.actions[i];
        let adv = batch.advantages[i];
        let ratio = (lp[a] - batch.old_log_probs[i]).exp();
        ratios.push(ratio);
        let clipped = ratio.max(one - clip).min(one + clip);
        let surrogate = (ratio * adv).min(clipped * adv);
        // the unclipped branch is the minimum unless clipping binds
        let active = !((adv > F::zero() && ratio > one + clip) || (adv < F::zero() && ratio < one - clip));
        let d_logp = if active { -adv * ratio } else { F::zero() };
        let mut h = F::zero();
        for &l in &lp {
            if l != F::neg_infinity() {
                h -= l.exp() * l;
            }
        }
        loss = loss - surrogate - entropy_coef * h;
        entropy_sum += h;
        for j in 0..k {
            if lp[j] == F::neg_infinity() {
                continue;
            }
            let p = lp[j].exp();
            let indicator = if j == a { one } else { F::zero() };
            grad[[i, j]] = (d_logp * (indicator - p) + entropy_coef * p * (lp[j] + h)) / nf;
        }
    }
    PolicyLoss {
        loss: loss / nf,
        entropy: entropy_sum / nf,
        grads: actor.backward(&cache, grad),
        ratios,
    }
}

/// `value_coef * 0.5 * mean((V - R)^2)` and its gradient.
pub fn value_loss_and_grad<F: Scalar>(
    critic: &Mlp<F>,
    inputs: ArrayView2<'_, F>,
    returns: &[F],
    value_coef: F,
) -> (F, Gradients<F>) {
    let cache = critic.forward_cached(inputs);
    let v = cache.output();
    let n = v.nrows();
    let nf = F::from_usize(n).expect("batch size");
    let half = F::from_f64(0.5).expect("constant");
    let mut grad = Array2::<F>::zeros((n, 1));
    let mut loss = F::zero();
    for i in 0..n {
        let d = v[[i, 0]] - returns[i];
        loss += half * d * d;
        grad[[i, 0]] = value_coef * d / nf;
    }
    (value_coef * loss / nf, critic.backward(&cache, grad))
}

/// Generalized advantage estimates for a `[T, S]` rollout stored row-major
/// by time. Returns `(advantages, returns)`.
pub fn compute_gae(
    rewards: &[f32],
    values: &[f32],
    dones: &[bool],
    last_values: &[f32],
    streams: usize,
    gamma: f64,
    lambda: f64,
) -> (Vec<f32>, Vec<f32>) {
    let n = rewards.len();
    let steps = n / streams;
    let mut adv = vec![0f32; n];
    let (gamma, lambda) = (gamma as f32, lambda as f32);
    for s in 0..streams {
        let mut running = 0f32;
        for t in (0..steps).rev() {
            let i = t * streams + s;
            let next_value = if t + 1 == steps { last_values[s] } else { values[i + streams] };
            let live = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * next_value * live - values[i];
            running = delta + gamma * lambda * live * running;
            adv[i] = running;
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

fn clip_grad_norm(grads: &mut Gradients<f32>, max_norm: f64) {
    let norm = (grads.norm_sq() as f64).sqrt();
    if norm > max_norm && norm > 0.0 {
        grads.scale((max_norm / norm) as f32);
    }
}

fn stack_rows(rows: &[&[f32]], dim: usize) -> Array2<f32> {
    let mut flat = Vec::with_capacity(rows.len() * dim);
    for r in rows {
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), dim), flat).expect("rows share a width")
}

/// Train `policy` with PPO on environments from `env_factory` (called with
/// `0..num_envs`). `observer` sees every update; returning an error aborts.
pub fn ppo_train(
    env_factory: &mut EnvFactory<'_>,
    mut policy: PolicyHandle,
    cfg: &PpoConfig,
    observer: &mut dyn FnMut(&UpdateReport, &PolicyHandle) -> Result<(), TrainError>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let mut envs = (0..cfg.num_envs).map(&mut *env_factory).collect::<Result<Vec<_>, _>>()?;
    let streams: usize = envs.iter().map(|e| e.seats()).sum();
    let dim = policy.spec.input_dim;
    let k = policy.spec.head.size();
    let batch = cfg.rollout_len * streams;
    let num_updates = if cfg.total_timesteps == 0 {
        0
    } else {
        (cfg.total_timesteps as usize).div_ceil(batch)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut actor_opt = Adam::new(&policy.actor, cfg.learning_rate);
    let mut critic_opt = Adam::new(&policy.critic, cfg.learning_rate);
    let mut curve = LearningCurve::default();
    let mut timesteps = 0u64;
    let (mut in_band, mut ratio_total) = (0usize, 0usize);

    let mut current: Vec<Observation> = Vec::with_capacity(streams);
    for env in &mut envs {
        current.extend(env.observe()?);
    }

    for update in 0..num_updates {
        let progress = update as f64 / num_updates as f64;
        let lr = if cfg.lr_decay { cfg.learning_rate * (1.0 - progress) } else { cfg.learning_rate };
        actor_opt.lr = lr as f32;
        critic_opt.lr = lr as f32;
        for env in &mut envs {
            env.set_progress(progress);
        }

        let mut inputs: Vec<f32> = Vec::with_capacity(batch * dim);
        let mut masks: Vec<bool> = Vec::with_capacity(batch * k);
        let mut any_mask = false;
        let mut actions = Vec::with_capacity(batch);
        let mut log_probs = Vec::with_capacity(batch);
        let mut values = Vec::with_capacity(batch);
        let mut rewards = Vec::with_capacity(batch);
        let mut dones = Vec::with_capacity(batch);
        let mut episode_returns = Vec::new();

        for _ in 0..cfg.rollout_len {
            let rows: Vec<&[f32]> = current.iter().map(|o| o.input.as_slice()).collect();
            let x = stack_rows(&rows, dim);
            let logits = policy.actor.forward(x.view());
            let v = policy.critic.forward(x.view());
            let mut step_actions = Vec::with_capacity(streams);
            for (s, obs) in current.iter().enumerate() {
                let row = logits.row(s).to_vec();
                let lp = masked_log_softmax(&row, obs.mask.as_deref());
                let a = sample_log_probs(&lp, &mut rng);
                step_actions.push(a);
                log_probs.push(lp[a]);
                values.push(v[[s, 0]]);
                inputs.extend_from_slice(&obs.input);
                match &obs.mask {
                    Some(m) => {
                        any_mask = true;
                        masks.extend_from_slice(m);
                    }
                    None => masks.extend(std::iter::repeat_n(true, k)),
                }
            }
            actions.extend_from_slice(&step_actions);
            let mut offset = 0;
            current.clear();
            for env in &mut envs {
                let n = env.seats();
                for st in env.step(&step_actions[offset..offset + n])? {
                    rewards.push(st.reward);
                    dones.push(st.done);
                    episode_returns.extend(st.episode_return);
                }
                current.extend(env.observe()?);
                offset += n;
            }
        }
        timesteps += batch as u64;

        let rows: Vec<&[f32]> = current.iter().map(|o| o.input.as_slice()).collect();
        let last_values: Vec<f32> = policy.critic.forward(stack_rows(&rows, dim).view()).column(0).to_vec();
        let (advantages, returns) =
            compute_gae(&rewards, &values, &dones, &last_values, streams, cfg.gamma, cfg.gae_lambda);

        let inputs = Array2::from_shape_vec((batch, dim), inputs).expect("rollout inputs");
        let mut order: Vec<usize> = (0..batch).collect();
        let mb = cfg.minibatch_size.min(batch);
        let (mut p_loss, mut v_loss, mut ent, mut n_mb) = (0.0, 0.0, 0.0, 0usize);
        let (mut band_hits, mut band_total) = (0usize, 0usize);
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(mb) {
                let x = inputs.select(ndarray::Axis(0), chunk);
                let a: Vec<usize> = chunk.iter().map(|&i| actions[i]).collect();
                let old: Vec<f32> = chunk.iter().map(|&i| log_probs[i]).collect();
                let ret: Vec<f32> = chunk.iter().map(|&i| returns[i]).collect();
                let mut adv: Vec<f32> = chunk.iter().map(|&i| advantages[i]).collect();
                let (m, s) = mean_std(&adv);
                for v in &mut adv {
                    *v = (*v - m) / (s + 1e-8);
                }
                let mask_rows: Vec<bool> = if any_mask {
                    chunk.iter().flat_map(|&i| masks[i * k..(i + 1) * k].iter().copied()).collect()
                } else {
                    Vec::new()
                };
                let pb = PolicyBatch {
                    inputs: x.view(),
                    masks: any_mask.then_some(mask_rows.as_slice()),
                    actions: &a,
                    old_log_probs: &old,
                    advantages: &adv,
                };
                let mut pl = policy_loss_and_grad(&policy.actor, &pb, cfg.clip as f32, cfg.entropy_coef as f32);
                let (vl, mut vg) = value_loss_and_grad(&policy.critic, x.view(), &ret, cfg.value_coef as f32);
                if !pl.loss.is_finite() || !vl.is_finite() || !pl.grads.norm_sq().is_finite() {
                    return Err(TrainError::NanLoss {
                        update,
                        detail: format!("policy loss {}, value loss {vl}, entropy {}", pl.loss, pl.entropy),
                    });
                }
                if vl as f64 > cfg.value_loss_limit {
                    return Err(TrainError::DivergedValueFunction {
                        update,
                        value_loss: vl as f64,
                    });
                }
                if epoch + 1 == cfg.epochs {
                    let lo = 1.0 - 2.0 * cfg.clip as f32;
                    let hi = 1.0 + 2.0 * cfg.clip as f32;
                    band_hits += pl.ratios.iter().filter(|r| **r >= lo && **r <= hi).count();
                    band_total += pl.ratios.len();
                }
                clip_grad_norm(&mut pl.grads, cfg.max_grad_norm);
                clip_grad_norm(&mut vg, cfg.max_grad_norm);
                actor_opt.apply(&mut policy.actor, &pl.grads);
                critic_opt.apply(&mut policy.critic, &vg);
                p_loss += pl.loss as f64;
                v_loss += vl as f64;
                ent += pl.entropy as f64;
                n_mb += 1;
            }
        }
        in_band += band_hits;
        ratio_total += band_total;

        if !episode_returns.is_empty() {
            let (mean, sem) = mean_sem(&episode_returns);
            curve.points.push(CurvePoint {
                timesteps,
                mean_return: mean,
                sem,
            });
        }
        let report = UpdateReport {
            update,
            num_updates,
            timesteps,
            episode_returns,
            policy_loss: p_loss / n_mb as f64,
            value_loss: v_loss / n_mb as f64,
            entropy: ent / n_mb as f64,
            ratio_in_band: band_hits as f64 / band_total.max(1) as f64,
        };
        observer(&report, &policy)?;
    }

    Ok(TrainOutcome {
        policy,
        curve,
        updates: num_updates,
        timesteps,
        ratio_in_band: if ratio_total == 0 { 1.0 } else { in_band as f64 / ratio_total as f64 },
    })
}

fn mean_std(xs: &[f32]) -> (f32, f32) {
    let n = xs.len() as f32;
    let m = xs.iter().sum::<f32>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f32>() / n;
    (m, var.sqrt())
}
