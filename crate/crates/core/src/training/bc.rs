//! Behavioral cloning from recorded two-player trajectories.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::agents::{Head, PolicyHandle, ScriptedAgent};
use crate::evaluation::{run_pairing_episodes, PairingSpec};
use crate::kitchen::{canonical_layout, Action, GameState, KitchenError, Layout};
use crate::nn::{masked_log_softmax, Adam};
use crate::observations::EncoderConfig;

/// File name used when a dataset is stored as a directory.
pub const DATASET_FILE: &str = "trajectories.json";

/// One recorded episode. `states[t]` is the state in which `joint_actions[t]`
/// was taken; a trailing final state is allowed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEpisode {
    pub layout: String,
    pub states: Vec<GameState>,
    pub joint_actions: Vec<[Action; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    /// Free-form provenance (importer, original file, row counts).
    #[serde(default)]
    pub source: serde_json::Value,
    pub episodes: Vec<TrajectoryEpisode>,
}

impl TrajectoryDataset {
    fn file(path: &Path) -> PathBuf {
        if path.is_dir() {
            path.join(DATASET_FILE)
        } else {
            path.to_path_buf()
        }
    }

    /// Load from a JSON file or a directory holding [`DATASET_FILE`].
    pub fn load(path: &Path) -> Result<TrajectoryDataset, TrainError> {
        let file = Self::file(path);
        let text = std::fs::read_to_string(&file).map_err(|e| TrainError::io(&file, e))?;
        serde_json::from_str(&text).map_err(|e| TrainError::Parse {
            path: file.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Write to `path`, or to `path/`[`DATASET_FILE`] when `path` is a directory.
    pub fn save(&self, path: &Path) -> Result<PathBuf, TrainError> {
        let file = Self::file(path);
        let text = serde_json::to_string(self).expect("dataset serializes");
        std::fs::write(&file, text).map_err(|e| TrainError::io(&file, e))?;
        Ok(file)
    }

    /// Check every episode against its bundled layout.
    pub fn validate(&self) -> Result<(), TrainError> {
        for (i, ep) in self.episodes.iter().enumerate() {
            let layout = canonical_layout(&ep.layout)?;
            ep.validate(&layout)
                .map_err(|e| TrainError::InvalidConfig(format!("episode {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn episodes_for<'a>(&'a self, layout: &'a str) -> impl Iterator<Item = &'a TrajectoryEpisode> + 'a {
        self.episodes.iter().filter(move |e| e.layout == layout)
    }
}

impl TrajectoryEpisode {
    pub fn validate(&self, layout: &Layout) -> Result<(), KitchenError> {
        let (n, m) = (self.states.len(), self.joint_actions.len());
        if n != m && n != m + 1 {
            return Err(KitchenError::BadLog(format!("{n} states for {m} joint actions")));
        }
        self.states.iter().try_for_each(|s| s.validate(layout))
    }
}

/// One (observation, action) training pair.
#[derive(Clone, Debug, PartialEq)]
pub struct BcSample {
    pub features: Vec<f32>,
    pub action: usize,
}

/// Samples for both seats of every step, skipping steps where both players
/// stayed.
pub fn bc_samples<'a>(
    episodes: impl IntoIterator<Item = &'a TrajectoryEpisode>,
    layout: &Layout,
    encoder: &EncoderConfig,
) -> Result<Vec<BcSample>, TrainError> {
    let mut out = Vec::new();
    for ep in episodes {
        for (state, joint) in ep.states.iter().zip(&ep.joint_actions) {
            if *joint == [Action::Stay, Action::Stay] {
                continue;
            }
            for (seat, action) in joint.iter().enumerate() {
                out.push(BcSample {
                    features: encoder.encode(state, layout, seat, None)?,
                    action: action.index(),
                });
            }
        }
    }
    Ok(out)
}

/// Per-action loss weights `N / (classes * count)`; absent actions get 0.
pub fn action_weights(actions: &[usize]) -> [f32; Action::COUNT] {
    let mut counts = [0usize; Action::COUNT];
    for &a in actions {
        counts[a] += 1;
    }
    let classes = counts.iter().filter(|&&c| c > 0).count().max(1);
    let n = actions.len() as f32;
    counts.map(|c| if c == 0 { 0.0 } else { n / (classes as f32 * c as f32) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub minibatch_size: usize,
    /// Weight the loss by inverse action frequency.
    pub weighted: bool,
    /// Episodes per half when ranking the two models.
    pub eval_trials: usize,
    pub seed: u64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            hidden: 64,
            epochs: 100,
            learning_rate: 1e-3,
            minibatch_size: 256,
            weighted: true,
            eval_trials: 4,
            seed: 0,
        }
    }
}

/// Fit a policy to `samples` by weighted cross-entropy.
pub fn fit_bc(
    id: &str,
    samples: &[BcSample],
    weights: &[f32; Action::COUNT],
    encoder: EncoderConfig,
    cfg: &BcConfig,
) -> Result<PolicyHandle, TrainError> {
    let Some(first) = samples.first() else {
        return Err(TrainError::EmptyAfterFilter(id.to_string()));
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = PolicyHandle::new(id, encoder, first.features.len(), cfg.hidden, Head::Primitive, &mut rng);
    let mut adam = Adam::new(&policy.actor, cfg.learning_rate);
    let dim = first.features.len();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.minibatch_size.max(1)) {
            let mut x = ndarray::Array2::<f32>::zeros((chunk.len(), dim));
            for (r, &i) in chunk.iter().enumerate() {
                x.row_mut(r).assign(&ndarray::ArrayView1::from(&samples[i].features));
            }
            let cache = policy.actor.forward_cached(x.view());
            let logits = cache.output();
            let total_w: f32 = chunk.iter().map(|&i| weights[samples[i].action]).sum();
            if total_w <= 0.0 {
                continue;
            }
            let mut grad = ndarray::Array2::<f32>::zeros(logits.raw_dim());
            let mut loss = 0.0f32;
            for (r, &i) in chunk.iter().enumerate() {
                let row: Vec<f32> = logits.row(r).to_vec();
                let logp = masked_log_softmax(&row, None);
                let (a, w) = (samples[i].action, weights[samples[i].action] / total_w);
                loss -= w * logp[a];
                for k in 0..row.len() {
                    grad[[r, k]] = w * (logp[k].exp() - if k == a { 1.0 } else { 0.0 });
                }
            }
            if !loss.is_finite() {
                return Err(TrainError::NanLoss {
                    update: epoch,
                    detail: format!("behavioral cloning loss {loss}"),
                });
            }
            let grads = policy.actor.backward(&cache, grad);
            adam.apply(&mut policy.actor, &grads);
        }
    }
    Ok(policy)
}

/// The two behavior-cloned models of one layout. `proxy` scored higher with
/// the scripted partner.
pub struct BcModels {
    pub proxy: PolicyHandle,
    pub bc: PolicyHandle,
    /// Mean scores with the scripted partner, `[proxy, bc]`.
    pub scores: [f64; 2],
}

/// Train one model per half of the layout's episodes (split by index
/// parity) and rank them by paired rollouts with the scripted agent.
pub fn train_bc(dataset: &TrajectoryDataset, layout: &Layout, cfg: &BcConfig) -> Result<BcModels, TrainError> {
    let encoder = EncoderConfig::features();
    let episodes: Vec<&TrajectoryEpisode> = dataset.episodes_for(layout.name()).collect();
    if episodes.is_empty() {
        return Err(TrainError::EmptyAfterFilter(format!("no episodes for {}", layout.name())));
    }
    let mut models = Vec::with_capacity(2);
    for half in 0..2 {
        let part = episodes.iter().enumerate().filter(|(i, _)| i % 2 == half).map(|(_, e)| *e);
        let samples = bc_samples(part, layout, &encoder)?;
        if samples.is_empty() {
            return Err(TrainError::EmptyAfterFilter(format!(
                "half {half} of {} has no steps besides joint stays",
                layout.name()
            )));
        }
        let actions: Vec<usize> = samples.iter().map(|s| s.action).collect();
        if actions.iter().all(|&a| a == actions[0]) {
            return Err(TrainError::SingleClassDegenerate(format!(
                "half {half} of {} only contains {}",
                layout.name(),
                Action::ALL[actions[0]].name()
            )));
        }
        let weights = if cfg.weighted {
            action_weights(&actions)
        } else {
            [1.0; Action::COUNT]
        };
        let mut half_cfg = cfg.clone();
        half_cfg.seed = cfg.seed.wrapping_add(half as u64);
        let id = format!("bc_{}_{half}", layout.name());
        let policy = fit_bc(&id, &samples, &weights, encoder.clone(), &half_cfg)?;
        let mut spec = PairingSpec::new(&policy, &ScriptedAgent, layout);
        spec.trials = cfg.eval_trials.max(1);
        let eps = run_pairing_episodes(&spec, cfg.seed ^ 0xbc)?;
        let score = eps.iter().map(|e| e.score() as f64).sum::<f64>() / eps.len() as f64;
        models.push((policy, score));
    }
    let (b, a) = (models.pop().expect("two halves"), models.pop().expect("two halves"));
    let (proxy, bc) = if b.1 > a.1 { (b, a) } else { (a, b) };
    Ok(BcModels {
        scores: [proxy.1, bc.1],
        proxy: proxy.0,
        bc: bc.0,
    })
}
