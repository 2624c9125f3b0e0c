//! Self-play partner population: each base agent is trained on all layouts
//! at once and kept at three stages.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{train_flat, Partner, PpoConfig, ShapingConfig, TrainError, UpdateReport};
use crate::agents::{save_checkpoint, CheckpointStage, Head, PolicyHandle, Population, PopulationEntry, PopulationTags};
use crate::evaluation::self_play_score;
use crate::kitchen::Layout;
use crate::observations::EncoderConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PopulationConfig {
    pub seeds: Vec<u64>,
    pub hidden_dims: Vec<usize>,
    /// Whether each base agent stacks frames; the stack depth is `stack_depth`.
    pub frame_stacks: Vec<bool>,
    pub stack_depth: usize,
    pub ppo: PpoConfig,
    pub shaping: ShapingConfig,
    /// Intermediate checkpoints evaluated when choosing the mid stage.
    pub snapshots: usize,
    pub eval_trials: usize,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            seeds: vec![0, 1],
            hidden_dims: vec![64, 256],
            frame_stacks: vec![false, true],
            stack_depth: 4,
            ppo: PpoConfig::default(),
            shaping: ShapingConfig::default(),
            snapshots: 10,
            eval_trials: 2,
        }
    }
}

impl PopulationConfig {
    pub fn tags(&self) -> Vec<PopulationTags> {
        let mut out = Vec::new();
        for &seed in &self.seeds {
            for &hidden_dim in &self.hidden_dims {
                for &frame_stack in &self.frame_stacks {
                    out.push(PopulationTags {
                        seed,
                        hidden_dim,
                        frame_stack,
                    });
                }
            }
        }
        out
    }
}

fn base_name(t: &PopulationTags) -> String {
    format!("sp_s{}_h{}_{}", t.seed, t.hidden_dim, if t.frame_stack { "fs" } else { "nofs" })
}

/// Index of the score closest to `best / 2`; earliest wins ties.
pub fn mid_index(scores: &[f64], best: f64) -> usize {
    let target = best / 2.0;
    let mut pick = 0;
    for (i, s) in scores.iter().enumerate() {
        if (s - target).abs() < (scores[pick] - target).abs() {
            pick = i;
        }
    }
    pick
}

struct Snapshot {
    rel: String,
    scores: Vec<f64>,
}

fn snapshot(
    policy: &PolicyHandle,
    rel: String,
    out_dir: &Path,
    layouts: &[Layout],
    trials: usize,
    seed: u64,
) -> Result<Snapshot, TrainError> {
    save_checkpoint(policy, &out_dir.join(&rel))?;
    let scores = layouts
        .iter()
        .map(|l| self_play_score(policy, l, trials, seed))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Snapshot { rel, scores })
}

/// Train every tag combination by self-play on `layouts` and write the
/// checkpoints plus `population.json` under `out_dir`.
pub fn train_selfplay_population(
    layouts: &[Layout],
    cfg: &PopulationConfig,
    out_dir: &Path,
) -> Result<Population, TrainError> {
    let tags = cfg.tags();
    if tags.is_empty() || layouts.is_empty() {
        return Err(TrainError::InvalidConfig("population needs tags and layouts".into()));
    }
    let mut pop = Population {
        root: out_dir.to_path_buf(),
        ..Default::default()
    };
    for t in &tags {
        let base = base_name(t);
        let dir = out_dir.join(&base);
        std::fs::create_dir_all(&dir).map_err(|e| TrainError::io(&dir, e))?;
        let mut ppo = cfg.ppo.clone();
        ppo.seed = t.seed;
        let stack = if t.frame_stack { cfg.stack_depth } else { 1 };
        let eval_seed = t.seed.wrapping_mul(31);
        let num_updates = ppo.total_timesteps.div_ceil((ppo.rollout_len * ppo.num_envs) as u64).max(1) as usize;
        let every = (num_updates / cfg.snapshots.max(1)).max(1);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(t.seed ^ 0xf1a7);
        let encoder = EncoderConfig::egocentric().with_frame_stack(stack);
        let init = PolicyHandle::for_layout(&base, encoder, &layouts[0], t.hidden_dim, Head::Primitive, &mut rng);
        let init_rel = format!("{base}/init.ckpt");
        let mut snaps = vec![snapshot(&init, init_rel.clone(), out_dir, layouts, cfg.eval_trials, eval_seed)?];
        let mut observer = |r: &UpdateReport, p: &PolicyHandle| -> Result<(), TrainError> {
            if r.update.is_multiple_of(every) && r.update < r.num_updates {
                let rel = format!("{base}/step_{}.ckpt", r.timesteps);
                snaps.push(snapshot(p, rel, out_dir, layouts, cfg.eval_trials, eval_seed)?);
            }
            Ok(())
        };
        let self_play = |_: &Layout| Ok(Partner::SelfPlay);
        let out = train_flat(layouts, &self_play, t.hidden_dim, stack, &cfg.shaping, &ppo, &mut observer, Some(init))?;
        let final_rel = format!("{base}/final.ckpt");
        snaps.push(snapshot(&out.policy, final_rel.clone(), out_dir, layouts, cfg.eval_trials, eval_seed)?);
        let curve = dir.join("curve.csv");
        out.curve.save_csv(&curve)?;
        // Mid candidates exclude the init and final checkpoints when
        // intermediate ones exist.
        let inner = if snaps.len() > 2 { &snaps[1..snaps.len() - 1] } else { &snaps[..] };
        let mut default_mid = None;
        for (li, layout) in layouts.iter().enumerate() {
            let best = snaps.iter().map(|s| s.scores[li]).fold(f64::NEG_INFINITY, f64::max);
            let candidates: Vec<f64> = inner.iter().map(|s| s.scores[li]).collect();
            let pick = &inner[mid_index(&candidates, best)];
            default_mid.get_or_insert_with(|| pick.rel.clone());
            pop.mid_table
                .entry(layout.name().to_string())
                .or_default()
                .insert(base.clone(), pick.rel.clone());
        }
        for (stage, path) in [
            (CheckpointStage::Init, init_rel),
            (CheckpointStage::Mid, default_mid.expect("one layout")),
            (CheckpointStage::Final, final_rel),
        ] {
            pop.entries.push(PopulationEntry {
                base: base.clone(),
                tags: *t,
                stage,
                path,
            });
        }
    }
    pop.save(out_dir)?;
    Ok(pop)
}
