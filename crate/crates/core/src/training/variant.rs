//! Training recipes: flat PPO with a fixed partner set, or a worker followed
//! by a manager over the frozen worker.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    evaluate_worker, train_flat, train_manager, train_worker, ManagerView, Partner, PpoConfig, ShapingConfig, SubTaskUsageCounter,
    TrainError, WorkerEnvConfig, WorkerStats,
};
use crate::agents::{
    load_agent, save_flat_bundle, save_hierarchical_bundle, ActMode, Agent, HierarchicalAgent, Population,
    RandomAgent, ScriptedAgent,
};
use crate::kitchen::{canonical_layout, perturbed_layout, Layout};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Flat PPO with a behavior-cloned partner.
    Bcp,
    /// Flat PPO with a self-play population.
    Fcp,
    /// Hierarchical agent whose manager trains with a behavior-cloned partner.
    #[serde(rename = "ha2_bcp")]
    Ha2Bcp,
    /// Hierarchical agent whose manager trains with a self-play population.
    #[serde(rename = "ha2_fcp")]
    Ha2Fcp,
    /// Flat PPO in self-play (desk baseline).
    SelfPlay,
    /// Hierarchical agent whose manager trains in self-play (desk smoke run).
    #[serde(rename = "ha2_self_play")]
    Ha2SelfPlay,
}

impl Variant {
    pub fn is_hierarchical(self) -> bool {
        matches!(self, Variant::Ha2Bcp | Variant::Ha2Fcp | Variant::Ha2SelfPlay)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bcp => "bcp",
            Variant::Fcp => "fcp",
            Variant::Ha2Bcp => "ha2_bcp",
            Variant::Ha2Fcp => "ha2_fcp",
            Variant::SelfPlay => "self_play",
            Variant::Ha2SelfPlay => "ha2_self_play",
        }
    }
}

/// Where training partners come from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartnerSource {
    #[default]
    Random,
    Scripted,
    SelfPlay,
    /// A checkpoint file or bundle directory, e.g. a behavior-cloned model.
    Agent { path: String },
    /// Every member of a population manifest, with per-layout mid checkpoints.
    Population { path: PathBuf },
}

impl PartnerSource {
    /// Resolve once per layout so environments can share the loaded agents.
    pub fn resolve(&self, layouts: &[Layout]) -> Result<BTreeMap<String, Partner>, TrainError> {
        let mut out = BTreeMap::new();
        let shared: Option<Arc<dyn Agent>> = match self {
            PartnerSource::Random => Some(Arc::new(RandomAgent)),
            PartnerSource::Scripted => Some(Arc::new(ScriptedAgent)),
            PartnerSource::Agent { path } => Some(Arc::from(load_agent(path, ActMode::Stochastic)?)),
            _ => None,
        };
        let population = match self {
            PartnerSource::Population { path } => Some(Population::load(path)?),
            _ => None,
        };
        for layout in layouts {
            let partner = match (self, &shared, &population) {
                (PartnerSource::SelfPlay, _, _) => Partner::SelfPlay,
                (_, Some(agent), _) => Partner::Pool(vec![Arc::clone(agent)]),
                (_, None, Some(pop)) => Partner::Pool(
                    pop.members_for(layout.name())?
                        .into_iter()
                        .map(|p| Arc::new(p) as Arc<dyn Agent>)
                        .collect(),
                ),
                _ => unreachable!("every source resolves"),
            };
            out.insert(layout.name().to_string(), partner);
        }
        Ok(out)
    }
}

fn lookup(map: &BTreeMap<String, Partner>) -> impl Fn(&Layout) -> Result<Partner, TrainError> + '_ {
    |layout| {
        map.get(layout.name())
            .cloned()
            .ok_or_else(|| TrainError::InvalidConfig(format!("no partner for {}", layout.name())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkerStage {
    pub timesteps: u64,
    pub hidden: usize,
    pub teammate: PartnerSource,
    pub env: WorkerEnvConfig,
    /// Overrides the top-level PPO settings for this stage.
    pub ppo: Option<PpoConfig>,
    /// Sub-task episodes per layout in the post-training check.
    pub eval_episodes: u64,
}

impl Default for WorkerStage {
    fn default() -> Self {
        WorkerStage {
            timesteps: 2_000_000,
            hidden: 64,
            teammate: PartnerSource::Random,
            env: WorkerEnvConfig::default(),
            ppo: None,
            eval_episodes: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManagerStage {
    pub timesteps: u64,
    pub hidden: usize,
    pub view: ManagerView,
    pub ppo: Option<PpoConfig>,
}

impl Default for ManagerStage {
    fn default() -> Self {
        ManagerStage {
            timesteps: 2_000_000,
            hidden: 64,
            view: ManagerView::default(),
            ppo: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlatStage {
    pub timesteps: u64,
    pub hidden: usize,
    pub frame_stack: usize,
    pub shaping: ShapingConfig,
    pub ppo: Option<PpoConfig>,
}

impl Default for FlatStage {
    fn default() -> Self {
        FlatStage {
            timesteps: 4_000_000,
            hidden: 64,
            frame_stack: 1,
            shaping: ShapingConfig::default(),
            ppo: None,
        }
    }
}

/// A complete training run, read from TOML or JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub layouts: Vec<String>,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Training partners of the flat policy or the manager.
    #[serde(default)]
    pub partners: Option<PartnerSource>,
    #[serde(default)]
    pub ppo: PpoConfig,
    #[serde(default)]
    pub worker: WorkerStage,
    #[serde(default)]
    pub manager: ManagerStage,
    #[serde(default)]
    pub flat: FlatStage,
}

/// `~name` selects the modified variant of a bundled layout.
pub fn resolve_layout(name: &str) -> Result<Layout, TrainError> {
    Ok(match name.strip_prefix('~') {
        Some(base) => perturbed_layout(base)?,
        None => canonical_layout(name)?,
    })
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<TrainConfig, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| TrainError::Parse {
            path: path.display().to_string(),
            message,
        })
    }

    fn stage_ppo(&self, stage: &Option<PpoConfig>, timesteps: u64, salt: u64) -> PpoConfig {
        let mut ppo = stage.clone().unwrap_or_else(|| self.ppo.clone());
        ppo.total_timesteps = timesteps;
        ppo.seed = self.seed.wrapping_add(salt);
        ppo
    }

    /// Partner source for the main learner, checked against the variant.
    pub fn partner_source(&self) -> Result<PartnerSource, TrainError> {
        let src = match (self.variant, &self.partners) {
            (Variant::SelfPlay | Variant::Ha2SelfPlay, None) => PartnerSource::SelfPlay,
            (_, Some(p)) => p.clone(),
            (v, None) => {
                return Err(TrainError::InvalidConfig(format!("variant {} needs `partners`", v.name())))
            }
        };
        let ok = match self.variant {
            Variant::Fcp | Variant::Ha2Fcp => matches!(src, PartnerSource::Population { .. }),
            Variant::Bcp | Variant::Ha2Bcp => matches!(src, PartnerSource::Agent { .. }),
            Variant::SelfPlay | Variant::Ha2SelfPlay => src == PartnerSource::SelfPlay,
        };
        if !ok {
            return Err(TrainError::InvalidConfig(format!(
                "variant {} cannot train with partners {src:?}",
                self.variant.name()
            )));
        }
        Ok(src)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub variant: String,
    pub layouts: Vec<String>,
    pub bundle: PathBuf,
    pub timesteps: u64,
    pub final_mean_return: Option<f64>,
    /// Post-training worker check per layout (hierarchical variants).
    pub worker_stats: BTreeMap<String, WorkerStats>,
    pub worker_usage: Option<SubTaskUsageCounter>,
}

/// Run the recipe of `cfg.variant` and write the bundle, learning curves and
/// `summary.json` into `cfg.out_dir`.
pub fn train_variant(cfg: &TrainConfig) -> Result<TrainSummary, TrainError> {
    let layouts = cfg.layouts.iter().map(|n| resolve_layout(n)).collect::<Result<Vec<_>, _>>()?;
    if layouts.is_empty() {
        return Err(TrainError::InvalidConfig("no layouts".into()));
    }
    let source = cfg.partner_source()?;
    let out = &cfg.out_dir;
    std::fs::create_dir_all(out).map_err(|e| TrainError::io(out, e))?;
    let partners = source.resolve(&layouts)?;
    let mut summary = TrainSummary {
        variant: cfg.variant.name().into(),
        layouts: cfg.layouts.clone(),
        bundle: out.clone(),
        ..Default::default()
    };
    if cfg.variant.is_hierarchical() {
        let teammates = cfg.worker.teammate.resolve(&layouts)?;
        let w_ppo = cfg.stage_ppo(&cfg.worker.ppo, cfg.worker.timesteps, 1);
        let trained = train_worker(&layouts, &lookup(&teammates), &cfg.worker.env, cfg.worker.hidden, &w_ppo)?;
        trained.curve.save_csv(&out.join("worker_curve.csv"))?;
        for layout in &layouts {
            let pool = match &teammates[layout.name()] {
                Partner::Pool(p) => p.clone(),
                Partner::SelfPlay => unreachable!("rejected by train_worker"),
            };
            let stats = evaluate_worker(&trained.worker, layout, pool, &cfg.worker.env, cfg.worker.eval_episodes, cfg.seed)?;
            summary.worker_stats.insert(layout.name().to_string(), stats);
        }
        summary.worker_usage = Some(trained.usage);
        let worker = Arc::new(trained.worker);
        let m_ppo = cfg.stage_ppo(&cfg.manager.ppo, cfg.manager.timesteps, 2);
        let m = train_manager(&layouts, Arc::clone(&worker), &lookup(&partners), cfg.manager.hidden, &m_ppo, cfg.manager.view)?;
        m.curve.save_csv(&out.join("manager_curve.csv"))?;
        summary.timesteps = w_ppo.total_timesteps + m.timesteps;
        summary.final_mean_return = m.curve.last_mean();
        let agent = HierarchicalAgent::new(cfg.variant.name(), m.policy, (*worker).clone());
        save_hierarchical_bundle(out, &agent)?;
    } else {
        let f_ppo = cfg.stage_ppo(&cfg.flat.ppo, cfg.flat.timesteps, 3);
        let mut observer = |_: &super::UpdateReport, _: &crate::agents::PolicyHandle| Ok(());
        let f = train_flat(
            &layouts,
            &lookup(&partners),
            cfg.flat.hidden,
            cfg.flat.frame_stack,
            &cfg.flat.shaping,
            &f_ppo,
            &mut observer,
            None,
        )?;
        f.curve.save_csv(&out.join("curve.csv"))?;
        summary.timesteps = f.timesteps;
        summary.final_mean_return = f.curve.last_mean();
        save_flat_bundle(out, &f.policy)?;
    }
    let path = out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&path, text).map_err(|e| TrainError::io(&path, e))?;
    Ok(summary)
}
