//! Learning pipelines: PPO, worker and manager environments, self-play
//! populations, behavioral cloning and the variant recipes built on them.

mod bc;
mod import;
mod population;
mod ppo;
mod sampler;
mod team_env;
mod variant;
mod worker_env;

use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;

use thiserror::Error;

use crate::agents::{Agent, AgentError, Head, PolicyHandle};
use crate::kitchen::{KitchenError, Layout};
use crate::observations::{EncoderConfig, ObservationError};
use crate::subtasks::SubTask;

pub use bc::{
    action_weights, bc_samples, fit_bc, train_bc, BcConfig, BcModels, BcSample, TrajectoryDataset, TrajectoryEpisode,
    DATASET_FILE,
};
pub use import::{import_human_dataset, layout_alias, ImportSummary};
pub use population::{mid_index, train_selfplay_population, PopulationConfig};
pub use ppo::{
    compute_gae, mean_sem, policy_loss_and_grad, ppo_train, value_loss_and_grad, CurvePoint, EnvFactory,
    LearnerEnv, LearningCurve, Observation, PolicyBatch, PolicyLoss, PpoConfig, SeatStep, TrainOutcome,
    UpdateReport,
};
pub use sampler::{sample_subtask, SubTaskUsageCounter};
pub use team_env::{Learner, Partner, ShapingConfig, TeamEnv};
pub use variant::{
    resolve_layout, train_variant, FlatStage, ManagerStage, PartnerSource, TrainConfig, TrainSummary, Variant, WorkerStage,
};
pub use worker_env::{
    natural_targets, worker_reward, WorkerEnd, WorkerEnv, WorkerEnvConfig, WorkerEpisodeSpec, WorkerStats,
    WorkerTransition,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("NanLoss at update {update}: {detail}")]
    NanLoss { update: usize, detail: String },
    #[error("DivergedValueFunction at update {update}: value loss {value_loss}")]
    DivergedValueFunction { update: usize, value_loss: f64 },
    #[error("NoFeasibleSubTask")]
    NoFeasibleSubTask,
    #[error("MaskedActionChosen: {0}")]
    MaskedActionChosen(SubTask),
    #[error("EmptyAfterFilter: {0}")]
    EmptyAfterFilter(String),
    #[error("SingleClassDegenerate: {0}")]
    SingleClassDegenerate(String),
    #[error(transparent)]
    Kitchen(#[from] KitchenError),
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Eval(#[from] crate::evaluation::EvalError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> TrainError {
        TrainError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Smallest full-grid canvas that fits every layout.
pub fn canvas_for(layouts: &[Layout]) -> (usize, usize) {
    let h = layouts.iter().map(Layout::height).max().unwrap_or(1);
    let w = layouts.iter().map(Layout::width).max().unwrap_or(1);
    (h, w)
}

/// Partner assignment per training layout.
pub type PartnerFn<'a> = dyn Fn(&Layout) -> Result<Partner, TrainError> + 'a;

fn no_observer(_: &UpdateReport, _: &PolicyHandle) -> Result<(), TrainError> {
    Ok(())
}

/// Result of training a worker.
pub struct WorkerTraining {
    pub worker: PolicyHandle,
    pub curve: LearningCurve,
    pub stats: WorkerStats,
    pub usage: SubTaskUsageCounter,
    pub ratio_in_band: f64,
}

/// Train a goal-conditioned worker with PPO on `layouts` (environment `i`
/// uses layout `i % len`).
pub fn train_worker(
    layouts: &[Layout],
    teammates: &PartnerFn<'_>,
    env_cfg: &WorkerEnvConfig,
    hidden: usize,
    ppo: &PpoConfig,
) -> Result<WorkerTraining, TrainError> {
    if layouts.is_empty() {
        return Err(TrainError::InvalidConfig("no layouts".into()));
    }
    let encoder = EncoderConfig::egocentric().with_goal_layer();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ppo.seed);
    let init = PolicyHandle::for_layout("worker", encoder.clone(), &layouts[0], hidden, Head::Primitive, &mut rng);
    let counter = Arc::new(Mutex::new(SubTaskUsageCounter::default()));
    let stats = Arc::new(Mutex::new(Vec::<Arc<Mutex<WorkerStats>>>::new()));
    let mut factory = |i: usize| -> Result<Box<dyn LearnerEnv>, TrainError> {
        let layout = &layouts[i % layouts.len()];
        let pool = match teammates(layout)? {
            Partner::Pool(pool) => pool,
            Partner::SelfPlay => {
                return Err(TrainError::InvalidConfig("the worker needs a fixed teammate, not self-play".into()))
            }
        };
        let env = WorkerEnv::new(
            layout.clone(),
            env_cfg.clone(),
            encoder.clone(),
            pool,
            Arc::clone(&counter),
            ppo.seed.wrapping_mul(7919).wrapping_add(i as u64 + 1),
        )?;
        let cell = Arc::new(Mutex::new(WorkerStats::default()));
        stats.lock().expect("stats lock").push(Arc::clone(&cell));
        Ok(Box::new(StatsTap { env, cell }))
    };
    let out = ppo_train(&mut factory, init, ppo, &mut no_observer)?;
    let mut total = WorkerStats::default();
    for cell in stats.lock().expect("stats lock").iter() {
        let s = *cell.lock().expect("cell lock");
        total.completed += s.completed;
        total.wrong_interact += s.wrong_interact;
        total.timeout += s.timeout;
        total.truncated += s.truncated;
    }
    let usage = counter.lock().expect("counter lock").clone();
    Ok(WorkerTraining {
        worker: out.policy,
        curve: out.curve,
        stats: total,
        usage,
        ratio_in_band: out.ratio_in_band,
    })
}

/// Mirrors a worker env's statistics into a shared cell after every step.
struct StatsTap {
    env: WorkerEnv,
    cell: Arc<Mutex<WorkerStats>>,
}

impl LearnerEnv for StatsTap {
    fn seats(&self) -> usize {
        1
    }

    fn observe(&mut self) -> Result<Vec<Observation>, TrainError> {
        self.env.observe()
    }

    fn step(&mut self, actions: &[usize]) -> Result<Vec<SeatStep>, TrainError> {
        let out = self.env.step(actions)?;
        *self.cell.lock().expect("cell lock") = self.env.stats;
        Ok(out)
    }
}

/// Run a trained worker on fresh sub-task episodes and report how they ended.
pub fn evaluate_worker(
    worker: &PolicyHandle,
    layout: &Layout,
    teammates: Vec<Arc<dyn Agent>>,
    env_cfg: &WorkerEnvConfig,
    episodes: u64,
    seed: u64,
) -> Result<WorkerStats, TrainError> {
    let mut env = WorkerEnv::new(
        layout.clone(),
        env_cfg.clone(),
        worker.encoder.clone(),
        teammates,
        Arc::default(),
        seed,
    )?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let total = |s: &WorkerStats| s.completed + s.wrong_interact + s.timeout + s.truncated;
    while total(&env.stats) < episodes {
        let input = env.observation()?;
        let logits = worker.logits(&input);
        let a = worker.choose(&logits, None, &mut rng);
        env.step_action(crate::kitchen::Action::from_index(a).expect("6-way head"))?;
    }
    Ok(env.stats)
}

/// What the manager observes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ManagerView {
    /// The 7×7 crop around its own player, like the worker.
    #[default]
    Egocentric,
    /// The whole grid padded to a `[height, width]` canvas; the largest
    /// training layout when unset.
    FullGrid { canvas: Option<[usize; 2]> },
}

impl ManagerView {
    pub fn encoder(self, layouts: &[Layout]) -> EncoderConfig {
        match self {
            ManagerView::Egocentric => EncoderConfig::egocentric(),
            ManagerView::FullGrid { canvas } => {
                let (h, w) = canvas.map(|[h, w]| (h, w)).unwrap_or_else(|| canvas_for(layouts));
                EncoderConfig::full_grid(h, w)
            }
        }
    }
}

/// Train a manager over a frozen worker. `partner` fills the other seat.
pub fn train_manager(
    layouts: &[Layout],
    worker: Arc<PolicyHandle>,
    partners: &PartnerFn<'_>,
    hidden: usize,
    ppo: &PpoConfig,
    view: ManagerView,
) -> Result<TrainOutcome, TrainError> {
    if layouts.is_empty() {
        return Err(TrainError::InvalidConfig("no layouts".into()));
    }
    let encoder = view.encoder(layouts);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ppo.seed ^ 0x3a9a);
    let init = PolicyHandle::for_layout("manager", encoder.clone(), &layouts[0], hidden, Head::SubTask, &mut rng);
    let learner = Learner::Manager {
        encoder,
        worker,
        feasibility: Default::default(),
    };
    let mut factory = |i: usize| -> Result<Box<dyn LearnerEnv>, TrainError> {
        Ok(Box::new(TeamEnv::new(
            layouts[i % layouts.len()].clone(),
            learner.clone(),
            partners(&layouts[i % layouts.len()])?,
            ppo.seed.wrapping_mul(104_729).wrapping_add(i as u64 + 1),
        )?))
    };
    ppo_train(&mut factory, init, ppo, &mut no_observer)
}

/// Train a flat primitive-action policy with the egocentric view.
pub fn train_flat(
    layouts: &[Layout],
    partners: &PartnerFn<'_>,
    hidden: usize,
    frame_stack: usize,
    shaping: &ShapingConfig,
    ppo: &PpoConfig,
    observer: &mut dyn FnMut(&UpdateReport, &PolicyHandle) -> Result<(), TrainError>,
    init: Option<PolicyHandle>,
) -> Result<TrainOutcome, TrainError> {
    if layouts.is_empty() {
        return Err(TrainError::InvalidConfig("no layouts".into()));
    }
    let encoder = EncoderConfig::egocentric().with_frame_stack(frame_stack);
    let init = match init {
        Some(p) => p,
        None => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ppo.seed ^ 0xf1a7);
            PolicyHandle::for_layout("flat", encoder.clone(), &layouts[0], hidden, Head::Primitive, &mut rng)
        }
    };
    let learner = Learner::Flat {
        encoder: init.encoder.clone(),
        shaping: shaping.clone(),
    };
    let mut factory = |i: usize| -> Result<Box<dyn LearnerEnv>, TrainError> {
        Ok(Box::new(TeamEnv::new(
            layouts[i % layouts.len()].clone(),
            learner.clone(),
            partners(&layouts[i % layouts.len()])?,
            ppo.seed.wrapping_mul(15_485_863).wrapping_add(i as u64 + 1),
        )?))
    };
    ppo_train(&mut factory, init, ppo, observer)
}
