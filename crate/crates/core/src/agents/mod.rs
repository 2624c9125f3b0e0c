//! Agents that can occupy a seat: random, scripted, neural flat policies and
//! the hierarchical manager/worker composition.

mod checkpoint;
mod population;
mod scripted;

use ndarray::Array2;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::kitchen::{Action, GameState, Layout};
use crate::nn::{masked_argmax, masked_log_softmax, sample_log_probs, Activation, Mlp};
use crate::observations::{EncoderConfig, FrameHistory, ObservationError};
use crate::subtasks::{feasible_mask_with, goal_layer_with, FeasibilityConfig, GoalLayer, SubTask};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use population::{CheckpointStage, Population, PopulationEntry, PopulationTags, POPULATION_FILE};
pub use scripted::{navigate_to, scripted_greedy, ScriptedAgent};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Observation(#[from] ObservationError),
    #[error("CorruptCheckpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("VersionMismatch: checkpoint version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid agent bundle: {0}")]
    Bundle(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    #[default]
    Stochastic,
    Greedy,
}

/// Output head of a policy network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// The six primitive actions.
    Primitive,
    /// The twelve sub-tasks.
    SubTask,
}

impl Head {
    pub fn size(self) -> usize {
        match self {
            Head::Primitive => Action::COUNT,
            Head::SubTask => SubTask::COUNT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub head: Head,
    pub activation: Activation,
}

impl NetSpec {
    pub fn actor_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim];
        s.extend(&self.hidden);
        s.push(self.head.size());
        s
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim];
        s.extend(&self.hidden);
        s.push(1);
        s
    }
}

/// A neural policy with its value network and encoder settings. Immutable
/// once loaded; share freely across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyHandle {
    pub id: String,
    pub encoder: EncoderConfig,
    pub spec: NetSpec,
    pub mode: ActMode,
    pub actor: Mlp<f32>,
    pub critic: Mlp<f32>,
}

impl PolicyHandle {
    /// Fresh randomly initialized policy with two hidden layers of `hidden` units.
    pub fn new(
        id: impl Into<String>,
        encoder: EncoderConfig,
        input_dim: usize,
        hidden: usize,
        head: Head,
        rng: &mut dyn RngCore,
    ) -> PolicyHandle {
        let spec = NetSpec {
            input_dim,
            hidden: vec![hidden, hidden],
            head,
            activation: Activation::Tanh,
        };
        let actor = Mlp::new(&spec.actor_sizes(), spec.activation, 0.01, rng);
        let critic = Mlp::new(&spec.critic_sizes(), spec.activation, 1.0, rng);
        PolicyHandle {
            id: id.into(),
            encoder,
            spec,
            mode: ActMode::Stochastic,
            actor,
            critic,
        }
    }

    /// Policy sized for `layout` under `encoder`.
    pub fn for_layout(
        id: impl Into<String>,
        encoder: EncoderConfig,
        layout: &Layout,
        hidden: usize,
        head: Head,
        rng: &mut dyn RngCore,
    ) -> PolicyHandle {
        let dim = encoder.input_dim(layout);
        PolicyHandle::new(id, encoder, dim, hidden, head, rng)
    }

    pub fn with_mode(mut self, mode: ActMode) -> PolicyHandle {
        self.mode = mode;
        self
    }

    pub fn hidden_dim(&self) -> usize {
        self.spec.hidden.first().copied().unwrap_or(0)
    }

    /// Hex SHA-256 of all parameters in little-endian order.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.actor.flatten().into_iter().chain(self.critic.flatten()) {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn check_layout(&self, layout: &Layout) -> Result<(), ObservationError> {
        self.encoder.check_layout(layout)?;
        let dim = self.encoder.input_dim(layout);
        if dim != self.spec.input_dim {
            return Err(ObservationError::EncoderMismatch(format!(
                "policy {} expects {} inputs, layout {} encodes to {dim}",
                self.id,
                self.spec.input_dim,
                layout.name()
            )));
        }
        Ok(())
    }

    /// Stacked input for one tick, updating `frames`.
    pub fn observe(
        &self,
        frames: &mut FrameHistory,
        state: &GameState,
        layout: &Layout,
        ego: usize,
        goal: Option<&GoalLayer>,
    ) -> Result<Vec<f32>, ObservationError> {
        self.check_layout(layout)?;
        let frame = self.encoder.encode(state, layout, ego, goal)?;
        Ok(frames.push(frame, self.encoder.frame_stack))
    }

    pub fn logits(&self, input: &[f32]) -> Vec<f32> {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("row vector");
        self.actor.forward(x.view()).into_raw_vec_and_offset().0
    }

    pub fn value(&self, input: &[f32]) -> f32 {
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("row vector");
        self.critic.forward(x.view())[[0, 0]]
    }

    /// Choose an index from `logits` according to [`PolicyHandle::mode`].
    pub fn choose(&self, logits: &[f32], mask: Option<&[bool]>, rng: &mut dyn RngCore) -> usize {
        match self.mode {
            ActMode::Greedy => masked_argmax(logits, mask),
            ActMode::Stochastic => sample_log_probs(&masked_log_softmax(logits, mask), rng),
        }
    }

    /// One primitive action for `ego` (flat policies).
    pub fn act(
        &self,
        frames: &mut FrameHistory,
        state: &GameState,
        layout: &Layout,
        ego: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Action, ObservationError> {
        let input = self.observe(frames, state, layout, ego, None)?;
        let logits = self.logits(&input);
        Ok(Action::from_index(self.choose(&logits, None, rng)).expect("6-way head"))
    }
}

/// Per-episode memory of an agent in one seat.
#[derive(Clone, Debug, Default)]
pub struct AgentMemory {
    pub frames: FrameHistory,
    pub worker_frames: FrameHistory,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub sub_task: Option<SubTask>,
}

impl From<Action> for Decision {
    fn from(action: Action) -> Self {
        Decision { action, sub_task: None }
    }
}

pub trait Agent: Send + Sync {
    fn name(&self) -> &str;

    /// Error unless the agent can play on `layout`.
    fn check_layout(&self, _layout: &Layout) -> Result<(), AgentError> {
        Ok(())
    }

    fn act(
        &self,
        memory: &mut AgentMemory,
        state: &GameState,
        layout: &Layout,
        ego: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Decision, AgentError>;
}

/// Uniform over the six actions.
#[derive(Clone, Debug, Default)]
pub struct RandomAgent;

pub fn random_action(rng: &mut dyn RngCore) -> Action {
    Action::ALL[rng.random_range(0..Action::COUNT)]
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn act(
        &self,
        _: &mut AgentMemory,
        _: &GameState,
        _: &Layout,
        _: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Decision, AgentError> {
        Ok(random_action(rng).into())
    }
}

impl Agent for PolicyHandle {
    fn name(&self) -> &str {
        &self.id
    }

    fn check_layout(&self, layout: &Layout) -> Result<(), AgentError> {
        Ok(PolicyHandle::check_layout(self, layout)?)
    }

    fn act(
        &self,
        memory: &mut AgentMemory,
        state: &GameState,
        layout: &Layout,
        ego: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Decision, AgentError> {
        Ok(PolicyHandle::act(self, &mut memory.frames, state, layout, ego, rng)?.into())
    }
}

/// Manager (sub-task head) over a goal-conditioned worker (primitive head).
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchicalAgent {
    pub id: String,
    pub manager: PolicyHandle,
    pub worker: PolicyHandle,
    pub feasibility: FeasibilityConfig,
}

impl HierarchicalAgent {
    pub fn new(id: impl Into<String>, manager: PolicyHandle, worker: PolicyHandle) -> HierarchicalAgent {
        assert_eq!(manager.spec.head, Head::SubTask, "manager needs a sub-task head");
        assert_eq!(worker.spec.head, Head::Primitive, "worker needs a primitive head");
        assert!(worker.encoder.goal_layer, "worker must see the goal layer");
        HierarchicalAgent {
            id: id.into(),
            manager,
            worker,
            feasibility: FeasibilityConfig::default(),
        }
    }

    /// Manager picks a feasible sub-task, worker acts on its goal layer.
    pub fn act_hierarchical(
        &self,
        memory: &mut AgentMemory,
        state: &GameState,
        layout: &Layout,
        ego: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(SubTask, Action), ObservationError> {
        let input = self.manager.observe(&mut memory.frames, state, layout, ego, None)?;
        let mask = feasible_mask_with(state, ego, layout, &self.feasibility).to_bools();
        let logits = self.manager.logits(&input);
        let task = SubTask::from_index(self.manager.choose(&logits, Some(&mask), rng)).expect("12-way head");
        let action = self.worker_action(memory, state, layout, ego, task, rng)?;
        Ok((task, action))
    }

    /// The worker's action under an explicit sub-task.
    pub fn worker_action(
        &self,
        memory: &mut AgentMemory,
        state: &GameState,
        layout: &Layout,
        ego: usize,
        task: SubTask,
        rng: &mut dyn RngCore,
    ) -> Result<Action, ObservationError> {
        let goal = goal_layer_with(state, ego, task, layout, &self.feasibility);
        let input = self.worker.observe(&mut memory.worker_frames, state, layout, ego, Some(&goal))?;
        let logits = self.worker.logits(&input);
        Ok(Action::from_index(self.worker.choose(&logits, None, rng)).expect("6-way head"))
    }
}

impl Agent for HierarchicalAgent {
    fn name(&self) -> &str {
        &self.id
    }

    fn check_layout(&self, layout: &Layout) -> Result<(), AgentError> {
        self.manager.check_layout(layout)?;
        self.worker.check_layout(layout)?;
        Ok(())
    }

    fn act(
        &self,
        memory: &mut AgentMemory,
        state: &GameState,
        layout: &Layout,
        ego: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Decision, AgentError> {
        let (task, action) = self.act_hierarchical(memory, state, layout, ego, rng)?;
        Ok(Decision {
            action,
            sub_task: Some(task),
        })
    }
}

/// On-disk description of a playable agent: `bundle.json` in a directory,
/// pointing at checkpoint files relative to it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BundleManifest {
    Flat { policy: String },
    Hierarchical { manager: String, worker: String },
}

pub const BUNDLE_FILE: &str = "bundle.json";

/// Load a playable agent. `spec` is `random`, `scripted`, a bundle directory,
/// or a single `.ckpt` file (flat policy).
pub fn load_agent(spec: &str, mode: ActMode) -> Result<Box<dyn Agent>, AgentError> {
    match spec {
        "random" => return Ok(Box::new(RandomAgent)),
        "scripted" => return Ok(Box::new(ScriptedAgent)),
        _ => {}
    }
    let path = std::path::Path::new(spec);
    if path.is_file() {
        return Ok(Box::new(load_checkpoint(path)?.with_mode(mode)));
    }
    let manifest_path = path.join(BUNDLE_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(|source| AgentError::Io {
        path: manifest_path.display().to_string(),
        source,
    })?;
    let manifest: BundleManifest =
        serde_json::from_str(&text).map_err(|e| AgentError::Bundle(format!("{}: {e}", manifest_path.display())))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| spec.to_string());
    Ok(match manifest {
        BundleManifest::Flat { policy } => {
            let mut p = load_checkpoint(&path.join(policy))?.with_mode(mode);
            p.id = name;
            Box::new(p)
        }
        BundleManifest::Hierarchical { manager, worker } => {
            let m = load_checkpoint(&path.join(manager))?.with_mode(mode);
            let w = load_checkpoint(&path.join(worker))?.with_mode(mode);
            if m.spec.head != Head::SubTask || w.spec.head != Head::Primitive || !w.encoder.goal_layer {
                return Err(AgentError::Bundle("hierarchical bundle has mismatched heads".into()));
            }
            Box::new(HierarchicalAgent::new(name, m, w))
        }
    })
}

/// Write a bundle directory for a flat policy.
pub fn save_flat_bundle(dir: &std::path::Path, policy: &PolicyHandle) -> Result<(), AgentError> {
    write_bundle(dir, &BundleManifest::Flat { policy: "policy.ckpt".into() }, &[("policy.ckpt", policy)])
}

/// Write a bundle directory for a hierarchical agent.
pub fn save_hierarchical_bundle(dir: &std::path::Path, agent: &HierarchicalAgent) -> Result<(), AgentError> {
    write_bundle(
        dir,
        &BundleManifest::Hierarchical {
            manager: "manager.ckpt".into(),
            worker: "worker.ckpt".into(),
        },
        &[("manager.ckpt", &agent.manager), ("worker.ckpt", &agent.worker)],
    )
}

fn write_bundle(
    dir: &std::path::Path,
    manifest: &BundleManifest,
    files: &[(&str, &PolicyHandle)],
) -> Result<(), AgentError> {
    let io = |source| AgentError::Io {
        path: dir.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    for (name, p) in files {
        save_checkpoint(p, &dir.join(name))?;
    }
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(dir.join(BUNDLE_FILE), text).map_err(io)
}
