use std::path::Path;

use ha2_core::agents::{
    load_agent, load_checkpoint, save_checkpoint, ActMode, AgentMemory, BundleManifest, CheckpointStage, Head,
    PolicyHandle, Population, RandomAgent, ScriptedAgent, BUNDLE_FILE,
};
use ha2_core::evaluation::play_episode;
use ha2_core::kitchen::{canonical_layout, Action, GameState};
use ha2_core::observations::EncoderConfig;
use ha2_core::training::{
    fit_bc, train_bc, train_selfplay_population, train_variant, BcConfig, BcSample, PopulationConfig, PpoConfig,
    TrainConfig, TrainError, TrajectoryDataset, TrajectoryEpisode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Logits of `p` on a fixed set of reachable states.
fn probe(p: &PolicyHandle) -> Vec<Vec<f32>> {
    let layout = canonical_layout("cramped_room").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let ep = play_episode([&ScriptedAgent, &RandomAgent], &layout, 40, 0, &mut rng).unwrap();
    let mut state = GameState::initial(&layout);
    let mut out = Vec::new();
    for joint in ep.log.actions.iter().step_by(4) {
        let mut memory = AgentMemory::default();
        let input = p.observe(&mut memory.frames, &state, &layout, 0, None).unwrap();
        out.push(p.logits(&input));
        state = ha2_core::kitchen::step(&state, *joint, &layout).unwrap().next;
    }
    out
}

#[test]
fn checkpoints_round_trip_on_the_probe_set() {
    let layout = canonical_layout("cramped_room").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = PolicyHandle::for_layout("p", EncoderConfig::features(), &layout, 32, Head::Primitive, &mut rng);
    let path = dir.path().join("p.ckpt");
    save_checkpoint(&p, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, p);
    assert_eq!(probe(&back), probe(&p));

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&path, bytes).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

fn write_config(dir: &Path, body: &str) -> TrainConfig {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    TrainConfig::load(&path).unwrap()
}

const TINY_PPO: &str = "[ppo]\nrollout_len = 64\nnum_envs = 2\nminibatch_size = 64\nepochs = 1\n";

#[test]
fn population_then_fcp_and_hierarchical_variants() {
    let layout = canonical_layout("cramped_room").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let pop_dir = dir.path().join("pop");
    let cfg = PopulationConfig {
        ppo: PpoConfig {
            rollout_len: 64,
            num_envs: 2,
            minibatch_size: 64,
            epochs: 1,
            total_timesteps: 512,
            ..PpoConfig::default()
        },
        snapshots: 2,
        eval_trials: 1,
        ..PopulationConfig::default()
    };
    let pop = train_selfplay_population(std::slice::from_ref(&layout), &cfg, &pop_dir).unwrap();
    assert_eq!(pop.entries.len(), 24);
    assert_eq!(pop.base_agents().len(), 8);
    let loaded = Population::load(&pop_dir).unwrap();
    assert_eq!(loaded.entries, pop.entries);
    assert_eq!(loaded.members_for("cramped_room").unwrap().len(), 24);
    assert_eq!(loaded.mid_table["cramped_room"].len(), 8);

    // the init checkpoint is the untrained network
    let first = &loaded.entries[0];
    assert_eq!(first.stage, CheckpointStage::Init);
    let init = load_checkpoint(&loaded.path_for(first, "cramped_room")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(first.tags.seed ^ 0xf1a7);
    let fresh = PolicyHandle::for_layout(
        &first.base,
        init.encoder.clone(),
        &layout,
        first.tags.hidden_dim,
        Head::Primitive,
        &mut rng,
    );
    assert_eq!(probe(&init), probe(&fresh));
    let last = loaded.entries.iter().find(|e| e.base == first.base && e.stage == CheckpointStage::Final).unwrap();
    assert_ne!(probe(&load_checkpoint(&loaded.path_for(last, "cramped_room")).unwrap()), probe(&init));

    let fcp_dir = dir.path().join("fcp");
    let fcp = write_config(
        dir.path(),
        &format!(
            "variant = \"fcp\"\nlayouts = [\"cramped_room\"]\nout_dir = {:?}\npartners = {{ kind = \"population\", path = {:?} }}\n[flat]\ntimesteps = 256\n{TINY_PPO}",
            fcp_dir, pop_dir
        ),
    );
    let summary = train_variant(&fcp).unwrap();
    assert_eq!(summary.timesteps, 256);
    let manifest: BundleManifest =
        serde_json::from_str(&std::fs::read_to_string(fcp_dir.join(BUNDLE_FILE)).unwrap()).unwrap();
    assert!(matches!(manifest, BundleManifest::Flat { .. }));
    assert!(fcp_dir.join("curve.csv").exists());

    let ha2_dir = dir.path().join("ha2");
    let ha2 = write_config(
        dir.path(),
        &format!(
            "variant = \"ha2_fcp\"\nlayouts = [\"cramped_room\"]\nout_dir = {:?}\npartners = {{ kind = \"population\", path = {:?} }}\n[worker]\ntimesteps = 256\neval_episodes = 10\n[manager]\ntimesteps = 256\n{TINY_PPO}",
            ha2_dir, pop_dir
        ),
    );
    let summary = train_variant(&ha2).unwrap();
    let w = &summary.worker_stats["cramped_room"];
    assert_eq!(w.completed + w.wrong_interact + w.timeout + w.truncated, 10);
    let manifest: BundleManifest =
        serde_json::from_str(&std::fs::read_to_string(ha2_dir.join(BUNDLE_FILE)).unwrap()).unwrap();
    let BundleManifest::Hierarchical { manager, worker } = manifest else {
        panic!("expected a hierarchical bundle");
    };
    let manager = load_checkpoint(&ha2_dir.join(manager)).unwrap();
    let worker = load_checkpoint(&ha2_dir.join(worker)).unwrap();
    assert_eq!((manager.spec.head.size(), worker.spec.head.size()), (12, 6));
    assert!(ha2_dir.join("worker_curve.csv").exists() && ha2_dir.join("manager_curve.csv").exists());
    let agent = load_agent(ha2_dir.to_str().unwrap(), ActMode::Stochastic).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ep = play_episode([agent.as_ref(), &RandomAgent], &layout, 20, 1, &mut rng).unwrap();
    assert!(ep.sub_tasks.iter().all(|t| t[0].is_some()));
}

#[test]
fn cloning_a_single_pair_reaches_high_confidence() {
    let layout = canonical_layout("cramped_room").unwrap();
    let encoder = EncoderConfig::features();
    let features = encoder.encode(&GameState::initial(&layout), &layout, 0, None).unwrap();
    let samples = vec![BcSample { features, action: Action::Up.index() }; 64];
    let cfg = BcConfig { epochs: 200, ..BcConfig::default() };
    let p = fit_bc("up", &samples, &[1.0; Action::COUNT], encoder, &cfg).unwrap();
    let logits = p.logits(&samples[0].features);
    let lp = ha2_core::nn::masked_log_softmax(&logits, None);
    assert!(lp[Action::Up.index()].exp() > 0.99);
}

fn recorded_episode(seed: u64) -> TrajectoryEpisode {
    let layout = canonical_layout("cramped_room").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ep = play_episode([&ScriptedAgent, &RandomAgent], &layout, 120, seed, &mut rng).unwrap();
    let mut states = vec![GameState::initial(&layout)];
    for joint in &ep.log.actions {
        let next = ha2_core::kitchen::step(states.last().unwrap(), *joint, &layout).unwrap().next;
        states.push(next);
    }
    TrajectoryEpisode {
        layout: "cramped_room".into(),
        states,
        joint_actions: ep.log.actions,
    }
}

#[test]
fn behavior_cloning_ranks_two_halves() {
    let layout = canonical_layout("cramped_room").unwrap();
    let dataset = TrajectoryDataset {
        source: serde_json::json!({"kind": "synthetic"}),
        episodes: (0..4).map(recorded_episode).collect(),
    };
    dataset.validate().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let saved = dataset.save(dir.path()).unwrap();
    assert_eq!(TrajectoryDataset::load(&saved).unwrap().episodes.len(), 4);

    let cfg = BcConfig { epochs: 5, eval_trials: 2, ..BcConfig::default() };
    let models = train_bc(&dataset, &layout, &cfg).unwrap();
    assert!(models.scores[0] >= models.scores[1]);
    assert_ne!(models.proxy.id, models.bc.id);

    let stays = TrajectoryDataset {
        source: serde_json::Value::Null,
        episodes: vec![TrajectoryEpisode {
            layout: "cramped_room".into(),
            states: vec![GameState::initial(&layout); 3],
            joint_actions: vec![[Action::Stay; 2]; 2],
        }; 2],
    };
    assert!(matches!(train_bc(&stays, &layout, &cfg), Err(TrainError::EmptyAfterFilter(_))));
}
