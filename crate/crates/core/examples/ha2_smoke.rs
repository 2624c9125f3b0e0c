//! Desk-scale hierarchical run on one layout: worker, then manager, then
//! self-paired scores on the layout and its modified variant. A flat
//! self-play baseline on the combined budget follows unless `FLAT_STEPS=0`.
//! `SAVE_DIR` keeps the hierarchical bundle.

use std::sync::Arc;
use std::time::Instant;

use ha2_core::agents::{save_hierarchical_bundle, Agent, HierarchicalAgent, RandomAgent};
use ha2_core::evaluation::self_play_score;
use ha2_core::kitchen::{canonical_layout, perturbed_layout};
use ha2_core::training::{
    evaluate_worker, train_flat, train_manager, train_worker, ManagerView, Partner, PpoConfig, ShapingConfig, WorkerEnvConfig,
};

fn env_u64(key: &str, default: u64) -> u64 {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let name = std::env::var("LAYOUT").unwrap_or_else(|_| "cramped_room".into());
    let layout = canonical_layout(&name)?;
    let modified = perturbed_layout(&name)?;
    let layouts = [layout.clone()];
    let random = |_: &_| Ok(Partner::Pool(vec![Arc::new(RandomAgent) as Arc<dyn Agent>]));
    let start = Instant::now();
    let ppo = PpoConfig {
        total_timesteps: env_u64("WORKER_STEPS", 2_000_000),
        seed: env_u64("SEED", 0),
        ..PpoConfig::default()
    };
    let env_cfg = WorkerEnvConfig::default();
    let w = train_worker(&layouts, &random, &env_cfg, 64, &ppo)?;
    let stats = evaluate_worker(&w.worker, &layout, vec![Arc::new(RandomAgent)], &env_cfg, 1000, 1)?;
    println!(
        "worker: {:.1}s, train completion {:.3}, eval completion {:.3} {:?}",
        start.elapsed().as_secs_f64(),
        w.stats.completion_rate(),
        stats.completion_rate(),
        stats
    );
    let moved_stats = evaluate_worker(&w.worker, &modified, vec![Arc::new(RandomAgent)], &env_cfg, 1000, 1)?;
    println!("worker on {}: completion {:.3} {:?}", modified.name(), moved_stats.completion_rate(), moved_stats);
    let worker = Arc::new(w.worker);
    let m_ppo = PpoConfig {
        total_timesteps: env_u64("MANAGER_STEPS", 2_000_000),
        seed: env_u64("SEED", 0) + 1,
        ..PpoConfig::default()
    };
    let self_play = |_: &_| Ok(Partner::SelfPlay);
    let view = match std::env::var("MANAGER_VIEW").as_deref() {
        Ok("full_grid") => ManagerView::FullGrid { canvas: None },
        _ => ManagerView::Egocentric,
    };
    let m = train_manager(&layouts, Arc::clone(&worker), &self_play, 64, &m_ppo, view)?;
    for p in m.curve.points.iter().step_by((m.curve.points.len() / 10).max(1)) {
        println!("  manager t={} return={:.1}", p.timesteps, p.mean_return);
    }
    let agent = HierarchicalAgent::new("ha2", m.policy, (*worker).clone());
    if let Ok(dir) = std::env::var("SAVE_DIR") {
        save_hierarchical_bundle(std::path::Path::new(&dir), &agent)?;
    }
    let score = self_play_score(&agent, &layout, 10, 7)?;
    let moved = self_play_score(&agent, &modified, 10, 7)?;
    println!(
        "manager: total {:.1}s, self-paired score {score:.1}, modified {moved:.1}",
        start.elapsed().as_secs_f64()
    );

    let flat_steps = env_u64("FLAT_STEPS", ppo.total_timesteps + m_ppo.total_timesteps);
    if flat_steps > 0 {
        let f_ppo = PpoConfig {
            total_timesteps: flat_steps,
            seed: env_u64("SEED", 0) + 2,
            ..PpoConfig::default()
        };
        let t = Instant::now();
        let flat = train_flat(&layouts, &self_play, 64, 1, &ShapingConfig::default(), &f_ppo, &mut |_, _| Ok(()), None)?;
        let score = self_play_score(&flat.policy, &layout, 10, 7)?;
        let moved = self_play_score(&flat.policy, &modified, 10, 7)?;
        println!("flat: {:.1}s, self-paired score {score:.1}, modified {moved:.1}", t.elapsed().as_secs_f64());
    }
    Ok(())
}
