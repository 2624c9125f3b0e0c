//! A headless client plays one full round at the production pace.

mod common;

use std::time::{Duration, Instant};

use common::Server;
use ha2_core::agents::{Agent, AgentMemory, ScriptedAgent};
use ha2_core::kitchen::{canonical_layout, replay, GameState, ReplayLog};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

#[tokio::test]
async fn scripted_client_plays_a_full_round() {
    let server = Server::start(&["--seed", "11"]);
    let layout = canonical_layout("cramped_room").unwrap();
    let mut client = server.connect().await;
    client.send(json!({"type": "join", "agent": "scripted"})).await;
    let start = client.recv().await.unwrap();
    assert_eq!((start["tick_ms"].as_u64(), start["ticks"].as_u64()), (Some(200), Some(400)));
    let seat = start["seat"].as_u64().unwrap() as usize;

    let human = ScriptedAgent;
    let mut memory = AgentMemory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut sent = Vec::new();
    let mut arrivals = Vec::new();
    let mut last_score = 0;
    let end = loop {
        let msg = client.recv().await.expect("round ends before the socket closes");
        match msg["type"].as_str().unwrap() {
            "state_update" => {
                arrivals.push(Instant::now());
                let state: GameState = serde_json::from_value(msg["state"].clone()).unwrap();
                assert_eq!(msg["tick"].as_u64(), Some(state.tick as u64));
                last_score = msg["score"].as_u64().unwrap();
                let action = human.act(&mut memory, &state, &layout, seat, &mut rng).unwrap().action;
                client.send(json!({"type": "input", "action": action})).await;
                sent.push(action);
            }
            "round_end" => break msg,
            other => panic!("unexpected frame {other}: {msg}"),
        }
    };

    assert_eq!(arrivals.len(), 401);
    assert_eq!(end["ticks"], 400);
    assert_eq!(end["score"].as_u64(), Some(last_score));
    assert!(last_score > 0, "the scripted pair should deliver at least one soup");

    let log = ReplayLog::load(std::path::Path::new(end["replay"].as_str().unwrap())).unwrap();
    assert_eq!(log.actions.len(), 400);
    assert_eq!(replay(&layout, &log).unwrap().score as u64, last_score);
    // each input was answered by the next tick
    let human_seat: Vec<_> = log.actions.iter().map(|j| j[seat]).collect();
    assert_eq!(human_seat, sent[..400]);

    let gaps: Vec<Duration> = arrivals[1..].windows(2).map(|w| w[1] - w[0]).collect();
    let off: Vec<_> = gaps
        .iter()
        .enumerate()
        .filter(|(_, g)| g.as_millis().abs_diff(200) > 20)
        .collect();
    assert!(off.is_empty(), "intervals outside 200 +/- 20 ms: {off:?}");
    let mean = gaps.iter().sum::<Duration>() / gaps.len() as u32;
    println!("mean tick interval {mean:?} over {} gaps", gaps.len());
}
