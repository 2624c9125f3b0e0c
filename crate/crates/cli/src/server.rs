//! Live rounds between a human client and a loaded agent. Each round runs on
//! its own ticker task; connections only forward inputs and broadcasts, so a
//! client that drops or misbehaves never stalls a round.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use futures::stream::{SplitSink, SplitStream};
use futures::{SinkExt, StreamExt};
use ha2_core::agents::{load_agent, ActMode, Agent, AgentMemory, RandomAgent, ScriptedAgent, BUNDLE_FILE};
use ha2_core::kitchen::{step, Action, GameState, Layout, ReplayLog};
use ha2_core::training::resolve_layout;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tokio::sync::broadcast;
use tokio::time::{Instant, MissedTickBehavior};

use crate::protocol::{ClientMsg, ServerMsg, SessionError};

#[derive(clap::Args, Debug, Clone)]
pub struct ServeArgs {
    #[arg(long, env = "HA2_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Directory of agent bundles (subdirectories) and `.ckpt` files.
    #[arg(long, env = "HA2_CHECKPOINT_DIR")]
    pub checkpoint_dir: Option<PathBuf>,
    /// Replay logs and `rounds.jsonl` go here.
    #[arg(long, env = "HA2_LOG_DIR", default_value = "rounds")]
    pub log_dir: PathBuf,
    #[arg(long, default_value = "cramped_room")]
    pub layout: String,
    /// Agent used when a join does not name one.
    #[arg(long, default_value = "scripted")]
    pub agent: String,
    /// Pin the human seat instead of drawing it per round.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub seat: Option<u8>,
    #[arg(long, default_value_t = 200)]
    pub tick_ms: u64,
    #[arg(long, default_value_t = 400)]
    pub ticks: u32,
    #[arg(long, default_value_t = 16)]
    pub max_sessions: usize,
    /// Base seed for seats and agent sampling; random when unset.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub greedy: bool,
}

struct App {
    args: ServeArgs,
    agents: BTreeMap<String, Arc<dyn Agent>>,
    sessions: Mutex<HashMap<String, Arc<Live>>>,
    rounds: AtomicU64,
    base_seed: u64,
    records: Mutex<()>,
}

/// A round in progress.
struct Live {
    start: ServerMsg,
    pending: Mutex<Option<Action>>,
    latest: Mutex<Option<ServerMsg>>,
    updates: broadcast::Sender<ServerMsg>,
}

#[derive(Serialize)]
struct RoundRecord<'a> {
    session: &'a str,
    layout: &'a str,
    agent: &'a str,
    seat: usize,
    score: u32,
    ticks: u32,
    replay: String,
    started_ms: u128,
    finished_ms: u128,
}

fn unix_ms(t: SystemTime) -> u128 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn load_agents(dir: Option<&Path>, mode: ActMode) -> Result<BTreeMap<String, Arc<dyn Agent>>, SessionError> {
    let mut agents: BTreeMap<String, Arc<dyn Agent>> = BTreeMap::new();
    agents.insert("scripted".into(), Arc::new(ScriptedAgent));
    agents.insert("random".into(), Arc::new(RandomAgent));
    let Some(dir) = dir else { return Ok(agents) };
    let fail = |e: &dyn std::fmt::Display| SessionError::CheckpointLoadFailure(format!("{}: {e}", dir.display()));
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| fail(&e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| fail(&e))?;
    entries.sort();
    for path in entries {
        let playable = path.join(BUNDLE_FILE).is_file() || path.extension().is_some_and(|e| e == "ckpt");
        if !playable {
            continue;
        }
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let agent = load_agent(&path.to_string_lossy(), mode)
            .map_err(|e| SessionError::CheckpointLoadFailure(format!("{}: {e}", path.display())))?;
        agents.insert(name, Arc::from(agent));
    }
    Ok(agents)
}

pub fn run(args: ServeArgs) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new().context("starting the runtime")?;
    runtime.block_on(serve(args))
}

async fn serve(args: ServeArgs) -> Result<()> {
    let mode = if args.greedy { ActMode::Greedy } else { ActMode::Stochastic };
    let agents = load_agents(args.checkpoint_dir.as_deref(), mode)?;
    if !agents.contains_key(&args.agent) {
        return Err(SessionError::UnknownAgent(args.agent.clone()).into());
    }
    resolve_layout(&args.layout)?;
    std::fs::create_dir_all(&args.log_dir).with_context(|| format!("creating {}", args.log_dir.display()))?;
    let listener = tokio::net::TcpListener::bind(args.bind).await.with_context(|| format!("binding {}", args.bind))?;
    let addr = listener.local_addr()?;
    let app = Arc::new(App {
        base_seed: args.seed.unwrap_or_else(|| rand::rng().random()),
        args,
        agents,
        sessions: Mutex::new(HashMap::new()),
        rounds: AtomicU64::new(0),
        records: Mutex::new(()),
    });
    tracing::info!(agents = ?app.agents.keys().collect::<Vec<_>>(), "serving on {addr}");
    // tests and wrappers read the bound port from this line
    println!("listening on {addr}");
    std::io::stdout().flush()?;
    let router = Router::new()
        .route("/play", get(play))
        .route("/healthz", get(healthz))
        .with_state(app);
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn healthz(State(app): State<Arc<App>>) -> impl IntoResponse {
    let sessions = app.sessions.lock().unwrap().len();
    Json(serde_json::json!({
        "status": "ok",
        "sessions": sessions,
        "max_sessions": app.args.max_sessions,
        "agents": app.agents.keys().collect::<Vec<_>>(),
    }))
}

async fn play(ws: WebSocketUpgrade, State(app): State<Arc<App>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, app))
}

type Sink = SplitSink<WebSocket, Message>;

async fn send(tx: &mut Sink, msg: &ServerMsg) -> bool {
    let text = serde_json::to_string(msg).expect("server messages serialize");
    tx.send(Message::Text(text.into())).await.is_ok()
}

async fn fail(tx: &mut Sink, err: SessionError) {
    tracing::warn!("closing connection: {err}");
    send(tx, &err.to_msg()).await;
    let _ = tx.send(Message::Close(None)).await;
}

fn parse(frame: Message) -> Result<Option<ClientMsg>, SessionError> {
    match frame {
        Message::Text(t) => serde_json::from_str(t.as_str())
            .map(Some)
            .map_err(|e| SessionError::ProtocolViolation(e.to_string())),
        Message::Binary(_) => Err(SessionError::ProtocolViolation("binary frames are not supported".into())),
        _ => Ok(None),
    }
}

/// Wait for the join message, answering pings meanwhile.
async fn await_join(tx: &mut Sink, rx: &mut SplitStream<WebSocket>) -> Result<Option<ClientMsg>, SessionError> {
    while let Some(Ok(frame)) = rx.next().await {
        if matches!(frame, Message::Close(_)) {
            break;
        }
        match parse(frame)? {
            Some(ClientMsg::Ping) => {
                send(tx, &ServerMsg::Pong).await;
            }
            Some(join @ ClientMsg::Join { .. }) => return Ok(Some(join)),
            Some(ClientMsg::Input { .. }) => return Err(SessionError::ProtocolViolation("input before join".into())),
            None => {}
        }
    }
    Ok(None)
}

impl App {
    fn attach(&self, id: &str) -> Result<Arc<Live>, SessionError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    fn open(self: &Arc<Self>, layout: Option<String>, agent: Option<String>) -> Result<Arc<Live>, SessionError> {
        let name = layout.unwrap_or_else(|| self.args.layout.clone());
        let layout = resolve_layout(&name).map_err(|e| SessionError::UnknownLayout(e.to_string()))?;
        let agent_name = agent.unwrap_or_else(|| self.args.agent.clone());
        let agent = self
            .agents
            .get(&agent_name)
            .cloned()
            .ok_or_else(|| SessionError::UnknownAgent(agent_name.clone()))?;
        agent.check_layout(&layout).map_err(|e| SessionError::AgentFailure(e.to_string()))?;

        let round = self.rounds.fetch_add(1, Ordering::Relaxed);
        let seed = self.base_seed.wrapping_add(round);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seat = match self.args.seat {
            Some(s) => s as usize,
            None => rng.random_range(0..2),
        };
        let id = uuid::Uuid::new_v4().to_string();
        let (updates, _) = broadcast::channel(64);
        let live = Arc::new(Live {
            start: ServerMsg::SessionStart {
                session: id.clone(),
                layout: layout.name().to_string(),
                grid: layout.to_ascii().lines().map(str::to_string).collect(),
                agent: agent_name,
                seat,
                tick_ms: self.args.tick_ms,
                ticks: self.args.ticks,
            },
            pending: Mutex::new(None),
            latest: Mutex::new(None),
            updates,
        });
        {
            let mut sessions = self.sessions.lock().unwrap();
            if sessions.len() >= self.args.max_sessions {
                return Err(SessionError::SessionLimitExceeded(sessions.len()));
            }
            sessions.insert(id.clone(), live.clone());
        }
        let round = Round {
            app: self.clone(),
            live: live.clone(),
            id,
            layout,
            agent,
            seat,
            seed,
            rng,
        };
        tokio::spawn(round.run());
        Ok(live)
    }
}

async fn connection(socket: WebSocket, app: Arc<App>) {
    let (mut tx, mut rx) = socket.split();
    let live = match await_join(&mut tx, &mut rx).await {
        Ok(Some(ClientMsg::Join { layout, agent, session })) => match session {
            Some(id) => app.attach(&id),
            None => app.open(layout, agent),
        },
        Ok(_) => return,
        Err(e) => Err(e),
    };
    let live = match live {
        Ok(live) => live,
        Err(e) => return fail(&mut tx, e).await,
    };
    // subscribe before reading `latest` so no update falls in between
    let mut updates = live.updates.subscribe();
    let latest = live.latest.lock().unwrap().clone();
    if !send(&mut tx, &live.start).await {
        return;
    }
    if let Some(m) = latest {
        if !send(&mut tx, &m).await {
            return;
        }
    }
    loop {
        tokio::select! {
            update = updates.recv() => match update {
                Ok(msg) => {
                    let last = matches!(msg, ServerMsg::RoundEnd { .. } | ServerMsg::Error { .. });
                    if !send(&mut tx, &msg).await {
                        return;
                    }
                    if last {
                        let _ = tx.send(Message::Close(None)).await;
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => tracing::warn!("client lagged by {n} updates"),
                Err(broadcast::error::RecvError::Closed) => return,
            },
            frame = rx.next() => {
                let Some(Ok(frame)) = frame else { return };
                if matches!(frame, Message::Close(_)) {
                    return;
                }
                match parse(frame) {
                    Ok(Some(ClientMsg::Input { action })) => *live.pending.lock().unwrap() = Some(action),
                    Ok(Some(ClientMsg::Ping)) => {
                        if !send(&mut tx, &ServerMsg::Pong).await {
                            return;
                        }
                    }
                    Ok(Some(ClientMsg::Join { .. })) => {
                        return fail(&mut tx, SessionError::ProtocolViolation("already joined".into())).await;
                    }
                    Ok(None) => {}
                    Err(e) => return fail(&mut tx, e).await,
                }
            }
        }
    }
}

struct Round {
    app: Arc<App>,
    live: Arc<Live>,
    id: String,
    layout: Layout,
    agent: Arc<dyn Agent>,
    seat: usize,
    seed: u64,
    rng: ChaCha8Rng,
}

impl Round {
    fn publish(&self, msg: ServerMsg) {
        if matches!(msg, ServerMsg::StateUpdate { .. }) {
            *self.live.latest.lock().unwrap() = Some(msg.clone());
        }
        // no receivers just means nobody is watching right now
        let _ = self.live.updates.send(msg);
    }

    async fn run(mut self) {
        let result = self.play().await;
        self.app.sessions.lock().unwrap().remove(&self.id);
        match result {
            Ok(msg) => self.publish(msg),
            Err(e) => {
                tracing::error!(session = %self.id, "round failed: {e:#}");
                self.publish(SessionError::AgentFailure(format!("{e:#}")).to_msg());
            }
        }
    }

    async fn play(&mut self) -> Result<ServerMsg> {
        let ticks = self.app.args.ticks;
        let started = SystemTime::now();
        let mut state = GameState::initial(&self.layout);
        let mut memory = AgentMemory::default();
        let mut log = ReplayLog::new(&self.layout, self.seed);
        log.header.horizon = ticks;
        let mut sub_task = None;
        self.publish(ServerMsg::StateUpdate {
            tick: 0,
            state: state.clone(),
            score: 0,
            last_events: [None, None],
            agent_sub_task: None,
        });

        let period = Duration::from_millis(self.app.args.tick_ms);
        let mut clock = tokio::time::interval_at(Instant::now() + period, period);
        clock.set_missed_tick_behavior(MissedTickBehavior::Delay);
        for tick in 1..=ticks {
            clock.tick().await;
            // inputs that arrive after this point belong to the next tick
            let human = self.live.pending.lock().unwrap().take().unwrap_or(Action::Stay);
            let decision = self.agent.act(&mut memory, &state, &self.layout, 1 - self.seat, &mut self.rng)?;
            if decision.sub_task.is_some() {
                sub_task = decision.sub_task;
            }
            let mut joint = [Action::Stay; 2];
            joint[self.seat] = human;
            joint[1 - self.seat] = decision.action;
            let outcome = step(&state, joint, &self.layout)?;
            log.actions.push(joint);
            state = outcome.next;
            self.publish(ServerMsg::StateUpdate {
                tick,
                state: state.clone(),
                score: state.score,
                last_events: outcome.events,
                agent_sub_task: sub_task,
            });
        }

        let dir = &self.app.args.log_dir;
        let replay_path = dir.join(format!("{}.jsonl", self.id));
        log.save(&replay_path).with_context(|| format!("writing {}", replay_path.display()))?;
        let record = RoundRecord {
            session: &self.id,
            layout: self.layout.name(),
            agent: self.agent.name(),
            seat: self.seat,
            score: state.score,
            ticks,
            replay: replay_path.display().to_string(),
            started_ms: unix_ms(started),
            finished_ms: unix_ms(SystemTime::now()),
        };
        let line = serde_json::to_string(&record)?;
        {
            let _guard = self.app.records.lock().unwrap();
            let mut file = std::fs::OpenOptions::new().create(true).append(true).open(dir.join("rounds.jsonl"))?;
            writeln!(file, "{line}")?;
        }
        tracing::info!(session = %self.id, score = state.score, "round finished");
        Ok(ServerMsg::RoundEnd {
            score: state.score,
            ticks,
            replay: record.replay,
        })
    }
}
