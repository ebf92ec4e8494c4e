//! Teleoperation service: one human driver and any number of viewers share a
//! simulated world stepped at a fixed wall-clock rate; the driver can record
//! demonstrations and any client can stream a logged episode.
//!
//! [`TeleopCore`] holds all session logic and is driven by discrete events
//! and ticks, so it runs identically under tests and under [`serve`].

use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use evodrive_core::bc::{DemoHeader, DemoWriter, DemonstrationRecord};
use evodrive_core::harness::{read_episode_log, DrivingEnv, LogFrame};
use evodrive_core::planner::RateBounds;
use evodrive_core::sim::{ControlInput, ScenarioConfig, VehicleLimits};
use evodrive_core::Error as CoreError;
use tungstenite::Message;

use crate::wire::{ClientMessage, ErrorCode, Role, SchemaIds, ServerMessage, SessionCommand, WireFrame, PROTOCOL_VERSION};

pub type ClientId = u64;

/// Frames queued for one client beyond which new live frames are dropped.
const MAX_PENDING_FRAMES: usize = 8;
const SOCKET_POLL: Duration = Duration::from_millis(5);

#[derive(Clone, Debug)]
pub struct TeleopConfig {
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub demo_dir: PathBuf,
    /// World steps per wall-clock second during live sessions.
    pub hz: f64,
    /// Deceleration applied while the accel input is released (m/s²).
    pub coast_decel: f64,
    /// `accel` inputs below this magnitude count as released.
    pub accel_deadband: f64,
    pub rates: RateBounds,
}

impl TeleopConfig {
    pub fn new(scenario: ScenarioConfig, demo_dir: PathBuf) -> Self {
        Self {
            seed: scenario.seed,
            hz: 1.0 / scenario.dt,
            scenario,
            demo_dir,
            coast_decel: 0.5,
            accel_deadband: 0.05,
            rates: RateBounds::default(),
        }
    }
}

/// Map a human (steer, accel) input onto the next control: the steering
/// target is `steer·δ_max`, the speed command moves by `accel·Δa_max` per
/// step, and both go through the planner's rate bounds.
pub fn human_control(
    prev: &ControlInput,
    steer: f64,
    accel: f64,
    cfg: &TeleopConfig,
    dt: f64,
    limits: &VehicleLimits,
) -> ControlInput {
    let (dv, _) = cfg.rates.per_step(dt);
    let dv_cmd = if accel.abs() < cfg.accel_deadband {
        -cfg.coast_decel * dt
    } else {
        accel * dv
    };
    let target = ControlInput::new(prev.v_cmd + dv_cmd, steer * limits.delta_max);
    cfg.rates.limit(prev, &target, dt, limits)
}

/// A message for one client. Droppable messages (live frames) are skipped
/// for clients that fall behind.
#[derive(Clone, Debug, PartialEq)]
pub struct Outgoing {
    pub to: ClientId,
    pub msg: ServerMessage,
    pub droppable: bool,
}

struct Replay {
    frames: Vec<LogFrame>,
    next: usize,
    paused: bool,
    session: u64,
}

struct Recording {
    writer: DemoWriter,
    path: PathBuf,
}

pub struct TeleopCore {
    cfg: TeleopConfig,
    pub env: DrivingEnv,
    clients: BTreeMap<ClientId, Option<Role>>,
    driver: Option<ClientId>,
    input: (f64, f64),
    control: ControlInput,
    paused: bool,
    session: u64,
    recording: Option<Recording>,
    demos_written: usize,
    replays: BTreeMap<ClientId, Replay>,
    replay_sessions: u64,
}

fn reply(to: ClientId, msg: ServerMessage) -> Vec<Outgoing> {
    vec![Outgoing { to, msg, droppable: false }]
}

fn ack(to: ClientId, of: &str, detail: Option<String>) -> Vec<Outgoing> {
    reply(to, ServerMessage::Ack { of: of.to_string(), detail })
}

fn error(to: ClientId, code: ErrorCode, message: impl Into<String>) -> Vec<Outgoing> {
    reply(to, ServerMessage::Error { code, message: message.into() })
}

impl TeleopCore {
    pub fn new(cfg: TeleopConfig) -> evodrive_core::Result<Self> {
        let env = DrivingEnv::new(cfg.scenario.clone(), cfg.seed)?;
        let control = env.world.ego.last_control;
        Ok(Self {
            cfg,
            env,
            clients: BTreeMap::new(),
            driver: None,
            input: (0.0, 0.0),
            control,
            paused: false,
            session: 0,
            recording: None,
            demos_written: 0,
            replays: BTreeMap::new(),
            replay_sessions: 0,
        })
    }

    pub fn driver(&self) -> Option<ClientId> {
        self.driver
    }

    pub fn is_recording(&self) -> bool {
        self.recording.is_some()
    }

    /// The live world advances on the next tick.
    pub fn live_running(&self) -> bool {
        self.driver.is_some() && !self.paused && !self.env.status.is_terminal()
    }

    pub fn connect(&mut self, id: ClientId) {
        self.clients.insert(id, None);
    }

    /// Forget a client; a departing driver's recording is finalized with the
    /// records so far.
    pub fn disconnect(&mut self, id: ClientId) -> evodrive_core::Result<Option<PathBuf>> {
        self.clients.remove(&id);
        self.replays.remove(&id);
        if self.driver == Some(id) {
            self.driver = None;
            self.input = (0.0, 0.0);
            return self.finish_recording();
        }
        Ok(None)
    }

    /// Parse and handle one text message.
    pub fn handle_text(&mut self, id: ClientId, text: &str) -> Vec<Outgoing> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(m) => self.handle(id, m),
            Err(e) => error(id, ErrorCode::BadMessage, e.to_string()),
        }
    }

    pub fn handle(&mut self, id: ClientId, msg: ClientMessage) -> Vec<Outgoing> {
        let role = self.clients.get(&id).copied().flatten();
        match (msg, role) {
            (ClientMessage::Hello { role: want, protocol }, _) => {
                if protocol != PROTOCOL_VERSION {
                    return error(id, ErrorCode::BadMessage, format!("protocol {protocol} unsupported; server speaks {PROTOCOL_VERSION}"));
                }
                if want == Role::Driver && self.driver.is_some_and(|d| d != id) {
                    return error(id, ErrorCode::DriverBusy, "another client is driving");
                }
                if want == Role::Driver {
                    self.driver = Some(id);
                } else if self.driver == Some(id) {
                    self.driver = None;
                }
                self.clients.insert(id, Some(want));
                reply(id, ServerMessage::Hello { role: want, schema: SchemaIds::current() })
            }
            (m, None) => error(id, ErrorCode::HelloRequired, format!("send hello before {}", m.kind())),
            (ClientMessage::Control { steer, accel }, Some(r)) => {
                if r != Role::Driver {
                    return error(id, ErrorCode::NotDriver, "only the driver sends control");
                }
                let ok = |x: f64| x.is_finite() && (-1.0..=1.0).contains(&x);
                if !ok(steer) || !ok(accel) {
                    return error(id, ErrorCode::BadMessage, format!("control ({steer}, {accel}) outside [-1, 1]"));
                }
                self.input = (steer, accel);
                ack(id, "control", None)
            }
            (ClientMessage::SessionCmd { cmd }, Some(r)) => self.session_cmd(id, r, cmd),
        }
    }

    fn session_cmd(&mut self, id: ClientId, role: Role, cmd: SessionCommand) -> Vec<Outgoing> {
        let driver_only = || (role != Role::Driver).then(|| error(id, ErrorCode::NotDriver, "command needs the driver role"));
        match cmd {
            SessionCommand::StartReplay { path } => match self.start_replay(id, Path::new(&path)) {
                Ok(n) => ack(id, "session_cmd", Some(format!("replaying {n} frames"))),
                Err(e) => error(id, core_error_code(&e), e.to_string()),
            },
            SessionCommand::Pause | SessionCommand::Resume => {
                let pause = matches!(cmd, SessionCommand::Pause);
                if let Some(r) = self.replays.get_mut(&id) {
                    r.paused = pause;
                } else if let Some(e) = driver_only() {
                    return e;
                } else {
                    self.paused = pause;
                }
                ack(id, "session_cmd", None)
            }
            SessionCommand::StartDemo => {
                if let Some(e) = driver_only() {
                    return e;
                }
                match self.start_recording() {
                    Ok(p) => ack(id, "session_cmd", Some(p.display().to_string())),
                    Err(e) => error(id, core_error_code(&e), e.to_string()),
                }
            }
            SessionCommand::StopDemo => {
                if let Some(e) = driver_only() {
                    return e;
                }
                match self.finish_recording() {
                    Ok(Some(p)) => ack(id, "session_cmd", Some(p.display().to_string())),
                    Ok(None) => error(id, ErrorCode::Precondition, "no demonstration is being recorded"),
                    Err(e) => error(id, core_error_code(&e), e.to_string()),
                }
            }
            SessionCommand::Reset { seed } => {
                if let Some(e) = driver_only() {
                    return e;
                }
                let finished = self.finish_recording();
                if let Err(e) = finished.and_then(|_| self.env.reset(seed)) {
                    return error(id, core_error_code(&e), e.to_string());
                }
                self.session += 1;
                self.control = self.env.world.ego.last_control;
                self.input = (0.0, 0.0);
                ack(id, "session_cmd", Some(format!("session {}", self.session)))
            }
        }
    }

    fn start_recording(&mut self) -> evodrive_core::Result<PathBuf> {
        if self.recording.is_some() {
            return Err(CoreError::Precondition("a demonstration is already being recorded".into()));
        }
        if self.env.status.is_terminal() {
            return Err(CoreError::Precondition("episode has ended; reset first".into()));
        }
        std::fs::create_dir_all(&self.cfg.demo_dir).map_err(|e| CoreError::io(&self.cfg.demo_dir, e))?;
        let w = &self.env.world;
        let mut header = DemoHeader::new(w.dt, w.road.clone(), w.ego.geometry, w.limits, "teleop");
        header.seed = Some(self.env.episode_seed);
        let path = loop {
            let p = self.cfg.demo_dir.join(format!("human_{:03}.jsonl", self.demos_written));
            self.demos_written += 1;
            if !p.exists() {
                break p;
            }
        };
        let mut writer = DemoWriter::create(&path, &header)?;
        writer.append(&DemonstrationRecord::new(w.time(), &self.env.obs, w.ego.pose))?;
        self.recording = Some(Recording { writer, path: path.clone() });
        Ok(path)
    }

    fn finish_recording(&mut self) -> evodrive_core::Result<Option<PathBuf>> {
        match self.recording.take() {
            Some(r) => {
                let n = r.writer.finish()?;
                log::info!("demonstration {} finished with {n} records", r.path.display());
                Ok(Some(r.path))
            }
            None => Ok(None),
        }
    }

    fn start_replay(&mut self, id: ClientId, path: &Path) -> evodrive_core::Result<usize> {
        let log = read_episode_log(path)?;
        self.replay_sessions += 1;
        let n = log.frames.len();
        self.replays.insert(
            id,
            Replay {
                frames: log.frames,
                next: 0,
                paused: false,
                session: self.replay_sessions,
            },
        );
        Ok(n)
    }

    fn broadcast(&self, frame: WireFrame) -> Vec<Outgoing> {
        self.clients
            .iter()
            .filter(|(_, r)| r.is_some())
            .map(|(&to, _)| Outgoing {
                to,
                msg: ServerMessage::Frame(frame.clone()),
                droppable: true,
            })
            .collect()
    }

    /// Advance live stepping and every replay by one step.
    pub fn tick(&mut self) -> Vec<Outgoing> {
        let mut out = Vec::new();
        if self.live_running() {
            match self.step_live() {
                Ok(frame) => out.extend(self.broadcast(frame)),
                Err(e) => {
                    log::error!("live step failed: {e}");
                    self.paused = true;
                    for &to in self.clients.keys() {
                        out.extend(error(to, ErrorCode::Internal, e.to_string()));
                    }
                }
            }
        }
        for (&to, r) in self.replays.iter_mut() {
            if r.paused || r.next >= r.frames.len() {
                continue;
            }
            let frame = WireFrame::replay(r.session, &r.frames[r.next]);
            r.next += 1;
            out.push(Outgoing { to, msg: ServerMessage::Frame(frame), droppable: false });
        }
        self.replays.retain(|_, r| r.next < r.frames.len());
        out
    }

    /// Apply a control directly, as a tick under that held input does.
    pub fn step_with(&mut self, u: ControlInput) -> evodrive_core::Result<WireFrame> {
        let outcome = self.env.step(u)?;
        self.control = u;
        let w = &self.env.world;
        if let Some(r) = self.recording.as_mut() {
            r.writer.append(&DemonstrationRecord::new(w.time(), &self.env.obs, w.ego.pose))?;
        }
        let frame = WireFrame::live(self.session, w, &self.env.obs.s_lidar, outcome.status, outcome.reward.total);
        if outcome.status.is_terminal() {
            self.finish_recording()?;
        }
        Ok(frame)
    }

    fn step_live(&mut self) -> evodrive_core::Result<WireFrame> {
        let w = &self.env.world;
        let u = human_control(&self.control, self.input.0, self.input.1, &self.cfg, w.dt, &w.limits);
        self.step_with(u)
    }
}

fn core_error_code(e: &CoreError) -> ErrorCode {
    match e {
        CoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => ErrorCode::NotFound,
        CoreError::Precondition(_) | CoreError::Format { .. } | CoreError::SchemaMismatch { .. } => ErrorCode::Precondition,
        _ => ErrorCode::Internal,
    }
}

enum Event {
    Connected(ClientId, Sender<ServerMessage>, Arc<AtomicUsize>),
    Text(ClientId, String),
    Disconnected(ClientId),
}

/// Running service; dropping it without [`ServerHandle::shutdown`] leaves
/// the threads running.
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads {
            let _ = t.join();
        }
    }

    /// Block until the service stops.
    pub fn wait(self) {
        for t in self.threads {
            let _ = t.join();
        }
    }
}

/// Serve on an already bound listener.
pub fn serve(listener: TcpListener, cfg: TeleopConfig) -> anyhow::Result<ServerHandle> {
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let core = TeleopCore::new(cfg)?;
    let stop = Arc::new(AtomicBool::new(false));
    let (tx, rx) = mpsc::channel();
    let world = {
        let stop = stop.clone();
        thread::spawn(move || world_loop(core, rx, stop))
    };
    let accept = {
        let stop = stop.clone();
        thread::spawn(move || accept_loop(listener, tx, stop))
    };
    log::info!("teleop service listening on ws://{addr}");
    Ok(ServerHandle { addr, stop, threads: vec![world, accept] })
}

fn accept_loop(listener: TcpListener, events: Sender<Event>, stop: Arc<AtomicBool>) {
    let mut next_id: ClientId = 1;
    let mut clients = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let id = next_id;
                next_id += 1;
                let events = events.clone();
                let stop = stop.clone();
                clients.push(thread::spawn(move || {
                    if let Err(e) = client_loop(id, stream, events, stop) {
                        log::debug!("client {id} ({peer}): {e}");
                    }
                }));
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(10)),
            Err(e) => log::warn!("accept failed: {e}"),
        }
    }
    for c in clients {
        let _ = c.join();
    }
}

fn client_loop(id: ClientId, stream: std::net::TcpStream, events: Sender<Event>, stop: Arc<AtomicBool>) -> anyhow::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("handshake: {e}"))?;
    ws.get_ref().set_read_timeout(Some(SOCKET_POLL))?;
    let (out_tx, out_rx) = mpsc::channel::<ServerMessage>();
    let pending = Arc::new(AtomicUsize::new(0));
    events.send(Event::Connected(id, out_tx, pending.clone()))?;
    let result = (|| -> anyhow::Result<()> {
        while !stop.load(Ordering::SeqCst) {
            while let Ok(m) = out_rx.try_recv() {
                if matches!(m, ServerMessage::Frame(_)) {
                    pending.fetch_sub(1, Ordering::SeqCst);
                }
                ws.send(Message::Text(serde_json::to_string(&m)?))?;
            }
            match ws.read() {
                Ok(Message::Text(t)) => events.send(Event::Text(id, t.to_string()))?,
                Ok(Message::Close(_)) => return Ok(()),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
                Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
                Err(e) => return Err(e.into()),
            }
        }
        let _ = ws.close(None);
        Ok(())
    })();
    let _ = events.send(Event::Disconnected(id));
    result
}

fn world_loop(mut core: TeleopCore, events: Receiver<Event>, stop: Arc<AtomicBool>) {
    let period = Duration::from_secs_f64(1.0 / core.cfg.hz);
    let mut outboxes: BTreeMap<ClientId, (Sender<ServerMessage>, Arc<AtomicUsize>)> = BTreeMap::new();
    let mut next_tick = Instant::now() + period;
    let dispatch = |outboxes: &BTreeMap<ClientId, (Sender<ServerMessage>, Arc<AtomicUsize>)>, msgs: Vec<Outgoing>| {
        for o in msgs {
            let Some((tx, pending)) = outboxes.get(&o.to) else { continue };
            let is_frame = matches!(o.msg, ServerMessage::Frame(_));
            if o.droppable && pending.load(Ordering::SeqCst) >= MAX_PENDING_FRAMES {
                continue;
            }
            if is_frame {
                pending.fetch_add(1, Ordering::SeqCst);
            }
            let _ = tx.send(o.msg);
        }
    };
    while !stop.load(Ordering::SeqCst) {
        let now = Instant::now();
        if now >= next_tick {
            let msgs = core.tick();
            dispatch(&outboxes, msgs);
            next_tick += period;
            // never try to catch up a backlog of missed ticks
            if next_tick < now {
                next_tick = now + period;
            }
            continue;
        }
        match events.recv_timeout(next_tick - now) {
            Ok(Event::Connected(id, tx, pending)) => {
                outboxes.insert(id, (tx, pending));
                core.connect(id);
            }
            Ok(Event::Text(id, text)) => {
                let msgs = core.handle_text(id, &text);
                dispatch(&outboxes, msgs);
            }
            Ok(Event::Disconnected(id)) => {
                outboxes.remove(&id);
                if let Err(e) = core.disconnect(id) {
                    log::error!("finalizing demonstration after disconnect: {e}");
                }
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    if let Err(e) = core.finish_recording() {
        log::error!("finalizing demonstration at shutdown: {e}");
    }
}
