//! Live streaming service: one simulation loop, per-connection reader and
//! writer tasks, bounded outboxes in between.

use std::collections::{BTreeMap, VecDeque};
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use announcer_core::adapt::FeedbackEvent;
use announcer_core::engine::{Command, Engine, EngineError};
use announcer_core::{EngineConfig, Scenario};
use futures_util::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, Notify};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{decode_inbound, encode, Envelope, ProtocolError, WireMessage};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub addr: SocketAddr,
    /// Hold the simulation at t=0 until this many viewers are connected.
    pub wait_clients: usize,
}

/// Per-viewer queue. Over capacity the oldest droppable message goes;
/// events, shots, prompts and config updates are always kept.
#[derive(Debug)]
pub struct Outbox {
    capacity: usize,
    state: Mutex<OutboxState>,
    notify: Notify,
}

#[derive(Debug, Default)]
struct OutboxState {
    queue: VecDeque<WireMessage>,
    closed: bool,
    dropped: u64,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            state: Mutex::new(OutboxState::default()),
            notify: Notify::new(),
        }
    }

    pub fn push(&self, msg: WireMessage) {
        let mut s = self.state.lock().unwrap();
        if s.closed {
            return;
        }
        if s.queue.len() >= self.capacity {
            let victim = s
                .queue
                .iter()
                .position(|m| matches!(m, WireMessage::Snapshot { .. }))
                .or_else(|| s.queue.iter().position(WireMessage::droppable));
            match victim {
                Some(i) => {
                    s.queue.remove(i);
                    s.dropped += 1;
                }
                None if msg.droppable() => {
                    s.dropped += 1;
                    return;
                }
                None => {}
            }
        }
        s.queue.push_back(msg);
        drop(s);
        self.notify.notify_one();
    }

    pub fn try_pop(&self) -> Option<WireMessage> {
        self.state.lock().unwrap().queue.pop_front()
    }

    /// Waits for the next message; `None` once closed and drained.
    pub async fn pop(&self) -> Option<WireMessage> {
        loop {
            {
                let mut s = self.state.lock().unwrap();
                if let Some(m) = s.queue.pop_front() {
                    return Some(m);
                }
                if s.closed {
                    return None;
                }
            }
            self.notify.notified().await;
        }
    }

    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.notify.notify_one();
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.state.lock().unwrap().dropped
    }
}

enum LoopMsg {
    Join { session: String, outbox: Arc<Outbox> },
    Leave { session: String },
    Input { session: String, message: WireMessage },
}

pub struct Server {
    pub addr: SocketAddr,
    pub handle: JoinHandle<Result<(), ServeError>>,
}

/// Binds and starts the service in the background.
pub async fn spawn(scenario: Scenario, config: EngineConfig, opts: ServeOptions) -> Result<Server, ServeError> {
    let engine = Engine::new(&scenario, &config)?;
    let listener = TcpListener::bind(opts.addr).await?;
    let addr = listener.local_addr()?;
    let (tx, rx) = mpsc::channel(1024);
    let capacity = config.serve.outbox;
    let acceptor = tokio::spawn(accept_loop(listener, tx, capacity));
    let sim = SimLoop {
        engine,
        inbox: rx,
        clients: BTreeMap::new(),
        snapshot_every: snapshot_every(scenario.tick_rate as f64, config.serve.snapshot_hz),
        tick_interval: Duration::from_secs_f64(1.0 / (scenario.tick_rate as f64 * config.serve.speed)),
        wait_clients: opts.wait_clients,
    };
    let handle = tokio::spawn(async move {
        let r = sim.run().await;
        acceptor.abort();
        r
    });
    Ok(Server { addr, handle })
}

fn snapshot_every(tick_rate: f64, hz: f64) -> u64 {
    (tick_rate / hz).round().max(1.0) as u64
}

async fn accept_loop(listener: TcpListener, tx: mpsc::Sender<LoopMsg>, capacity: usize) {
    let mut next_id = 0u64;
    loop {
        let (stream, peer) = match listener.accept().await {
            Ok(s) => s,
            Err(e) => {
                tracing::warn!("accept failed: {e}");
                continue;
            }
        };
        next_id += 1;
        let session = format!("s{next_id}");
        let tx = tx.clone();
        tokio::spawn(async move {
            if let Err(e) = connection(stream, session.clone(), tx, capacity).await {
                tracing::debug!(%peer, session, "connection ended: {e}");
            }
        });
    }
}

async fn connection(stream: TcpStream, session: String, tx: mpsc::Sender<LoopMsg>, capacity: usize) -> Result<(), tokio_tungstenite::tungstenite::Error> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();
    let outbox = Arc::new(Outbox::new(capacity));
    if tx
        .send(LoopMsg::Join {
            session: session.clone(),
            outbox: outbox.clone(),
        })
        .await
        .is_err()
    {
        return Ok(());
    }
    tracing::info!(session, "viewer connected");

    let writer_box = outbox.clone();
    let writer = tokio::spawn(async move {
        let mut seq = 0u64;
        while let Some(message) = writer_box.pop().await {
            let text = encode(&Envelope { seq, message });
            seq += 1;
            if sink.send(Message::text(text)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });

    while let Some(frame) = source.next().await {
        let reply = match frame {
            Ok(Message::Text(text)) => match decode_inbound(text.as_str()) {
                Ok(env) => {
                    let _ = tx
                        .send(LoopMsg::Input {
                            session: session.clone(),
                            message: env.message,
                        })
                        .await;
                    None
                }
                Err(e) => Some(e),
            },
            Ok(Message::Binary(_)) => Some(ProtocolError::Binary),
            Ok(Message::Close(_)) => break,
            Ok(_) => None,
            Err(e) => {
                tracing::debug!(session, "read error: {e}");
                break;
            }
        };
        if let Some(e) = reply {
            outbox.push(WireMessage::Error { message: e.to_string() });
        }
    }
    let _ = tx.send(LoopMsg::Leave { session: session.clone() }).await;
    outbox.close();
    let _ = writer.await;
    tracing::info!(session, "viewer disconnected");
    Ok(())
}

struct SimLoop {
    engine: Engine,
    inbox: mpsc::Receiver<LoopMsg>,
    clients: BTreeMap<String, Arc<Outbox>>,
    snapshot_every: u64,
    tick_interval: Duration,
    wait_clients: usize,
}

impl SimLoop {
    async fn run(mut self) -> Result<(), ServeError> {
        while self.clients.len() < self.wait_clients {
            match self.inbox.recv().await {
                Some(m) => self.handle(m),
                None => return Ok(()),
            }
        }
        let mut interval = tokio::time::interval(self.tick_interval);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            interval.tick().await;
            while let Ok(m) = self.inbox.try_recv() {
                self.handle(m);
            }
            let report = self.engine.tick()?;
            for n in &report.notices {
                if let Some(msg) = WireMessage::from_notice(n) {
                    self.broadcast(msg);
                }
            }
            if self.engine.world().tick.is_multiple_of(self.snapshot_every) {
                let snap = WireMessage::snapshot(self.engine.world(), &report.record);
                self.broadcast(snap);
            }
        }
    }

    fn broadcast(&self, msg: WireMessage) {
        for outbox in self.clients.values() {
            outbox.push(msg.clone());
        }
    }

    fn handle(&mut self, m: LoopMsg) {
        match m {
            LoopMsg::Join { session, outbox } => {
                outbox.push(WireMessage::Config { config: *self.engine.qoe() });
                self.clients.insert(session, outbox);
            }
            LoopMsg::Leave { session } => {
                self.clients.remove(&session);
            }
            LoopMsg::Input { session, message } => {
                let cmd = match message {
                    WireMessage::Feedback { kind, context } => Command::Feedback(FeedbackEvent {
                        kind,
                        timestamp: self.engine.world().time,
                        context,
                        session: session.clone(),
                    }),
                    WireMessage::SetConfig { patch } => Command::SetConfig(patch),
                    _ => return,
                };
                if let Err(e) = self.engine.submit(cmd) {
                    if let Some(o) = self.clients.get(&session) {
                        o.push(WireMessage::Error { message: e.to_string() });
                    }
                }
            }
        }
    }
}
