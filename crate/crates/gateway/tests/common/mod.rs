#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use announcer_core::{EngineConfig, Scenario};
use announcer_gateway::protocol::{Envelope, WireMessage};
use announcer_gateway::server::{spawn, ServeOptions, Server};
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

pub type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub async fn start(scenario: Scenario, config: EngineConfig, wait_clients: usize) -> Server {
    let opts = ServeOptions {
        addr: "127.0.0.1:0".parse().unwrap(),
        wait_clients,
    };
    spawn(scenario, config, opts).await.unwrap()
}

pub async fn connect(addr: SocketAddr) -> Ws {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}")).await.unwrap();
    ws
}

pub async fn send(ws: &mut Ws, message: WireMessage) {
    let text = serde_json::to_string(&Envelope { seq: 0, message }).unwrap();
    ws.send(Message::text(text)).await.unwrap();
}

/// Next decoded message, or `None` on timeout or close.
pub async fn next(ws: &mut Ws, wait: Duration) -> Option<Envelope> {
    loop {
        match tokio::time::timeout(wait, ws.next()).await {
            Ok(Some(Ok(Message::Text(t)))) => return Some(serde_json::from_str(t.as_str()).unwrap()),
            Ok(Some(Ok(_))) => continue,
            _ => return None,
        }
    }
}

/// Everything received during `span`.
pub async fn collect(ws: &mut Ws, span: Duration) -> Vec<Envelope> {
    let deadline = tokio::time::Instant::now() + span;
    let mut out = Vec::new();
    loop {
        let left = deadline.saturating_duration_since(tokio::time::Instant::now());
        if left.is_zero() {
            return out;
        }
        match next(ws, left).await {
            Some(e) => out.push(e),
            None => return out,
        }
    }
}

/// First `n` messages.
pub async fn take(ws: &mut Ws, n: usize) -> Vec<Envelope> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        out.push(next(ws, Duration::from_secs(10)).await.expect("message within 10 s"));
    }
    out
}

pub fn fast_config(speed: f64) -> EngineConfig {
    let mut c = EngineConfig::default();
    c.serve.speed = speed;
    c
}
