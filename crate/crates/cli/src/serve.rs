/*
Copyright 2026 The cdfplan Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! WebSocket endpoints for `serve` and `replay`.
//!
//! One thread accepts connections and one thread per client moves frames
//! between its socket and the tick loop. The tick loop owns the episode,
//! drains client commands once per tick and broadcasts the resulting state.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use cdfplan::cdf::CdfField;
use cdfplan::sim::{Episode, Scenario};
use cdfplan::trace::TraceRecord;
use cdfplan::wire::{decode, encode, StateMsg, WireMessage};
use log::{debug, info, warn};
use tungstenite::Message;

use crate::{Failure, EXIT_CONFIG, EXIT_FAILURE, EXIT_PORT_BUSY};

const POLL: Duration = Duration::from_millis(2);
const SHUTDOWN_GRACE: Duration = Duration::from_secs(2);

enum Inbound {
    Joined(usize, Sender<Arc<str>>),
    Command(usize, WireMessage),
    Left(usize),
}

fn bind(port: u16) -> Result<TcpListener, Failure> {
    TcpListener::bind(("127.0.0.1", port)).map_err(|e| {
        let code = if e.kind() == ErrorKind::AddrInUse { EXIT_PORT_BUSY } else { EXIT_FAILURE };
        Failure::new(code, format!("port {port}: {e}"))
    })
}

fn spawn_acceptor(listener: TcpListener, tx: Sender<Inbound>) {
    thread::spawn(move || {
        for (id, stream) in listener.incoming().enumerate() {
            match stream {
                Ok(s) => {
                    let tx = tx.clone();
                    thread::spawn(move || client(id, s, tx));
                }
                Err(e) => warn!("accept failed: {e}"),
            }
        }
    });
}

fn encoded(msg: &WireMessage) -> Arc<str> {
    encode(msg).expect("server messages are finite").into()
}

fn client(id: usize, stream: TcpStream, tx: Sender<Inbound>) {
    let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            warn!("handshake with {peer} failed: {e}");
            return;
        }
    };
    if let Err(e) = ws.get_ref().set_read_timeout(Some(POLL)) {
        warn!("{peer}: {e}");
        return;
    }
    info!("client {id} connected from {peer}");
    let (out_tx, out_rx) = channel::<Arc<str>>();
    if tx.send(Inbound::Joined(id, out_tx)).is_err() {
        return;
    }
    let reply = |ws: &mut tungstenite::WebSocket<TcpStream>, msg: String| {
        ws.send(Message::text(encoded(&WireMessage::error(msg)).to_string()))
    };
    'session: loop {
        loop {
            match out_rx.try_recv() {
                Ok(text) => {
                    if ws.write(Message::text(text.to_string())).is_err() {
                        break 'session;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    break 'session;
                }
            }
        }
        if ws.flush().is_err() {
            break;
        }
        match ws.read() {
            Ok(Message::Text(text)) => match decode(&text) {
                Ok(msg) if msg.to_command().is_some() => {
                    if tx.send(Inbound::Command(id, msg)).is_err() {
                        break;
                    }
                }
                Ok(_) => {
                    if reply(&mut ws, "message type is not accepted from clients".into()).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    debug!("client {id}: malformed message: {e}");
                    if reply(&mut ws, e).is_err() {
                        break;
                    }
                }
            },
            Ok(Message::Binary(_)) => {
                if reply(&mut ws, "binary frames are not supported".into()).is_err() {
                    break;
                }
            }
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                break;
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => {
                debug!("client {id}: {e}");
                break;
            }
        }
    }
    info!("client {id} disconnected");
    let _ = tx.send(Inbound::Left(id));
}

/// Connected clients keyed by connection order.
#[derive(Default)]
struct Clients(BTreeMap<usize, Sender<Arc<str>>>);

impl Clients {
    fn broadcast(&mut self, text: &Arc<str>) {
        self.0.retain(|_, tx| tx.send(text.clone()).is_ok());
    }

    fn send(&mut self, id: usize, msg: &WireMessage) {
        if let Some(tx) = self.0.get(&id) {
            let _ = tx.send(encoded(msg));
        }
    }

    /// Drops all senders so client threads close their sockets, then waits
    /// for them to report.
    fn shutdown(mut self, rx: &Receiver<Inbound>) {
        let mut open = self.0.len();
        self.0.clear();
        let deadline = Instant::now() + SHUTDOWN_GRACE;
        while open > 0 {
            match rx.recv_timeout(deadline.saturating_duration_since(Instant::now())) {
                Ok(Inbound::Left(_)) => open -= 1,
                Ok(_) => {}
                Err(_) => break,
            }
        }
    }
}

/// Sleeps until the next tick; falls back to the current time when late.
fn pace(next: &mut Instant, period: Duration) {
    *next += period;
    let now = Instant::now();
    if *next > now {
        thread::sleep(*next - now);
    } else {
        *next = now;
    }
}

pub(crate) fn serve(
    scenario: Scenario,
    field: Arc<CdfField>,
    port: u16,
    tick_hz: f64,
    max_ticks: Option<u64>,
) -> Result<(), Failure> {
    let mut ep = Episode::new(scenario, field)?;
    if let Some(reason) = ep.failure() {
        warn!("initial plan failed: {reason}");
    }
    ep.set_unbounded();
    let listener = bind(port)?;
    info!("serving on ws://127.0.0.1:{port} at {tick_hz} Hz");
    let (tx, rx) = channel();
    spawn_acceptor(listener, tx);

    let period = Duration::from_secs_f64(1.0 / tick_hz);
    let mut clients = Clients::default();
    let mut last: Option<TraceRecord> = None;
    let mut next = Instant::now();
    let mut ticks = 0u64;
    while max_ticks.is_none_or(|m| ticks < m) {
        for inbound in rx.try_iter() {
            match inbound {
                Inbound::Joined(id, out) => {
                    clients.0.insert(id, out);
                }
                Inbound::Left(id) => {
                    clients.0.remove(&id);
                }
                Inbound::Command(id, msg) => {
                    let cmd = msg.to_command().expect("filtered by the client thread");
                    if let Err(e) = ep.apply(cmd) {
                        clients.send(id, &WireMessage::error(e.to_string()));
                    }
                }
            }
        }
        if !ep.paused() {
            if let Some(r) = ep.step() {
                last = Some(r);
            }
        }
        if let Some(r) = &last {
            clients.broadcast(&encoded(&WireMessage::State(StateMsg::from_episode(r, &ep))));
        }
        ticks += 1;
        pace(&mut next, period);
    }
    clients.shutdown(&rx);
    Ok(())
}

/// Waits for the first client, then streams the records at their recorded
/// spacing divided by `speed`. Clients joining later see the remainder.
pub(crate) fn replay(records: &[TraceRecord], speed: f64, port: u16) -> Result<(), Failure> {
    let first = records.first().ok_or_else(|| Failure::new(EXIT_CONFIG, "trace is empty"))?;
    let listener = bind(port)?;
    info!("replaying {} records on ws://127.0.0.1:{port}", records.len());
    let (tx, rx) = channel();
    spawn_acceptor(listener, tx);

    let mut clients = Clients::default();
    let handle = |inbound: Inbound, clients: &mut Clients| match inbound {
        Inbound::Joined(id, out) => {
            clients.0.insert(id, out);
        }
        Inbound::Left(id) => {
            clients.0.remove(&id);
        }
        Inbound::Command(id, _) => clients.send(id, &WireMessage::error("replay accepts no commands")),
    };
    while clients.0.is_empty() {
        match rx.recv_timeout(Duration::from_secs(3600)) {
            Ok(inbound) => handle(inbound, &mut clients),
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => return Err(Failure::new(EXIT_FAILURE, "listener stopped")),
        }
    }
    let start = Instant::now();
    for r in records {
        let due = start + Duration::from_secs_f64(((r.t - first.t) / speed).max(0.0));
        while let Some(wait) = due.checked_duration_since(Instant::now()).filter(|d| !d.is_zero()) {
            match rx.recv_timeout(wait) {
                Ok(inbound) => handle(inbound, &mut clients),
                Err(_) => break,
            }
        }
        for inbound in rx.try_iter() {
            handle(inbound, &mut clients);
        }
        clients.broadcast(&encoded(&WireMessage::State(StateMsg::from_record(r))));
    }
    clients.shutdown(&rx);
    Ok(())
}
