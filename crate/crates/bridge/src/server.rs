//! WebSocket transport. A network thread owns the socket; a simulation
//! thread owns the [`Session`]. They talk over two channels only.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use thiserror::Error;
use tungstenite::{Message, WebSocket};

use overtake_core::sim::Scenario;

use crate::protocol::{parse_client, ServerMessage, SessionCommand};
use crate::session::{Flow, Session};

const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("socket error: {0}")]
    Io(#[from] std::io::Error),
    #[error("simulation thread panicked")]
    SimPanicked,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServeOptions {
    /// Start stepping as soon as a client connects.
    pub autostart: bool,
    /// Simulated seconds per wall-clock second.
    pub speed_factor: f64,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { autostart: false, speed_factor: 1.0 }
    }
}

enum Inbound {
    Connected,
    Disconnected,
    Command(SessionCommand),
}

pub struct Server {
    listener: TcpListener,
    scenario: Scenario,
    options: ServeOptions,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, scenario: Scenario, options: ServeOptions) -> Result<Self, BridgeError> {
        Ok(Self { listener: TcpListener::bind(addr)?, scenario, options })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, BridgeError> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves clients one at a time until a `shutdown` command arrives.
    pub fn run(self) -> Result<(), BridgeError> {
        let (in_tx, in_rx) = mpsc::channel();
        let (out_tx, out_rx) = mpsc::channel();
        let mut session = Session::new(self.scenario);
        session.set_speed_factor(self.options.speed_factor);
        let autostart = self.options.autostart;
        let sim = thread::spawn(move || sim_loop(session, autostart, in_rx, out_tx));

        let result = network_loop(&self.listener, &in_tx, &out_rx);
        drop(in_tx);
        sim.join().map_err(|_| BridgeError::SimPanicked)?;
        result
    }
}

/// Binds `127.0.0.1:port` and serves until shutdown.
pub fn serve(scenario: Scenario, port: u16, options: ServeOptions) -> Result<(), BridgeError> {
    let server = Server::bind(("127.0.0.1", port), scenario, options)?;
    info!("bridge listening on ws://{}", server.local_addr()?);
    server.run()
}

fn send_all(out: &Sender<ServerMessage>, msgs: Vec<ServerMessage>) -> bool {
    msgs.into_iter().all(|m| out.send(m).is_ok())
}

fn sim_loop(mut session: Session, autostart: bool, rx: Receiver<Inbound>, out: Sender<ServerMessage>) {
    let mut next_tick = Instant::now();
    loop {
        let msg = if session.is_running() {
            match rx.recv_timeout(next_tick.saturating_duration_since(Instant::now())) {
                Ok(m) => Some(m),
                Err(RecvTimeoutError::Timeout) => None,
                Err(RecvTimeoutError::Disconnected) => return,
            }
        } else {
            match rx.recv() {
                Ok(m) => Some(m),
                Err(_) => return,
            }
        };
        match msg {
            Some(Inbound::Connected) => {
                if autostart {
                    session.start();
                }
                let mut msgs = vec![session.hello()];
                if let Some(f) = session.last_frame() {
                    msgs.push(ServerMessage::Frame(Box::new(f.clone())));
                }
                send_all(&out, msgs);
                next_tick = Instant::now();
            }
            Some(Inbound::Disconnected) => {
                debug!("client left, pausing");
                session.pause();
            }
            Some(Inbound::Command(cmd)) => {
                let was_running = session.is_running();
                let (msgs, flow) = session.handle(cmd);
                send_all(&out, msgs);
                if flow == Flow::Shutdown {
                    return;
                }
                if !was_running && session.is_running() {
                    next_tick = Instant::now();
                }
            }
            None => {
                let msgs = session.step();
                send_all(&out, msgs);
                let period = Duration::from_secs_f64(session.planner_period() / session.speed_factor());
                // no catch-up bursts after a stall
                next_tick = (next_tick + period).max(Instant::now());
            }
        }
    }
}

enum Ended {
    Client,
    Shutdown,
}

fn network_loop(listener: &TcpListener, tx: &Sender<Inbound>, out: &Receiver<ServerMessage>) -> Result<(), BridgeError> {
    loop {
        let (stream, peer) = listener.accept()?;
        info!("client connected from {peer}");
        let mut ws = match tungstenite::accept(stream) {
            Ok(ws) => ws,
            Err(e) => {
                warn!("handshake failed: {e}");
                continue;
            }
        };
        ws.get_ref().set_read_timeout(Some(POLL))?;
        if tx.send(Inbound::Connected).is_err() {
            return Ok(());
        }
        // anything queued before this client's hello belongs to an earlier client
        loop {
            match out.recv() {
                Ok(msg @ ServerMessage::Hello(_)) => {
                    let _ = ws.send(Message::text(msg.to_json()));
                    break;
                }
                Ok(_) => {}
                Err(_) => return Ok(()),
            }
        }
        match client_loop(&mut ws, tx, out) {
            Ended::Client => {
                info!("client disconnected");
                if tx.send(Inbound::Disconnected).is_err() {
                    return Ok(());
                }
            }
            Ended::Shutdown => {
                let _ = ws.close(None);
                let _ = ws.flush();
                return Ok(());
            }
        }
    }
}

fn client_loop(ws: &mut WebSocket<TcpStream>, tx: &Sender<Inbound>, out: &Receiver<ServerMessage>) -> Ended {
    loop {
        match ws.read() {
            Ok(Message::Text(text)) => match parse_client(text.as_str()) {
                Ok(cmd) => {
                    if tx.send(Inbound::Command(cmd)).is_err() {
                        return Ended::Shutdown;
                    }
                }
                Err(message) => {
                    let reply = ServerMessage::Error { id: None, message };
                    if ws.send(Message::text(reply.to_json())).is_err() {
                        return Ended::Client;
                    }
                }
            },
            Ok(Message::Close(_)) => return Ended::Client,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => {
                debug!("read failed: {e}");
                return Ended::Client;
            }
        }
        loop {
            match out.try_recv() {
                Ok(msg) => {
                    if ws.send(Message::text(msg.to_json())).is_err() {
                        return Ended::Client;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return Ended::Shutdown,
            }
        }
    }
}
