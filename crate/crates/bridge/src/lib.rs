//! Live session server for the overtaking simulator.
//!
//! One operator client connects over WebSocket, receives a `hello` message
//! followed by one `frame` per planner tick, and can pause/resume the run,
//! request an overtake or an abort, or spawn oncoming traffic. The message
//! schema is described in `PROTOCOL.md` next to this crate.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{parse_client, Ack, CommandKind, Hello, ServerMessage, SessionCommand, StateFrame, PROTOCOL_VERSION};
pub use server::{serve, BridgeError, ServeOptions, Server};
pub use session::{Flow, Session};
