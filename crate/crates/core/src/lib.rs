//! Behaviour planning and NMPC trajectory generation for overtaking with an
//! abort option on a two-lane road, plus a deterministic closed-loop
//! simulator used by the CLI and the visualisation bridge.

pub mod behavior;
pub mod dynamics;
pub mod geometry;
pub mod nmpc;
pub mod reachability;
pub mod riskmap;
pub mod road;
pub mod sim;
