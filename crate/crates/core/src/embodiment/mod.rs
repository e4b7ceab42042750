//! Couplings between the network and its environment.

pub mod arena;
pub mod loop_task;

use serde::{Deserialize, Serialize};

pub use arena::{ArenaConfig, ArenaTask, RobotPose, Side};
pub use loop_task::{LoopMode, LoopTask, LoopTaskConfig, RemovalWindow, StimulationState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// A stimulation pulse was delivered.
    Pulse,
    /// Stimulation was switched off.
    RemovalOn,
    /// Stimulation was switched (back) on; starts an episode.
    RemovalOff,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Pulse => "pulse",
            EventKind::RemovalOn => "removal_on",
            EventKind::RemovalOff => "removal_off",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pulse" => Some(EventKind::Pulse),
            "removal_on" => Some(EventKind::RemovalOn),
            "removal_off" => Some(EventKind::RemovalOff),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StimEvent {
    pub time_ms: f64,
    pub kind: EventKind,
}
