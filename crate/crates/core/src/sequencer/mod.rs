//! Turning compositions into commands and playing them on the simulated
//! chain, either compiled ahead of time or fired live from cues.

mod clock;
mod engine;
mod live;
mod scenario;
mod timeline;

pub use clock::{Clock, SimClock, WallClock};
pub use engine::{
    run, Engine, LogEntry, RejectedRule, RunError, RunOptions, SessionLog, SimChain, Snapshot,
};
pub use live::{CueError, CueSender, CueTable, LiveSession};
pub use scenario::{
    scenario_run, study_scenario, CueDef, DeviceSummary, OnsetSummary, Scenario, ScenarioError,
    ScenarioOptions, ScenarioOutcome, ScenarioSummary, ScriptItem, ScriptKind,
};
pub use timeline::{compile, CompileError, CompileOptions, Payload, TimedCommand, Timeline};
