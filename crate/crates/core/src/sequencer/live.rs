use std::collections::BTreeMap;
use std::sync::mpsc::{channel, Receiver, Sender};

use thiserror::Error;

use super::clock::Clock;
use super::engine::{Engine, LogEntry, RejectedRule, RunError, RunOptions, SessionLog, SimChain};
use super::timeline::{compile, CompileError, CompileOptions, Payload};
use crate::odor::{
    approve, validate, OdorComposition, OdorEvent, OdorantMap, SafetyPolicy, ScoreError, Violation,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CueError {
    #[error("unknown cue '{label}' (available: {})", available.join(", "))]
    UnknownCue {
        label: String,
        available: Vec<String>,
    },
    #[error("cue '{label}' rejected by safety policy ({} violation(s))", violations.len())]
    Rejected {
        label: String,
        violations: Vec<Violation>,
    },
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

/// Named composition fragments, each rebased to start at 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CueTable {
    cues: BTreeMap<String, OdorComposition>,
}

impl CueTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// One entry per cue label in `comp`.
    pub fn from_composition(comp: &OdorComposition) -> Result<Self, ScoreError> {
        let mut table = CueTable::new();
        for label in comp.cues.keys() {
            table.insert(label.clone(), comp.cue(label)?);
        }
        Ok(table)
    }

    pub fn insert(&mut self, label: impl Into<String>, fragment: OdorComposition) {
        self.cues.insert(label.into(), fragment);
    }

    pub fn get(&self, label: &str) -> Option<&OdorComposition> {
        self.cues.get(label)
    }

    pub fn labels(&self) -> Vec<String> {
        self.cues.keys().cloned().collect()
    }
}

/// Handle for firing cues from another thread. Requests are timestamped
/// when the session loop picks them up.
#[derive(Debug, Clone)]
pub struct CueSender(Sender<String>);

impl CueSender {
    /// Returns false once the session is gone.
    pub fn trigger(&self, label: impl Into<String>) -> bool {
        self.0.send(label.into()).is_ok()
    }
}

/// Live playback: cues fire when an external event happens, so they
/// cannot be issued ahead of time. Each delivery is logged with the
/// perceived onset the model expects instead.
pub struct LiveSession<'a> {
    engine: Engine<'a>,
    table: CueTable,
    policy: SafetyPolicy,
    odorants: OdorantMap,
    history: Vec<OdorEvent>,
    tx: Sender<String>,
    rx: Receiver<String>,
    rejections: usize,
}

impl<'a> LiveSession<'a> {
    pub fn new(
        chain: &'a mut SimChain,
        table: CueTable,
        policy: SafetyPolicy,
        opts: &RunOptions,
    ) -> Result<Self, RunError> {
        let odorants = chain.topology().odorants();
        let engine = Engine::new(chain, opts)?;
        let (tx, rx) = channel();
        Ok(LiveSession {
            engine,
            table,
            policy,
            odorants,
            history: Vec::new(),
            tx,
            rx,
            rejections: 0,
        })
    }

    pub fn sender(&self) -> CueSender {
        CueSender(self.tx.clone())
    }

    pub fn now(&self) -> f64 {
        self.engine.now()
    }

    pub fn rejections(&self) -> usize {
        self.rejections
    }

    pub fn engine(&self) -> &Engine<'a> {
        &self.engine
    }

    /// Events delivered so far, in session time.
    pub fn history(&self) -> &[OdorEvent] {
        &self.history
    }

    pub fn marker(&mut self, label: impl Into<String>) {
        let t = self.engine.now();
        self.engine.record(LogEntry::Marker {
            t,
            label: label.into(),
        });
    }

    /// Fires the cue at the current time. Returns the log entries the
    /// trigger itself produced.
    pub fn trigger_cue(&mut self, label: &str) -> Result<Vec<LogEntry>, CueError> {
        let now = self.engine.now();
        let Some(fragment) = self.table.get(label) else {
            return Err(CueError::UnknownCue {
                label: label.to_string(),
                available: self.table.labels(),
            });
        };
        let topo = self.engine.chain().topology();
        if topo.is_empty() {
            let entry = LogEntry::Warning {
                t: now,
                message: format!("cue '{label}' triggered on an empty chain; nothing sent"),
            };
            self.engine.record(entry.clone());
            return Ok(vec![entry]);
        }
        let shifted = fragment.shifted(now);

        // the new events are judged together with everything already played
        let mut all = self.history.clone();
        let first_new = all.len();
        all.extend(shifted.events.iter().cloned());
        let mut order: Vec<usize> = (0..all.len()).collect();
        order.sort_by(|&a, &b| all[a].onset.total_cmp(&all[b].onset));
        let sorted = order.iter().map(|&i| all[i].clone()).collect();
        let combined = OdorComposition::new("session", sorted)?;
        let violations: Vec<Violation> = validate(&combined, &self.policy, &self.odorants)
            .into_iter()
            .filter(|v| order[v.event_index] >= first_new)
            .collect();
        let validated = if violations.is_empty() {
            approve(shifted.clone(), &self.policy, &self.odorants)
        } else {
            Err(violations)
        };
        let validated = match validated {
            Ok(v) => v,
            Err(violations) => {
                self.rejections += 1;
                self.engine.record(LogEntry::Rejected {
                    t: now,
                    label: label.to_string(),
                    violations: violations.iter().map(RejectedRule::from).collect(),
                });
                return Err(CueError::Rejected {
                    label: label.to_string(),
                    violations,
                });
            }
        };

        let timeline = compile(
            &validated,
            topo,
            &CompileOptions {
                compensation: false,
            },
        )?;
        let expected_onsets: Vec<f64> = timeline
            .commands
            .iter()
            .filter_map(|c| match c.payload {
                Payload::Deliver { concentration, .. } => {
                    let config = &topo.devices()[c.position].config;
                    Some(c.issue_t + topo.arrival(c.position) + config.onset_latency(concentration))
                }
                Payload::Stop { .. } => None,
            })
            .collect();
        let entry = LogEntry::Cue {
            t: now,
            label: label.to_string(),
            expected_onsets,
        };
        self.engine.record(entry.clone());
        for mut cmd in timeline.commands {
            cmd.label = Some(label.to_string());
            self.engine
                .schedule(cmd)
                .expect("compiled against this chain");
        }
        self.engine.process_due(now);
        self.history.extend(validated.into_inner().events);
        Ok(vec![entry])
    }

    /// Handles queued triggers, one result per request.
    pub fn poll(&mut self) -> Vec<Result<Vec<LogEntry>, CueError>> {
        let labels: Vec<String> = self.rx.try_iter().collect();
        labels.iter().map(|l| self.trigger_cue(l)).collect()
    }

    /// Steps to `t`, picking up queued triggers before every step.
    pub fn advance_to(&mut self, t: f64, clock: &mut dyn Clock) {
        loop {
            self.poll();
            if self.engine.now() >= t - 1e-9 {
                break;
            }
            self.engine.step_once(clock);
        }
    }

    /// Emergency stop on every device.
    pub fn panic(&mut self) {
        self.engine.panic_stop();
        let now = self.engine.now();
        self.engine.process_due(now);
    }

    /// Lets pending commands and onsets play out, then returns the log.
    pub fn finish(mut self, clock: &mut dyn Clock) -> SessionLog {
        self.poll();
        self.engine.run_to_completion(None, clock);
        self.engine.into_log()
    }
}
