use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::clock::Clock;
use super::engine::{Engine, LogEntry, RejectedRule, RunError, RunOptions, SessionLog, SimChain};
use super::timeline::{compile, CompileError, CompileOptions, Payload};
use crate::device::Status;
use crate::odor::{approve, validate, OdorComposition, OdorEvent, SafetyPolicy, ScoreError};

const STUDY_SCENARIO: &str = include_str!("../../data/study_scenario.toml");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario TOML: {0}")]
    Toml(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Score(#[from] ScoreError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueDef {
    pub label: String,
    /// Onsets relative to the moment the cue fires.
    pub events: Vec<OdorEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptKind {
    Cue,
    /// Log-only distractor, such as a sound played in the room.
    Marker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptItem {
    pub at: f64,
    pub kind: ScriptKind,
    pub label: String,
}

/// A linear session: cues and markers at fixed times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub duration_s: f64,
    #[serde(default)]
    pub cues: Vec<CueDef>,
    #[serde(default)]
    pub script: Vec<ScriptItem>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Toml(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn check(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration_s must be >= 0, got {}", self.duration_s));
        }
        let mut prev = 0.0;
        for (i, item) in self.script.iter().enumerate() {
            if !(item.at >= prev && item.at.is_finite()) {
                return bad(format!("script item {i} at {} s is out of order", item.at));
            }
            prev = item.at;
            if item.kind == ScriptKind::Cue && self.cue(&item.label).is_none() {
                return bad(format!(
                    "script item {i} names unknown cue '{}'",
                    item.label
                ));
            }
        }
        for c in &self.cues {
            for (j, e) in c.events.iter().enumerate() {
                e.check().map_err(|r| {
                    ScenarioError::Invalid(format!("cue '{}' event {j}: {r}", c.label))
                })?;
            }
        }
        Ok(())
    }

    pub fn cue(&self, label: &str) -> Option<&CueDef> {
        self.cues.iter().find(|c| c.label == label)
    }
}

/// The bundled replica of the museum study session: 342 s long, one 15 s
/// smoke cue when the chandelier is lit, one telephone-ring distractor.
pub fn study_scenario() -> Scenario {
    Scenario::from_toml(STUDY_SCENARIO).expect("bundled scenario is valid")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioOptions {
    pub policy: SafetyPolicy,
    pub compile: CompileOptions,
    pub run: RunOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetSummary {
    pub label: Option<String>,
    pub address: u8,
    pub intended_t: f64,
    pub perceived_t: f64,
    pub error_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub address: u8,
    pub battery_remaining_mah: f64,
    pub battery_fraction: f64,
    /// Time the simulated nose spent above the exposure threshold.
    pub nose_exposure_s: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub seed: u64,
    pub compensation: bool,
    pub sim_step: f64,
    pub scripted_duration_s: f64,
    pub simulated_until_s: f64,
    /// Scored stimulus time of every delivered event.
    pub exposure_s: f64,
    pub cues_fired: usize,
    pub markers: usize,
    pub rejections: usize,
    pub onsets: Vec<OnsetSummary>,
    pub max_abs_onset_error_s: Option<f64>,
    pub devices: Vec<DeviceSummary>,
}

impl ScenarioSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub log: SessionLog,
    pub summary: ScenarioSummary,
}

/// Replays a scripted session.
///
/// Because the script is known in advance, cue deliveries are compiled
/// ahead of time and can be latency compensated. Each cue is checked
/// against the policy together with the cues accepted before it; a cue
/// that would break a rule is dropped and logged as rejected at its time.
pub fn scenario_run(
    scenario: &Scenario,
    clock: &mut dyn Clock,
    chain: &mut SimChain,
    opts: &ScenarioOptions,
) -> Result<ScenarioOutcome, ScenarioError> {
    scenario.check()?;
    let odorants = chain.topology().odorants();
    let mut accepted: Vec<OdorEvent> = Vec::new();
    let mut owner: Vec<usize> = Vec::new();
    let mut notes: Vec<(f64, LogEntry)> = Vec::new();
    let mut rejections = 0;
    let mut cues_fired = 0;
    let mut markers = 0;

    for (item_index, item) in scenario.script.iter().enumerate() {
        match item.kind {
            ScriptKind::Marker => {
                markers += 1;
                notes.push((
                    item.at,
                    LogEntry::Marker {
                        t: item.at,
                        label: item.label.clone(),
                    },
                ));
            }
            ScriptKind::Cue => {
                if chain.topology().is_empty() {
                    notes.push((
                        item.at,
                        LogEntry::Warning {
                            t: item.at,
                            message: format!(
                                "cue '{}' on an empty chain; nothing sent",
                                item.label
                            ),
                        },
                    ));
                    continue;
                }
                let def = scenario.cue(&item.label).expect("checked");
                let fresh: Vec<OdorEvent> = def
                    .events
                    .iter()
                    .map(|e| {
                        let mut e = e.clone();
                        e.onset += item.at;
                        e.label = Some(item.label.clone());
                        e
                    })
                    .collect();
                let mut candidate = accepted.clone();
                candidate.extend(fresh.iter().cloned());
                let (combined, order) = sorted(candidate)?;
                let violations: Vec<_> = validate(&combined, &opts.policy, &odorants)
                    .into_iter()
                    .filter(|v| order[v.event_index] >= accepted.len())
                    .collect();
                if violations.is_empty() {
                    cues_fired += 1;
                    owner.extend(std::iter::repeat_n(item_index, fresh.len()));
                    accepted.extend(fresh);
                } else {
                    rejections += 1;
                    notes.push((
                        item.at,
                        LogEntry::Rejected {
                            t: item.at,
                            label: item.label.clone(),
                            violations: violations.iter().map(RejectedRule::from).collect(),
                        },
                    ));
                }
            }
        }
    }

    let exposure_s = accepted.iter().map(|e| e.duration).sum();
    let (combined, order) = sorted(accepted)?;
    let validated = approve(combined, &opts.policy, &odorants).map_err(|v| {
        ScenarioError::Invalid(format!(
            "accepted cues failed validation: {} violation(s)",
            v.len()
        ))
    })?;
    let timeline = compile(&validated, chain.topology(), &opts.compile)?;

    // expected perceived onsets per script item
    let mut expected: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for c in &timeline.commands {
        if let (Payload::Deliver { concentration, .. }, Some(i)) = (c.payload, c.event_index) {
            let topo = chain.topology();
            let latency = topo.devices()[c.position]
                .config
                .onset_latency(concentration);
            expected
                .entry(owner[order[i]])
                .or_default()
                .push(c.issue_t + topo.arrival(c.position) + latency);
        }
    }
    for (item_index, onsets) in expected {
        let item = &scenario.script[item_index];
        notes.push((
            item.at,
            LogEntry::Cue {
                t: item.at,
                label: item.label.clone(),
                expected_onsets: onsets,
            },
        ));
    }
    // stable: markers and cues at one instant keep script order
    notes.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut engine = Engine::new(chain, &opts.run)?;
    for w in &timeline.warnings {
        engine.record(LogEntry::Warning {
            t: 0.0,
            message: w.clone(),
        });
    }
    for (t, entry) in notes {
        engine.schedule_note(t, entry);
    }
    for cmd in &timeline.commands {
        engine.schedule(cmd.clone())?;
    }
    let until = opts.run.until.unwrap_or(0.0).max(scenario.duration_s);
    engine.run_to_completion(Some(until), clock);
    let simulated_until_s = engine.now();
    let log = engine.into_log();

    let onsets: Vec<OnsetSummary> = log
        .entries
        .iter()
        .filter_map(|e| match e {
            LogEntry::Onset {
                t,
                address,
                intended_t,
                error,
                label,
                ..
            } => Some(OnsetSummary {
                label: label.clone(),
                address: *address,
                intended_t: *intended_t,
                perceived_t: *t,
                error_s: *error,
            }),
            _ => None,
        })
        .collect();
    let max_abs_onset_error_s = onsets.iter().map(|o| o.error_s.abs()).reduce(f64::max);
    let devices = chain
        .topology()
        .devices()
        .iter()
        .zip(chain.devices())
        .map(|(d, dev)| DeviceSummary {
            address: d.address,
            battery_remaining_mah: dev.state().battery_charge,
            battery_fraction: dev.state().battery_charge / d.config.battery_capacity,
            nose_exposure_s: dev.state().cumulative_exposure,
            status: dev.state().status,
        })
        .collect();

    let summary = ScenarioSummary {
        scenario: scenario.name.clone(),
        seed: opts.seed,
        compensation: opts.compile.compensation,
        sim_step: opts.run.sim_step,
        scripted_duration_s: scenario.duration_s,
        simulated_until_s,
        exposure_s,
        cues_fired,
        markers,
        rejections,
        onsets,
        max_abs_onset_error_s,
        devices,
    };
    Ok(ScenarioOutcome { log, summary })
}

/// Sorts by onset and returns, for each sorted position, the input index.
fn sorted(events: Vec<OdorEvent>) -> Result<(OdorComposition, Vec<usize>), ScoreError> {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| events[a].onset.total_cmp(&events[b].onset));
    let sorted = order.iter().map(|&i| events[i].clone()).collect();
    Ok((OdorComposition::new("session", sorted)?, order))
}
