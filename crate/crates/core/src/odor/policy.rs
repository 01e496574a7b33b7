use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::score::OdorComposition;

/// Metadata for an odorant loaded into a device's odor column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdorantSpec {
    pub name: String,
    #[serde(default)]
    pub constituents: Vec<String>,
    /// Spread of individual detection thresholds, in orders of magnitude.
    #[serde(default)]
    pub detection_threshold_span: f64,
}

impl OdorantSpec {
    /// Cade oil (*Juniperus oxycedrus*), the smoke odorant of the exhibit.
    pub fn cade() -> Self {
        OdorantSpec {
            name: "cade".into(),
            constituents: [
                "delta-Cadinene",
                "Torreyol",
                "Epicubenol",
                "Zonarene",
                "beta-Caryophyllene",
            ]
            .map(String::from)
            .to_vec(),
            detection_threshold_span: 6.0,
        }
    }
}

impl Default for OdorantSpec {
    fn default() -> Self {
        Self::cade()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("policy limit `{0}` must be positive")]
    NonPositive(&'static str),
    #[error("max_concentration must not exceed 1, got {0}")]
    ConcentrationAboveOne(f64),
    #[error("invalid policy TOML: {0}")]
    Toml(String),
}

/// Exposure limits checked before anything is sent to a device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyPolicy {
    pub approved_odorants: BTreeSet<String>,
    pub max_concentration: f64,
    /// Longest single stimulus, seconds.
    pub max_single_exposure: f64,
    /// Smallest gap between stimuli on one odor channel, seconds.
    pub min_inter_stimulus: f64,
    /// Session total, seconds.
    pub max_cumulative_exposure: f64,
}

impl Default for SafetyPolicy {
    fn default() -> Self {
        SafetyPolicy {
            approved_odorants: BTreeSet::from(["cade".to_string()]),
            max_concentration: 1.0,
            max_single_exposure: 60.0,
            min_inter_stimulus: 30.0,
            max_cumulative_exposure: 300.0,
        }
    }
}

impl SafetyPolicy {
    pub fn check(&self) -> Result<(), PolicyError> {
        for (name, v) in [
            ("max_concentration", self.max_concentration),
            ("max_single_exposure", self.max_single_exposure),
            ("min_inter_stimulus", self.min_inter_stimulus),
            ("max_cumulative_exposure", self.max_cumulative_exposure),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(PolicyError::NonPositive(name));
            }
        }
        if self.max_concentration > 1.0 {
            return Err(PolicyError::ConcentrationAboveOne(self.max_concentration));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, PolicyError> {
        let p: SafetyPolicy = toml::from_str(text).map_err(|e| PolicyError::Toml(e.to_string()))?;
        p.check()?;
        Ok(p)
    }
}

/// Which odorant sits behind each `(device_address, odor_channel)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OdorantMap {
    by_channel: BTreeMap<(u8, u8), String>,
    by_device: BTreeMap<u8, String>,
}

impl OdorantMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assign(&mut self, device: u8, channel: u8, odorant: impl Into<String>) -> &mut Self {
        self.by_channel.insert((device, channel), odorant.into());
        self
    }

    /// Every channel of `device` carries `odorant` unless assigned otherwise.
    pub fn assign_device(&mut self, device: u8, odorant: impl Into<String>) -> &mut Self {
        self.by_device.insert(device, odorant.into());
        self
    }

    pub fn odorant(&self, device: u8, channel: u8) -> Option<&str> {
        self.by_channel
            .get(&(device, channel))
            .or_else(|| self.by_device.get(&device))
            .map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    UnapprovedOdorant,
    OverConcentration,
    OverDuration,
    InterStimulusGap,
    ChannelOverlap,
    CumulativeExposure,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::UnapprovedOdorant => "unapproved_odorant",
            Rule::OverConcentration => "over_concentration",
            Rule::OverDuration => "over_duration",
            Rule::InterStimulusGap => "inter_stimulus_gap",
            Rule::ChannelOverlap => "channel_overlap",
            Rule::CumulativeExposure => "cumulative_exposure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub rule: Rule,
    pub event_index: usize,
    pub measured: Option<f64>,
    pub limit: Option<f64>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let num = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
        write!(
            f,
            "{:<20} {:>5} {:>10} {:>10}  {}",
            self.rule.id(),
            self.event_index,
            num(self.measured),
            num(self.limit),
            self.detail
        )
    }
}

/// Formats violations as a fixed-width table.
pub fn violation_table(violations: &[Violation]) -> String {
    let mut out = format!(
        "{:<20} {:>5} {:>10} {:>10}  {}\n",
        "rule", "event", "measured", "limit", "detail"
    );
    for v in violations {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

/// Checks a composition against a policy. An empty result is a pass.
///
/// Gap rules look at the closest earlier-starting event on the same
/// `(device, channel)`; an overlap breaks both the overlap rule and the gap
/// rule. Cumulative exposure adds durations in onset order, each capped at
/// `max_single_exposure` (longer stimuli are already reported as
/// over-duration), and flags every event at which the running total goes
/// past the limit. Adding an event can only add violations.
pub fn validate(
    comp: &OdorComposition,
    policy: &SafetyPolicy,
    odorants: &OdorantMap,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut last_end: BTreeMap<(u8, u8), f64> = BTreeMap::new();
    let mut cumulative = 0.0;

    for (i, e) in comp.events.iter().enumerate() {
        match odorants.odorant(e.device_address, e.odor_channel) {
            Some(name) if policy.approved_odorants.contains(name) => {}
            found => out.push(Violation {
                rule: Rule::UnapprovedOdorant,
                event_index: i,
                measured: None,
                limit: None,
                detail: match found {
                    Some(name) => format!("odorant `{name}` not approved"),
                    None => format!(
                        "no odorant assigned to device {} channel {}",
                        e.device_address, e.odor_channel
                    ),
                },
            }),
        }
        if e.concentration > policy.max_concentration {
            out.push(Violation {
                rule: Rule::OverConcentration,
                event_index: i,
                measured: Some(e.concentration),
                limit: Some(policy.max_concentration),
                detail: "concentration above limit".into(),
            });
        }
        if e.duration > policy.max_single_exposure {
            out.push(Violation {
                rule: Rule::OverDuration,
                event_index: i,
                measured: Some(e.duration),
                limit: Some(policy.max_single_exposure),
                detail: "single exposure too long".into(),
            });
        }

        let key = (e.device_address, e.odor_channel);
        if let Some(&prev_end) = last_end.get(&key) {
            let gap = e.onset - prev_end;
            if gap < 0.0 {
                out.push(Violation {
                    rule: Rule::ChannelOverlap,
                    event_index: i,
                    measured: Some(gap),
                    limit: Some(0.0),
                    detail: format!(
                        "overlaps earlier event on device {} channel {}",
                        key.0, key.1
                    ),
                });
            }
            if gap < policy.min_inter_stimulus {
                out.push(Violation {
                    rule: Rule::InterStimulusGap,
                    event_index: i,
                    measured: Some(gap),
                    limit: Some(policy.min_inter_stimulus),
                    detail: "too soon after previous stimulus".into(),
                });
            }
        }
        let end = last_end.entry(key).or_insert(f64::NEG_INFINITY);
        *end = end.max(e.end());

        cumulative += e.duration.min(policy.max_single_exposure);
        if cumulative > policy.max_cumulative_exposure {
            out.push(Violation {
                rule: Rule::CumulativeExposure,
                event_index: i,
                measured: Some(cumulative),
                limit: Some(policy.max_cumulative_exposure),
                detail: "session exposure budget exceeded".into(),
            });
        }
    }
    out
}

/// A composition that passed [`validate`]; the only input the sequencer
/// compiles.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedComposition {
    comp: OdorComposition,
}

impl ValidatedComposition {
    pub fn composition(&self) -> &OdorComposition {
        &self.comp
    }

    pub fn into_inner(self) -> OdorComposition {
        self.comp
    }
}

/// Validates and, on a pass, wraps the composition for compilation.
pub fn approve(
    comp: OdorComposition,
    policy: &SafetyPolicy,
    odorants: &OdorantMap,
) -> Result<ValidatedComposition, Vec<Violation>> {
    let violations = validate(&comp, policy, odorants);
    if violations.is_empty() {
        Ok(ValidatedComposition { comp })
    } else {
        Err(violations)
    }
}
