//! Odor compositions: what MIDI notes mean once they address olfactory
//! displays, and the safety rules a composition must pass before delivery.
//!
//! On the wire the MIDI channel is the device's chain address, the note
//! number picks the odor channel and the velocity sets concentration.

mod policy;
mod score;

pub use policy::{
    approve, validate, violation_table, OdorantMap, OdorantSpec, PolicyError, Rule, SafetyPolicy,
    ValidatedComposition, Violation,
};
pub use score::{
    from_midi, to_midi, MidiWarning, OdorComposition, OdorEvent, ScoreError, VelocityCurve,
    DEFAULT_LOG_SPAN,
};
