//! Simulation and tooling for MIDI-driven olfactory displays in VR
//! installations: MIDI transport, odor scores and safety policy, device
//! and daisy-chain models, a latency-compensating sequencer, breathing
//! analysis and questionnaire statistics.

pub mod chain;
pub mod cli;
pub mod device;
pub mod midi;
pub mod odor;
pub mod respiro;
pub mod sequencer;
pub mod survey;
