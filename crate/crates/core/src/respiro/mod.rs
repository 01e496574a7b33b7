//! Nasal pressure: synthetic breathing, breath-phase detection, and the
//! sniff and gulp statistics taken around odor deliveries.

mod detect;
mod synth;
mod trace;

use serde::{Deserialize, Serialize};

pub use detect::{
    detect_breath_events, detect_breath_events_chunked, smooth, smooth_chunked, ChannelMode,
    DetectError, DetectParams,
};
pub use synth::{
    synthesize_breathing, SynthError, SynthParams, PAUSE_DURATION, SNIFF_DURATION, SNIFF_GAIN,
};
pub use trace::{PressureTrace, TraceError, TRACE_MAGIC, TRACE_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreathKind {
    Inhale,
    Exhale,
    Sniff,
    /// A pause in airflow; a stand-in for a swallow, not a confirmed one.
    GulpCandidate,
}

impl BreathKind {
    pub const ALL: [BreathKind; 4] = [
        BreathKind::Inhale,
        BreathKind::Exhale,
        BreathKind::Sniff,
        BreathKind::GulpCandidate,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreathEvent {
    pub kind: BreathKind,
    pub t_start: f64,
    pub t_end: f64,
    pub peak_amplitude: f64,
}

/// Share of delivery windows in which a sniff or gulp candidate began.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentStats {
    pub windows: usize,
    /// `None` when there are no windows.
    pub sniff_fraction: Option<f64>,
    pub gulp_fraction: Option<f64>,
}

/// Counts windows `[start, end]` containing the start of at least one
/// sniff, and separately of a gulp candidate. Windows are expected not to
/// overlap.
pub fn delivery_alignment_stats(events: &[BreathEvent], windows: &[(f64, f64)]) -> AlignmentStats {
    let fraction = |kind: BreathKind| {
        if windows.is_empty() {
            return None;
        }
        let hit = windows
            .iter()
            .filter(|&&(a, b)| {
                events
                    .iter()
                    .any(|e| e.kind == kind && e.t_start >= a && e.t_start <= b)
            })
            .count();
        Some(hit as f64 / windows.len() as f64)
    };
    AlignmentStats {
        windows: windows.len(),
        sniff_fraction: fraction(BreathKind::Sniff),
        gulp_fraction: fraction(BreathKind::GulpCandidate),
    }
}

/// Detection counts for one event kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
}

impl MatchCounts {
    pub fn precision(&self) -> Option<f64> {
        let d = self.true_positive + self.false_positive;
        (d > 0).then(|| self.true_positive as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.true_positive + self.false_negative;
        (d > 0).then(|| self.true_positive as f64 / d as f64)
    }

    pub fn add(&mut self, other: MatchCounts) {
        self.true_positive += other.true_positive;
        self.false_positive += other.false_positive;
        self.false_negative += other.false_negative;
    }
}

/// Pairs detected and reference events of `kind` whose start times differ
/// by at most `tolerance`, each event used once, in time order.
pub fn match_events(
    reference: &[BreathEvent],
    detected: &[BreathEvent],
    kind: BreathKind,
    tolerance: f64,
) -> MatchCounts {
    let mut want: Vec<f64> = reference
        .iter()
        .filter(|e| e.kind == kind)
        .map(|e| e.t_start)
        .collect();
    let mut got: Vec<f64> = detected
        .iter()
        .filter(|e| e.kind == kind)
        .map(|e| e.t_start)
        .collect();
    want.sort_by(f64::total_cmp);
    got.sort_by(f64::total_cmp);
    let mut used = vec![false; got.len()];
    let mut tp = 0;
    for w in &want {
        let best = got
            .iter()
            .enumerate()
            .filter(|(j, g)| !used[*j] && (*g - w).abs() <= tolerance)
            .min_by(|a, b| (a.1 - w).abs().total_cmp(&(b.1 - w).abs()));
        if let Some((j, _)) = best {
            used[j] = true;
            tp += 1;
        }
    }
    MatchCounts {
        true_positive: tp,
        false_positive: got.len() - tp,
        false_negative: want.len() - tp,
    }
}
