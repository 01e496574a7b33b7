use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trace::PressureTrace;
use super::{BreathEvent, BreathKind};

/// Length of an inserted sniff lobe, seconds.
pub const SNIFF_DURATION: f64 = 0.3;
/// Sniff peak relative to a normal breath.
pub const SNIFF_GAIN: f64 = 3.0;
/// Length of an inserted flow pause, seconds.
pub const PAUSE_DURATION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("noise_sd must be >= 0")]
    Noise,
    #[error("insertion at {0} s lies outside the trace")]
    OutOfRange(f64),
    #[error("insertions at {0} s and {1} s are less than one breath apart")]
    Overlap(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub sample_rate: f64,
    /// Breaths per minute.
    pub rate: f64,
    pub amplitude: f64,
    /// Standard deviation of the white noise on each channel.
    pub noise_sd: f64,
    /// Each sniff replaces the first inhalation starting at or after its time.
    pub sniff_times: Vec<f64>,
    /// Each pause is inserted at the first phase boundary at or after its time.
    pub pause_times: Vec<f64>,
    pub duration: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            sample_rate: 100.0,
            rate: 12.0,
            amplitude: 1.0,
            noise_sd: 0.0,
            sniff_times: Vec::new(),
            pause_times: Vec::new(),
            duration: 60.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Segment {
    Lobe {
        kind: BreathKind,
        dur: f64,
        peak: f64,
    },
    Pause {
        dur: f64,
    },
}

impl Segment {
    fn dur(&self) -> f64 {
        match *self {
            Segment::Lobe { dur, .. } | Segment::Pause { dur } => dur,
        }
    }
}

/// Sinusoidal breathing with optional sniffs, flow pauses and noise.
///
/// Every breath is an inhalation half-sine followed by an exhalation
/// half-sine. A sniff is a 0.3 s inhalation lobe at three times the
/// amplitude; the exhalation after it stretches so the breath keeps its
/// period. A pause is 0.5 s of zero flow between two lobes. Ground truth
/// lists every lobe and pause that ends within `duration`.
pub fn synthesize_breathing(
    p: &SynthParams,
) -> Result<(PressureTrace, Vec<BreathEvent>), SynthError> {
    for (name, v) in [
        ("rate", p.rate),
        ("duration", p.duration),
        ("sample_rate", p.sample_rate),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(SynthError::NonPositive(name));
        }
    }
    if !(p.noise_sd >= 0.0 && p.noise_sd.is_finite()) {
        return Err(SynthError::Noise);
    }
    let period = 60.0 / p.rate;
    let mut inserts: Vec<f64> = p
        .sniff_times
        .iter()
        .chain(&p.pause_times)
        .copied()
        .collect();
    inserts.sort_by(f64::total_cmp);
    for &t in &inserts {
        if !(0.0..p.duration).contains(&t) {
            return Err(SynthError::OutOfRange(t));
        }
    }
    for w in inserts.windows(2) {
        if w[1] - w[0] < period {
            return Err(SynthError::Overlap(w[0], w[1]));
        }
    }

    let mut sniffs: Vec<f64> = p.sniff_times.clone();
    sniffs.sort_by(f64::total_cmp);
    let mut pauses: Vec<f64> = p.pause_times.clone();
    pauses.sort_by(f64::total_cmp);
    let (mut si, mut pi) = (0, 0);

    let mut segments: Vec<(f64, Segment)> = Vec::new();
    let mut t = 0.0;
    while t < p.duration {
        if pi < pauses.len() && pauses[pi] <= t {
            segments.push((
                t,
                Segment::Pause {
                    dur: PAUSE_DURATION,
                },
            ));
            t += PAUSE_DURATION;
            pi += 1;
            continue;
        }
        let sniff = si < sniffs.len() && sniffs[si] <= t;
        let (inhale, exhale_dur) = if sniff {
            si += 1;
            (
                Segment::Lobe {
                    kind: BreathKind::Sniff,
                    dur: SNIFF_DURATION,
                    peak: -SNIFF_GAIN * p.amplitude,
                },
                period - SNIFF_DURATION,
            )
        } else {
            (
                Segment::Lobe {
                    kind: BreathKind::Inhale,
                    dur: period / 2.0,
                    peak: -p.amplitude,
                },
                period / 2.0,
            )
        };
        segments.push((t, inhale));
        t += inhale.dur();
        if pi < pauses.len() && pauses[pi] <= t {
            segments.push((
                t,
                Segment::Pause {
                    dur: PAUSE_DURATION,
                },
            ));
            t += PAUSE_DURATION;
            pi += 1;
        }
        let exhale = Segment::Lobe {
            kind: BreathKind::Exhale,
            dur: exhale_dur,
            peak: p.amplitude,
        };
        segments.push((t, exhale));
        t += exhale_dur;
    }

    let n = (p.duration * p.sample_rate).round() as usize + 1;
    let mut clean = vec![0.0; n];
    let mut seg = 0;
    for (i, x) in clean.iter_mut().enumerate() {
        let ti = i as f64 / p.sample_rate;
        while seg + 1 < segments.len() && segments[seg + 1].0 <= ti {
            seg += 1;
        }
        let (start, s) = segments[seg];
        if let Segment::Lobe { dur, peak, .. } = s {
            let u = (ti - start) / dur;
            if (0.0..=1.0).contains(&u) {
                *x = peak * (PI * u).sin();
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let noise = Normal::new(0.0, p.noise_sd).map_err(|_| SynthError::Noise)?;
    let left: Vec<f64> = clean.iter().map(|x| x + noise.sample(&mut rng)).collect();
    let right: Vec<f64> = clean.iter().map(|x| x + noise.sample(&mut rng)).collect();

    let eps = 1e-9;
    let truth = segments
        .iter()
        .filter(|(start, s)| start + s.dur() <= p.duration + eps)
        .map(|&(start, s)| match s {
            Segment::Lobe { kind, dur, peak } => BreathEvent {
                kind,
                t_start: start,
                t_end: start + dur,
                peak_amplitude: peak.abs(),
            },
            Segment::Pause { dur } => BreathEvent {
                kind: BreathKind::GulpCandidate,
                t_start: start,
                t_end: start + dur,
                peak_amplitude: 0.0,
            },
        })
        .collect();
    let trace = PressureTrace::new(p.sample_rate, left, right).expect("channels built together");
    Ok((trace, truth))
}
