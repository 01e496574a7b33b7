use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trace::PressureTrace;
use super::{BreathEvent, BreathKind};

/// Smallest smoothing window, in samples.
const MIN_WINDOW: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("trace is empty")]
    Empty,
    #[error("smoothing window {window} s covers {samples:.2} samples at {rate} Hz; need at least {MIN_WINDOW}")]
    WindowTooShort {
        window: f64,
        rate: f64,
        samples: f64,
    },
    #[error("parameter {0} must be positive")]
    NonPositive(&'static str),
}

/// Which pressure signal the detector sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    #[default]
    Summed,
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectParams {
    /// Centered moving-average width, seconds.
    pub smooth_window: f64,
    /// Phase threshold as a fraction of the smoothed trace RMS.
    pub hysteresis: f64,
    pub sniff_max_dur: f64,
    /// A sniff peaks above this multiple of the median inhalation peak.
    pub sniff_amp_factor: f64,
    /// Shortest near-zero stretch reported as a gulp candidate, seconds.
    pub pause_min_dur: f64,
    /// Phases shorter than this are treated as noise, seconds.
    pub min_phase_dur: f64,
    pub channels: ChannelMode,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            smooth_window: 0.1,
            hysteresis: 0.2,
            sniff_max_dur: 0.6,
            sniff_amp_factor: 2.0,
            pause_min_dur: 0.5,
            min_phase_dur: 0.1,
            channels: ChannelMode::Summed,
        }
    }
}

impl DetectParams {
    /// Window length in samples, always odd.
    pub fn window_samples(&self, rate: f64) -> Result<usize, DetectError> {
        for (name, v) in [
            ("smooth_window", self.smooth_window),
            ("hysteresis", self.hysteresis),
            ("sniff_max_dur", self.sniff_max_dur),
            ("sniff_amp_factor", self.sniff_amp_factor),
            ("pause_min_dur", self.pause_min_dur),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(DetectError::NonPositive(name));
            }
        }
        let samples = self.smooth_window * rate;
        if samples.round() < MIN_WINDOW as f64 {
            return Err(DetectError::WindowTooShort {
                window: self.smooth_window,
                rate,
                samples,
            });
        }
        Ok(samples.round() as usize / 2 * 2 + 1)
    }
}

/// Centered moving average; near the ends the window shrinks to the
/// samples available.
pub fn smooth(x: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..x.len()).map(|i| window_mean(x, 0, i, half)).collect()
}

/// Same output as [`smooth`], computed `chunk` samples at a time from
/// overlapping slices.
pub fn smooth_chunked(x: &[f64], window: usize, chunk: usize) -> Vec<f64> {
    let half = window / 2;
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(x.len());
    let mut start = 0;
    while start < x.len() {
        let end = (start + chunk).min(x.len());
        let lo = start.saturating_sub(half);
        let hi = (end + half).min(x.len());
        let slice = &x[lo..hi];
        for i in start..end {
            out.push(window_mean(slice, lo, i, half));
        }
        start = end;
    }
    out
}

// `x` holds samples `offset..offset + x.len()` of the full signal and
// reaches at least `half` past `i` unless the signal ends sooner.
fn window_mean(x: &[f64], offset: usize, i: usize, half: usize) -> f64 {
    let a = i.saturating_sub(half).max(offset) - offset;
    let b = (i + half + 1 - offset).min(x.len());
    let sum: f64 = x[a..b].iter().sum();
    sum / (b - a) as f64
}

/// Splits the trace into inhalations, exhalations, sniffs and flow pauses.
pub fn detect_breath_events(
    trace: &PressureTrace,
    params: &DetectParams,
) -> Result<Vec<BreathEvent>, DetectError> {
    detect_with(trace, params, smooth)
}

/// [`detect_breath_events`] with smoothing done in chunks of `chunk`
/// samples; results are identical.
pub fn detect_breath_events_chunked(
    trace: &PressureTrace,
    params: &DetectParams,
    chunk: usize,
) -> Result<Vec<BreathEvent>, DetectError> {
    detect_with(trace, params, |x, w| smooth_chunked(x, w, chunk))
}

fn detect_with(
    trace: &PressureTrace,
    params: &DetectParams,
    smoother: impl Fn(&[f64], usize) -> Vec<f64>,
) -> Result<Vec<BreathEvent>, DetectError> {
    if trace.is_empty() {
        return Err(DetectError::Empty);
    }
    let rate = trace.sample_rate();
    let window = params.window_samples(rate)?;
    let raw = match params.channels {
        ChannelMode::Summed => trace.summed(),
        ChannelMode::Left => trace.left().to_vec(),
        ChannelMode::Right => trace.right().to_vec(),
    };
    let s = smoother(&raw, window);
    let rms = (s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64).sqrt();
    if rms == 0.0 || !rms.is_finite() {
        return Ok(Vec::new());
    }
    let h = params.hysteresis * rms;
    Ok(segment(&s, rate, h, params))
}

fn sign(x: f64) -> i8 {
    if x < 0.0 {
        -1
    } else if x > 0.0 {
        1
    } else {
        0
    }
}

/// Time where the signal crosses zero between samples `i` and `i + 1`.
fn crossing(s: &[f64], i: usize, rate: f64) -> f64 {
    let (a, b) = (s[i], s[i + 1]);
    let frac = if a == b { 0.0 } else { a / (a - b) };
    (i as f64 + frac.clamp(0.0, 1.0)) / rate
}

#[derive(Debug, Clone, Copy)]
struct Phase {
    polarity: i8,
    start: f64,
    end: f64,
    peak: f64,
}

fn segment(s: &[f64], rate: f64, h: f64, params: &DetectParams) -> Vec<BreathEvent> {
    let n = s.len();
    // hysteresis: a phase begins when the signal passes the threshold of
    // the opposite polarity to the current one
    let mut cores: Vec<(i8, usize, usize)> = Vec::new();
    let mut state = 0i8;
    for (i, &x) in s.iter().enumerate() {
        let p = if x < -h {
            -1
        } else if x > h {
            1
        } else {
            0
        };
        if p == 0 {
            continue;
        }
        if p != state {
            cores.push((p, i, i));
            state = p;
        } else if let Some(last) = cores.last_mut() {
            last.2 = i;
        }
    }

    let mut phases = Vec::new();
    for &(polarity, first, last) in &cores {
        let mut a = first;
        while a > 0 && sign(s[a - 1]) == polarity {
            a -= 1;
        }
        let mut b = last;
        while b + 1 < n && sign(s[b + 1]) == polarity {
            b += 1;
        }
        let open_start = a == 0 && s[0].abs() >= h;
        let open_end = b + 1 == n && s[n - 1].abs() >= h;
        if open_start || open_end {
            continue;
        }
        let start = if a == 0 {
            0.0
        } else {
            crossing(s, a - 1, rate)
        };
        let end = if b + 1 == n {
            (n - 1) as f64 / rate
        } else {
            crossing(s, b, rate)
        };
        let peak = s[a..=b].iter().map(|x| x.abs()).fold(0.0, f64::max);
        if end - start >= params.min_phase_dur {
            phases.push(Phase {
                polarity,
                start,
                end,
                peak,
            });
        }
    }

    let mut inhale_peaks: Vec<f64> = phases
        .iter()
        .filter(|p| p.polarity < 0)
        .map(|p| p.peak)
        .collect();
    inhale_peaks.sort_by(f64::total_cmp);
    let median = match inhale_peaks.len() {
        0 => 0.0,
        k if k % 2 == 1 => inhale_peaks[k / 2],
        k => (inhale_peaks[k / 2 - 1] + inhale_peaks[k / 2]) / 2.0,
    };

    let mut events: Vec<BreathEvent> = phases
        .iter()
        .map(|p| {
            let kind = if p.polarity > 0 {
                BreathKind::Exhale
            } else if p.end - p.start < params.sniff_max_dur
                && p.peak > params.sniff_amp_factor * median
            {
                BreathKind::Sniff
            } else {
                BreathKind::Inhale
            };
            BreathEvent {
                kind,
                t_start: p.start,
                t_end: p.end,
                peak_amplitude: p.peak,
            }
        })
        .collect();

    // stretches of near-zero flow strictly inside the trace
    let min_len = params.pause_min_dur * rate;
    let mut i = 0;
    while i < n {
        if s[i].abs() >= h {
            i += 1;
            continue;
        }
        let a = i;
        while i < n && s[i].abs() < h {
            i += 1;
        }
        let b = i;
        if a > 0 && b < n && (b - a) as f64 >= min_len {
            let peak = s[a..b].iter().map(|x| x.abs()).fold(0.0, f64::max);
            events.push(BreathEvent {
                kind: BreathKind::GulpCandidate,
                t_start: a as f64 / rate,
                t_end: b as f64 / rate,
                peak_amplitude: peak,
            });
        }
    }
    events.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    events
}
