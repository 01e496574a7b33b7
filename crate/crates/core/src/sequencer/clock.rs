use std::time::{Duration, Instant};

/// Source of session time in seconds. `now` never decreases.
pub trait Clock {
    fn now(&self) -> f64;
    /// Returns once `now() >= t`. Earlier targets return immediately.
    fn sleep_until(&mut self, t: f64);
}

/// Advances instantly to whatever time is requested.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimClock {
    now: f64,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(t: f64) -> Self {
        SimClock { now: t.max(0.0) }
    }
}

impl Clock for SimClock {
    fn now(&self) -> f64 {
        self.now
    }

    fn sleep_until(&mut self, t: f64) {
        if t > self.now {
            self.now = t;
        }
    }
}

/// Real time since construction.
#[derive(Debug, Clone)]
pub struct WallClock {
    start: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        WallClock {
            start: Instant::now(),
        }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn sleep_until(&mut self, t: f64) {
        let wait = t - self.now();
        if wait > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}
