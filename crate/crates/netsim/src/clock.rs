use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClockMode {
    Virtual,
    Real,
}

/// Milliseconds since the network started.
#[derive(Clone, Debug)]
pub(crate) enum Clock {
    Virtual(Arc<AtomicU64>),
    Real(Instant),
}

impl Clock {
    pub(crate) fn new(mode: ClockMode) -> Self {
        match mode {
            ClockMode::Virtual => Clock::Virtual(Arc::new(AtomicU64::new(0))),
            ClockMode::Real => Clock::Real(Instant::now()),
        }
    }

    pub(crate) fn mode(&self) -> ClockMode {
        match self {
            Clock::Virtual(_) => ClockMode::Virtual,
            Clock::Real(_) => ClockMode::Real,
        }
    }

    pub(crate) fn now_ms(&self) -> u64 {
        match self {
            Clock::Virtual(t) => t.load(Ordering::SeqCst),
            Clock::Real(start) => start.elapsed().as_millis() as u64,
        }
    }

    /// Moves virtual time forward; never backward. No effect on a real clock.
    pub(crate) fn advance_to(&self, t: u64) {
        if let Clock::Virtual(c) = self {
            c.fetch_max(t, Ordering::SeqCst);
        }
    }
}
