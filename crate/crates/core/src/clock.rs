//! Time sources.
//!
//! Every periodic behaviour in the platform (module polling, motion progress,
//! stream generators, bridge throttling) reads time through [`Clock`], so tests
//! can drive the whole system on a simulated timeline.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

/// Milliseconds since the clock's origin.
pub type Stamp = u64;

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> Stamp;
}

pub type SharedClock = Arc<dyn Clock>;

/// Wall clock anchored at construction time.
#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> Stamp {
        self.origin.elapsed().as_millis() as Stamp
    }
}

/// Manually advanced clock.
#[derive(Debug, Default)]
pub struct SimClock {
    now: AtomicU64,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn starting_at(ms: Stamp) -> Self {
        Self {
            now: AtomicU64::new(ms),
        }
    }

    pub fn set(&self, ms: Stamp) {
        self.now.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: Stamp) -> Stamp {
        self.now.fetch_add(ms, Ordering::SeqCst) + ms
    }
}

impl Clock for SimClock {
    fn now_ms(&self) -> Stamp {
        self.now.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sim_clock_advances() {
        let clock = SimClock::starting_at(5);
        assert_eq!(clock.now_ms(), 5);
        assert_eq!(clock.advance(10), 15);
        clock.set(3);
        assert_eq!(clock.now_ms(), 3);
    }

    #[test]
    fn system_clock_is_monotonic() {
        let clock = SystemClock::new();
        let a = clock.now_ms();
        let b = clock.now_ms();
        assert!(b >= a);
    }
}
