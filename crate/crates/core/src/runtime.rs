//! Cooperative scheduler that advances every time-driven component.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::Mutex;

use crate::clock::{Clock, SharedClock, SimClock, Stamp};

/// A component that makes progress when the clock moves.
///
/// `tick` returns `true` when it changed something another component may
/// react to within the same instant (a goal sent, a motion finished, ...).
pub trait Tick: Send + Sync {
    fn tick(&self, now: Stamp) -> bool;
}

/// Upper bound on settle passes per instant.
const MAX_PASSES: usize = 64;

pub struct Runtime {
    clock: SharedClock,
    components: Mutex<Vec<Arc<dyn Tick>>>,
}

impl Runtime {
    pub fn new(clock: SharedClock) -> Self {
        Self {
            clock,
            components: Mutex::new(Vec::new()),
        }
    }

    pub fn clock(&self) -> &SharedClock {
        &self.clock
    }

    /// Components are ticked in registration order.
    pub fn add(&self, component: Arc<dyn Tick>) {
        self.components.lock().push(component);
    }

    /// Runs every component at the current instant until none reports progress.
    pub fn tick(&self) {
        let now = self.clock.now_ms();
        let components = self.components.lock().clone();
        for _ in 0..MAX_PASSES {
            let mut progressed = false;
            for c in &components {
                progressed |= c.tick(now);
            }
            if !progressed {
                break;
            }
        }
    }

    /// Steps a simulated clock forward `total_ms` in `step_ms` increments,
    /// ticking after each step.
    pub fn run_sim(&self, sim: &SimClock, total_ms: Stamp, step_ms: Stamp) {
        let step = step_ms.max(1);
        let end = sim.now_ms() + total_ms;
        self.tick();
        while sim.now_ms() < end {
            let next = (sim.now_ms() + step).min(end);
            sim.set(next);
            self.tick();
        }
    }

    /// Ticks from a background thread at a fixed wall-clock period.
    pub fn spawn_driver(self: &Arc<Self>, period: Duration) -> Driver {
        let stop = Arc::new(AtomicBool::new(false));
        let runtime = Arc::clone(self);
        let flag = Arc::clone(&stop);
        let handle = std::thread::Builder::new()
            .name("helmsman-runtime".into())
            .spawn(move || {
                while !flag.load(Ordering::Relaxed) {
                    runtime.tick();
                    std::thread::sleep(period);
                }
            })
            .expect("spawn runtime driver");
        Driver {
            stop,
            handle: Some(handle),
        }
    }
}

/// Stops the background ticker when dropped.
pub struct Driver {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for Driver {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
