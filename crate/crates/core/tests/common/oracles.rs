//! Independent reference computations used as test oracles.

#![allow(dead_code)]

use helmsman::modmgr::{Pending, StateValue};

/// Time for a bang-bang controller (accelerate, cruise, brake) to cover
/// `distance`, found by explicit time stepping.
pub fn stepped_duration(distance: f64, speed: f64, accel: f64, dt: f64) -> f64 {
    let (mut x, mut v, mut t) = (0.0f64, 0.0f64, 0.0f64);
    loop {
        let remaining = distance - x;
        if remaining <= v * v / (2.0 * accel) + 1e-15 {
            // Braking starts up to one step late, so stop over what is
            // actually left rather than at the nominal rate.
            return if v > 0.0 {
                t + 2.0 * remaining.max(0.0) / v
            } else {
                t
            };
        }
        let v_next = if v < speed {
            (v + accel * dt).min(speed)
        } else {
            v
        };
        x += 0.5 * (v + v_next) * dt;
        v = v_next;
        t += dt;
    }
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiveCount {
    None,
    Partial,
    All,
}

/// The module-state truth table, written out case by case.
pub fn module_state_table(
    live: LiveCount,
    pending: Pending,
    past_timeout: bool,
) -> (StateValue, Pending) {
    use LiveCount as L;
    use StateValue::*;
    match (pending, live, past_timeout) {
        (Pending::None, L::None, _) => (Inactive, Pending::None),
        (Pending::None, L::Partial, _) => (Incomplete, Pending::None),
        (Pending::None, L::All, _) => (Active, Pending::None),
        (Pending::Launching, L::All, _) => (Active, Pending::None),
        (Pending::Launching, _, false) => (Transitioning, Pending::Launching),
        (Pending::Launching, _, true) => (Incomplete, Pending::None),
        (Pending::Stopping, L::None, _) => (Inactive, Pending::None),
        (Pending::Stopping, _, false) => (Transitioning, Pending::Stopping),
        (Pending::Stopping, _, true) => (Incomplete, Pending::None),
    }
}

/// Millisecond-resolution simulation of a throttled subscription: at each
/// millisecond the arrival (if any) is offered, then the queue gets one
/// chance to flush. Returns the number of emitted messages.
pub fn throttle_emissions(
    publish_period_ms: u64,
    throttle_ms: u64,
    queue_length: usize,
    total_ms: u64,
) -> usize {
    let mut queue: std::collections::VecDeque<u64> = Default::default();
    let mut last: Option<u64> = None;
    let mut emitted = 0;
    for now in 0..total_ms {
        let open = |last: Option<u64>| last.is_none_or(|l| now - l >= throttle_ms);
        if now % publish_period_ms == 0 {
            if queue.is_empty() && open(last) {
                emitted += 1;
                last = Some(now);
            } else {
                queue.push_back(now);
                if queue_length > 0 && queue.len() > queue_length {
                    queue.pop_front();
                }
            }
        }
        if !queue.is_empty() && open(last) {
            queue.pop_front();
            emitted += 1;
            last = Some(now);
        }
    }
    emitted
}
