//! Per-subscription rate limiting with a bounded pending queue.
//!
//! Semantics follow the roslibjs `throttle_rate` / `queue_length` options:
//! at most one frame per `throttle_rate` milliseconds; messages arriving
//! while the gate is closed wait in a FIFO queue, and once the queue holds
//! more than `queue_length` messages the oldest is dropped. A queue length of
//! zero means unbounded.

use std::collections::VecDeque;

use crate::clock::Stamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateDecision {
    Emit,
    Enqueue,
    /// Enqueued, and the oldest pending message was discarded to make room.
    Drop,
}

#[derive(Debug)]
pub struct Offered<T> {
    pub decision: GateDecision,
    pub emit: Option<T>,
    pub dropped: Option<T>,
}

#[derive(Debug, Clone)]
pub struct ThrottleGate<T> {
    throttle_rate: u64,
    queue_length: usize,
    last_emit: Option<Stamp>,
    pending: VecDeque<T>,
}

impl<T> ThrottleGate<T> {
    pub fn new(throttle_rate: u64, queue_length: usize) -> Self {
        Self {
            throttle_rate,
            queue_length,
            last_emit: None,
            pending: VecDeque::new(),
        }
    }

    pub fn throttle_rate(&self) -> u64 {
        self.throttle_rate
    }

    pub fn queue_length(&self) -> usize {
        self.queue_length
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn last_emit(&self) -> Option<Stamp> {
        self.last_emit
    }

    /// Updates limits in place; excess queued messages are trimmed oldest-first.
    pub fn reconfigure(&mut self, throttle_rate: u64, queue_length: usize) {
        self.throttle_rate = throttle_rate;
        self.queue_length = queue_length;
        self.trim();
    }

    fn is_open(&self, now: Stamp) -> bool {
        match self.last_emit {
            None => true,
            Some(last) => now.saturating_sub(last) >= self.throttle_rate,
        }
    }

    fn trim(&mut self) -> Option<T> {
        let mut dropped = None;
        while self.queue_length > 0 && self.pending.len() > self.queue_length {
            dropped = self.pending.pop_front();
        }
        dropped
    }

    /// Offers a freshly arrived message.
    pub fn offer(&mut self, msg: T, now: Stamp) -> Offered<T> {
        if self.pending.is_empty() && self.is_open(now) {
            self.last_emit = Some(now);
            return Offered {
                decision: GateDecision::Emit,
                emit: Some(msg),
                dropped: None,
            };
        }
        self.pending.push_back(msg);
        let dropped = self.trim();
        let decision = if dropped.is_some() {
            GateDecision::Drop
        } else {
            GateDecision::Enqueue
        };
        let emit = self.flush(now);
        Offered {
            decision,
            emit,
            dropped,
        }
    }

    /// Releases the oldest pending message if the gate is open.
    pub fn flush(&mut self, now: Stamp) -> Option<T> {
        if self.pending.is_empty() || !self.is_open(now) {
            return None;
        }
        self.last_emit = Some(now);
        self.pending.pop_front()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_emits_everything() {
        let mut g = ThrottleGate::new(0, 0);
        for i in 0..20 {
            let o = g.offer(i, 5);
            assert_eq!(o.decision, GateDecision::Emit);
            assert_eq!(o.emit, Some(i));
        }
        assert_eq!(g.pending_len(), 0);
    }

    #[test]
    fn queue_keeps_last_two() {
        let mut g = ThrottleGate::new(100, 2);
        // first message opens the window
        assert_eq!(g.offer(0, 0).decision, GateDecision::Emit);
        let decisions: Vec<_> = (1..=5).map(|i| g.offer(i, 10).decision).collect();
        assert_eq!(
            decisions,
            [
                GateDecision::Enqueue,
                GateDecision::Enqueue,
                GateDecision::Drop,
                GateDecision::Drop,
                GateDecision::Drop
            ]
        );
        assert_eq!(g.pending.iter().copied().collect::<Vec<_>>(), vec![4, 5]);
        assert_eq!(g.flush(50), None);
        assert_eq!(g.flush(100), Some(4));
        assert_eq!(g.flush(150), None);
        assert_eq!(g.flush(200), Some(5));
    }

    #[test]
    fn reconfigure_trims() {
        let mut g = ThrottleGate::new(1000, 0);
        g.offer(0, 0);
        for i in 1..10 {
            g.offer(i, 1);
        }
        assert_eq!(g.pending_len(), 9);
        g.reconfigure(1000, 3);
        assert_eq!(g.pending.iter().copied().collect::<Vec<_>>(), vec![7, 8, 9]);
    }
}
