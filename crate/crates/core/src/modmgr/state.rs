use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::access::Role;
use crate::clock::Stamp;

/// How long a launch or stop may stay in flight before the module is
/// declared incomplete.
pub const TRANSITION_TIMEOUT_MS: Stamp = 15_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub name: String,
    pub launch_units: Vec<String>,
    pub expected_nodes: Vec<String>,
    #[serde(default)]
    pub allowed_roles: Vec<Role>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateValue {
    /// Every expected node is live (green).
    Active,
    /// No expected node is live (gray).
    Inactive,
    /// A launch or stop is in flight (orange).
    Transitioning,
    /// Only part of the nodes are live (red).
    Incomplete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Pending {
    #[default]
    None,
    Launching,
    Stopping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleState {
    pub value: StateValue,
    pub pending: Pending,
    pub pending_since: Stamp,
}

impl ModuleState {
    pub fn initial() -> Self {
        Self {
            value: StateValue::Inactive,
            pending: Pending::None,
            pending_since: 0,
        }
    }

    pub fn requested(self, pending: Pending, now: Stamp) -> Self {
        let value = if pending == Pending::None {
            self.value
        } else {
            StateValue::Transitioning
        };
        Self {
            value,
            pending,
            pending_since: now,
        }
    }
}

/// Derives a module's state from the live node set.
///
/// Only observation drives the result, so nodes started or killed from a
/// terminal are picked up on the next poll. A launch or stop that has not
/// settled within `timeout_ms` is dropped and the module reported
/// incomplete.
pub fn compute_state_with_timeout(
    spec: &ModuleSpec,
    live: &BTreeSet<String>,
    prev: &ModuleState,
    now: Stamp,
    timeout_ms: Stamp,
) -> ModuleState {
    let expected: BTreeSet<&str> = spec.expected_nodes.iter().map(String::as_str).collect();
    let total = expected.len();
    let up = expected.iter().filter(|n| live.contains(**n)).count();
    let within = now.saturating_sub(prev.pending_since) <= timeout_ms;
    let settled = |value| ModuleState {
        value,
        pending: Pending::None,
        pending_since: prev.pending_since,
    };
    let holding = |value| ModuleState { value, ..*prev };

    match prev.pending {
        Pending::None => settled(match up {
            0 => StateValue::Inactive,
            n if n == total => StateValue::Active,
            _ => StateValue::Incomplete,
        }),
        Pending::Launching if up == total => settled(StateValue::Active),
        Pending::Launching if within => holding(StateValue::Transitioning),
        Pending::Launching => settled(StateValue::Incomplete),
        Pending::Stopping if up == 0 => settled(StateValue::Inactive),
        Pending::Stopping if within => holding(StateValue::Transitioning),
        Pending::Stopping => settled(StateValue::Incomplete),
    }
}

pub fn compute_state(
    spec: &ModuleSpec,
    live: &BTreeSet<String>,
    prev: &ModuleState,
    now: Stamp,
) -> ModuleState {
    compute_state_with_timeout(spec, live, prev, now, TRANSITION_TIMEOUT_MS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ModuleSpec {
        ModuleSpec {
            name: "m".into(),
            launch_units: vec!["u".into()],
            expected_nodes: vec!["a".into(), "b".into()],
            allowed_roles: vec![],
        }
    }

    fn live(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn all_live_is_active() {
        let s = compute_state(&spec(), &live(&["a", "b"]), &ModuleState::initial(), 0);
        assert_eq!(s.value, StateValue::Active);
    }

    #[test]
    fn partial_is_incomplete() {
        let s = compute_state(&spec(), &live(&["a"]), &ModuleState::initial(), 0);
        assert_eq!(s.value, StateValue::Incomplete);
    }

    #[test]
    fn launching_partial_is_transitioning() {
        let prev = ModuleState::initial().requested(Pending::Launching, 1_000);
        let s = compute_state(&spec(), &live(&["a"]), &prev, 3_000);
        assert_eq!(s.value, StateValue::Transitioning);
        assert_eq!(s.pending, Pending::Launching);
    }

    #[test]
    fn timeout_clears_pending_for_good() {
        let prev = ModuleState::initial().requested(Pending::Launching, 0);
        let s = compute_state(&spec(), &live(&["a"]), &prev, TRANSITION_TIMEOUT_MS + 1);
        assert_eq!(
            (s.value, s.pending),
            (StateValue::Incomplete, Pending::None)
        );
        let mut state = s;
        for t in 0..50 {
            state = compute_state(
                &spec(),
                &live(&["a"]),
                &state,
                TRANSITION_TIMEOUT_MS + 1000 * t,
            );
            assert_ne!(state.value, StateValue::Transitioning);
        }
    }

    #[test]
    fn fixed_point_without_pending() {
        for l in [
            live(&[]),
            live(&["a"]),
            live(&["a", "b"]),
            live(&["b", "zz"]),
        ] {
            let once = compute_state(&spec(), &l, &ModuleState::initial(), 10);
            let twice = compute_state(&spec(), &l, &once, 20);
            assert_eq!(once, twice);
        }
    }
}
