use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::state::{compute_state, ModuleSpec, ModuleState, Pending};
use crate::bus::{Bus, BusError};
use crate::clock::Stamp;
use crate::runtime::Tick;
use crate::service::{fault, parse_args};

pub const MODMGR_NODE: &str = "module_manager";
pub const LAUNCH_SERVICE: &str = "/ui/launch_nodes";
pub const STOP_SERVICE: &str = "/ui/stop_nodes";
pub const STATES_TOPIC: &str = "/ui/module_states";
pub const BUSY_TOPIC: &str = "/ui/launch_busy";
pub const POLL_PERIOD_MS: Stamp = 1_000;
/// A full snapshot goes out every this many polls.
pub const SNAPSHOT_EVERY: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FailMode {
    #[default]
    None,
    NeverStarts,
    DiesAfterMs(Stamp),
}

/// Simulated launch file: starting it registers `nodes_started` on the bus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchUnit {
    pub id: String,
    pub nodes_started: Vec<String>,
    #[serde(default)]
    pub startup_delay_ms: Stamp,
    #[serde(default)]
    pub fail_mode: FailMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitStatus {
    Started,
    AlreadyLaunched,
    Stopped,
    NotRunning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitOutcome {
    pub unit: String,
    pub status: UnitStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModError {
    #[error("unknown launch unit {0:?}")]
    UnknownUnit(String),
}

#[derive(Debug, Clone)]
struct RunningUnit {
    up_at: Option<Stamp>,
    dies_at: Option<Stamp>,
    registered: bool,
}

struct MgrState {
    states: BTreeMap<String, ModuleState>,
    running: BTreeMap<String, RunningUnit>,
    next_poll: Option<Stamp>,
    polls: u64,
    busy: Option<bool>,
}

pub struct ModuleManager {
    bus: Arc<Bus>,
    modules: Vec<ModuleSpec>,
    units: BTreeMap<String, LaunchUnit>,
    state: Mutex<MgrState>,
}

#[derive(Deserialize)]
struct UnitsArgs {
    units: Vec<String>,
}

fn module_entry(name: &str, s: &ModuleState) -> Value {
    json!({ "name": name, "state": s.value, "pending": s.pending })
}

impl ModuleManager {
    pub fn new(bus: Arc<Bus>, modules: Vec<ModuleSpec>, units: Vec<LaunchUnit>) -> Self {
        let states = modules
            .iter()
            .map(|m| (m.name.clone(), ModuleState::initial()))
            .collect();
        Self {
            bus,
            modules,
            units: units.into_iter().map(|u| (u.id.clone(), u)).collect(),
            state: Mutex::new(MgrState {
                states,
                running: BTreeMap::new(),
                next_poll: None,
                polls: 0,
                busy: None,
            }),
        }
    }

    /// Registers the manager node, its two services and its topics.
    pub fn start(self: &Arc<Self>) -> Result<(), BusError> {
        let bus = &self.bus;
        bus.register_node(MODMGR_NODE)?;
        bus.register_schema("ModuleStates", &["modules"]);
        bus.register_schema("LaunchBusy", &["busy"]);
        bus.advertise(MODMGR_NODE, STATES_TOPIC, "ModuleStates")?;
        bus.advertise(MODMGR_NODE, BUSY_TOPIC, "LaunchBusy")?;
        let me = self.clone();
        bus.register_service(MODMGR_NODE, LAUNCH_SERVICE, move |args| {
            let a: UnitsArgs = parse_args(args)?;
            let outcomes = me.launch_modules(&a.units).map_err(fault)?;
            Ok(json!({ "outcomes": outcomes }))
        })?;
        let me = self.clone();
        bus.register_service(MODMGR_NODE, STOP_SERVICE, move |args| {
            let a: UnitsArgs = parse_args(args)?;
            let outcomes = me.stop_modules(&a.units).map_err(fault)?;
            Ok(json!({ "outcomes": outcomes }))
        })?;
        Ok(())
    }

    pub fn modules(&self) -> &[ModuleSpec] {
        &self.modules
    }

    pub fn units(&self) -> impl Iterator<Item = &LaunchUnit> {
        self.units.values()
    }

    pub fn state_of(&self, module: &str) -> Option<ModuleState> {
        self.state.lock().states.get(module).copied()
    }

    pub fn states(&self) -> BTreeMap<String, ModuleState> {
        self.state.lock().states.clone()
    }

    pub fn is_running(&self, unit: &str) -> bool {
        self.state.lock().running.contains_key(unit)
    }

    pub fn is_busy(&self) -> bool {
        self.state
            .lock()
            .states
            .values()
            .any(|s| s.pending != Pending::None)
    }

    fn check_units(&self, units: &[String]) -> Result<(), ModError> {
        match units.iter().find(|u| !self.units.contains_key(*u)) {
            Some(u) => Err(ModError::UnknownUnit(u.clone())),
            None => Ok(()),
        }
    }

    fn mark_pending(
        &self,
        st: &mut MgrState,
        touched: &BTreeSet<&str>,
        pending: Pending,
        now: Stamp,
    ) {
        for m in &self.modules {
            if m.launch_units.iter().any(|u| touched.contains(u.as_str())) {
                let s = st
                    .states
                    .entry(m.name.clone())
                    .or_insert_with(ModuleState::initial);
                *s = s.requested(pending, now);
            }
        }
    }

    /// Starts every unit not already running.
    pub fn launch_modules(&self, units: &[String]) -> Result<Vec<UnitOutcome>, ModError> {
        self.check_units(units)?;
        let now = self.bus.now_ms();
        let mut outcomes = Vec::new();
        {
            let mut st = self.state.lock();
            let mut started = BTreeSet::new();
            for id in units {
                if st.running.contains_key(id) {
                    outcomes.push(UnitOutcome {
                        unit: id.clone(),
                        status: UnitStatus::AlreadyLaunched,
                    });
                    continue;
                }
                let unit = &self.units[id];
                let up_at = now + unit.startup_delay_ms;
                let (up_at, dies_at) = match unit.fail_mode {
                    FailMode::None => (Some(up_at), None),
                    FailMode::NeverStarts => (None, None),
                    FailMode::DiesAfterMs(t) => (Some(up_at), Some(up_at + t)),
                };
                st.running.insert(
                    id.clone(),
                    RunningUnit {
                        up_at,
                        dies_at,
                        registered: false,
                    },
                );
                started.insert(id.as_str());
                outcomes.push(UnitOutcome {
                    unit: id.clone(),
                    status: UnitStatus::Started,
                });
            }
            self.mark_pending(&mut st, &started, Pending::Launching, now);
        }
        self.advance_units(now);
        self.publish_busy();
        Ok(outcomes)
    }

    /// Stops running units, taking their nodes off the graph.
    pub fn stop_modules(&self, units: &[String]) -> Result<Vec<UnitOutcome>, ModError> {
        self.check_units(units)?;
        let now = self.bus.now_ms();
        let mut outcomes = Vec::new();
        let mut to_kill = Vec::new();
        {
            let mut st = self.state.lock();
            let mut stopped = BTreeSet::new();
            for id in units {
                if st.running.remove(id).is_some() {
                    to_kill.extend(self.units[id].nodes_started.iter().cloned());
                    stopped.insert(id.as_str());
                    outcomes.push(UnitOutcome {
                        unit: id.clone(),
                        status: UnitStatus::Stopped,
                    });
                } else {
                    outcomes.push(UnitOutcome {
                        unit: id.clone(),
                        status: UnitStatus::NotRunning,
                    });
                }
            }
            self.mark_pending(&mut st, &stopped, Pending::Stopping, now);
        }
        for node in to_kill {
            self.bus.deregister_node(&node);
        }
        self.publish_busy();
        Ok(outcomes)
    }

    /// Applies due node start-ups and simulated deaths.
    fn advance_units(&self, now: Stamp) -> bool {
        let mut register = Vec::new();
        let mut kill = Vec::new();
        {
            let mut st = self.state.lock();
            for (id, run) in st.running.iter_mut() {
                let nodes = &self.units[id].nodes_started;
                if !run.registered && run.up_at.is_some_and(|t| now >= t) {
                    run.registered = true;
                    register.extend(nodes.iter().cloned());
                }
                if run.registered && run.dies_at.is_some_and(|t| now >= t) {
                    run.dies_at = None;
                    kill.extend(nodes.iter().cloned());
                }
            }
        }
        let changed = !register.is_empty() || !kill.is_empty();
        for n in register {
            let _ = self.bus.register_node(&n);
        }
        for n in kill {
            self.bus.deregister_node(&n);
        }
        changed
    }

    /// Re-derives every module's state from one snapshot of the live nodes
    /// and publishes what changed.
    pub fn poll_tick(&self, now: Stamp) -> Vec<(String, ModuleState)> {
        let live = self.bus.list_nodes();
        let (changes, snapshot) = {
            let mut st = self.state.lock();
            let mut changes = Vec::new();
            for m in &self.modules {
                let prev = st
                    .states
                    .get(&m.name)
                    .copied()
                    .unwrap_or_else(ModuleState::initial);
                let next = compute_state(m, &live, &prev, now);
                if next.value != prev.value || next.pending != prev.pending {
                    changes.push((m.name.clone(), next));
                }
                st.states.insert(m.name.clone(), next);
            }
            st.polls += 1;
            let snapshot = st.polls.is_multiple_of(SNAPSHOT_EVERY).then(|| {
                st.states
                    .iter()
                    .map(|(n, s)| module_entry(n, s))
                    .collect::<Vec<_>>()
            });
            (changes, snapshot)
        };
        if !changes.is_empty() {
            let modules: Vec<Value> = changes.iter().map(|(n, s)| module_entry(n, s)).collect();
            let _ = self.bus.publish(
                MODMGR_NODE,
                STATES_TOPIC,
                json!({ "modules": modules, "snapshot": false }),
            );
        }
        if let Some(modules) = snapshot {
            let _ = self.bus.publish(
                MODMGR_NODE,
                STATES_TOPIC,
                json!({ "modules": modules, "snapshot": true }),
            );
        }
        self.publish_busy();
        changes
    }

    fn publish_busy(&self) {
        let busy = self.is_busy();
        let changed = {
            let mut st = self.state.lock();
            let changed = st.busy != Some(busy);
            st.busy = Some(busy);
            changed
        };
        if changed {
            let _ = self
                .bus
                .publish(MODMGR_NODE, BUSY_TOPIC, json!({ "busy": busy }));
        }
    }
}

impl Tick for ModuleManager {
    fn tick(&self, now: Stamp) -> bool {
        let progressed = self.advance_units(now);
        let due = {
            let mut st = self.state.lock();
            let next = *st.next_poll.get_or_insert(now);
            if now >= next {
                st.next_poll = Some(next + POLL_PERIOD_MS * ((now - next) / POLL_PERIOD_MS + 1));
                true
            } else {
                false
            }
        };
        if due {
            self.poll_tick(now);
        }
        progressed
    }
}
