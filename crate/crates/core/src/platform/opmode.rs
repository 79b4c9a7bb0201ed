//! The system-wide operation mode shown in the side menu.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bus::{Bus, BusError};
use crate::clock::Stamp;
use crate::procexec::Mode;
use crate::runtime::Tick;

pub const OPMODE_NODE: &str = "operation_mode";
pub const OPMODE_TOPIC: &str = "/ui/operation_mode";
pub const GET_OPMODE: &str = "/ui/get_operation_mode";
pub const SAFETY_STATUS_TOPIC: &str = "/ui/safety_status";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperationMode {
    Idle,
    Running,
    Alarm,
    Programming,
}

/// alarm > running > programming > idle.
pub fn derive_mode(alarm_active: bool, process: Mode, recording_open: bool) -> OperationMode {
    if alarm_active {
        OperationMode::Alarm
    } else if matches!(process, Mode::Running | Mode::Stepping) {
        OperationMode::Running
    } else if recording_open {
        OperationMode::Programming
    } else {
        OperationMode::Idle
    }
}

type Probe<T> = Box<dyn Fn() -> T + Send + Sync>;

/// Inputs of the derivation. Probes for disabled features are left out
/// and read as inactive.
#[derive(Default)]
pub struct ModeSources {
    pub alarm_active: Option<Probe<bool>>,
    pub process_mode: Option<Probe<Mode>>,
    pub recording_open: Option<Probe<bool>>,
}

pub struct OperationModeMonitor {
    bus: Arc<Bus>,
    sources: ModeSources,
    last: Mutex<Option<(OperationMode, bool)>>,
}

impl OperationModeMonitor {
    pub fn start(bus: &Arc<Bus>, sources: ModeSources) -> Result<Arc<Self>, BusError> {
        bus.register_node(OPMODE_NODE)?;
        bus.register_schema("OperationMode", &["mode"]);
        bus.register_schema("SafetyStatus", &["alarm_active"]);
        bus.advertise(OPMODE_NODE, OPMODE_TOPIC, "OperationMode")?;
        bus.advertise(OPMODE_NODE, SAFETY_STATUS_TOPIC, "SafetyStatus")?;
        let monitor = Arc::new(Self {
            bus: bus.clone(),
            sources,
            last: Mutex::new(None),
        });
        let me = monitor.clone();
        bus.register_service(OPMODE_NODE, GET_OPMODE, move |_| {
            Ok(json!({ "mode": me.current() }))
        })?;
        monitor.tick(bus.now_ms());
        Ok(monitor)
    }

    pub fn current(&self) -> OperationMode {
        self.sample().0
    }

    fn sample(&self) -> (OperationMode, bool) {
        let s = &self.sources;
        let alarm = s.alarm_active.as_ref().is_some_and(|f| f());
        let mode = derive_mode(
            alarm,
            s.process_mode.as_ref().map_or(Mode::Idle, |f| f()),
            s.recording_open.as_ref().is_some_and(|f| f()),
        );
        (mode, alarm)
    }
}

impl Tick for OperationModeMonitor {
    fn tick(&self, _now: Stamp) -> bool {
        let (mode, alarm) = self.sample();
        let previous = self.last.lock().replace((mode, alarm));
        if previous.map(|p| p.0) != Some(mode) {
            let _ = self
                .bus
                .publish(OPMODE_NODE, OPMODE_TOPIC, json!({ "mode": mode }));
        }
        if previous.map(|p| p.1) != Some(alarm) {
            let _ = self.bus.publish(
                OPMODE_NODE,
                SAFETY_STATUS_TOPIC,
                json!({ "alarm_active": alarm }),
            );
        }
        previous != Some((mode, alarm))
    }
}
