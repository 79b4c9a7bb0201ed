//! Action-style executor: runs one robot command per goal.

use std::collections::VecDeque;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::definition::Step;
use crate::bus::{Bus, BusError};
use crate::clock::Stamp;
use crate::logs::{LogEntry, Severity, LOG_FIELDS, LOG_TYPE};
use crate::robotsim::{MotionTarget, Robot};
use crate::runtime::Tick;

pub const SERVER_NODE: &str = "/process/server";
pub const GOAL_TOPIC: &str = "/process/action/goal";
pub const CANCEL_TOPIC: &str = "/process/action/cancel";
pub const RESULT_TOPIC: &str = "/process/action/result";
pub const UI_LOGS_TOPIC: &str = "/ui/logs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub goal_id: u64,
    pub step: Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalResult {
    pub goal_id: u64,
    pub success: bool,
    pub message: String,
}

#[derive(Debug)]
enum Waiting {
    Motion { group: String },
    Until(Stamp),
}

#[derive(Default)]
struct ServerState {
    queue: VecDeque<Goal>,
    active: Option<(u64, Waiting)>,
}

pub struct ProcessServer {
    bus: Arc<Bus>,
    robot: Arc<Robot>,
    state: Mutex<ServerState>,
}

impl ProcessServer {
    pub fn start(bus: &Arc<Bus>, robot: &Arc<Robot>) -> Result<Arc<Self>, BusError> {
        bus.register_node(SERVER_NODE)?;
        bus.register_schema("ProcessGoal", &["goal_id", "step"]);
        bus.register_schema("ProcessGoalResult", &["goal_id", "success"]);
        bus.register_schema(LOG_TYPE, &LOG_FIELDS);
        bus.advertise(SERVER_NODE, RESULT_TOPIC, "ProcessGoalResult")?;
        bus.advertise(SERVER_NODE, UI_LOGS_TOPIC, LOG_TYPE)?;
        let server = Arc::new(Self {
            bus: bus.clone(),
            robot: robot.clone(),
            state: Mutex::new(ServerState::default()),
        });

        let me = server.clone();
        bus.subscribe(SERVER_NODE, GOAL_TOPIC, move |m| {
            if let Ok(goal) = serde_json::from_value::<Goal>(m.payload.clone()) {
                me.state.lock().queue.push_back(goal);
            }
        })?;
        let me = server.clone();
        bus.subscribe(SERVER_NODE, CANCEL_TOPIC, move |m| {
            let id = m.payload.get("goal_id").and_then(|v| v.as_u64());
            me.cancel(id);
        })?;
        Ok(server)
    }

    /// Cancels the active goal (if it matches `goal_id`) and drops queued ones.
    pub fn cancel(&self, goal_id: Option<u64>) {
        let cancelled = {
            let mut st = self.state.lock();
            st.queue
                .retain(|g| goal_id.is_some_and(|id| g.goal_id != id));
            match &st.active {
                Some((id, _)) if goal_id.is_none_or(|g| g == *id) => st.active.take(),
                _ => None,
            }
        };
        if let Some((id, Waiting::Motion { group })) = &cancelled {
            let _ = self.robot.cancel(group);
            self.log(Severity::Warning, format!("goal {id} cancelled"));
        }
    }

    pub fn is_idle(&self) -> bool {
        let st = self.state.lock();
        st.active.is_none() && st.queue.is_empty()
    }

    fn log(&self, severity: Severity, text: String) {
        let entry = LogEntry::new(self.bus.now_ms(), severity, SERVER_NODE, text);
        let _ = self
            .bus
            .publish(SERVER_NODE, UI_LOGS_TOPIC, entry.to_value());
    }

    fn finish(&self, goal_id: u64, success: bool, message: String) {
        let result = GoalResult {
            goal_id,
            success,
            message,
        };
        let _ = self.bus.publish(SERVER_NODE, RESULT_TOPIC, json!(result));
    }

    /// Starts a goal; returns the wait condition, or the immediate outcome.
    fn begin(&self, goal: &Goal, now: Stamp) -> Result<Option<Waiting>, String> {
        match &goal.step {
            Step::MoveTo {
                group,
                target,
                speed,
                accel,
            } => {
                if !self.robot.gate().is_enabled() {
                    self.log(Severity::Info, format!("{group}: dry run, motion disabled"));
                    return Ok(None);
                }
                let spec = self.robot.group_spec(group).map_err(|e| e.to_string())?;
                let speed = speed.unwrap_or_else(|| spec.default_speed());
                let accel = accel.unwrap_or_else(|| spec.default_accel());
                let result = self
                    .robot
                    .move_to(group, target, speed, accel)
                    .map_err(|e| e.to_string())?;
                let label = match target {
                    MotionTarget::Named(n) => n.clone(),
                    _ => "target".into(),
                };
                self.log(
                    Severity::Info,
                    format!("{group}: moving to {label} ({:.0} ms)", result.duration_ms),
                );
                if self.robot.is_moving(group).unwrap_or(false) {
                    Ok(Some(Waiting::Motion {
                        group: group.clone(),
                    }))
                } else {
                    Ok(None)
                }
            }
            Step::ActuateEndEffector { arm, tool, action } => {
                self.robot
                    .actuate_end_effector(arm, tool, action)
                    .map_err(|e| e.to_string())?;
                Ok(None)
            }
            Step::Wait { ms } => Ok((*ms > 0).then_some(Waiting::Until(now + ms))),
            Step::RaiseAlarm { id, text } => {
                self.robot.raise_alarm(id, text);
                Ok(None)
            }
        }
    }
}

impl Tick for ProcessServer {
    fn tick(&self, now: Stamp) -> bool {
        let done = {
            let st = self.state.lock();
            match &st.active {
                Some((id, Waiting::Motion { group })) => {
                    (!self.robot.is_moving(group).unwrap_or(false)).then_some(*id)
                }
                Some((id, Waiting::Until(t))) => (now >= *t).then_some(*id),
                None => None,
            }
        };
        if let Some(id) = done {
            self.state.lock().active = None;
            self.finish(id, true, "Motion OK".into());
            return true;
        }
        let next = {
            let mut st = self.state.lock();
            if st.active.is_some() {
                None
            } else {
                st.queue.pop_front()
            }
        };
        let Some(goal) = next else { return false };
        match self.begin(&goal, now) {
            Ok(Some(waiting)) => {
                self.state.lock().active = Some((goal.goal_id, waiting));
            }
            Ok(None) => self.finish(goal.goal_id, true, "done".into()),
            Err(e) => {
                self.log(Severity::Error, e.clone());
                self.finish(goal.goal_id, false, e);
            }
        }
        true
    }
}
