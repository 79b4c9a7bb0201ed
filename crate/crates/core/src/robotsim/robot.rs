use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::alarms::{Alarm, AlarmList, UnknownAlarm};
use super::fixture::{GroupSpec, Pose, RobotFixture, ToolKind};
use super::motion::LinearMotion;
use crate::bus::Bus;
use crate::clock::Stamp;
use crate::logs::{LogEntry, Severity};
use crate::runtime::Tick;

pub const ROBOT_NODE: &str = "robot";
pub const SAFETY_NODE: &str = "safety";
pub const STATUS_TOPIC: &str = "/robot/status";
pub const LOGS_TOPIC: &str = "/robot/logs";
pub const ALARMS_TOPIC: &str = "/safety/alarms";
pub const RESET_ACK_TOPIC: &str = "/safety/reset_ack";

/// Progress publication period while a group moves.
pub const STATUS_PERIOD_MS: Stamp = 100;
pub const TOOL_CHANGE_DELAY_MS: Stamp = 3_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RobotError {
    #[error("unknown group {0:?}")]
    UnknownGroup(String),
    #[error("group {0:?} is busy")]
    Busy(String),
    #[error("robot motion is disabled")]
    MotionDisabled,
    #[error("{what} {value} exceeds limit {limit}")]
    LimitExceeded {
        what: &'static str,
        value: String,
        limit: String,
    },
    #[error("unknown configuration {config:?} for group {group:?}")]
    UnknownConfig { group: String, config: String },
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("tool {requested:?} is not attached to {arm:?} (attached: {attached:?})")]
    ToolMismatch {
        arm: String,
        requested: String,
        attached: Option<String>,
    },
    #[error("unknown tool {tool:?} for {arm:?}")]
    UnknownTool { arm: String, tool: String },
    #[error(transparent)]
    UnknownAlarm(#[from] UnknownAlarm),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionTarget {
    Named(String),
    Absolute(Pose),
    Relative(Pose),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionResult {
    pub success: bool,
    pub duration_ms: f64,
    #[serde(rename = "final")]
    pub final_pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ToolEvent {
    pub stamp: Stamp,
    pub action: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ToolState {
    /// Gripper state; `None` for stateless tools.
    pub closed: Option<bool>,
    pub events: Vec<ToolEvent>,
}

#[derive(Debug, Clone)]
struct ActiveMotion {
    plan: LinearMotion<f64>,
    started: Stamp,
    last_status: Stamp,
}

impl ActiveMotion {
    fn elapsed_s(&self, now: Stamp) -> f64 {
        now.saturating_sub(self.started) as f64 / 1000.0
    }

    fn finished(&self, now: Stamp) -> bool {
        self.elapsed_s(now) >= self.plan.duration()
    }
}

#[derive(Debug, Clone)]
struct GroupState {
    spec: GroupSpec,
    current: Pose,
    motion: Option<ActiveMotion>,
    attached_tool: Option<String>,
    tool_change: Option<(String, Stamp)>,
}

impl GroupState {
    fn pose_at(&self, now: Stamp) -> Pose {
        match &self.motion {
            Some(m) => m.plan.pose_at(m.elapsed_s(now)),
            None => self.current,
        }
    }

    fn status(&self, now: Stamp) -> Value {
        let (speed, progress) = match &self.motion {
            Some(m) => {
                let t = m.elapsed_s(now);
                (m.plan.profile.speed_at(t), m.plan.progress_at(t))
            }
            None => (0.0, 1.0),
        };
        json!({
            "group": self.spec.name,
            "moving": self.motion.is_some(),
            "pose": self.pose_at(now),
            "speed": speed,
            "progress": progress,
            "tool": self.attached_tool,
        })
    }
}

#[derive(Default)]
struct RobotState {
    groups: Vec<GroupState>,
    tools: BTreeMap<(String, String), ToolState>,
    alarms: AlarmList,
}

impl RobotState {
    fn group(&self, name: &str) -> Result<&GroupState, RobotError> {
        self.groups
            .iter()
            .find(|g| g.spec.name == name)
            .ok_or_else(|| RobotError::UnknownGroup(name.into()))
    }

    fn group_mut(&mut self, name: &str) -> Result<&mut GroupState, RobotError> {
        self.groups
            .iter_mut()
            .find(|g| g.spec.name == name)
            .ok_or_else(|| RobotError::UnknownGroup(name.into()))
    }
}

/// Messages gathered under the state lock and published after releasing it.
#[derive(Default)]
struct Outbox(Vec<(&'static str, &'static str, Value)>);

impl Outbox {
    fn push(&mut self, node: &'static str, topic: &'static str, payload: Value) {
        self.0.push((node, topic, payload));
    }
}

/// Shared flag gating real robot motion.
#[derive(Debug, Clone)]
pub struct MotionGate(Arc<AtomicBool>);

impl MotionGate {
    pub fn new(enabled: bool) -> Self {
        Self(Arc::new(AtomicBool::new(enabled)))
    }

    pub fn set(&self, enabled: bool) {
        self.0.store(enabled, Ordering::SeqCst);
    }

    pub fn is_enabled(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Simulated robot: Cartesian motion groups, end effectors and the safety
/// alarm list. Publishing is best effort, so topics of disabled features
/// are simply never advertised.
pub struct Robot {
    bus: Arc<Bus>,
    gate: MotionGate,
    state: Mutex<RobotState>,
}

impl Robot {
    pub fn new(bus: Arc<Bus>, fixture: &RobotFixture, gate: MotionGate) -> Self {
        let mut state = RobotState::default();
        for spec in &fixture.groups {
            let current = spec.initial_pose().unwrap_or_default();
            for tool in &spec.tools {
                let closed = (tool.kind == ToolKind::Gripper).then_some(false);
                state.tools.insert(
                    (spec.name.clone(), tool.name.clone()),
                    ToolState {
                        closed,
                        events: Vec::new(),
                    },
                );
            }
            state.groups.push(GroupState {
                spec: spec.clone(),
                current,
                motion: None,
                attached_tool: spec.attached_tool.clone(),
                tool_change: None,
            });
        }
        Self {
            bus,
            gate,
            state: Mutex::new(state),
        }
    }

    pub fn gate(&self) -> &MotionGate {
        &self.gate
    }

    fn now(&self) -> Stamp {
        self.bus.now_ms()
    }

    fn flush(&self, outbox: Outbox) {
        for (node, topic, payload) in outbox.0 {
            let _ = self.bus.publish(node, topic, payload);
        }
    }

    fn log(&self, outbox: &mut Outbox, severity: Severity, text: String) {
        let entry = LogEntry::new(self.now(), severity, ROBOT_NODE, text);
        outbox.push(ROBOT_NODE, LOGS_TOPIC, entry.to_value());
    }

    pub fn group_names(&self) -> Vec<String> {
        self.state
            .lock()
            .groups
            .iter()
            .map(|g| g.spec.name.clone())
            .collect()
    }

    pub fn group_spec(&self, group: &str) -> Result<GroupSpec, RobotError> {
        Ok(self.state.lock().group(group)?.spec.clone())
    }

    pub fn named_configs(&self, group: &str) -> Result<BTreeMap<String, Pose>, RobotError> {
        Ok(self.state.lock().group(group)?.spec.named_configs.clone())
    }

    pub fn get_pose(&self, group: &str) -> Result<Pose, RobotError> {
        let now = self.now();
        Ok(self.state.lock().group(group)?.pose_at(now))
    }

    pub fn is_moving(&self, group: &str) -> Result<bool, RobotError> {
        Ok(self.state.lock().group(group)?.motion.is_some())
    }

    pub fn any_moving(&self) -> bool {
        self.state.lock().groups.iter().any(|g| g.motion.is_some())
    }

    pub fn attached_tool(&self, arm: &str) -> Result<Option<String>, RobotError> {
        Ok(self.state.lock().group(arm)?.attached_tool.clone())
    }

    pub fn tool_state(&self, arm: &str, tool: &str) -> Option<ToolState> {
        self.state
            .lock()
            .tools
            .get(&(arm.to_string(), tool.to_string()))
            .cloned()
    }

    pub fn group_status(&self, group: &str) -> Result<Value, RobotError> {
        let now = self.now();
        Ok(self.state.lock().group(group)?.status(now))
    }

    /// Starts a straight-line move. The returned result describes the
    /// planned motion; the group reaches the target after `duration_ms`.
    pub fn move_to(
        &self,
        group: &str,
        target: &MotionTarget,
        speed: f64,
        accel: f64,
    ) -> Result<MotionResult, RobotError> {
        let now = self.now();
        let mut outbox = Outbox::default();
        let result = {
            let mut st = self.state.lock();
            let g = st.group_mut(group)?;
            if g.motion.is_some() || g.tool_change.is_some() {
                return Err(RobotError::Busy(group.into()));
            }
            if !self.gate.is_enabled() {
                return Err(RobotError::MotionDisabled);
            }
            if !(speed > 0.0 && speed <= g.spec.speed_limit) {
                return Err(RobotError::LimitExceeded {
                    what: "speed",
                    value: speed.to_string(),
                    limit: g.spec.speed_limit.to_string(),
                });
            }
            if !(accel > 0.0 && accel <= g.spec.accel_limit) {
                return Err(RobotError::LimitExceeded {
                    what: "acceleration",
                    value: accel.to_string(),
                    limit: g.spec.accel_limit.to_string(),
                });
            }
            let goal = match target {
                MotionTarget::Named(name) => {
                    *g.spec
                        .named_configs
                        .get(name)
                        .ok_or_else(|| RobotError::UnknownConfig {
                            group: group.into(),
                            config: name.clone(),
                        })?
                }
                MotionTarget::Absolute(p) => p.normalized(),
                MotionTarget::Relative(delta) => g.current.offset_by(delta),
            };
            if !goal.is_finite() {
                return Err(RobotError::InvalidTarget("non-finite pose".into()));
            }
            let plan = LinearMotion::plan(g.current, goal, speed, accel)
                .map_err(|e| RobotError::InvalidTarget(e.to_string()))?;
            let duration_ms = plan.duration() * 1000.0;
            if duration_ms == 0.0 {
                g.current = goal;
            } else {
                g.motion = Some(ActiveMotion {
                    plan,
                    started: now,
                    last_status: now,
                });
            }
            outbox.push(ROBOT_NODE, STATUS_TOPIC, g.status(now));
            MotionResult {
                success: true,
                duration_ms,
                final_pose: goal,
            }
        };
        self.log(
            &mut outbox,
            Severity::Info,
            format!("{group}: moving ({:.0} ms)", result.duration_ms),
        );
        self.flush(outbox);
        Ok(result)
    }

    /// Stops a group where it is. Returns the pose it stopped at, or `None`
    /// if it was not moving.
    pub fn cancel(&self, group: &str) -> Result<Option<Pose>, RobotError> {
        let now = self.now();
        let mut outbox = Outbox::default();
        let stopped = {
            let mut st = self.state.lock();
            let g = st.group_mut(group)?;
            match g.motion.take() {
                Some(m) => {
                    g.current = m.plan.pose_at(m.elapsed_s(now));
                    outbox.push(ROBOT_NODE, STATUS_TOPIC, g.status(now));
                    Some(g.current)
                }
                None => None,
            }
        };
        if stopped.is_some() {
            self.log(
                &mut outbox,
                Severity::Warning,
                format!("{group}: motion cancelled"),
            );
        }
        self.flush(outbox);
        Ok(stopped)
    }

    pub fn actuate_end_effector(
        &self,
        arm: &str,
        tool: &str,
        action: &str,
    ) -> Result<ToolState, RobotError> {
        let now = self.now();
        let mut outbox = Outbox::default();
        let state = {
            let mut st = self.state.lock();
            let attached = st.group(arm)?.attached_tool.clone();
            if attached.as_deref() != Some(tool) {
                return Err(RobotError::ToolMismatch {
                    arm: arm.into(),
                    requested: tool.into(),
                    attached,
                });
            }
            let ts = st
                .tools
                .entry((arm.to_string(), tool.to_string()))
                .or_default();
            ts.events.push(ToolEvent {
                stamp: now,
                action: action.to_string(),
            });
            if ts.closed.is_some() {
                match action {
                    "close" | "grasp" => ts.closed = Some(true),
                    "open" | "release" => ts.closed = Some(false),
                    _ => {}
                }
            }
            ts.clone()
        };
        self.log(
            &mut outbox,
            Severity::Info,
            format!("{arm}/{tool}: {action}"),
        );
        self.flush(outbox);
        Ok(state)
    }

    /// Begins a tool change that completes after [`TOOL_CHANGE_DELAY_MS`].
    pub fn start_tool_change(&self, arm: &str, new_tool: &str) -> Result<(), RobotError> {
        let now = self.now();
        let mut outbox = Outbox::default();
        {
            let mut st = self.state.lock();
            let g = st.group_mut(arm)?;
            if g.motion.is_some() || g.tool_change.is_some() {
                return Err(RobotError::Busy(arm.into()));
            }
            if !g.spec.tools.iter().any(|t| t.name == new_tool) {
                return Err(RobotError::UnknownTool {
                    arm: arm.into(),
                    tool: new_tool.into(),
                });
            }
            if g.attached_tool.as_deref() == Some(new_tool) {
                return Ok(());
            }
            g.tool_change = Some((new_tool.to_string(), now + TOOL_CHANGE_DELAY_MS));
        }
        self.log(
            &mut outbox,
            Severity::Info,
            format!("{arm}: changing tool to {new_tool}"),
        );
        self.flush(outbox);
        Ok(())
    }

    pub fn tool_change_pending(&self, arm: &str) -> Result<bool, RobotError> {
        Ok(self.state.lock().group(arm)?.tool_change.is_some())
    }

    fn alarm_message(list: &AlarmList) -> Value {
        json!({ "alarms": list.list(), "safe": !list.has_active() })
    }

    pub fn raise_alarm(&self, id: &str, text: &str) {
        let now = self.now();
        let msg = {
            let mut st = self.state.lock();
            st.alarms.raise(id, text, now);
            Self::alarm_message(&st.alarms)
        };
        let _ = self.bus.publish(SAFETY_NODE, ALARMS_TOPIC, msg);
    }

    pub fn clear_condition(&self, id: &str) -> Result<(), RobotError> {
        let msg = {
            let mut st = self.state.lock();
            st.alarms.clear_condition(id)?;
            Self::alarm_message(&st.alarms)
        };
        let _ = self.bus.publish(SAFETY_NODE, ALARMS_TOPIC, msg);
        Ok(())
    }

    pub fn reset_alarms(&self) -> Vec<Alarm> {
        let (remaining, msg) = {
            let mut st = self.state.lock();
            let remaining = st.alarms.reset();
            (remaining, Self::alarm_message(&st.alarms))
        };
        let _ = self.bus.publish(SAFETY_NODE, ALARMS_TOPIC, msg);
        let _ = self.bus.publish(
            SAFETY_NODE,
            RESET_ACK_TOPIC,
            json!({ "remaining": remaining }),
        );
        remaining
    }

    pub fn alarms(&self) -> Vec<Alarm> {
        self.state.lock().alarms.list().to_vec()
    }

    pub fn has_active_alarm(&self) -> bool {
        self.state.lock().alarms.has_active()
    }

    pub fn publish_alarms(&self) {
        let msg = Self::alarm_message(&self.state.lock().alarms);
        let _ = self.bus.publish(SAFETY_NODE, ALARMS_TOPIC, msg);
    }
}

impl Tick for Robot {
    fn tick(&self, now: Stamp) -> bool {
        let mut outbox = Outbox::default();
        let mut logs = Vec::new();
        let mut progressed = false;
        {
            let mut st = self.state.lock();
            for g in st.groups.iter_mut() {
                if let Some(m) = &mut g.motion {
                    if m.finished(now) {
                        g.current = m.plan.goal;
                        g.motion = None;
                        progressed = true;
                        outbox.push(ROBOT_NODE, STATUS_TOPIC, g.status(now));
                        logs.push((Severity::Info, format!("{}: motion completed", g.spec.name)));
                    } else if now.saturating_sub(m.last_status) >= STATUS_PERIOD_MS {
                        m.last_status = now;
                        outbox.push(ROBOT_NODE, STATUS_TOPIC, g.status(now));
                    }
                }
                if let Some((tool, due)) = g.tool_change.clone() {
                    if now >= due {
                        g.attached_tool = Some(tool.clone());
                        g.tool_change = None;
                        progressed = true;
                        logs.push((
                            Severity::Info,
                            format!("{}: tool changed to {tool}", g.spec.name),
                        ));
                    }
                }
            }
        }
        for (severity, text) in logs {
            self.log(&mut outbox, severity, text);
        }
        self.flush(outbox);
        progressed
    }
}
