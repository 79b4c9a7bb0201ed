//! Teach-in routines: record waypoints and gripper actions, persist one
//! JSON document per routine, and replay them through the robot.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::atomic::write_atomic;
use crate::bus::{Bus, BusError};
use crate::clock::Stamp;
use crate::logs::{LogEntry, Severity, LOG_FIELDS, LOG_TYPE};
use crate::robotsim::{MotionTarget, Pose, Robot};
use crate::runtime::Tick;
use crate::service::{fault, opt_str};

pub const ROUTINES_NODE: &str = "routines";
pub const LIST_SERVICE: &str = "/routines/list";
pub const RECORD_SERVICE: &str = "/routines/record";
pub const DELETE_SERVICE: &str = "/routines/delete";
pub const EXECUTE_TOPIC: &str = "/routines/execute";
pub const ROUTINE_LOGS_TOPIC: &str = "/routines/logs";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutineStep {
    Pose(Pose),
    Action(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Routine {
    pub name: String,
    pub group: String,
    #[serde(default)]
    pub tool: Option<String>,
    pub steps: Vec<RoutineStep>,
    pub created_at: Stamp,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoutineError {
    #[error("no recording is open")]
    NoOpenRecording,
    #[error("a recording is already open")]
    RecordingOpen,
    #[error("a routine named {0:?} already exists")]
    DuplicateName(String),
    #[error("cannot save a routine without steps")]
    EmptyRoutine,
    #[error("no routine named {0:?}")]
    UnknownRoutine(String),
    #[error("real robot motion is disabled")]
    MotionDisabled,
    #[error("a routine is already executing")]
    Busy,
    #[error("invalid routine name {0:?}")]
    InvalidName(String),
    #[error("{0}")]
    Robot(String),
    #[error("routine storage: {0}")]
    Io(String),
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn action_log(action: &str) -> String {
    match action {
        "grasp" | "close" => "Grasp recorded".into(),
        "release" | "open" => "Release recorded".into(),
        other => format!("Action recorded: {other}"),
    }
}

fn fmt_pose(p: &Pose) -> String {
    let v: Vec<String> = p
        .position
        .iter()
        .chain(&p.orientation)
        .map(|x| format!("{x:.4}"))
        .collect();
    format!("[{}]", v.join(", "))
}

#[derive(Debug)]
struct Playback {
    routine: Routine,
    next: usize,
}

pub struct RoutineStore {
    dir: PathBuf,
    bus: Arc<Bus>,
    robot: Arc<Robot>,
    recording: Mutex<Option<Routine>>,
    playback: Mutex<Option<Playback>>,
}

impl RoutineStore {
    pub fn new(dir: &Path, bus: Arc<Bus>, robot: Arc<Robot>) -> Result<Self, RoutineError> {
        std::fs::create_dir_all(dir).map_err(|e| RoutineError::Io(e.to_string()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            bus,
            robot,
            recording: Mutex::new(None),
            playback: Mutex::new(None),
        })
    }

    pub fn start(self: &Arc<Self>) -> Result<(), BusError> {
        let bus = &self.bus;
        bus.register_node(ROUTINES_NODE)?;
        bus.register_schema(LOG_TYPE, &LOG_FIELDS);
        bus.advertise(ROUTINES_NODE, ROUTINE_LOGS_TOPIC, LOG_TYPE)?;
        let me = self.clone();
        bus.register_service(ROUTINES_NODE, LIST_SERVICE, move |_| {
            Ok(json!({ "routines": me.list() }))
        })?;
        let me = self.clone();
        bus.register_service(ROUTINES_NODE, DELETE_SERVICE, move |args| {
            let name = opt_str(&args, "name").unwrap_or_default();
            me.delete(name).map_err(fault)?;
            Ok(json!({ "deleted": name }))
        })?;
        let me = self.clone();
        bus.register_service(ROUTINES_NODE, RECORD_SERVICE, move |args| {
            me.record_request(&args).map_err(fault)
        })?;
        let me = self.clone();
        bus.subscribe(ROUTINES_NODE, EXECUTE_TOPIC, move |m| {
            let name = m
                .payload
                .get("name")
                .and_then(Value::as_str)
                .unwrap_or_default();
            if let Err(e) = me.execute(name) {
                me.log(Severity::Error, e.to_string());
            }
        })?;
        Ok(())
    }

    fn record_request(&self, args: &Value) -> Result<Value, RoutineError> {
        let arg = |k: &str| opt_str(args, k).unwrap_or_default().to_string();
        match opt_str(args, "op").unwrap_or_default() {
            "start" => {
                self.start_recording(&arg("group"), opt_str(args, "tool"))?;
                Ok(json!({ "recording": true }))
            }
            "add_pose" => Ok(json!({ "pose": self.add_pose()? })),
            "add_action" => {
                self.add_action(&arg("action"))?;
                Ok(json!({ "action": arg("action") }))
            }
            "save" => Ok(json!(self.save(&arg("name"))?)),
            "discard" => {
                self.discard()?;
                Ok(json!({ "recording": false }))
            }
            other => Err(RoutineError::Robot(format!(
                "InvalidArgs: unknown record op {other:?}"
            ))),
        }
    }

    fn log(&self, severity: Severity, text: String) {
        let entry = LogEntry::new(self.bus.now_ms(), severity, ROUTINES_NODE, text);
        let _ = self
            .bus
            .publish(ROUTINES_NODE, ROUTINE_LOGS_TOPIC, entry.to_value());
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.json"))
    }

    pub fn is_recording(&self) -> bool {
        self.recording.lock().is_some()
    }

    pub fn is_executing(&self) -> bool {
        self.playback.lock().is_some()
    }

    pub fn start_recording(&self, group: &str, tool: Option<&str>) -> Result<(), RoutineError> {
        self.robot
            .group_spec(group)
            .map_err(|e| RoutineError::Robot(fault(e)))?;
        let mut rec = self.recording.lock();
        if rec.is_some() {
            return Err(RoutineError::RecordingOpen);
        }
        *rec = Some(Routine {
            name: String::new(),
            group: group.into(),
            tool: tool.map(str::to_string),
            steps: Vec::new(),
            created_at: self.bus.now_ms(),
        });
        drop(rec);
        self.log(Severity::Info, format!("Recording started for {group}"));
        Ok(())
    }

    /// Captures the group's current pose.
    pub fn add_pose(&self) -> Result<Pose, RoutineError> {
        let pose = {
            let mut rec = self.recording.lock();
            let r = rec.as_mut().ok_or(RoutineError::NoOpenRecording)?;
            let pose = self
                .robot
                .get_pose(&r.group)
                .map_err(|e| RoutineError::Robot(fault(e)))?;
            r.steps.push(RoutineStep::Pose(pose));
            pose
        };
        self.log(
            Severity::Info,
            format!("Pose recorded: {}", fmt_pose(&pose)),
        );
        Ok(pose)
    }

    pub fn add_action(&self, action: &str) -> Result<(), RoutineError> {
        {
            let mut rec = self.recording.lock();
            let r = rec.as_mut().ok_or(RoutineError::NoOpenRecording)?;
            r.steps.push(RoutineStep::Action(action.into()));
        }
        self.log(Severity::Info, action_log(action));
        Ok(())
    }

    pub fn save(&self, name: &str) -> Result<Routine, RoutineError> {
        let mut rec = self.recording.lock();
        let r = rec.as_mut().ok_or(RoutineError::NoOpenRecording)?;
        if !valid_name(name) {
            return Err(RoutineError::InvalidName(name.into()));
        }
        if r.steps.is_empty() {
            return Err(RoutineError::EmptyRoutine);
        }
        if self.file(name).exists() {
            return Err(RoutineError::DuplicateName(name.into()));
        }
        r.name = name.into();
        let body = serde_json::to_vec_pretty(&*r).expect("routine serializes");
        write_atomic(&self.file(name), &body).map_err(|e| RoutineError::Io(e.to_string()))?;
        let saved = rec.take().expect("checked above");
        drop(rec);
        self.log(
            Severity::Info,
            format!("Routine saved: {name} ({} steps)", saved.steps.len()),
        );
        Ok(saved)
    }

    pub fn discard(&self) -> Result<(), RoutineError> {
        self.recording
            .lock()
            .take()
            .ok_or(RoutineError::NoOpenRecording)?;
        self.log(Severity::Info, "Recording discarded".into());
        Ok(())
    }

    pub fn list(&self) -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(&self.dir)
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| {
                let p = e.path();
                (p.extension()? == "json").then(|| p.file_stem()?.to_str().map(str::to_string))?
            })
            .collect();
        names.sort();
        names
    }

    pub fn load(&self, name: &str) -> Result<Routine, RoutineError> {
        if !valid_name(name) {
            return Err(RoutineError::UnknownRoutine(name.into()));
        }
        let text = std::fs::read_to_string(self.file(name))
            .map_err(|_| RoutineError::UnknownRoutine(name.into()))?;
        serde_json::from_str(&text).map_err(|e| RoutineError::Io(format!("{name}: {e}")))
    }

    pub fn delete(&self, name: &str) -> Result<(), RoutineError> {
        if !valid_name(name) || !self.file(name).exists() {
            return Err(RoutineError::UnknownRoutine(name.into()));
        }
        std::fs::remove_file(self.file(name)).map_err(|e| RoutineError::Io(e.to_string()))?;
        self.log(Severity::Info, format!("Routine deleted: {name}"));
        Ok(())
    }

    /// Queues a replay; steps run one after another as the runtime ticks.
    pub fn execute(&self, name: &str) -> Result<(), RoutineError> {
        let routine = self.load(name)?;
        if !self.robot.gate().is_enabled() {
            return Err(RoutineError::MotionDisabled);
        }
        let mut pb = self.playback.lock();
        if pb.is_some() {
            return Err(RoutineError::Busy);
        }
        *pb = Some(Playback { routine, next: 0 });
        drop(pb);
        self.log(Severity::Info, format!("Executing routine {name}"));
        Ok(())
    }

    fn run_step(&self, routine: &Routine, step: &RoutineStep) -> Result<(), String> {
        match step {
            RoutineStep::Pose(p) => {
                let spec = self.robot.group_spec(&routine.group).map_err(fault)?;
                self.robot
                    .move_to(
                        &routine.group,
                        &MotionTarget::Absolute(*p),
                        spec.default_speed(),
                        spec.default_accel(),
                    )
                    .map_err(fault)?;
            }
            RoutineStep::Action(action) => {
                let tool = match &routine.tool {
                    Some(t) => t.clone(),
                    None => self
                        .robot
                        .attached_tool(&routine.group)
                        .map_err(fault)?
                        .ok_or_else(|| "ToolMismatch: no tool attached".to_string())?,
                };
                self.robot
                    .actuate_end_effector(&routine.group, &tool, action)
                    .map_err(fault)?;
            }
        }
        Ok(())
    }
}

impl Tick for RoutineStore {
    fn tick(&self, _now: Stamp) -> bool {
        let (routine, step) = {
            let mut pb = self.playback.lock();
            let Some(p) = pb.as_mut() else { return false };
            if self.robot.is_moving(&p.routine.group).unwrap_or(false) {
                return false;
            }
            if p.next >= p.routine.steps.len() {
                let name = p.routine.name.clone();
                *pb = None;
                drop(pb);
                self.log(Severity::Info, format!("Routine {name} completed"));
                return true;
            }
            p.next += 1;
            (p.routine.clone(), p.routine.steps[p.next - 1].clone())
        };
        if let Err(e) = self.run_step(&routine, &step) {
            *self.playback.lock() = None;
            self.log(
                Severity::Error,
                format!("Routine {} aborted: {e}", routine.name),
            );
        }
        true
    }
}
