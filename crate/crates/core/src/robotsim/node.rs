//! Bus-facing side of the simulator: services, command topics and stream generators.

use std::sync::Arc;

use parking_lot::Mutex;
use serde::Deserialize;
use serde_json::{json, Value};

use super::fixture::Pose;
use super::robot::*;
use super::streams::{RateSchedule, SensorGraphSpec};
use super::video::{frame_message, VideoStreamSpec};
use crate::bus::{Bus, BusError};
use crate::clock::Stamp;
use crate::logs::{LogEntry, Severity, LOG_FIELDS, LOG_TYPE};
use crate::runtime::Tick;
use crate::service::{arg_str, fault, opt_str, parse_args};

pub const GET_GROUPS: &str = "/robot/get_groups";
pub const GET_NAMED_CONFIGS: &str = "/robot/get_named_configs";
pub const GET_POSE: &str = "/robot/get_pose";
pub const MOVE: &str = "/robot/move";
pub const EEF_GOAL_TOPIC: &str = "/robot/eef_goal";
pub const TOOL_CHANGE_TOPIC: &str = "/robot/tool_change";
pub const RESET_TOPIC: &str = "/safety/reset";
pub const REQUEST_UPDATE_TOPIC: &str = "/safety/request_update";
/// Simulation hooks standing in for real safety conditions.
pub const SIM_RAISE_TOPIC: &str = "/safety/sim/raise";
pub const SIM_CLEAR_TOPIC: &str = "/safety/sim/clear";

/// Registers the robot node and the topics it always publishes.
pub fn start_robot_node(bus: &Bus) -> Result<(), BusError> {
    bus.register_node(ROBOT_NODE)?;
    bus.register_schema("RobotStatus", &["group", "moving", "pose"]);
    bus.register_schema(LOG_TYPE, &LOG_FIELDS);
    bus.advertise(ROBOT_NODE, STATUS_TOPIC, "RobotStatus")?;
    bus.advertise(ROBOT_NODE, LOGS_TOPIC, LOG_TYPE)?;
    Ok(())
}

fn report(bus: &Bus, result: Result<(), RobotError>) {
    if let Err(e) = result {
        let entry = LogEntry::new(bus.now_ms(), Severity::Error, ROBOT_NODE, e.to_string());
        let _ = bus.publish(ROBOT_NODE, LOGS_TOPIC, entry.to_value());
    }
}

#[derive(Deserialize)]
struct MoveArgs {
    group: String,
    target: MotionTarget,
    #[serde(default)]
    speed: Option<f64>,
    #[serde(default)]
    accel: Option<f64>,
}

/// Manual motion control: group/config/pose queries, moves, end effectors, tool change.
pub fn start_manual_control(bus: &Arc<Bus>, robot: &Arc<Robot>) -> Result<(), BusError> {
    let r = robot.clone();
    bus.register_service(ROBOT_NODE, GET_GROUPS, move |_| {
        Ok(json!({ "groups": r.group_names() }))
    })?;

    let r = robot.clone();
    bus.register_service(ROBOT_NODE, GET_NAMED_CONFIGS, move |args| {
        match opt_str(&args, "group") {
            Some(g) => {
                let configs = r.named_configs(g).map_err(fault)?;
                Ok(json!({ "group": g, "configs": configs.keys().collect::<Vec<_>>() }))
            }
            None => {
                let mut all = serde_json::Map::new();
                for g in r.group_names() {
                    let names: Vec<String> =
                        r.named_configs(&g).map_err(fault)?.into_keys().collect();
                    all.insert(g, json!(names));
                }
                Ok(json!({ "configs": all }))
            }
        }
    })?;

    let r = robot.clone();
    bus.register_service(ROBOT_NODE, GET_POSE, move |args| {
        match opt_str(&args, "group") {
            Some(g) => Ok(json!({ "group": g, "pose": r.get_pose(g).map_err(fault)? })),
            None => {
                let mut poses = serde_json::Map::new();
                for g in r.group_names() {
                    poses.insert(g.clone(), json!(r.get_pose(&g).map_err(fault)?));
                }
                Ok(json!({ "poses": poses }))
            }
        }
    })?;

    let r = robot.clone();
    bus.register_service(ROBOT_NODE, MOVE, move |args| {
        let a: MoveArgs = parse_args(args)?;
        let spec = r.group_spec(&a.group).map_err(fault)?;
        let speed = a.speed.unwrap_or_else(|| spec.default_speed());
        let accel = a.accel.unwrap_or_else(|| spec.default_accel());
        let result = r
            .move_to(&a.group, &a.target, speed, accel)
            .map_err(fault)?;
        Ok(serde_json::to_value(result).expect("motion result serializes"))
    })?;

    let (r, b) = (robot.clone(), bus.clone());
    bus.subscribe(ROBOT_NODE, EEF_GOAL_TOPIC, move |m| {
        let p = &m.payload;
        let result = (|| {
            let arm = arg_str(p, "arm").map_err(RobotError::InvalidTarget)?;
            let tool = arg_str(p, "tool").map_err(RobotError::InvalidTarget)?;
            let action = arg_str(p, "action").map_err(RobotError::InvalidTarget)?;
            r.actuate_end_effector(arm, tool, action).map(|_| ())
        })();
        report(&b, result);
    })?;

    let (r, b) = (robot.clone(), bus.clone());
    bus.subscribe(ROBOT_NODE, TOOL_CHANGE_TOPIC, move |m| {
        let p = &m.payload;
        let result = (|| {
            let arm = arg_str(p, "arm").map_err(RobotError::InvalidTarget)?;
            let tool = arg_str(p, "tool").map_err(RobotError::InvalidTarget)?;
            r.start_tool_change(arm, tool)
        })();
        report(&b, result);
    })?;
    Ok(())
}

/// Safety node: alarm list publication, reset, and update requests.
pub fn start_alarms(bus: &Arc<Bus>, robot: &Arc<Robot>) -> Result<(), BusError> {
    bus.register_node(SAFETY_NODE)?;
    bus.register_schema("AlarmList", &["alarms"]);
    bus.advertise(SAFETY_NODE, ALARMS_TOPIC, "AlarmList")?;
    bus.advertise(SAFETY_NODE, RESET_ACK_TOPIC, "AlarmResetAck")?;

    let r = robot.clone();
    bus.subscribe(SAFETY_NODE, RESET_TOPIC, move |_| {
        r.reset_alarms();
    })?;
    let r = robot.clone();
    bus.subscribe(SAFETY_NODE, REQUEST_UPDATE_TOPIC, move |_| {
        r.publish_alarms()
    })?;
    let r = robot.clone();
    bus.subscribe(SAFETY_NODE, SIM_RAISE_TOPIC, move |m| {
        if let Some(id) = opt_str(&m.payload, "id") {
            r.raise_alarm(id, opt_str(&m.payload, "text").unwrap_or(id));
        }
    })?;
    let (r, b) = (robot.clone(), bus.clone());
    bus.subscribe(SAFETY_NODE, SIM_CLEAR_TOPIC, move |m| {
        if let Some(id) = opt_str(&m.payload, "id") {
            report(&b, r.clear_condition(id));
        }
    })?;
    Ok(())
}

pub const SENSORS_NODE: &str = "sensors";
pub const VIDEO_NODE: &str = "video";

/// Periodic publishers for the sensor graphs.
pub struct SensorStreams {
    bus: Arc<Bus>,
    streams: Mutex<Vec<(SensorGraphSpec, RateSchedule)>>,
}

impl SensorStreams {
    pub fn start(bus: &Arc<Bus>, specs: &[SensorGraphSpec]) -> Result<Arc<Self>, BusError> {
        bus.register_node(SENSORS_NODE)?;
        bus.register_schema("ScatterData", &["x", "y"]);
        bus.register_schema("TimeSeriesData", &["names", "values"]);
        for s in specs {
            bus.advertise(SENSORS_NODE, &s.topic, s.type_name())?;
        }
        let streams = specs
            .iter()
            .map(|s| (s.clone(), RateSchedule::new(s.rate_hz)))
            .collect();
        Ok(Arc::new(Self {
            bus: bus.clone(),
            streams: Mutex::new(streams),
        }))
    }

    pub fn published(&self, id: &str) -> u64 {
        self.streams
            .lock()
            .iter()
            .find(|(s, _)| s.id == id)
            .map_or(0, |(_, r)| r.emitted())
    }
}

impl Tick for SensorStreams {
    fn tick(&self, now: Stamp) -> bool {
        let mut out = Vec::new();
        for (spec, schedule) in self.streams.lock().iter_mut() {
            for _ in 0..schedule.due(now) {
                out.push((spec.topic.clone(), spec.sample(now)));
            }
        }
        for (topic, msg) in out {
            let _ = self.bus.publish(SENSORS_NODE, &topic, msg);
        }
        false
    }
}

struct VideoState {
    spec: VideoStreamSpec,
    schedule: RateSchedule,
    next_frame: u32,
}

/// Synthetic cameras.
pub struct VideoStreams {
    bus: Arc<Bus>,
    robot: Arc<Robot>,
    streams: Mutex<Vec<VideoState>>,
}

impl VideoStreams {
    pub fn start(
        bus: &Arc<Bus>,
        robot: &Arc<Robot>,
        specs: &[VideoStreamSpec],
    ) -> Result<Arc<Self>, BusError> {
        bus.register_node(VIDEO_NODE)?;
        bus.register_schema("ImageFrame", &["format", "data", "stamp", "frame_id"]);
        for s in specs {
            bus.advertise(VIDEO_NODE, &s.topic, "ImageFrame")?;
        }
        let streams = specs
            .iter()
            .map(|s| VideoState {
                spec: s.clone(),
                schedule: RateSchedule::new(s.fps),
                next_frame: 0,
            })
            .collect();
        Ok(Arc::new(Self {
            bus: bus.clone(),
            robot: robot.clone(),
            streams: Mutex::new(streams),
        }))
    }

    fn overlay_pose(&self, spec: &VideoStreamSpec) -> Pose {
        let group = spec
            .group
            .clone()
            .or_else(|| self.robot.group_names().into_iter().next());
        group
            .and_then(|g| self.robot.get_pose(&g).ok())
            .unwrap_or_default()
    }
}

impl Tick for VideoStreams {
    fn tick(&self, now: Stamp) -> bool {
        let mut out: Vec<(String, Value)> = Vec::new();
        {
            let mut streams = self.streams.lock();
            for v in streams.iter_mut() {
                let due = v.schedule.due(now);
                if due == 0 {
                    continue;
                }
                let pose = self.overlay_pose(&v.spec);
                for _ in 0..due {
                    out.push((
                        v.spec.topic.clone(),
                        frame_message(v.next_frame, &pose, now),
                    ));
                    v.next_frame += 1;
                }
            }
        }
        for (topic, msg) in out {
            let _ = self.bus.publish(VIDEO_NODE, &topic, msg);
        }
        false
    }
}
