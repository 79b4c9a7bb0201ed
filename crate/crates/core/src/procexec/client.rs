//! UI-facing side of the process executor. Owns the command topics, the
//! feedback panels and the operation list; sends one goal at a time to
//! the server node.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::definition::{DefinitionError, ProcessDefinition};
use super::mode::{transition, Command, Mode};
use super::server::{Goal, GoalResult, CANCEL_TOPIC, GOAL_TOPIC, RESULT_TOPIC, UI_LOGS_TOPIC};
use crate::bus::{Bus, BusError};
use crate::clock::Stamp;
use crate::logs::{LogEntry, Severity, LOG_FIELDS, LOG_TYPE};
use crate::robotsim::{MotionGate, STATUS_TOPIC};
use crate::runtime::Tick;
use crate::service::fault;

pub const CLIENT_NODE: &str = "/process/client";
pub const CMD_START_TOPIC: &str = "/process/cmd/start";
pub const CMD_STOP_TOPIC: &str = "/process/cmd/stop";
pub const CMD_PAUSE_TOPIC: &str = "/process/cmd/pause";
pub const CMD_RESUME_TOPIC: &str = "/process/cmd/resume";
pub const CMD_STEP_TOPIC: &str = "/process/cmd/step";
pub const CURRENT_OP_TOPIC: &str = "/process/current_op";
pub const STATUS_PANEL_TOPIC: &str = "/ui/status_panel";
pub const PROCESS_STATUS_TOPIC: &str = "/process/status";
pub const GET_OPERATIONS: &str = "/process/get_operations";
pub const ENABLE_MOTION: &str = "/process/enable_motion";
pub const DISABLE_MOTION: &str = "/process/disable_motion";
/// How often the elapsed-time field is refreshed while executing.
pub const PANEL_PERIOD_MS: Stamp = 100;

/// A status panel field as declared in the platform config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelField {
    pub id: String,
    pub display_name: String,
    #[serde(default)]
    pub default: Value,
}

pub fn default_panel_fields() -> Vec<PanelField> {
    [
        ("process_state", "Process state", json!("idle")),
        ("current_operation", "Current operation", json!("")),
        ("robot_speed", "Robot speed", json!(0.0)),
        ("total_time_ms", "Total time (ms)", json!(0)),
        ("motion_enabled", "Real robot motion", json!(true)),
    ]
    .into_iter()
    .map(|(id, name, default)| PanelField {
        id: id.into(),
        display_name: name.into(),
        default,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProcError {
    #[error("no process definition loaded")]
    NoProcess,
    #[error("panel field {0:?} is not declared")]
    UnknownField(String),
    #[error("cannot reload while the process is {0}")]
    Busy(&'static str),
    #[error("{0}")]
    InvalidDefinition(String),
}

impl From<DefinitionError> for ProcError {
    fn from(e: DefinitionError) -> Self {
        ProcError::InvalidDefinition(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackKind {
    Log,
    Status,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProcessStatus {
    pub mode: Mode,
    pub current_index: usize,
    pub motion_enabled: bool,
    pub panel: BTreeMap<String, Value>,
    pub start_stamp: Option<Stamp>,
}

#[derive(Debug, Clone, Copy)]
struct Cursor {
    op: usize,
    step: usize,
    announced: bool,
}

impl Cursor {
    fn at(op: usize) -> Self {
        Cursor {
            op,
            step: 0,
            announced: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Job {
    Run,
    Step,
}

struct ClientState {
    def: Option<ProcessDefinition>,
    mode: Mode,
    current_index: usize,
    run: Option<Cursor>,
    step: Option<(Cursor, Mode)>,
    in_flight: Option<(u64, Job)>,
    next_goal: u64,
    last_announced: Option<usize>,
    fields: Vec<PanelField>,
    panel: BTreeMap<String, Value>,
    start_stamp: Option<Stamp>,
    last_panel: Stamp,
    results: VecDeque<GoalResult>,
}

#[derive(Default)]
struct Outbox(Vec<(&'static str, Value)>);

pub struct ProcessClient {
    bus: Arc<Bus>,
    gate: MotionGate,
    state: Mutex<ClientState>,
}

impl ProcessClient {
    pub fn new(bus: Arc<Bus>, gate: MotionGate, fields: Vec<PanelField>) -> Self {
        let panel = fields
            .iter()
            .map(|f| (f.id.clone(), f.default.clone()))
            .collect();
        let state = ClientState {
            def: None,
            mode: Mode::Idle,
            current_index: 0,
            run: None,
            step: None,
            in_flight: None,
            next_goal: 1,
            last_announced: None,
            fields,
            panel,
            start_stamp: None,
            last_panel: 0,
            results: VecDeque::new(),
        };
        let client = Self {
            bus,
            gate,
            state: Mutex::new(state),
        };
        {
            let mut st = client.state.lock();
            let enabled = client.gate.is_enabled();
            set_field(&mut st, "motion_enabled", json!(enabled));
        }
        client
    }

    /// Registers the client node and its topics and services.
    pub fn start(self: &Arc<Self>) -> Result<(), BusError> {
        let bus = &self.bus;
        bus.register_node(CLIENT_NODE)?;
        bus.register_schema(LOG_TYPE, &LOG_FIELDS);
        bus.register_schema("CurrentOperation", &["index", "label"]);
        bus.register_schema("StatusPanel", &["values"]);
        bus.advertise(CLIENT_NODE, GOAL_TOPIC, "ProcessGoal")?;
        bus.advertise(CLIENT_NODE, CANCEL_TOPIC, "json")?;
        bus.advertise(CLIENT_NODE, CURRENT_OP_TOPIC, "CurrentOperation")?;
        bus.advertise(CLIENT_NODE, UI_LOGS_TOPIC, LOG_TYPE)?;
        bus.advertise(CLIENT_NODE, STATUS_PANEL_TOPIC, "StatusPanel")?;
        bus.advertise(CLIENT_NODE, PROCESS_STATUS_TOPIC, "json")?;

        let simple = [
            (CMD_START_TOPIC, Command::Start),
            (CMD_STOP_TOPIC, Command::Stop),
            (CMD_PAUSE_TOPIC, Command::Pause),
            (CMD_RESUME_TOPIC, Command::Resume),
        ];
        for (topic, cmd) in simple {
            let me = self.clone();
            bus.subscribe(CLIENT_NODE, topic, move |_| {
                me.command(cmd);
            })?;
        }
        let me = self.clone();
        bus.subscribe(CLIENT_NODE, CMD_STEP_TOPIC, move |m| {
            match m.payload.get("index").and_then(Value::as_u64) {
                Some(i) => {
                    me.command(Command::Step(i as usize));
                }
                None => me.log(Severity::Warning, "step: missing operation index".into()),
            }
        })?;
        let me = self.clone();
        bus.subscribe(CLIENT_NODE, RESULT_TOPIC, move |m| {
            if let Ok(r) = serde_json::from_value::<GoalResult>(m.payload.clone()) {
                me.state.lock().results.push_back(r);
            }
        })?;
        let me = self.clone();
        bus.subscribe(CLIENT_NODE, STATUS_TOPIC, move |m| {
            if let Some(speed) = m.payload.get("speed").and_then(Value::as_f64) {
                let changed = {
                    let mut st = me.state.lock();
                    set_field(&mut st, "robot_speed", json!(speed))
                };
                if changed {
                    me.publish_panel();
                }
            }
        })?;

        let me = self.clone();
        bus.register_service(CLIENT_NODE, GET_OPERATIONS, move |_| {
            let ops = me.operations().map_err(fault)?;
            let list: Vec<Value> = ops
                .into_iter()
                .map(|(i, l)| json!({"index": i, "label": l}))
                .collect();
            Ok(json!({ "operations": list }))
        })?;
        let me = self.clone();
        bus.register_service(CLIENT_NODE, ENABLE_MOTION, move |_| {
            me.set_motion_enabled(true);
            Ok(json!({ "motion_enabled": true }))
        })?;
        let me = self.clone();
        bus.register_service(CLIENT_NODE, DISABLE_MOTION, move |_| {
            me.set_motion_enabled(false);
            Ok(json!({ "motion_enabled": false }))
        })?;
        Ok(())
    }

    pub fn load_definition(&self, def: ProcessDefinition) -> Result<(), ProcError> {
        def.validate()?;
        let mut st = self.state.lock();
        if !matches!(st.mode, Mode::Idle | Mode::Stopped | Mode::Fault) {
            return Err(ProcError::Busy(st.mode.as_str()));
        }
        st.def = Some(def);
        st.mode = Mode::Idle;
        st.current_index = 0;
        st.run = None;
        st.step = None;
        st.last_announced = None;
        set_field(&mut st, "process_state", json!("idle"));
        Ok(())
    }

    pub fn operations(&self) -> Result<Vec<(usize, String)>, ProcError> {
        self.state
            .lock()
            .def
            .as_ref()
            .map(ProcessDefinition::labels)
            .ok_or(ProcError::NoProcess)
    }

    pub fn mode(&self) -> Mode {
        self.state.lock().mode
    }

    pub fn status(&self) -> ProcessStatus {
        let st = self.state.lock();
        ProcessStatus {
            mode: st.mode,
            current_index: st.current_index,
            motion_enabled: self.gate.is_enabled(),
            panel: st.panel.clone(),
            start_stamp: st.start_stamp,
        }
    }

    pub fn panel_fields(&self) -> Vec<PanelField> {
        self.state.lock().fields.clone()
    }

    /// Applies a command. Illegal commands are reported on the log panel
    /// and return `false`.
    pub fn command(&self, cmd: Command) -> bool {
        let now = self.bus.now_ms();
        let mut out = Outbox::default();
        let accepted = {
            let mut st = self.state.lock();
            let st = &mut *st;
            let n_ops = st.def.as_ref().map(|d| d.operations.len());
            let next = transition(st.mode, cmd);
            let rejection = match (next, n_ops, cmd) {
                (_, None, _) if cmd != Command::Stop => Some("no process loaded".to_string()),
                (None, _, Command::Start) if st.mode == Mode::Running => {
                    Some("already running".to_string())
                }
                (None, _, _) => Some(format!("cannot {} while {}", cmd.name(), st.mode.as_str())),
                (Some(_), Some(n), Command::Step(i)) if i >= n => {
                    Some(format!("step: no operation with index {i}"))
                }
                _ => None,
            };
            if let Some(reason) = rejection {
                out.log(now, Severity::Warning, reason);
                false
            } else {
                let next = next.expect("checked above");
                let prior = st.mode;
                st.mode = next;
                match cmd {
                    Command::Start => {
                        st.run = Some(Cursor::at(0));
                        st.step = None;
                        st.current_index = 0;
                        st.start_stamp = Some(now);
                        st.last_panel = now;
                        set_field(st, "total_time_ms", json!(0));
                        out.log(now, Severity::Info, "Process started".into());
                    }
                    Command::Stop => {
                        if let Some((goal_id, _)) = st.in_flight.take() {
                            out.push(CANCEL_TOPIC, json!({ "goal_id": goal_id }));
                        }
                        st.run = None;
                        st.step = None;
                        out.log(now, Severity::Info, "Process stopped".into());
                    }
                    Command::Pause => out.log(now, Severity::Info, "Process paused".into()),
                    Command::Resume => {
                        // An operation finished during the pause: move on so
                        // the run loop announces the next one itself.
                        if let (Some(c), Some(def)) = (st.run.as_mut(), st.def.as_ref()) {
                            if def
                                .operations
                                .get(c.op)
                                .is_some_and(|o| c.step >= o.steps.len())
                            {
                                *c = Cursor::at(c.op + 1);
                            }
                        }
                        if let Some(c) = st.run.filter(|c| c.announced) {
                            if st.last_announced != Some(c.op) {
                                st.current_index = c.op;
                                st.last_announced = Some(c.op);
                                announce(st, &mut out);
                            }
                        }
                        out.log(now, Severity::Info, "Process resumed".into());
                    }
                    Command::Step(i) => {
                        st.step = Some((
                            Cursor {
                                op: i,
                                step: 0,
                                announced: true,
                            },
                            prior,
                        ));
                        st.current_index = i;
                        st.last_announced = Some(i);
                        if prior != Mode::Paused {
                            st.start_stamp = Some(now);
                            st.last_panel = now;
                            set_field(st, "total_time_ms", json!(0));
                        }
                        announce(st, &mut out);
                        out.log(now, Severity::Info, format!("Running step {i}"));
                    }
                }
                set_field(st, "process_state", json!(st.mode.as_str()));
                out.status(st, self.gate.is_enabled());
                true
            }
        };
        self.flush(out);
        accepted
    }

    pub fn set_motion_enabled(&self, enabled: bool) {
        self.gate.set(enabled);
        let changed = {
            let mut st = self.state.lock();
            set_field(&mut st, "motion_enabled", json!(enabled))
        };
        let text = if enabled {
            "Real robot motion enabled"
        } else {
            "Real robot motion disabled"
        };
        self.log(Severity::Info, text.into());
        if changed {
            self.publish_panel();
        }
    }

    /// Log entries go to the log panel; status payloads merge into the
    /// status panel and must only name declared fields.
    pub fn publish_feedback(&self, kind: FeedbackKind, payload: &Value) -> Result<(), ProcError> {
        match kind {
            FeedbackKind::Log => {
                let text = payload
                    .get("text")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .or_else(|| payload.as_str().map(str::to_string))
                    .unwrap_or_else(|| payload.to_string());
                let severity = payload
                    .get("severity")
                    .and_then(|s| serde_json::from_value(s.clone()).ok())
                    .unwrap_or(Severity::Info);
                self.log(severity, text);
                Ok(())
            }
            FeedbackKind::Status => {
                let obj = payload.as_object().cloned().unwrap_or_else(Map::new);
                {
                    let mut st = self.state.lock();
                    if let Some(bad) = obj.keys().find(|k| !st.panel.contains_key(*k)) {
                        return Err(ProcError::UnknownField(bad.clone()));
                    }
                    for (k, v) in obj {
                        st.panel.insert(k, v);
                    }
                }
                self.publish_panel();
                Ok(())
            }
        }
    }

    fn log(&self, severity: Severity, text: String) {
        let mut out = Outbox::default();
        out.log(self.bus.now_ms(), severity, text);
        self.flush(out);
    }

    fn publish_panel(&self) {
        let values = self.state.lock().panel.clone();
        let _ = self
            .bus
            .publish(CLIENT_NODE, STATUS_PANEL_TOPIC, json!({ "values": values }));
    }

    fn flush(&self, out: Outbox) {
        for (topic, payload) in out.0 {
            let _ = self.bus.publish(CLIENT_NODE, topic, payload);
        }
    }

    fn advance(&self, st: &mut ClientState, now: Stamp, out: &mut Outbox) -> bool {
        let mut progress = false;
        while let Some(result) = st.results.pop_front() {
            let Some((goal_id, job)) = st.in_flight else {
                continue;
            };
            if goal_id != result.goal_id {
                continue;
            }
            st.in_flight = None;
            progress = true;
            if !result.success {
                out.log(
                    now,
                    Severity::Error,
                    format!("Operation {} failed: {}", st.current_index, result.message),
                );
                st.mode = Mode::Fault;
                st.run = None;
                st.step = None;
                set_field(st, "process_state", json!("fault"));
                out.status(st, self.gate.is_enabled());
                return true;
            }
            match job {
                Job::Run => {
                    if let Some(c) = st.run.as_mut() {
                        c.step += 1;
                    }
                }
                Job::Step => {
                    if let Some((c, _)) = st.step.as_mut() {
                        c.step += 1;
                    }
                }
            }
        }
        if st.in_flight.is_some() {
            return progress;
        }
        let Some(def) = st.def.clone() else {
            return progress;
        };
        match st.mode {
            Mode::Running => {
                while let Some(mut c) = st.run {
                    if c.op >= def.operations.len() {
                        st.run = None;
                        st.mode = Mode::Idle;
                        set_field(st, "process_state", json!("idle"));
                        self.update_elapsed(st, now);
                        out.log(now, Severity::Info, "Process completed".into());
                        out.status(st, self.gate.is_enabled());
                        return true;
                    }
                    if !c.announced {
                        c.announced = true;
                        st.current_index = c.op;
                        st.last_announced = Some(c.op);
                        st.run = Some(c);
                        announce(st, out);
                    }
                    let op = &def.operations[c.op];
                    if c.step < op.steps.len() {
                        self.send_goal(st, op.steps[c.step].clone(), Job::Run, out);
                        return true;
                    }
                    st.run = Some(Cursor::at(c.op + 1));
                    progress = true;
                }
            }
            Mode::Stepping => {
                let Some((c, resting)) = st.step else {
                    return progress;
                };
                let op = &def.operations[c.op];
                if c.step < op.steps.len() {
                    self.send_goal(st, op.steps[c.step].clone(), Job::Step, out);
                    return true;
                }
                st.step = None;
                st.mode = resting;
                if resting == Mode::Paused {
                    if let Some(r) = st.run {
                        st.current_index = r.op;
                    }
                }
                self.update_elapsed(st, now);
                set_field(st, "process_state", json!(resting.as_str()));
                out.log(now, Severity::Info, format!("Step {} completed", c.op));
                out.status(st, self.gate.is_enabled());
                return true;
            }
            _ => {}
        }
        progress
    }

    fn send_goal(&self, st: &mut ClientState, step: super::Step, job: Job, out: &mut Outbox) {
        let goal_id = st.next_goal;
        st.next_goal += 1;
        st.in_flight = Some((goal_id, job));
        out.push(GOAL_TOPIC, json!(Goal { goal_id, step }));
    }

    fn update_elapsed(&self, st: &mut ClientState, now: Stamp) {
        if let Some(start) = st.start_stamp {
            set_field(st, "total_time_ms", json!(now.saturating_sub(start)));
            st.last_panel = now;
        }
    }
}

impl Tick for ProcessClient {
    fn tick(&self, now: Stamp) -> bool {
        let mut out = Outbox::default();
        let (progress, refresh) = {
            let mut st = self.state.lock();
            let progress = self.advance(&mut st, now, &mut out);
            let executing = matches!(st.mode, Mode::Running | Mode::Stepping);
            let refresh = executing && now >= st.last_panel + PANEL_PERIOD_MS;
            if refresh {
                self.update_elapsed(&mut st, now);
            }
            (progress, refresh || progress)
        };
        self.flush(out);
        if refresh {
            self.publish_panel();
        }
        progress
    }
}

fn set_field(st: &mut ClientState, id: &str, value: Value) -> bool {
    match st.panel.get_mut(id) {
        Some(v) if *v != value => {
            *v = value;
            true
        }
        _ => false,
    }
}

fn announce(st: &mut ClientState, out: &mut Outbox) {
    let label = st
        .def
        .as_ref()
        .and_then(|d| d.operations.get(st.current_index))
        .map(|o| o.label.clone())
        .unwrap_or_default();
    set_field(st, "current_operation", json!(label));
    out.push(
        CURRENT_OP_TOPIC,
        json!({ "index": st.current_index, "label": label }),
    );
}

impl Outbox {
    fn push(&mut self, topic: &'static str, payload: Value) {
        self.0.push((topic, payload));
    }

    fn log(&mut self, now: Stamp, severity: Severity, text: String) {
        self.push(
            UI_LOGS_TOPIC,
            LogEntry::new(now, severity, CLIENT_NODE, text).to_value(),
        );
    }

    fn status(&mut self, st: &ClientState, motion_enabled: bool) {
        self.push(
            PROCESS_STATUS_TOPIC,
            json!({
                "mode": st.mode,
                "current_index": st.current_index,
                "motion_enabled": motion_enabled,
            }),
        );
    }
}
