mod common;

use std::sync::Arc;

use common::oracles::stepped_duration;
use common::{call, Sim};
use helmsman::bridge::BridgeOp;
use helmsman::bus::Bus;
use helmsman::clock::SimClock;
use helmsman::procexec::*;
use helmsman::robotsim::{MotionGate, MotionTarget, Pose};
use parking_lot::Mutex;
use serde_json::{json, Value};

fn record(bus: &Bus, topic: &str) -> Arc<Mutex<Vec<Value>>> {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let s = seen.clone();
    let node = format!("/probe{}", topic.replace('/', "_"));
    bus.register_node(&node).unwrap();
    bus.subscribe(&node, topic, move |m| s.lock().push(m.payload.clone()))
        .unwrap();
    seen
}

fn indices(seen: &Mutex<Vec<Value>>) -> Vec<u64> {
    seen.lock()
        .iter()
        .map(|m| m["index"].as_u64().unwrap())
        .collect()
}

fn log_texts(seen: &Mutex<Vec<Value>>) -> Vec<String> {
    seen.lock()
        .iter()
        .map(|m| m["text"].as_str().unwrap().to_string())
        .collect()
}

fn waits(n: usize, ms: u64) -> ProcessDefinition {
    ProcessDefinition {
        name: format!("{n} waits"),
        operations: (0..n)
            .map(|i| Operation {
                index: i,
                label: format!("op {i}"),
                steps: vec![Step::Wait { ms }],
            })
            .collect(),
    }
}

/// Three straight moves of the left arm away from home and back.
fn three_moves() -> (ProcessDefinition, Vec<f64>) {
    let o = [std::f64::consts::PI, 0.0, 0.0];
    let targets = [[0.4, 0.3, 0.05], [0.4, -0.15, 0.05], [0.4, 0.3, 0.5]];
    let mut from = [0.4, 0.3, 0.5];
    let mut distances = Vec::new();
    let mut operations = Vec::new();
    for (i, t) in targets.iter().enumerate() {
        distances.push(
            ((0..3).map(|k| (t[k] - from[k]) * (t[k] - from[k])))
                .sum::<f64>()
                .sqrt(),
        );
        from = *t;
        operations.push(Operation {
            index: i,
            label: format!("move {i}"),
            steps: vec![Step::MoveTo {
                group: "arm_left".into(),
                target: MotionTarget::Absolute(Pose::new(*t, o)),
                speed: Some(0.25),
                accel: Some(0.5),
            }],
        });
    }
    (
        ProcessDefinition {
            name: "moves".into(),
            operations,
        },
        distances,
    )
}

fn run_until(sim: &Sim, client: &ProcessClient, mode: Mode, limit_ms: u64) {
    let mut elapsed = 0;
    while client.mode() != mode {
        assert!(
            elapsed < limit_ms,
            "still {:?} after {limit_ms} ms",
            client.mode()
        );
        sim.run(10);
        elapsed += 10;
    }
}

#[test]
fn full_run_publishes_every_index_once() {
    let sim = Sim::full();
    let p = sim.platform.process.clone().unwrap();
    let ops = record(&sim.platform.bus, CURRENT_OP_TOPIC);
    let logs = record(&sim.platform.bus, UI_LOGS_TOPIC);
    assert!(p.command(Command::Start));
    assert_eq!(p.mode(), Mode::Running);
    run_until(&sim, &p, Mode::Idle, 30_000);
    assert_eq!(indices(&ops), vec![0, 1, 2]);
    assert_eq!(ops.lock()[1]["label"], "Route wire");
    let logs = log_texts(&logs);
    assert!(logs.contains(&"Process completed".to_string()));
    assert!(logs.iter().any(|l| l.contains("moving to pick")));
    let robot = sim.platform.robot.as_ref().unwrap();
    assert_eq!(
        robot.tool_state("arm_left", "gripper").unwrap().closed,
        Some(false)
    );
}

#[test]
fn step_from_pause_returns_to_pause() {
    let sim = Sim::full();
    let p = sim.platform.process.clone().unwrap();
    p.load_definition(waits(5, 500)).unwrap();
    let ops = record(&sim.platform.bus, CURRENT_OP_TOPIC);
    p.command(Command::Start);
    sim.run(600);
    assert_eq!(p.status().current_index, 1);
    assert!(p.command(Command::Pause));
    // the in-flight operation completes, then the run holds
    sim.run(2_000);
    assert_eq!(p.mode(), Mode::Paused);
    assert_eq!(indices(&ops), vec![0, 1]);

    assert!(p.command(Command::Step(4)));
    assert_eq!(p.mode(), Mode::Stepping);
    assert_eq!(p.status().current_index, 4);
    sim.run(200);
    assert_eq!(p.status().current_index, 4);
    sim.run(400);
    assert_eq!(p.mode(), Mode::Paused);
    assert_eq!(indices(&ops), vec![0, 1, 4]);

    assert!(p.command(Command::Resume));
    run_until(&sim, &p, Mode::Idle, 5_000);
    assert_eq!(indices(&ops), vec![0, 1, 4, 2, 3, 4]);
}

#[test]
fn illegal_commands_are_rejected_with_a_log() {
    let sim = Sim::full();
    let p = sim.platform.process.clone().unwrap();
    let logs = record(&sim.platform.bus, UI_LOGS_TOPIC);
    assert!(!p.command(Command::Resume));
    assert!(p.command(Command::Start));
    assert!(!p.command(Command::Start));
    assert!(!p.command(Command::Step(0)));
    assert_eq!(p.mode(), Mode::Running);
    let logs = log_texts(&logs);
    assert!(
        logs.contains(&"cannot resume while idle".to_string()),
        "{logs:?}"
    );
    assert!(logs.contains(&"already running".to_string()));
    assert!(logs.contains(&"cannot step while running".to_string()));

    assert!(p.command(Command::Stop));
    assert!(!p.command(Command::Step(7)));
    assert!(matches!(
        p.load_definition(waits(0, 1)),
        Err(ProcError::InvalidDefinition(_))
    ));
}

#[test]
fn stop_cancels_motion_within_one_progress_period() {
    let sim = Sim::full();
    let p = sim.platform.process.clone().unwrap();
    let robot = sim.platform.robot.clone().unwrap();
    p.command(Command::Start);
    sim.run(400);
    assert!(robot.is_moving("arm_left").unwrap());
    assert!(p.command(Command::Stop));
    sim.run(100);
    assert!(!robot.any_moving());
    assert_eq!(p.mode(), Mode::Stopped);
    let stopped_at = robot.get_pose("arm_left").unwrap();
    sim.run(3_000);
    assert_eq!(robot.get_pose("arm_left").unwrap(), stopped_at);
    assert!(sim.platform.process_server.as_ref().unwrap().is_idle());

    // a stopped process restarts from the beginning
    let ops = record(&sim.platform.bus, CURRENT_OP_TOPIC);
    assert!(p.command(Command::Start));
    sim.run(10);
    assert_eq!(indices(&ops), vec![0]);
}

#[test]
fn disabled_motion_is_a_dry_run() {
    let sim = Sim::full();
    let p = sim.platform.process.clone().unwrap();
    let (def, _) = three_moves();
    p.load_definition(def).unwrap();
    p.set_motion_enabled(false);
    assert!(!p.status().motion_enabled);
    assert_eq!(p.status().panel["motion_enabled"], false);
    let home = sim
        .platform
        .robot
        .as_ref()
        .unwrap()
        .get_pose("arm_left")
        .unwrap();
    p.command(Command::Start);
    run_until(&sim, &p, Mode::Idle, 1_000);
    let total = p.status().panel["total_time_ms"].as_u64().unwrap();
    assert!(total < 100, "{total} ms");
    assert_eq!(
        sim.platform
            .robot
            .as_ref()
            .unwrap()
            .get_pose("arm_left")
            .unwrap(),
        home
    );
}

#[test]
fn enabled_motion_takes_the_trapezoid_time() {
    let sim = Sim::full();
    let p = sim.platform.process.clone().unwrap();
    let (def, distances) = three_moves();
    p.load_definition(def).unwrap();
    let expected: f64 = distances
        .iter()
        .map(|d| stepped_duration(*d, 0.25, 0.5, 2e-5) * 1000.0)
        .sum();
    p.command(Command::Start);
    run_until(&sim, &p, Mode::Idle, 20_000);
    let total = p.status().panel["total_time_ms"].as_f64().unwrap();
    // each move completes on the next 10 ms tick
    assert!(
        total >= expected - 1.0 && total <= expected + 40.0,
        "{total} vs {expected}"
    );
}

#[test]
fn toggling_motion_while_paused_affects_later_steps() {
    let sim = Sim::full();
    let p = sim.platform.process.clone().unwrap();
    let (def, _) = three_moves();
    p.load_definition(def).unwrap();
    let robot = sim.platform.robot.clone().unwrap();
    p.command(Command::Start);
    sim.run(10);
    p.command(Command::Pause);
    p.set_motion_enabled(false);
    // the in-flight move was started with motion enabled and still completes
    assert!(robot.is_moving("arm_left").unwrap());
    run_until(&sim, &p, Mode::Paused, 10_000);
    sim.run(3_000);
    let after_first = robot.get_pose("arm_left").unwrap();
    assert!((after_first.position[2] - 0.05).abs() < 1e-9);
    p.command(Command::Resume);
    run_until(&sim, &p, Mode::Idle, 1_000);
    assert_eq!(robot.get_pose("arm_left").unwrap(), after_first);
}

#[test]
fn step_from_idle_runs_one_operation() {
    let sim = Sim::full();
    let p = sim.platform.process.clone().unwrap();
    p.load_definition(waits(3, 300)).unwrap();
    let ops = record(&sim.platform.bus, CURRENT_OP_TOPIC);
    assert!(p.command(Command::Step(2)));
    sim.run(400);
    assert_eq!(p.mode(), Mode::Idle);
    assert_eq!(indices(&ops), vec![2]);
}

#[test]
fn failing_step_faults_the_process() {
    let sim = Sim::full();
    let p = sim.platform.process.clone().unwrap();
    let def = ProcessDefinition {
        name: "bad".into(),
        operations: vec![Operation {
            index: 0,
            label: "bad tool".into(),
            steps: vec![Step::ActuateEndEffector {
                arm: "arm_left".into(),
                tool: "taping_gun".into(),
                action: "tape".into(),
            }],
        }],
    };
    p.load_definition(def).unwrap();
    p.command(Command::Start);
    sim.run(50);
    assert_eq!(p.mode(), Mode::Fault);
    assert!(p.command(Command::Stop));
    assert_eq!(p.mode(), Mode::Stopped);
}

#[test]
fn feedback_panels() {
    let sim = Sim::full();
    let p = sim.platform.process.clone().unwrap();
    let panel = record(&sim.platform.bus, STATUS_PANEL_TOPIC);
    let logs = record(&sim.platform.bus, UI_LOGS_TOPIC);
    p.publish_feedback(FeedbackKind::Log, &json!({"text": "Motion OK"}))
        .unwrap();
    assert_eq!(log_texts(&logs), vec!["Motion OK"]);
    assert!(logs.lock()[0]["stamp"].is_u64());
    assert_eq!(logs.lock()[0]["severity"], "info");

    p.publish_feedback(FeedbackKind::Status, &json!({"robot_speed": 0.25}))
        .unwrap();
    assert_eq!(panel.lock().last().unwrap()["values"]["robot_speed"], 0.25);
    assert_eq!(p.status().panel["robot_speed"], 0.25);
    for f in p.panel_fields() {
        assert!(p.status().panel.contains_key(&f.id));
    }
    assert_eq!(
        p.publish_feedback(FeedbackKind::Status, &json!({"bogus": 1})),
        Err(ProcError::UnknownField("bogus".into()))
    );
}

#[test]
fn robot_speed_follows_robot_status() {
    let sim = Sim::full();
    let p = sim.platform.process.clone().unwrap();
    p.command(Command::Start);
    sim.run(1_000);
    let speed = p.status().panel["robot_speed"].as_f64().unwrap();
    assert!(speed > 0.0 && speed <= 0.25, "{speed}");
}

#[test]
fn operations_require_a_definition() {
    let bus = Arc::new(Bus::new(Arc::new(SimClock::new())));
    let client = Arc::new(ProcessClient::new(
        bus.clone(),
        MotionGate::new(true),
        default_panel_fields(),
    ));
    client.start().unwrap();
    assert_eq!(client.operations(), Err(ProcError::NoProcess));
    assert!(!client.command(Command::Start));
    let err = bus
        .call_service(GET_OPERATIONS, json!({}), 1_000)
        .unwrap_err();
    assert!(err.to_string().contains("NoProcess"), "{err}");

    client.load_definition(waits(3, 10)).unwrap();
    assert_eq!(client.operations().unwrap().len(), 3);
    client.load_definition(waits(5, 10)).unwrap();
    let labels = client.operations().unwrap();
    assert_eq!(labels.len(), 5);
    assert_eq!(labels[4], (4, "op 4".to_string()));

    assert!(client.command(Command::Start));
    assert_eq!(
        client.load_definition(waits(2, 10)),
        Err(ProcError::Busy("running"))
    );
}

#[test]
fn ui_contract_over_the_bridge() {
    let sim = Sim::full();
    let c = sim.operator();
    let ops = call(&c, GET_OPERATIONS, json!({}));
    assert_eq!(
        ops["values"]["operations"],
        json!([{"index": 0, "label": "Pick wire"}, {"index": 1, "label": "Route wire"},
               {"index": 2, "label": "Release and retract"}])
    );
    let off = call(&c, DISABLE_MOTION, json!({}));
    assert_eq!(off["values"], json!({"motion_enabled": false}));
    assert!(!sim.platform.robot.as_ref().unwrap().gate().is_enabled());
    let on = call(&c, ENABLE_MOTION, json!({}));
    assert_eq!(on["values"], json!({"motion_enabled": true}));

    c.send(&BridgeOp::subscribe(CURRENT_OP_TOPIC));
    c.send(&BridgeOp::publish(CMD_STEP_TOPIC, json!({"index": 1})));
    let frame = c.recv(common::WAIT).unwrap();
    assert_eq!(frame["msg"], json!({"index": 1, "label": "Route wire"}));
    let p = sim.platform.process.as_ref().unwrap();
    assert_eq!(p.mode(), Mode::Stepping);
    c.send(&BridgeOp::publish(CMD_STOP_TOPIC, json!({})));
    assert_eq!(p.mode(), Mode::Stopped);
    c.send(&BridgeOp::publish(CMD_START_TOPIC, json!({})));
    c.send(&BridgeOp::publish(CMD_PAUSE_TOPIC, json!({})));
    assert_eq!(p.mode(), Mode::Paused);
    c.send(&BridgeOp::publish(CMD_RESUME_TOPIC, json!({})));
    assert_eq!(p.mode(), Mode::Running);
}
