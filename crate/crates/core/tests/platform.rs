mod common;

use std::io;
use std::path::Path;
use std::sync::Arc;

use common::{call, is_forbidden, Sim};
use helmsman::access::Role;
use helmsman::bridge::BridgeOp;
use helmsman::platform::atomic::FaultHook;
use helmsman::platform::config_store::{parse_csv, CSV_HEADER};
use helmsman::platform::opmode::{OPMODE_TOPIC, SAFETY_STATUS_TOPIC};
use helmsman::platform::*;
use helmsman::procexec::{Command, Mode};
use helmsman::robotsim::{MotionTarget, Pose};
use parking_lot::Mutex;
use serde_json::{json, Value};

fn record(sim: &Sim, topic: &str) -> Arc<Mutex<Vec<Value>>> {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let s = seen.clone();
    let node = format!("/probe{}", topic.replace('/', "_"));
    sim.platform.bus.register_node(&node).unwrap();
    sim.platform
        .bus
        .subscribe(&node, topic, move |m| s.lock().push(m.payload.clone()))
        .unwrap();
    seen
}

fn failing_hook() -> FaultHook {
    Arc::new(|_: &Path| Err(io::Error::other("injected fault")))
}

fn error_of(resp: &Value) -> &str {
    assert_eq!(resp["result"], false, "expected failure: {resp}");
    resp["values"]["error"].as_str().unwrap()
}

#[test]
fn login_failures_are_indistinguishable() {
    let sim = Sim::full();
    let c = sim.client();
    let ok = call(
        &c,
        LOGIN_SERVICE,
        json!({"username": "admin", "password": "admin-pass"}),
    );
    assert_eq!(ok["values"]["role"], "administrator");
    assert_eq!(ok["values"]["token"].as_str().unwrap().len(), 48);

    let wrong = call(
        &c,
        LOGIN_SERVICE,
        json!({"username": "admin", "password": "nope"}),
    );
    let unknown = call(
        &c,
        LOGIN_SERVICE,
        json!({"username": "ghost", "password": "nope"}),
    );
    assert_eq!(wrong["values"], unknown["values"]);
    assert!(error_of(&wrong).starts_with("BadCredentials"));
}

#[test]
fn users_file_holds_no_plaintext() {
    let sim = Sim::full();
    let users = sim.platform.users.clone().unwrap();
    let admin = users.login("admin", "admin-pass").unwrap();
    users.set_locked(false);
    users
        .upsert_user(
            Some(&admin.token),
            "tech",
            "solder-and-tape-42",
            Role::operator(),
        )
        .unwrap();
    users.set_locked(true);
    let on_disk = std::fs::read_to_string(users.path()).unwrap();
    for secret in ["solder-and-tape-42", "admin-pass", "operator-pass"] {
        assert!(!on_disk.contains(secret));
    }
    let records: Vec<UserRecord> = serde_json::from_str(&on_disk).unwrap();
    assert_eq!(records.len(), 3);
    assert!(std::fs::metadata(users.path())
        .unwrap()
        .permissions()
        .readonly());

    // a fresh process reading the same file can log the new user in
    let reopened = UserStore::open(users.path(), &[]).unwrap();
    assert_eq!(
        reopened.login("tech", "solder-and-tape-42").unwrap().role,
        Role::operator()
    );
}

#[test]
fn upsert_over_the_bridge() {
    let sim = Sim::full();
    let users = sim.platform.users.clone().unwrap();
    let op = sim.operator();
    let args = json!({"username": "tech", "password": "pw-1234", "role": "operator"});
    assert!(is_forbidden(&call(&op, UPSERT_USER_SERVICE, args.clone())));

    let admin = sim.admin();
    let locked = call(&admin, UPSERT_USER_SERVICE, args.clone());
    assert!(error_of(&locked).starts_with("StoreLocked"));
    users.set_locked(false);
    let ok = call(&admin, UPSERT_USER_SERVICE, args);
    assert_eq!(ok["result"], true, "{ok}");
    let c = sim.client();
    let login = call(
        &c,
        LOGIN_SERVICE,
        json!({"username": "tech", "password": "pw-1234"}),
    );
    assert_eq!(login["values"]["role"], "operator");
}

#[test]
fn users_file_survives_a_failed_write() {
    let sim = Sim::full();
    let users = sim.platform.users.clone().unwrap();
    let before = std::fs::read(users.path()).unwrap();
    let admin = users.login("admin", "admin-pass").unwrap();
    users.set_locked(false);
    users.set_fault_hook(Some(failing_hook()));
    let err = users
        .upsert_user(Some(&admin.token), "tech", "pw-1234", Role::operator())
        .unwrap_err();
    assert!(matches!(err, AuthError::StoreUnavailable(_)));
    assert_eq!(std::fs::read(users.path()).unwrap(), before);
    assert_eq!(
        users.login("tech", "pw-1234"),
        Err(AuthError::BadCredentials)
    );
    let leftovers = std::fs::read_dir(users.path().parent().unwrap())
        .unwrap()
        .flatten()
        .filter(|e| e.file_name().to_string_lossy().starts_with(".tmp"))
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn config_round_trip_and_idempotence() {
    let sim = Sim::full();
    let store = sim.platform.config_store.clone().unwrap();
    let changed = record(&sim, CONFIG_CHANGED_TOPIC);
    let admin = sim.admin();

    let fresh = call(&admin, GET_CONFIG_SERVICE, json!({}));
    let params: Vec<ConfigParam> =
        serde_json::from_value(fresh["values"]["params"].clone()).unwrap();
    assert!(params.iter().all(|p| p.value == p.default));
    assert!(params
        .iter()
        .any(|p| p.section == "cell" && p.value == "Wire cell, bay 2"));

    let set = call(
        &admin,
        SET_CONFIG_SERVICE,
        json!({"changes": [{"section": "robot", "key": "speed", "value": "0.5"}]}),
    );
    assert_eq!(set["result"], true, "{set}");
    assert_eq!(store.value("robot", "speed").as_deref(), Some("0.5"));
    assert_eq!(changed.lock().len(), 1);
    assert_eq!(
        changed.lock()[0]["changed"],
        json!([{"section": "robot", "key": "speed"}])
    );

    let text = std::fs::read(store.path()).unwrap();
    let header = CSV_HEADER.join(",");
    assert!(text.starts_with(header.as_bytes()));
    assert!(!text.contains(&b'\r'));
    assert!(String::from_utf8_lossy(&text).contains("\"Wire cell, bay 2\""));
    let rows = |params: Vec<ConfigParam>| -> Vec<[String; 5]> {
        params
            .into_iter()
            .map(|p| [p.section, p.key, p.display_name, p.default, p.value])
            .collect()
    };
    assert_eq!(
        rows(parse_csv(&text, "config.csv").unwrap()),
        rows(store.get_config())
    );

    // writing back what was read changes nothing, byte for byte
    let current = call(&admin, GET_CONFIG_SERVICE, json!({}));
    let again = call(
        &admin,
        SET_CONFIG_SERVICE,
        json!({"params": current["values"]["params"]}),
    );
    assert_eq!(again["result"], true, "{again}");
    assert_eq!(std::fs::read(store.path()).unwrap(), text);
    assert_eq!(changed.lock().len(), 1);

    let reopened = ConfigStore::open(store.path(), &[]).unwrap();
    assert_eq!(rows(reopened.get_config()), rows(store.get_config()));
}

#[test]
fn config_rejections() {
    let sim = Sim::full();
    let store = sim.platform.config_store.clone().unwrap();
    let before = std::fs::read(store.path()).unwrap();
    let admin = sim.admin();
    let set = |changes: Value| call(&admin, SET_CONFIG_SERVICE, json!({ "changes": changes }));

    let unknown = set(json!([{"section": "robot", "key": "colour", "value": "red"}]));
    assert!(error_of(&unknown).starts_with("UnknownParam"));
    let bad = set(json!([
        {"section": "robot", "key": "speed", "value": "0.3"},
        {"section": "robot", "key": "acceleration", "value": "fast"}
    ]));
    assert!(error_of(&bad).starts_with("ParseError"));
    // all-or-nothing: the valid first change was not applied either
    assert_eq!(std::fs::read(store.path()).unwrap(), before);

    let op = sim.operator();
    let forbidden = call(
        &op,
        SET_CONFIG_SERVICE,
        json!({"changes": [{"section": "robot", "key": "speed", "value": "0.1"}]}),
    );
    assert!(is_forbidden(&forbidden));
    assert_eq!(call(&op, GET_CONFIG_SERVICE, json!({}))["result"], true);
}

#[test]
fn config_survives_a_failed_write() {
    let sim = Sim::full();
    let store = sim.platform.config_store.clone().unwrap();
    let before = std::fs::read(store.path()).unwrap();
    store.set_fault_hook(Some(failing_hook()));
    let change = ParamChange {
        section: "robot".into(),
        key: "speed".into(),
        value: "0.4".into(),
    };
    assert!(matches!(
        store.set_config(std::slice::from_ref(&change)),
        Err(ConfigError::Io(_))
    ));
    assert_eq!(std::fs::read(store.path()).unwrap(), before);
    assert_ne!(store.value("robot", "speed").as_deref(), Some("0.4"));
    store.set_fault_hook(None);
    store.set_config(&[change]).unwrap();
    assert_eq!(store.value("robot", "speed").as_deref(), Some("0.4"));
}

fn move_left(sim: &Sim, goal: [f64; 3]) -> Pose {
    let robot = sim.platform.robot.as_ref().unwrap();
    let o = robot.get_pose("arm_left").unwrap().orientation;
    let r = robot
        .move_to(
            "arm_left",
            &MotionTarget::Absolute(Pose::new(goal, o)),
            0.25,
            0.5,
        )
        .unwrap();
    sim.run(r.duration_ms as u64 + 20);
    robot.get_pose("arm_left").unwrap()
}

#[test]
fn recorded_poses_match_the_robot() {
    let sim = Sim::full();
    let routines = sim.platform.routines.clone().unwrap();
    let logs = record(&sim, "/routines/logs");
    let admin = sim.admin();
    let rec = |args: Value| call(&admin, "/routines/record", args);

    assert!(error_of(&rec(json!({"op": "add_pose"}))).starts_with("NoOpenRecording"));
    assert_eq!(
        rec(json!({"op": "start", "group": "arm_left", "tool": "gripper"}))["result"],
        true
    );
    assert!(error_of(&rec(json!({"op": "save", "name": "empty"}))).starts_with("EmptyRoutine"));
    assert!(
        error_of(&rec(json!({"op": "start", "group": "arm_left"}))).starts_with("RecordingOpen")
    );

    let first = move_left(&sim, [0.5, 0.2, 0.3]);
    let captured = rec(json!({"op": "add_pose"}));
    let robot_pose = call(&admin, "/robot/get_pose", json!({"group": "arm_left"}));
    assert_eq!(captured["values"]["pose"], robot_pose["values"]["pose"]);
    rec(json!({"op": "add_action", "action": "grasp"}));
    let second = move_left(&sim, [0.45, -0.05, 0.25]);
    rec(json!({"op": "add_pose"}));
    let saved = rec(json!({"op": "save", "name": "pick"}));
    assert_eq!(saved["result"], true, "{saved}");
    assert!(!routines.is_recording());

    let routine = routines.load("pick").unwrap();
    assert_eq!(
        routine.steps,
        vec![
            RoutineStep::Pose(first),
            RoutineStep::Action("grasp".into()),
            RoutineStep::Pose(second)
        ]
    );
    let texts: Vec<String> = logs
        .lock()
        .iter()
        .map(|l| l["text"].as_str().unwrap().to_string())
        .collect();
    assert!(
        texts
            .iter()
            .any(|t| t.starts_with("Pose recorded: [0.5000, 0.2000, 0.3000")),
        "{texts:?}"
    );
    assert!(texts.contains(&"Grasp recorded".to_string()));

    assert_eq!(
        rec(json!({"op": "start", "group": "arm_left"}))["result"],
        true
    );
    rec(json!({"op": "add_pose"}));
    assert!(error_of(&rec(json!({"op": "save", "name": "pick"}))).starts_with("DuplicateName"));
    assert_eq!(rec(json!({"op": "discard"}))["result"], true);
    assert_eq!(
        call(&admin, "/routines/list", json!({}))["values"]["routines"],
        json!(["pick"])
    );
}

#[test]
fn replay_ends_at_the_last_recorded_pose() {
    let sim = Sim::full();
    let routines = sim.platform.routines.clone().unwrap();
    let robot = sim.platform.robot.clone().unwrap();
    routines
        .start_recording("arm_left", Some("gripper"))
        .unwrap();
    move_left(&sim, [0.5, 0.1, 0.3]);
    routines.add_pose().unwrap();
    routines.add_action("grasp").unwrap();
    let second = move_left(&sim, [0.6, -0.1, 0.2]);
    routines.add_pose().unwrap();
    routines.save("two_poses").unwrap();
    move_left(&sim, [0.4, 0.3, 0.5]);

    let c = sim.operator();
    c.send(&BridgeOp::publish(
        "/routines/execute",
        json!({"name": "two_poses"}),
    ));
    assert!(routines.is_executing());
    sim.run(10_000);
    assert!(!routines.is_executing());
    let end = robot.get_pose("arm_left").unwrap();
    for i in 0..3 {
        assert!((end.position[i] - second.position[i]).abs() < 1e-9);
    }
    assert_eq!(
        robot.tool_state("arm_left", "gripper").unwrap().closed,
        Some(true)
    );

    assert_eq!(
        routines.execute("nothing"),
        Err(RoutineError::UnknownRoutine("nothing".into()))
    );
    robot.gate().set(false);
    assert_eq!(
        routines.execute("two_poses"),
        Err(RoutineError::MotionDisabled)
    );
}

#[test]
fn delete_removes_persistence() {
    let sim = Sim::full();
    let routines = sim.platform.routines.clone().unwrap();
    routines.start_recording("arm_right", None).unwrap();
    routines.add_pose().unwrap();
    routines.save("hold").unwrap();
    let admin = sim.admin();
    assert_eq!(
        call(&admin, "/routines/list", json!({}))["values"]["routines"],
        json!(["hold"])
    );
    assert_eq!(
        call(&admin, "/routines/delete", json!({"name": "hold"}))["result"],
        true
    );
    assert_eq!(
        call(&admin, "/routines/list", json!({}))["values"]["routines"],
        json!([])
    );
    assert!(
        error_of(&call(&admin, "/routines/delete", json!({"name": "hold"})))
            .starts_with("UnknownRoutine")
    );
    assert!(matches!(
        routines.load("hold"),
        Err(RoutineError::UnknownRoutine(_))
    ));
    assert!(is_forbidden(&call(
        &sim.operator(),
        "/routines/delete",
        json!({"name": "x"})
    )));
}

fn usb(sim: &Sim, drive: &str, files: &[(&str, &str)]) {
    let dir = sim.dir.path().join("media").join(drive);
    std::fs::create_dir_all(&dir).unwrap();
    for (name, body) in files {
        std::fs::write(dir.join(name), body).unwrap();
    }
}

#[test]
fn database_overwrite() {
    let sim = Sim::full();
    let db_dir = sim.dir.path().join("database");
    std::fs::write(db_dir.join("wires.csv"), "id,len\n1,10\n").unwrap();
    usb(
        &sim,
        "usb0",
        &[
            ("wires_v2.csv", "id,len\n1,12\n2,7\n"),
            ("wires.txt", "nope"),
        ],
    );
    let admin = sim.admin();

    assert_eq!(
        call(&admin, LIST_DRIVES_SVC, json!({}))["values"]["drives"],
        json!(["usb0"])
    );
    assert_eq!(
        call(&admin, "/db/list_files", json!({"drive": "usb0"}))["values"]["files"],
        json!(["wires.txt", "wires_v2.csv"])
    );
    let ok = call(
        &admin,
        "/db/overwrite",
        json!({"drive": "usb0", "source_file": "wires_v2.csv", "target_file": "wires.csv"}),
    );
    assert_eq!(ok["result"], true, "{ok}");
    assert_eq!(
        std::fs::read_to_string(db_dir.join("wires.csv")).unwrap(),
        "id,len\n1,12\n2,7\n"
    );
    assert_eq!(
        std::fs::read_to_string(db_dir.join("wires.csv.bak")).unwrap(),
        "id,len\n1,10\n"
    );

    let overwrite = |source: &str, target: &str| {
        call(
            &admin,
            "/db/overwrite",
            json!({"drive": "usb0", "source_file": source, "target_file": target}),
        )
    };
    assert!(error_of(&overwrite("wires.txt", "wires.csv")).starts_with("ExtensionMismatch"));
    assert!(error_of(&overwrite("wires_v2.csv", "other.csv")).starts_with("NotWhitelisted"));
    assert!(error_of(&overwrite("missing.csv", "wires.csv")).starts_with("UnknownFile"));
    let unknown_drive = call(
        &admin,
        "/db/overwrite",
        json!({"drive": "usb9", "source_file": "a.csv", "target_file": "wires.csv"}),
    );
    assert!(error_of(&unknown_drive).starts_with("UnknownDrive"));
    assert!(is_forbidden(&call(
        &sim.operator(),
        "/db/list_drives",
        json!({})
    )));
}

const LIST_DRIVES_SVC: &str = "/db/list_drives";

#[test]
fn database_rejects_traversal() {
    let sim = Sim::full();
    let db = sim.platform.database.clone().unwrap();
    usb(&sim, "usb0", &[("wires.csv", "x")]);
    let outside = sim.dir.path().join("wires.csv");
    for target in [
        "../wires.csv",
        "../../wires.csv",
        "/tmp/wires.csv",
        "./../wires.csv",
        "sub/../../wires.csv",
    ] {
        assert!(
            matches!(
                db.overwrite("usb0", "wires.csv", target),
                Err(DbError::NotWhitelisted(_))
            ),
            "{target}"
        );
    }
    for source in ["../usb0/wires.csv", "../../database/wires.csv"] {
        assert!(
            matches!(
                db.overwrite("usb0", source, "wires.csv"),
                Err(DbError::UnknownFile(_))
            ),
            "{source}"
        );
    }
    assert!(matches!(
        db.overwrite("../media/usb0", "wires.csv", "wires.csv"),
        Err(DbError::UnknownDrive(_))
    ));
    assert!(!outside.exists());
}

#[test]
fn operation_mode_follows_the_system() {
    let sim = Sim::full();
    let modes = record(&sim, OPMODE_TOPIC);
    let safety = record(&sim, SAFETY_STATUS_TOPIC);
    let c = sim.operator();
    let get = || call(&c, "/ui/get_operation_mode", json!({}))["values"]["mode"].clone();
    assert_eq!(get(), "idle");

    let robot = sim.platform.robot.clone().unwrap();
    robot.raise_alarm("estop", "Emergency stop");
    sim.run(10);
    assert_eq!(get(), "alarm");
    robot.clear_condition("estop").unwrap();
    robot.reset_alarms();
    sim.run(10);
    assert_eq!(get(), "idle");

    let p = sim.platform.process.clone().unwrap();
    p.command(Command::Start);
    sim.run(10);
    assert_eq!(get(), "running");
    p.command(Command::Stop);
    sim.platform
        .routines
        .as_ref()
        .unwrap()
        .start_recording("arm_left", None)
        .unwrap();
    sim.run(10);
    assert_eq!(get(), "programming");

    let seen: Vec<Value> = modes.lock().iter().map(|m| m["mode"].clone()).collect();
    assert_eq!(
        seen,
        vec![
            json!("alarm"),
            json!("idle"),
            json!("running"),
            json!("programming")
        ]
    );
    let alarms: Vec<Value> = safety
        .lock()
        .iter()
        .map(|m| m["alarm_active"].clone())
        .collect();
    assert_eq!(alarms, vec![json!(true), json!(false)]);
}

#[test]
fn mode_priority_over_every_combination() {
    let mut cases = 0;
    for alarm in [false, true] {
        for process in Mode::ALL {
            for recording in [false, true] {
                let expected = if alarm {
                    "alarm"
                } else if process == Mode::Running || process == Mode::Stepping {
                    "running"
                } else if recording {
                    "programming"
                } else {
                    "idle"
                };
                assert_eq!(
                    json!(derive_mode(alarm, process, recording)),
                    json!(expected)
                );
                cases += 1;
            }
        }
    }
    assert_eq!(cases, 24);
}
