//! Per-feature behavior checks run against a booted platform, so the same
//! check can be repeated under different feature sets.

use helmsman::bridge::{BridgeOp, LocalClient};
use helmsman::config::Feature;
use helmsman::robotsim::video::decode_frame;
use serde_json::{json, Value};

use super::{call, Sim};

/// Every UI-facing service and the feature that provides it.
pub const SERVICES: &[(&str, Option<Feature>)] = &[
    ("/ui/get_platform_config", None),
    ("/ui/get_operation_mode", None),
    ("/ui/login", Some(Feature::Security)),
    ("/ui/upsert_user", Some(Feature::Security)),
    ("/ui/launch_nodes", Some(Feature::Launchers)),
    ("/ui/stop_nodes", Some(Feature::Launchers)),
    ("/robot/get_groups", Some(Feature::Manual)),
    ("/robot/get_named_configs", Some(Feature::Manual)),
    ("/robot/get_pose", Some(Feature::Manual)),
    ("/robot/move", Some(Feature::Manual)),
    ("/process/get_operations", Some(Feature::Auto)),
    ("/process/enable_motion", Some(Feature::Auto)),
    ("/process/disable_motion", Some(Feature::Auto)),
    ("/ui/get_config", Some(Feature::Config)),
    ("/ui/set_config", Some(Feature::Config)),
    ("/routines/list", Some(Feature::Routines)),
    ("/routines/record", Some(Feature::Routines)),
    ("/routines/delete", Some(Feature::Routines)),
    ("/db/list_drives", Some(Feature::Database)),
    ("/db/list_files", Some(Feature::Database)),
    ("/db/overwrite", Some(Feature::Database)),
];

/// A client with full rights: the administrator when security is on.
pub fn privileged(sim: &Sim) -> LocalClient {
    if sim.platform.config.has(Feature::Security) {
        sim.admin()
    } else {
        sim.client()
    }
}

fn ok(resp: &Value) -> Result<&Value, String> {
    if resp["result"] == true {
        Ok(&resp["values"])
    } else {
        Err(format!("call failed: {resp}"))
    }
}

fn ensure(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

/// Waits for the next frame on `topic`, advancing the simulation.
fn next_on(sim: &Sim, c: &LocalClient, topic: &str, limit_ms: u64) -> Result<Value, String> {
    let mut elapsed = 0;
    loop {
        while let Some(f) = c.try_recv() {
            if f["topic"] == topic {
                return Ok(f["msg"].clone());
            }
        }
        if elapsed >= limit_ms {
            return Err(format!("nothing on {topic} within {limit_ms} ms"));
        }
        sim.run(10);
        elapsed += 10;
    }
}

pub fn check(feature: Feature, sim: &Sim) -> Result<(), String> {
    match feature {
        Feature::Security => security(sim),
        Feature::Launchers => launchers(sim),
        Feature::Sensors => sensors(sim),
        Feature::Manual => manual(sim),
        Feature::Auto => auto(sim),
        Feature::Video => video(sim),
        Feature::Config => config(sim),
        Feature::Routines => routines(sim),
        Feature::Alarms => alarms(sim),
        Feature::Database => database(sim),
    }
}

fn security(sim: &Sim) -> Result<(), String> {
    let c = sim.client();
    let blocked = call(&c, "/ui/upsert_user", json!({}));
    ensure(
        super::is_forbidden(&blocked),
        format!("anonymous call allowed: {blocked}"),
    )?;
    let bad = call(
        &c,
        "/ui/login",
        json!({"username": "admin", "password": "wrong"}),
    );
    ensure(bad["result"] == false, "wrong password accepted")?;
    let good = call(
        &c,
        "/ui/login",
        json!({"username": "operator", "password": "operator-pass"}),
    );
    ensure(
        ok(&good)?["role"] == "operator",
        format!("operator login: {good}"),
    )?;
    let again = call(
        &c,
        "/ui/upsert_user",
        json!({"username": "x", "password": "pw", "role": "operator"}),
    );
    ensure(
        super::is_forbidden(&again),
        format!("operator may manage users: {again}"),
    )
}

fn launchers(sim: &Sim) -> Result<(), String> {
    let c = privileged(sim);
    let out = call(&c, "/ui/launch_nodes", json!({"units": ["robot_bringup"]}));
    ensure(
        ok(&out)?["outcomes"][0]["status"] == "started",
        format!("launch: {out}"),
    )?;
    c.send(&BridgeOp::subscribe("/ui/module_states"));
    let mut states = Vec::new();
    for _ in 0..3 {
        let msg = next_on(sim, &c, "/ui/module_states", 3_000)?;
        states.extend(msg["modules"].as_array().cloned().unwrap_or_default());
        if states
            .iter()
            .any(|m| m["name"] == "Robot drivers" && m["state"] == "active")
        {
            return Ok(());
        }
    }
    Err(format!("module never became active: {states:?}"))
}

fn sensors(sim: &Sim) -> Result<(), String> {
    let c = privileged(sim);
    c.send(&BridgeOp::subscribe("/sensors/force_torque"));
    let msg = next_on(sim, &c, "/sensors/force_torque", 1_000)?;
    ensure(
        msg["names"] == json!(["Fx", "Fy", "Fz", "Tx", "Ty", "Tz"]),
        format!("names: {msg}"),
    )?;
    ensure(
        msg["values"].as_array().map(Vec::len) == Some(6),
        "six values",
    )
}

fn manual(sim: &Sim) -> Result<(), String> {
    let c = privileged(sim);
    let groups = call(&c, "/robot/get_groups", json!({}));
    ensure(
        ok(&groups)?["groups"] == json!(["arm_left", "arm_right"]),
        "groups",
    )?;
    let configs = call(&c, "/robot/get_named_configs", json!({"group": "arm_left"}));
    let pick_names = ok(&configs)?["configs"].clone();
    ensure(
        pick_names
            .as_array()
            .is_some_and(|a| a.contains(&json!("pick"))),
        "named configs",
    )?;
    let moved = call(
        &c,
        "/robot/move",
        json!({"group": "arm_left", "target": {"named": "pick"}}),
    );
    let duration = ok(&moved)?["duration_ms"].as_f64().ok_or("duration")?;
    sim.run(duration as u64 + 20);
    let pose = call(&c, "/robot/get_pose", json!({"group": "arm_left"}));
    ensure(ok(&pose)?["pose"] == moved["values"]["final"], "final pose")
}

fn auto(sim: &Sim) -> Result<(), String> {
    let c = privileged(sim);
    let ops = call(&c, "/process/get_operations", json!({}));
    ensure(
        ok(&ops)?["operations"].as_array().map(Vec::len) == Some(3),
        "three operations",
    )?;
    c.send(&BridgeOp::subscribe("/process/current_op"));
    c.send(&BridgeOp::publish("/process/cmd/start", json!({})));
    let mut seen = Vec::new();
    while seen.len() < 3 {
        let msg = next_on(sim, &c, "/process/current_op", 20_000)?;
        seen.push(msg["index"].clone());
    }
    ensure(
        seen == vec![json!(0), json!(1), json!(2)],
        format!("indices {seen:?}"),
    )
}

fn video(sim: &Sim) -> Result<(), String> {
    let c = privileged(sim);
    c.send(&BridgeOp::subscribe("/camera/overview"));
    let first = next_on(sim, &c, "/camera/overview", 1_000)?;
    let frame =
        decode_frame(first["data"].as_str().ok_or("frame data")?).map_err(|e| e.to_string())?;
    ensure(json!(frame.frame_id) == first["frame_id"], "frame id")
}

fn config(sim: &Sim) -> Result<(), String> {
    let c = privileged(sim);
    let set = call(
        &c,
        "/ui/set_config",
        json!({"changes": [{"section": "robot", "key": "speed", "value": "0.3"}]}),
    );
    ok(&set)?;
    let got = call(&c, "/ui/get_config", json!({}));
    let params = ok(&got)?["params"].as_array().cloned().unwrap_or_default();
    let speed = params
        .iter()
        .find(|p| p["section"] == "robot" && p["key"] == "speed")
        .ok_or("speed param")?;
    ensure(speed["value"] == "0.3", format!("speed {speed}"))
}

fn routines(sim: &Sim) -> Result<(), String> {
    let c = privileged(sim);
    ok(&call(
        &c,
        "/routines/record",
        json!({"op": "start", "group": "arm_right"}),
    ))?;
    ok(&call(&c, "/routines/record", json!({"op": "add_pose"})))?;
    ok(&call(
        &c,
        "/routines/record",
        json!({"op": "save", "name": "hold"}),
    ))?;
    let list = call(&c, "/routines/list", json!({}));
    ensure(ok(&list)?["routines"] == json!(["hold"]), "routine listed")
}

fn alarms(sim: &Sim) -> Result<(), String> {
    let c = privileged(sim);
    c.send(&BridgeOp::subscribe("/safety/alarms"));
    c.send(&BridgeOp::publish(
        "/safety/sim/raise",
        json!({"id": "door", "text": "Door open"}),
    ));
    let raised = next_on(sim, &c, "/safety/alarms", 100)?;
    ensure(
        raised["alarms"][0]["status"] == "active",
        format!("raised: {raised}"),
    )?;
    let mode = call(&c, "/ui/get_operation_mode", json!({}));
    ensure(ok(&mode)?["mode"] == "alarm", "operation mode alarm")?;
    c.send(&BridgeOp::publish(
        "/safety/sim/clear",
        json!({"id": "door"}),
    ));
    c.send(&BridgeOp::publish("/safety/reset", json!({})));
    let mut last = next_on(sim, &c, "/safety/alarms", 100)?;
    while let Some(f) = c.try_recv() {
        if f["topic"] == "/safety/alarms" {
            last = f["msg"].clone();
        }
    }
    ensure(last["alarms"] == json!([]), format!("after reset: {last}"))
}

fn database(sim: &Sim) -> Result<(), String> {
    std::fs::create_dir_all(sim.dir.path().join("media/usb0")).map_err(|e| e.to_string())?;
    std::fs::write(sim.dir.path().join("media/usb0/wires_v2.csv"), "id\n1\n")
        .map_err(|e| e.to_string())?;
    let c = privileged(sim);
    let drives = call(&c, "/db/list_drives", json!({}));
    ensure(ok(&drives)?["drives"] == json!(["usb0"]), "drives")?;
    let out = call(
        &c,
        "/db/overwrite",
        json!({"drive": "usb0", "source_file": "wires_v2.csv", "target_file": "wires.csv"}),
    );
    ok(&out)?;
    let written = std::fs::read_to_string(sim.dir.path().join("database/wires.csv"))
        .map_err(|e| e.to_string())?;
    ensure(written == "id\n1\n", "overwritten contents")
}
