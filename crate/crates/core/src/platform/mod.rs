//! Platform services: authentication, configuration, routines, the
//! drive-based database update and the operation mode.

pub mod atomic;
pub mod config_store;
pub mod database;
pub mod opmode;
pub mod routines;
pub mod users;

use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

pub use config_store::{ConfigError, ConfigParam, ConfigStore, ParamChange, ParamDecl, ParamKind};
pub use database::{Database, DbError, OverwriteOutcome};
pub use opmode::{derive_mode, ModeSources, OperationMode, OperationModeMonitor};
pub use routines::{Routine, RoutineError, RoutineStep, RoutineStore};
pub use users::{AuthError, LoginSession, SeedUser, UserRecord, UserStore};

use crate::access::Role;
use crate::bus::{Bus, BusError};
use crate::service::{fault, opt_str, parse_args};

pub const PLATFORM_NODE: &str = "platform";
pub const LOGIN_SERVICE: &str = "/ui/login";
pub const UPSERT_USER_SERVICE: &str = "/ui/upsert_user";
pub const GET_CONFIG_SERVICE: &str = "/ui/get_config";
pub const SET_CONFIG_SERVICE: &str = "/ui/set_config";
pub const CONFIG_CHANGED_TOPIC: &str = "/ui/config_changed";

fn ensure_node(bus: &Bus) -> Result<(), BusError> {
    if !bus.is_node_live(PLATFORM_NODE) {
        bus.register_node(PLATFORM_NODE)?;
    }
    Ok(())
}

pub fn start_auth(bus: &Arc<Bus>, users: &Arc<UserStore>) -> Result<(), BusError> {
    ensure_node(bus)?;
    let u = users.clone();
    bus.register_service(PLATFORM_NODE, LOGIN_SERVICE, move |args| {
        #[derive(Deserialize)]
        struct A {
            username: String,
            password: String,
        }
        let a: A = parse_args(args)?;
        let s = u.login(&a.username, &a.password).map_err(fault)?;
        Ok(json!({ "token": s.token, "role": s.role, "username": s.username }))
    })?;
    let u = users.clone();
    bus.register_service(PLATFORM_NODE, UPSERT_USER_SERVICE, move |args| {
        #[derive(Deserialize)]
        struct A {
            username: String,
            password: String,
            role: Role,
        }
        let token = opt_str(&args, "token").map(str::to_string);
        let a: A = parse_args(args)?;
        u.upsert_user(token.as_deref(), &a.username, &a.password, a.role)
            .map_err(fault)?;
        Ok(json!({ "username": a.username }))
    })?;
    Ok(())
}

/// `users` is `None` when the security feature is off; writes are then
/// unrestricted.
pub fn start_config(
    bus: &Arc<Bus>,
    store: &Arc<ConfigStore>,
    users: Option<Arc<UserStore>>,
) -> Result<(), BusError> {
    ensure_node(bus)?;
    bus.register_schema("ConfigChanged", &["changed"]);
    bus.advertise(PLATFORM_NODE, CONFIG_CHANGED_TOPIC, "ConfigChanged")?;
    let s = store.clone();
    bus.register_service(PLATFORM_NODE, GET_CONFIG_SERVICE, move |_| {
        Ok(json!({ "params": s.get_config() }))
    })?;
    let s = store.clone();
    let b = bus.clone();
    bus.register_service(PLATFORM_NODE, SET_CONFIG_SERVICE, move |args| {
        if let Some(users) = &users {
            users
                .require_admin(opt_str(&args, "token"))
                .map_err(|_| fault(ConfigError::Forbidden))?;
        }
        let changes: Vec<ParamChange> = match args.get("changes").or_else(|| args.get("params")) {
            Some(v) => parse_args(v.clone())?,
            None => return Err("InvalidArgs: missing \"changes\"".into()),
        };
        let changed = s.set_config(&changes).map_err(fault)?;
        if !changed.is_empty() {
            let list: Vec<Value> = changed
                .iter()
                .map(|(sec, key)| json!({"section": sec, "key": key}))
                .collect();
            let _ = b.publish(
                PLATFORM_NODE,
                CONFIG_CHANGED_TOPIC,
                json!({ "changed": list }),
            );
        }
        Ok(json!({ "params": s.get_config() }))
    })?;
    Ok(())
}
