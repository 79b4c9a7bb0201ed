//! Boot: wires the enabled features onto one bus and one runtime.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use serde_json::json;

use crate::access::{AccessPolicy, OpenPolicy};
use crate::bridge::{Bridge, BridgeOptions, BridgeServer, LocalClient};
use crate::bus::{Bus, BusError, DEFAULT_SERVICE_TIMEOUT_MS};
use crate::clock::{SharedClock, SimClock, SystemClock};
use crate::config::{ConfigInvalid, Feature, PlatformConfig};
use crate::modmgr::ModuleManager;
use crate::platform::{
    self, ConfigStore, Database, ModeSources, OperationModeMonitor, RoutineStore, UserStore,
};
use crate::procexec::{ProcessClient, ProcessServer};
use crate::robotsim::node::{
    start_alarms, start_manual_control, start_robot_node, SensorStreams, VideoStreams,
};
use crate::robotsim::{MotionGate, Robot};
use crate::runtime::{Driver, Runtime};

pub const CORE_NODE: &str = "helmsman";
pub const GET_PLATFORM_CONFIG: &str = "/ui/get_platform_config";

#[derive(Debug, thiserror::Error)]
pub enum BootError {
    #[error(transparent)]
    Config(#[from] ConfigInvalid),
    #[error("bus: {0}")]
    Bus(#[from] BusError),
    #[error("{what}: {reason}")]
    Store { what: &'static str, reason: String },
}

fn store_err(what: &'static str) -> impl Fn(&dyn std::fmt::Display) -> BootError {
    move |e| BootError::Store {
        what,
        reason: e.to_string(),
    }
}

/// A booted platform. Components are reachable for tests and embedding;
/// absent ones belong to disabled features.
pub struct Platform {
    pub config: PlatformConfig,
    pub bus: Arc<Bus>,
    pub runtime: Arc<Runtime>,
    pub bridge: Bridge,
    pub robot: Option<Arc<Robot>>,
    pub modules: Option<Arc<ModuleManager>>,
    pub process: Option<Arc<ProcessClient>>,
    pub process_server: Option<Arc<ProcessServer>>,
    pub users: Option<Arc<UserStore>>,
    pub config_store: Option<Arc<ConfigStore>>,
    pub routines: Option<Arc<RoutineStore>>,
    pub database: Option<Arc<Database>>,
    pub sensors: Option<Arc<SensorStreams>>,
    pub video: Option<Arc<VideoStreams>>,
    pub operation_mode: Arc<OperationModeMonitor>,
}

impl Platform {
    pub fn boot(config: PlatformConfig, clock: SharedClock) -> Result<Self, BootError> {
        let bus = Arc::new(Bus::new(clock.clone()));
        let runtime = Arc::new(Runtime::new(clock));
        bus.register_node(CORE_NODE)?;

        let fixture = config.load_robot_fixture()?;
        let definition = if config.has(Feature::Auto) {
            config.load_process_definition()?
        } else {
            None
        };

        let gate = MotionGate::new(config.motion_enabled);
        let robot = match (&fixture, config.needs_robot()) {
            (Some(f), true) => {
                start_robot_node(&bus)?;
                let robot = Arc::new(Robot::new(bus.clone(), f, gate.clone()));
                runtime.add(robot.clone());
                Some(robot)
            }
            _ => None,
        };
        let with_robot = |feature: Feature| {
            if config.has(feature) {
                robot.clone()
            } else {
                None
            }
        };

        if let Some(r) = with_robot(Feature::Manual) {
            start_manual_control(&bus, &r)?;
        }
        if let Some(r) = with_robot(Feature::Alarms) {
            start_alarms(&bus, &r)?;
        }

        let (process, process_server) = match with_robot(Feature::Auto) {
            Some(r) => {
                let server = ProcessServer::start(&bus, &r)?;
                let client = Arc::new(ProcessClient::new(
                    bus.clone(),
                    gate.clone(),
                    config.panel_fields.clone(),
                ));
                client.start()?;
                if let Some(def) = definition {
                    client
                        .load_definition(def)
                        .map_err(|e| store_err("process definition")(&e))?;
                }
                runtime.add(server.clone());
                runtime.add(client.clone());
                (Some(client), Some(server))
            }
            None => (None, None),
        };

        let routines = match with_robot(Feature::Routines) {
            Some(r) => {
                let dir = config.data_path(&config.routines_dir);
                let store = Arc::new(
                    RoutineStore::new(&dir, bus.clone(), r)
                        .map_err(|e| store_err("routines")(&e))?,
                );
                store.start()?;
                runtime.add(store.clone());
                Some(store)
            }
            None => None,
        };

        let users = if config.has(Feature::Security) {
            let path = config.data_path(&config.users_file);
            let store = Arc::new(
                UserStore::open(&path, &config.seed_users).map_err(|e| store_err("users")(&e))?,
            );
            platform::start_auth(&bus, &store)?;
            Some(store)
        } else {
            None
        };

        let config_store = if config.has(Feature::Config) {
            let path = config.data_path(&config.config_csv);
            let store = Arc::new(
                ConfigStore::open(&path, &config.config_params)
                    .map_err(|e| store_err("config")(&e))?,
            );
            platform::start_config(&bus, &store, users.clone())?;
            Some(store)
        } else {
            None
        };

        let database = if config.has(Feature::Database) {
            let dir = config.data_path(&config.database.dir);
            let mount = config.data_path(&config.database.mount_root);
            std::fs::create_dir_all(&dir).map_err(|e| store_err("database")(&e))?;
            std::fs::create_dir_all(&mount).map_err(|e| store_err("database")(&e))?;
            let db = Arc::new(Database::new(&dir, &mount, &config.database.whitelist));
            db.start(&bus)?;
            Some(db)
        } else {
            None
        };

        let modules = if config.has(Feature::Launchers) {
            let mgr = Arc::new(ModuleManager::new(
                bus.clone(),
                config.modules.clone(),
                config.launch_units.clone(),
            ));
            mgr.start()?;
            runtime.add(mgr.clone());
            Some(mgr)
        } else {
            None
        };

        let mut sensor_specs = config.sensor_graphs.clone();
        let mut video_specs = config.video_streams.clone();
        if let Some(f) = &fixture {
            sensor_specs.extend(f.sensors.iter().cloned());
            video_specs.extend(f.video_streams.iter().cloned());
        }
        let sensors = if config.has(Feature::Sensors) {
            let s = SensorStreams::start(&bus, &sensor_specs)?;
            runtime.add(s.clone());
            Some(s)
        } else {
            None
        };
        let video = match with_robot(Feature::Video) {
            Some(r) => {
                let v = VideoStreams::start(&bus, &r, &video_specs)?;
                runtime.add(v.clone());
                Some(v)
            }
            None => None,
        };

        let sources = ModeSources {
            alarm_active: with_robot(Feature::Alarms).map(|r| {
                Box::new(move || r.has_active_alarm()) as Box<dyn Fn() -> bool + Send + Sync>
            }),
            process_mode: process.clone().map(|p| Box::new(move || p.mode()) as _),
            recording_open: routines
                .clone()
                .map(|r| Box::new(move || r.is_recording()) as _),
        };
        let operation_mode = OperationModeMonitor::start(&bus, sources)?;
        runtime.add(operation_mode.clone());

        let ui_config = json!({
            "features": config.features,
            "roles": config.roles,
            "modules": config.modules,
            "sensor_graphs": sensor_specs,
            "video_streams": video_specs,
            "panel_fields": config.panel_fields,
            "config_params": config.config_params,
            "database": { "whitelist": config.database.whitelist },
            "bridge": { "port": config.bridge.port },
        });
        bus.register_service(CORE_NODE, GET_PLATFORM_CONFIG, move |_| {
            Ok(ui_config.clone())
        })?;

        let policy: Arc<dyn AccessPolicy> = if config.has(Feature::Security) {
            Arc::new(config.role_policy())
        } else {
            Arc::new(OpenPolicy)
        };
        let options = BridgeOptions {
            service_timeout_ms: config
                .bridge
                .service_timeout_ms
                .unwrap_or(DEFAULT_SERVICE_TIMEOUT_MS),
            login_service: Some(platform::LOGIN_SERVICE.into()),
        };
        let bridge = Bridge::new(bus.clone(), policy, options);
        runtime.add(Arc::new(bridge.clone()));

        Ok(Self {
            config,
            bus,
            runtime,
            bridge,
            robot,
            modules,
            process,
            process_server,
            users,
            config_store,
            routines,
            database,
            sensors,
            video,
            operation_mode,
        })
    }

    /// Boots on a simulated clock starting at zero.
    pub fn boot_sim(config: PlatformConfig) -> Result<(Self, Arc<SimClock>), BootError> {
        let clock = Arc::new(SimClock::new());
        let platform = Self::boot(config, clock.clone())?;
        Ok((platform, clock))
    }

    pub fn boot_realtime(config: PlatformConfig) -> Result<Self, BootError> {
        Self::boot(config, Arc::new(SystemClock::new()))
    }

    pub fn connect_local(&self) -> LocalClient {
        self.bridge.connect_local()
    }

    pub fn listen(&self, addr: SocketAddr) -> std::io::Result<BridgeServer> {
        BridgeServer::bind(self.bridge.clone(), addr)
    }

    /// Drives the runtime from a background thread in real time.
    pub fn drive(&self, period: Duration) -> Driver {
        self.runtime.spawn_driver(period)
    }

    /// Advances a simulated clock, ticking every `step_ms`.
    pub fn run_sim(&self, clock: &SimClock, total_ms: u64, step_ms: u64) {
        self.runtime.run_sim(clock, total_ms, step_ms);
    }
}
