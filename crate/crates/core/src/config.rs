//! The platform configuration: one JSON document listing what the
//! dashboard exposes and where state lives.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::access::{Role, RolePolicy};
use crate::bridge::DEFAULT_PORT;
use crate::bus::TopicName;
use crate::modmgr::{LaunchUnit, ModuleSpec, LAUNCH_SERVICE, STOP_SERVICE};
use crate::platform::{ParamDecl, SeedUser};
use crate::procexec::{default_panel_fields, PanelField, ProcessDefinition};
use crate::robotsim::streams::SensorGraphSpec;
use crate::robotsim::video::VideoStreamSpec;
use crate::robotsim::RobotFixture;

pub const ENV_PORT: &str = "HELMSMAN_PORT";
pub const ENV_DATA_DIR: &str = "HELMSMAN_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    Security,
    Launchers,
    Sensors,
    Manual,
    Auto,
    Video,
    Config,
    Routines,
    Alarms,
    Database,
}

impl Feature {
    pub const ALL: [Feature; 10] = [
        Feature::Security,
        Feature::Launchers,
        Feature::Sensors,
        Feature::Manual,
        Feature::Auto,
        Feature::Video,
        Feature::Config,
        Feature::Routines,
        Feature::Alarms,
        Feature::Database,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Security => "security",
            Feature::Launchers => "launchers",
            Feature::Sensors => "sensors",
            Feature::Manual => "manual",
            Feature::Auto => "auto",
            Feature::Video => "video",
            Feature::Config => "config",
            Feature::Routines => "routines",
            Feature::Alarms => "alarms",
            Feature::Database => "database",
        }
    }

    /// Features backed by the simulated robot.
    pub fn needs_robot(self) -> bool {
        matches!(
            self,
            Feature::Manual | Feature::Auto | Feature::Video | Feature::Routines | Feature::Alarms
        )
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_port() -> u16 {
    DEFAULT_PORT
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeConfig {
    #[serde(default = "default_port")]
    pub port: u16,
    #[serde(default)]
    pub service_timeout_ms: Option<u64>,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            service_timeout_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatabaseConfig {
    #[serde(default = "DatabaseConfig::default_dir")]
    pub dir: PathBuf,
    #[serde(default = "DatabaseConfig::default_mount_root")]
    pub mount_root: PathBuf,
    #[serde(default)]
    pub whitelist: Vec<String>,
}

impl DatabaseConfig {
    fn default_dir() -> PathBuf {
        "database".into()
    }

    fn default_mount_root() -> PathBuf {
        "media".into()
    }
}

impl Default for DatabaseConfig {
    fn default() -> Self {
        Self {
            dir: Self::default_dir(),
            mount_root: Self::default_mount_root(),
            whitelist: Vec::new(),
        }
    }
}

/// Role tables for the bridge. Anything not listed is open to every
/// logged-in role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessConfig {
    #[serde(default)]
    pub services: BTreeMap<String, Vec<Role>>,
    #[serde(default)]
    pub topics: BTreeMap<String, Vec<Role>>,
    #[serde(default = "AccessConfig::default_public")]
    pub public_services: Vec<String>,
}

impl AccessConfig {
    fn default_public() -> Vec<String> {
        vec![
            "/ui/login".into(),
            "/ui/get_platform_config".into(),
            "/ui/get_operation_mode".into(),
        ]
    }
}

impl Default for AccessConfig {
    fn default() -> Self {
        let admin = vec![Role::administrator()];
        let services = [
            "/ui/set_config",
            "/ui/upsert_user",
            "/routines/record",
            "/routines/delete",
            "/db/list_drives",
            "/db/list_files",
            "/db/overwrite",
        ]
        .into_iter()
        .map(|s| (s.to_string(), admin.clone()))
        .collect();
        Self {
            services,
            topics: BTreeMap::new(),
            public_services: Self::default_public(),
        }
    }
}

fn default_roles() -> Vec<Role> {
    vec![Role::administrator(), Role::operator()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformConfig {
    #[serde(default)]
    pub bridge: BridgeConfig,
    pub features: Vec<Feature>,
    #[serde(default = "default_roles")]
    pub roles: Vec<Role>,
    #[serde(default)]
    pub modules: Vec<ModuleSpec>,
    #[serde(default)]
    pub launch_units: Vec<LaunchUnit>,
    #[serde(default)]
    pub sensor_graphs: Vec<SensorGraphSpec>,
    #[serde(default)]
    pub video_streams: Vec<VideoStreamSpec>,
    #[serde(default)]
    pub robot_fixture: Option<PathBuf>,
    #[serde(default)]
    pub process_definition: Option<PathBuf>,
    #[serde(default = "default_panel_fields")]
    pub panel_fields: Vec<PanelField>,
    #[serde(default = "default_true")]
    pub motion_enabled: bool,
    #[serde(default)]
    pub config_params: Vec<ParamDecl>,
    #[serde(default = "PlatformConfig::default_config_csv")]
    pub config_csv: PathBuf,
    #[serde(default = "PlatformConfig::default_users_file")]
    pub users_file: PathBuf,
    #[serde(default)]
    pub seed_users: Vec<SeedUser>,
    #[serde(default)]
    pub database: DatabaseConfig,
    #[serde(default = "PlatformConfig::default_routines_dir")]
    pub routines_dir: PathBuf,
    #[serde(default)]
    pub access: AccessConfig,
    /// Directory holding the config file; relative fixture paths resolve here.
    #[serde(skip)]
    pub base_dir: PathBuf,
    /// Relative state paths (CSV, users, routines, database) resolve here.
    #[serde(skip)]
    pub data_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigInvalid {
    pub origin: String,
    pub field: String,
    pub line: Option<usize>,
    pub reason: String,
}

impl fmt::Display for ConfigInvalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConfigInvalid: {}", self.origin)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
        }
        write!(f, ": field `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigInvalid {}

impl PlatformConfig {
    fn default_config_csv() -> PathBuf {
        "config.csv".into()
    }

    fn default_users_file() -> PathBuf {
        "users.json".into()
    }

    fn default_routines_dir() -> PathBuf {
        "routines".into()
    }

    /// Parses and validates a config file. `data_dir` falls back to the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigInvalid> {
        let origin = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigInvalid {
            origin: origin.clone(),
            field: "<file>".into(),
            line: None,
            reason: e.to_string(),
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, &origin, &base)
    }

    pub fn from_str(text: &str, origin: &str, base_dir: &Path) -> Result<Self, ConfigInvalid> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut cfg: PlatformConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ConfigInvalid {
                origin: origin.into(),
                field: if field == "." { "<root>".into() } else { field },
                line: Some(inner.line()),
                reason: inner.to_string(),
            }
        })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.data_dir = base_dir.to_path_buf();
        cfg.validate(origin)?;
        Ok(cfg)
    }

    /// Applies HELMSMAN_PORT / HELMSMAN_DATA_DIR.
    pub fn apply_env(&mut self) -> Result<(), ConfigInvalid> {
        if let Ok(port) = std::env::var(ENV_PORT) {
            self.bridge.port = port.parse().map_err(|_| ConfigInvalid {
                origin: ENV_PORT.into(),
                field: "bridge.port".into(),
                line: None,
                reason: format!("{port:?} is not a port number"),
            })?;
        }
        if let Ok(dir) = std::env::var(ENV_DATA_DIR) {
            self.data_dir = dir.into();
        }
        Ok(())
    }

    pub fn has(&self, feature: Feature) -> bool {
        self.features.contains(&feature)
    }

    pub fn needs_robot(&self) -> bool {
        self.features.iter().any(|f| f.needs_robot())
    }

    pub fn without(&self, feature: Feature) -> Self {
        let mut c = self.clone();
        c.features.retain(|f| *f != feature);
        c
    }

    fn fixture_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn data_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_dir.join(p)
        }
    }

    pub fn robot_fixture_path(&self) -> Option<PathBuf> {
        self.robot_fixture.as_deref().map(|p| self.fixture_path(p))
    }

    pub fn process_definition_path(&self) -> Option<PathBuf> {
        self.process_definition
            .as_deref()
            .map(|p| self.fixture_path(p))
    }

    pub fn load_robot_fixture(&self) -> Result<Option<RobotFixture>, ConfigInvalid> {
        let Some(path) = self.robot_fixture_path() else {
            return Ok(None);
        };
        RobotFixture::load(&path)
            .map(Some)
            .map_err(|e| ConfigInvalid {
                origin: path.display().to_string(),
                field: "robot_fixture".into(),
                line: None,
                reason: e.to_string(),
            })
    }

    pub fn load_process_definition(&self) -> Result<Option<ProcessDefinition>, ConfigInvalid> {
        let Some(path) = self.process_definition_path() else {
            return Ok(None);
        };
        ProcessDefinition::load(&path)
            .map(Some)
            .map_err(|e| ConfigInvalid {
                origin: path.display().to_string(),
                field: "process_definition".into(),
                line: None,
                reason: e.to_string(),
            })
    }

    fn validate(&self, origin: &str) -> Result<(), ConfigInvalid> {
        let bad = |field: String, reason: String| ConfigInvalid {
            origin: origin.into(),
            field,
            line: None,
            reason,
        };
        let mut seen = BTreeSet::new();
        for (i, f) in self.features.iter().enumerate() {
            if !seen.insert(f) {
                return Err(bad(format!("features[{i}]"), format!("{f} listed twice")));
            }
        }
        let units: BTreeSet<&str> = self.launch_units.iter().map(|u| u.id.as_str()).collect();
        if units.len() != self.launch_units.len() {
            return Err(bad("launch_units".into(), "unit ids must be unique".into()));
        }
        let mut module_names = BTreeSet::new();
        for (i, m) in self.modules.iter().enumerate() {
            if !module_names.insert(m.name.as_str()) {
                return Err(bad(
                    format!("modules[{i}].name"),
                    format!("duplicate module {:?}", m.name),
                ));
            }
            if let Some(u) = m.launch_units.iter().find(|u| !units.contains(u.as_str())) {
                return Err(bad(
                    format!("modules[{i}].launch_units"),
                    format!("unknown launch unit {u:?}"),
                ));
            }
            if let Some(r) = m.allowed_roles.iter().find(|r| !self.roles.contains(r)) {
                return Err(bad(
                    format!("modules[{i}].allowed_roles"),
                    format!("undeclared role {r}"),
                ));
            }
        }
        for (i, g) in self.sensor_graphs.iter().enumerate() {
            g.validate()
                .map_err(|e| bad(format!("sensor_graphs[{i}]"), e))?;
        }
        for (i, v) in self.video_streams.iter().enumerate() {
            if TopicName::new(v.topic.as_str()).is_err() {
                return Err(bad(
                    format!("video_streams[{i}].topic"),
                    format!("{:?} is not a valid name", v.topic),
                ));
            }
            if !(v.fps > 0.0 && v.fps.is_finite()) {
                return Err(bad(format!("video_streams[{i}].fps"), "must be > 0".into()));
            }
        }
        let mut ids = BTreeSet::new();
        for (i, f) in self.panel_fields.iter().enumerate() {
            if !ids.insert(f.id.as_str()) {
                return Err(bad(
                    format!("panel_fields[{i}].id"),
                    format!("duplicate field {:?}", f.id),
                ));
            }
        }
        for (table, entries) in [
            ("access.services", &self.access.services),
            ("access.topics", &self.access.topics),
        ] {
            for (name, roles) in entries {
                if TopicName::new(name.as_str()).is_err() {
                    return Err(bad(format!("{table}.{name}"), "not a valid name".into()));
                }
                if let Some(r) = roles.iter().find(|r| !self.roles.contains(r)) {
                    return Err(bad(
                        format!("{table}.{name}"),
                        format!("undeclared role {r}"),
                    ));
                }
            }
        }
        if self.needs_robot() && self.robot_fixture.is_none() {
            let which: Vec<&str> = self
                .features
                .iter()
                .filter(|f| f.needs_robot())
                .map(|f| f.as_str())
                .collect();
            return Err(bad(
                "robot_fixture".into(),
                format!("required by features {}", which.join(", ")),
            ));
        }
        Ok(())
    }

    /// Bridge role policy derived from the access tables and module roles.
    pub fn role_policy(&self) -> RolePolicy {
        let to_set = |v: &Vec<Role>| v.iter().cloned().collect::<BTreeSet<Role>>();
        let mut unit_roles: BTreeMap<String, BTreeSet<Role>> = BTreeMap::new();
        for m in self.modules.iter().filter(|m| !m.allowed_roles.is_empty()) {
            let allowed = to_set(&m.allowed_roles);
            for u in &m.launch_units {
                let entry = unit_roles
                    .entry(u.clone())
                    .or_insert_with(|| allowed.clone());
                *entry = entry.intersection(&allowed).cloned().collect();
            }
        }
        RolePolicy {
            require_login: true,
            public_services: self.access.public_services.iter().cloned().collect(),
            services: self
                .access
                .services
                .iter()
                .map(|(k, v)| (k.clone(), to_set(v)))
                .collect(),
            topics: self
                .access
                .topics
                .iter()
                .map(|(k, v)| (k.clone(), to_set(v)))
                .collect(),
            unit_services: [LAUNCH_SERVICE.to_string(), STOP_SERVICE.to_string()].into(),
            unit_roles,
        }
    }
}
