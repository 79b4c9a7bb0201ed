use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::pose::PoseT;
use super::streams::SensorGraphSpec;
use super::video::VideoStreamSpec;

pub type Pose = PoseT<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    /// Binary open/closed actuator.
    Gripper,
    /// Stateless tool; actions are logged events only.
    #[default]
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    #[serde(default)]
    pub kind: ToolKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub name: String,
    pub named_configs: BTreeMap<String, Pose>,
    /// Named configuration the group starts in; defaults to "home" or the first entry.
    #[serde(default)]
    pub initial: Option<String>,
    pub speed_limit: f64,
    pub accel_limit: f64,
    #[serde(default)]
    pub default_speed: Option<f64>,
    #[serde(default)]
    pub default_accel: Option<f64>,
    #[serde(default)]
    pub tools: Vec<ToolSpec>,
    #[serde(default)]
    pub attached_tool: Option<String>,
}

impl GroupSpec {
    pub fn initial_pose(&self) -> Option<Pose> {
        let key = self
            .initial
            .clone()
            .or_else(|| {
                self.named_configs
                    .contains_key("home")
                    .then(|| "home".to_string())
            })
            .or_else(|| self.named_configs.keys().next().cloned())?;
        self.named_configs.get(&key).copied()
    }

    pub fn default_speed(&self) -> f64 {
        self.default_speed.unwrap_or(self.speed_limit * 0.5)
    }

    pub fn default_accel(&self) -> f64 {
        self.default_accel.unwrap_or(self.accel_limit * 0.5)
    }
}

/// Robot description: motion groups with their tools, plus the simulated
/// sensors and cameras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RobotFixture {
    #[serde(default)]
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub sensors: Vec<SensorGraphSpec>,
    #[serde(default)]
    pub video_streams: Vec<VideoStreamSpec>,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

impl RobotFixture {
    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let fixture: Self = serde_json::from_str(&text).map_err(|source| FixtureError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        fixture.validate()?;
        Ok(fixture)
    }

    pub fn validate(&self) -> Result<(), FixtureError> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, g) in self.groups.iter().enumerate() {
            let at = format!("groups[{i}]");
            if !seen.insert(&g.name) {
                return Err(FixtureError::Invalid(format!(
                    "{at}.name: duplicate group {:?}",
                    g.name
                )));
            }
            if g.named_configs.is_empty() {
                return Err(FixtureError::Invalid(format!(
                    "{at}.named_configs: must not be empty"
                )));
            }
            if !(g.speed_limit > 0.0 && g.accel_limit > 0.0) {
                return Err(FixtureError::Invalid(format!(
                    "{at}: speed/accel limits must be > 0"
                )));
            }
            if g.named_configs.values().any(|p| !p.is_finite()) {
                return Err(FixtureError::Invalid(format!(
                    "{at}.named_configs: non-finite pose"
                )));
            }
            if let Some(init) = &g.initial {
                if !g.named_configs.contains_key(init) {
                    return Err(FixtureError::Invalid(format!(
                        "{at}.initial: unknown config {init:?}"
                    )));
                }
            }
            if let Some(t) = &g.attached_tool {
                if !g.tools.iter().any(|s| &s.name == t) {
                    return Err(FixtureError::Invalid(format!(
                        "{at}.attached_tool: {t:?} not in tools"
                    )));
                }
            }
        }
        for (i, s) in self.sensors.iter().enumerate() {
            s.validate()
                .map_err(|e| FixtureError::Invalid(format!("sensors[{i}]: {e}")))?;
        }
        for (i, v) in self.video_streams.iter().enumerate() {
            if v.fps.is_nan() || v.fps <= 0.0 {
                return Err(FixtureError::Invalid(format!(
                    "video_streams[{i}].fps: must be > 0"
                )));
            }
        }
        Ok(())
    }
}
