use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::robotsim::MotionTarget;

/// One robot command inside an operation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    MoveTo {
        group: String,
        target: MotionTarget,
        #[serde(default)]
        speed: Option<f64>,
        #[serde(default)]
        accel: Option<f64>,
    },
    ActuateEndEffector {
        arm: String,
        tool: String,
        action: String,
    },
    Wait {
        ms: u64,
    },
    RaiseAlarm {
        id: String,
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operation {
    pub index: usize,
    pub label: String,
    #[serde(default)]
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessDefinition {
    pub name: String,
    pub operations: Vec<Operation>,
}

#[derive(Debug, thiserror::Error)]
pub enum DefinitionError {
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
    #[error("invalid process definition: {0}")]
    Invalid(String),
}

impl ProcessDefinition {
    pub fn load(path: &Path) -> Result<Self, DefinitionError> {
        let text = std::fs::read_to_string(path).map_err(|source| DefinitionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let def: Self = serde_json::from_str(&text).map_err(|source| DefinitionError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        def.validate()?;
        Ok(def)
    }

    pub fn validate(&self) -> Result<(), DefinitionError> {
        if self.operations.is_empty() {
            return Err(DefinitionError::Invalid(
                "at least one operation is required".into(),
            ));
        }
        let mut labels = BTreeSet::new();
        for (i, op) in self.operations.iter().enumerate() {
            if op.index != i {
                return Err(DefinitionError::Invalid(format!(
                    "operations[{i}].index is {}, expected {i}",
                    op.index
                )));
            }
            if !labels.insert(op.label.as_str()) {
                return Err(DefinitionError::Invalid(format!(
                    "duplicate label {:?}",
                    op.label
                )));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<(usize, String)> {
        self.operations
            .iter()
            .map(|o| (o.index, o.label.clone()))
            .collect()
    }
}
