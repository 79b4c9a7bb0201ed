//! Parameters persisted in a CSV file with the fixed header
//! `section,key,display_name,default,value`.

use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::atomic::{write_atomic_with, FaultHook};

pub const CSV_HEADER: [&str; 5] = ["section", "key", "display_name", "default", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Number,
    String,
    Bool,
}

impl ParamKind {
    pub fn accepts(self, value: &str) -> bool {
        match self {
            ParamKind::Number => value.trim().parse::<f64>().is_ok_and(f64::is_finite),
            ParamKind::String => true,
            ParamKind::Bool => matches!(value, "true" | "false"),
        }
    }
}

/// A parameter declared in the platform config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamDecl {
    pub section: String,
    pub key: String,
    pub display_name: String,
    pub default: String,
    #[serde(default)]
    pub kind: Option<ParamKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigParam {
    pub section: String,
    pub key: String,
    pub display_name: String,
    pub default: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ParamKind>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamChange {
    pub section: String,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown parameter {section}.{key}")]
    UnknownParam { section: String, key: String },
    #[error("{section}.{key}: {value:?} is not a valid {kind:?}")]
    ParseError {
        section: String,
        key: String,
        value: String,
        kind: ParamKind,
    },
    #[error("administrator role required")]
    Forbidden,
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: u64,
        reason: String,
    },
    #[error("cannot write configuration: {0}")]
    Io(String),
}

pub fn parse_csv(text: &[u8], origin: &str) -> Result<Vec<ConfigParam>, ConfigError> {
    let malformed = |line: u64, reason: String| ConfigError::Malformed {
        path: origin.to_string(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text);
    let header = reader.headers().map_err(|e| malformed(1, e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(malformed(
            1,
            format!("header must be {}", CSV_HEADER.join(",")),
        ));
    }
    let mut params: Vec<ConfigParam> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if params
            .iter()
            .any(|p| p.section == record[0] && p.key == record[1])
        {
            return Err(malformed(
                line,
                format!("duplicate parameter {}.{}", &record[0], &record[1]),
            ));
        }
        params.push(ConfigParam {
            section: record[0].to_string(),
            key: record[1].to_string(),
            display_name: record[2].to_string(),
            default: record[3].to_string(),
            value: record[4].to_string(),
            kind: None,
        });
    }
    Ok(params)
}

pub fn render_csv(params: &[ConfigParam]) -> Vec<u8> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(Vec::new());
    writer.write_record(CSV_HEADER).expect("in-memory write");
    for p in params {
        writer
            .write_record([&p.section, &p.key, &p.display_name, &p.default, &p.value])
            .expect("in-memory write");
    }
    writer.into_inner().expect("in-memory flush")
}

pub struct ConfigStore {
    path: PathBuf,
    params: Mutex<Vec<ConfigParam>>,
    fault: Mutex<Option<FaultHook>>,
}

impl ConfigStore {
    /// Loads the CSV, creating it from the declarations when missing.
    /// Declared parameters absent from an existing file are appended
    /// with their default value.
    pub fn open(path: &Path, declared: &[ParamDecl]) -> Result<Self, ConfigError> {
        let existing = match std::fs::read(path) {
            Ok(bytes) => Some(parse_csv(&bytes, &path.display().to_string())?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(ConfigError::Io(e.to_string())),
        };
        let mut params = existing.clone().unwrap_or_default();
        for d in declared {
            match params
                .iter_mut()
                .find(|p| p.section == d.section && p.key == d.key)
            {
                Some(p) => p.kind = d.kind,
                None => params.push(ConfigParam {
                    section: d.section.clone(),
                    key: d.key.clone(),
                    display_name: d.display_name.clone(),
                    default: d.default.clone(),
                    value: d.default.clone(),
                    kind: d.kind,
                }),
            }
        }
        let store = Self {
            path: path.to_path_buf(),
            params: Mutex::new(params),
            fault: Mutex::new(None),
        };
        let grew = existing.as_ref().map(Vec::len) != Some(store.params.lock().len());
        if grew {
            store.persist(&store.params.lock())?;
        }
        Ok(store)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn set_fault_hook(&self, hook: Option<FaultHook>) {
        *self.fault.lock() = hook;
    }

    pub fn get_config(&self) -> Vec<ConfigParam> {
        self.params.lock().clone()
    }

    pub fn value(&self, section: &str, key: &str) -> Option<String> {
        self.params
            .lock()
            .iter()
            .find(|p| p.section == section && p.key == key)
            .map(|p| p.value.clone())
    }

    fn persist(&self, params: &[ConfigParam]) -> Result<(), ConfigError> {
        let hook = self.fault.lock().clone();
        write_atomic_with(&self.path, &render_csv(params), hook.as_ref())
            .map_err(|e| ConfigError::Io(e.to_string()))
    }

    /// Validates every change before applying any of them. Returns the
    /// keys whose value actually changed.
    pub fn set_config(
        &self,
        changes: &[ParamChange],
    ) -> Result<Vec<(String, String)>, ConfigError> {
        let mut params = self.params.lock();
        let mut next = params.clone();
        let mut changed = Vec::new();
        for c in changes {
            let p = next
                .iter_mut()
                .find(|p| p.section == c.section && p.key == c.key)
                .ok_or_else(|| ConfigError::UnknownParam {
                    section: c.section.clone(),
                    key: c.key.clone(),
                })?;
            if let Some(kind) = p.kind {
                if !kind.accepts(&c.value) {
                    return Err(ConfigError::ParseError {
                        section: c.section.clone(),
                        key: c.key.clone(),
                        value: c.value.clone(),
                        kind,
                    });
                }
            }
            if p.value != c.value {
                p.value = c.value.clone();
                changed.push((c.section.clone(), c.key.clone()));
            }
        }
        self.persist(&next)?;
        *params = next;
        Ok(changed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decls() -> Vec<ParamDecl> {
        vec![
            ParamDecl {
                section: "robot".into(),
                key: "speed".into(),
                display_name: "Robot speed".into(),
                default: "0.25".into(),
                kind: Some(ParamKind::Number),
            },
            ParamDecl {
                section: "cell".into(),
                key: "label".into(),
                display_name: "Label, long".into(),
                default: "a \"quoted\" name".into(),
                kind: None,
            },
        ]
    }

    #[test]
    fn fresh_install_uses_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let store = ConfigStore::open(&dir.path().join("c.csv"), &decls()).unwrap();
        assert!(store.get_config().iter().all(|p| p.value == p.default));
        let text = std::fs::read_to_string(store.path()).unwrap();
        assert!(text.starts_with("section,key,display_name,default,value\n"));
        assert!(!text.contains('\r'));
        assert!(text.contains("\"Label, long\""));
    }

    #[test]
    fn set_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let store = ConfigStore::open(&path, &decls()).unwrap();
        let change = |k: &str, v: &str| ParamChange {
            section: "robot".into(),
            key: k.into(),
            value: v.into(),
        };
        store.set_config(&[change("speed", "0.5")]).unwrap();
        assert_eq!(store.value("robot", "speed").unwrap(), "0.5");
        assert!(matches!(
            store.set_config(&[change("nope", "1")]),
            Err(ConfigError::UnknownParam { .. })
        ));
        assert!(matches!(
            store.set_config(&[change("speed", "fast")]),
            Err(ConfigError::ParseError { .. })
        ));
        let reopened = ConfigStore::open(&path, &decls()).unwrap();
        assert_eq!(reopened.value("robot", "speed").unwrap(), "0.5");
    }

    #[test]
    fn render_parse_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let store = ConfigStore::open(&dir.path().join("c.csv"), &decls()).unwrap();
        let bytes = std::fs::read(store.path()).unwrap();
        let parsed = parse_csv(&bytes, "c.csv").unwrap();
        assert_eq!(render_csv(&parsed), bytes);
    }

    #[test]
    fn bad_header_reports_line() {
        let err = parse_csv(b"a,b\n1,2\n", "x.csv").unwrap_err();
        assert!(err.to_string().starts_with("x.csv:1:"));
    }
}
