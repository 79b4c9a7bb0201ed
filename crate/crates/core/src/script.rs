//! Line-oriented session scripts for headless replay.
//!
//! ```text
//! # comment
//! send {"op": "subscribe", "topic": "/robot/status"}
//! publish /chatter {"data": "hi"}
//! tick 500
//! expect {"op": "publish", "topic": "/chatter", "msg": {"data": "hi"}}
//! await {"op": "service_response", "id": "c1"}
//! ```
//!
//! `expect` checks the next frame; `await` skips frames until one matches.
//! Matching is a subset match that ignores `stamp` keys.

use std::fmt;
use std::time::Duration;

use serde_json::Value;

use crate::bridge::LocalClient;
use crate::bus::Bus;
use crate::clock::SimClock;
use crate::runtime::Runtime;

pub const SCRIPT_NODE: &str = "script";
pub const DEFAULT_WAIT: Duration = Duration::from_secs(2);
const TICK_STEP_MS: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptLine {
    Send(Value),
    Expect(Value),
    Await(Value),
    Publish { topic: String, msg: Value },
    Tick(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub reason: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.reason)
    }
}

impl std::error::Error for ParseError {}

pub fn parse_script(text: &str) -> Result<Vec<(usize, ScriptLine)>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| ParseError {
            line: line_no,
            reason,
        };
        let (cmd, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let json =
            |s: &str| serde_json::from_str::<Value>(s).map_err(|e| err(format!("bad JSON: {e}")));
        let parsed = match cmd {
            "send" => ScriptLine::Send(json(rest)?),
            "expect" => ScriptLine::Expect(json(rest)?),
            "await" => ScriptLine::Await(json(rest)?),
            "publish" => {
                let (topic, msg) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err("publish TOPIC JSON".into()))?;
                ScriptLine::Publish {
                    topic: topic.into(),
                    msg: json(msg.trim())?,
                }
            }
            "tick" => ScriptLine::Tick(
                rest.parse()
                    .map_err(|_| err(format!("bad tick duration {rest:?}")))?,
            ),
            other => return Err(err(format!("unknown command {other:?}"))),
        };
        out.push((line_no, parsed));
    }
    Ok(out)
}

/// Returns the differences between `expected` (a pattern) and `actual`,
/// one line per mismatching path.
pub fn json_diff(expected: &Value, actual: &Value) -> Vec<String> {
    let mut out = Vec::new();
    diff_at("$", expected, actual, &mut out);
    out
}

fn diff_at(path: &str, expected: &Value, actual: &Value, out: &mut Vec<String>) {
    match (expected, actual) {
        (Value::Object(e), Value::Object(a)) => {
            for (k, ev) in e {
                if k == "stamp" {
                    continue;
                }
                let p = format!("{path}.{k}");
                match a.get(k) {
                    Some(av) => diff_at(&p, ev, av, out),
                    None => out.push(format!("- {p}: {ev}\n+ {p}: <missing>")),
                }
            }
        }
        (Value::Array(e), Value::Array(a)) if e.len() == a.len() => {
            for (i, (ev, av)) in e.iter().zip(a).enumerate() {
                diff_at(&format!("{path}[{i}]"), ev, av, out);
            }
        }
        (Value::Number(e), Value::Number(a)) if e.as_f64() == a.as_f64() => {}
        (e, a) if e == a => {}
        (e, a) => out.push(format!("- {path}: {e}\n+ {path}: {a}")),
    }
}

pub fn matches(expected: &Value, actual: &Value) -> bool {
    json_diff(expected, actual).is_empty()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptFailure {
    pub line: usize,
    pub expected: Value,
    pub actual: Option<Value>,
    pub diff: Vec<String>,
}

impl fmt::Display for ScriptFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "expectation failed at line {}", self.line)?;
        match &self.actual {
            None => write!(f, "- {}\n+ <no frame>", self.expected),
            Some(_) => write!(f, "{}", self.diff.join("\n")),
        }
    }
}

/// Where a script runs: a bridge session plus the clock driving it.
pub struct ScriptHost<'a> {
    pub client: &'a LocalClient,
    pub bus: &'a Bus,
    pub runtime: &'a Runtime,
    /// With a simulated clock `tick` advances it; otherwise `tick` sleeps.
    pub sim: Option<&'a SimClock>,
    pub wait: Duration,
}

impl ScriptHost<'_> {
    fn advance(&self, ms: u64) {
        match self.sim {
            Some(sim) => self.runtime.run_sim(sim, ms, TICK_STEP_MS),
            None => std::thread::sleep(Duration::from_millis(ms)),
        }
    }

    fn publish(&self, topic: &str, msg: Value) -> Result<(), String> {
        if !self.bus.is_node_live(SCRIPT_NODE) {
            self.bus
                .register_node(SCRIPT_NODE)
                .map_err(|e| e.to_string())?;
        }
        let type_name = self
            .bus
            .topic_type(topic)
            .unwrap_or_else(|| "json".to_string());
        self.bus
            .advertise(SCRIPT_NODE, topic, &type_name)
            .map_err(|e| e.to_string())?;
        self.bus
            .publish(SCRIPT_NODE, topic, msg)
            .map_err(|e| e.to_string())?;
        Ok(())
    }

    /// Runs every line; stops at the first failed expectation.
    pub fn run(&self, lines: &[(usize, ScriptLine)]) -> Result<(), ScriptFailure> {
        for (line, cmd) in lines {
            match cmd {
                ScriptLine::Send(frame) => self.client.send_raw(&frame.to_string()),
                ScriptLine::Tick(ms) => self.advance(*ms),
                ScriptLine::Publish { topic, msg } => {
                    if let Err(e) = self.publish(topic, msg.clone()) {
                        return Err(ScriptFailure {
                            line: *line,
                            expected: msg.clone(),
                            actual: None,
                            diff: vec![format!("publish failed: {e}")],
                        });
                    }
                    if self.sim.is_some() {
                        self.runtime.tick();
                    }
                }
                ScriptLine::Expect(expected) => {
                    let actual = self.client.recv(self.wait);
                    let diff = match &actual {
                        Some(a) => json_diff(expected, a),
                        None => vec!["<no frame>".into()],
                    };
                    if !diff.is_empty() {
                        return Err(ScriptFailure {
                            line: *line,
                            expected: expected.clone(),
                            actual,
                            diff,
                        });
                    }
                }
                ScriptLine::Await(expected) => {
                    let deadline = std::time::Instant::now() + self.wait;
                    let mut last = None;
                    let found = loop {
                        let Some(left) = deadline.checked_duration_since(std::time::Instant::now())
                        else {
                            break false;
                        };
                        match self.client.recv(left) {
                            Some(f) if matches(expected, &f) => break true,
                            Some(f) => last = Some(f),
                            None => break false,
                        }
                    };
                    if !found {
                        let diff = match &last {
                            Some(a) => json_diff(expected, a),
                            None => vec!["<no frame>".into()],
                        };
                        return Err(ScriptFailure {
                            line: *line,
                            expected: expected.clone(),
                            actual: last,
                            diff,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn parses_commands_and_skips_comments() {
        let s = parse_script("# hi\n\nsend {\"op\": \"status\"}\ntick 10\npublish /a {\"x\": 1}\n")
            .unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].0, 3);
        assert_eq!(s[1].1, ScriptLine::Tick(10));
    }

    #[test]
    fn parse_errors_carry_line() {
        let e = parse_script("tick 1\nfly away\n").unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn subset_match_ignores_stamps() {
        let expected = json!({"op": "publish", "msg": {"data": 1, "stamp": 5}});
        let actual = json!({"op": "publish", "topic": "/a", "msg": {"data": 1.0, "stamp": 99}});
        assert!(matches(&expected, &actual));
        let diff = json_diff(&json!({"msg": {"data": 2}}), &actual);
        assert_eq!(diff, vec!["- $.msg.data: 2\n+ $.msg.data: 1.0".to_string()]);
    }
}
