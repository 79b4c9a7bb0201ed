//! JSON envelope of the WebSocket protocol (rosbridge v2 op set).

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const PROTOCOL_VERSION: &str = "2.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    Advertise,
    Unadvertise,
    Publish,
    Subscribe,
    Unsubscribe,
    CallService,
    ServiceResponse,
    Status,
}

impl Op {
    pub const ALL: [Op; 8] = [
        Op::Advertise,
        Op::Unadvertise,
        Op::Publish,
        Op::Subscribe,
        Op::Unsubscribe,
        Op::CallService,
        Op::ServiceResponse,
        Op::Status,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Op::Advertise => "advertise",
            Op::Unadvertise => "unadvertise",
            Op::Publish => "publish",
            Op::Subscribe => "subscribe",
            Op::Unsubscribe => "unsubscribe",
            Op::CallService => "call_service",
            Op::ServiceResponse => "service_response",
            Op::Status => "status",
        }
    }

    fn parse(s: &str) -> Option<Op> {
        Op::ALL.into_iter().find(|op| op.as_str() == s)
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Error,
    Warning,
    Info,
    None,
}

/// One protocol frame. Optional fields are omitted from the wire when unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeOp {
    pub op: Op,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<String>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub type_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub throttle_rate: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queue_length: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("parse")]
    Parse,
    #[error("unknown op {0:?}")]
    UnknownOp(String),
    #[error("invalid {op} frame: {reason}")]
    Invalid {
        op: String,
        reason: String,
        id: Option<String>,
    },
}

impl ProtocolError {
    pub fn id(&self) -> Option<&str> {
        match self {
            ProtocolError::Invalid { id, .. } => id.as_deref(),
            _ => None,
        }
    }
}

impl BridgeOp {
    pub fn new(op: Op) -> Self {
        Self {
            op,
            id: None,
            topic: None,
            service: None,
            type_name: None,
            msg: None,
            args: None,
            values: None,
            result: None,
            throttle_rate: None,
            queue_length: None,
            level: None,
        }
    }

    pub fn status(level: Level, msg: impl Into<String>, id: Option<String>) -> Self {
        Self {
            level: Some(level),
            msg: Some(Value::String(msg.into())),
            id,
            ..Self::new(Op::Status)
        }
    }

    /// First frame of every session; `id` carries the session id.
    pub fn greeting(session_id: u64) -> Self {
        Self::status(
            Level::None,
            format!("helmsman bridge protocol {PROTOCOL_VERSION}"),
            Some(format!("session:{session_id}")),
        )
    }

    pub fn publish(topic: &str, msg: Value) -> Self {
        Self {
            topic: Some(topic.to_string()),
            msg: Some(msg),
            ..Self::new(Op::Publish)
        }
    }

    pub fn subscribe(topic: &str) -> Self {
        Self {
            topic: Some(topic.to_string()),
            ..Self::new(Op::Subscribe)
        }
    }

    pub fn call_service(service: &str, args: Value, id: &str) -> Self {
        Self {
            service: Some(service.to_string()),
            args: Some(args),
            id: Some(id.to_string()),
            ..Self::new(Op::CallService)
        }
    }

    pub fn service_response(service: &str, id: &str, result: bool, values: Value) -> Self {
        Self {
            service: Some(service.to_string()),
            id: Some(id.to_string()),
            result: Some(result),
            values: Some(values),
            ..Self::new(Op::ServiceResponse)
        }
    }

    /// Parses and validates a text frame.
    pub fn parse(raw: &str) -> Result<Self, ProtocolError> {
        let value: Value = serde_json::from_str(raw).map_err(|_| ProtocolError::Parse)?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, ProtocolError> {
        let Some(obj) = value.as_object() else {
            return Err(ProtocolError::Invalid {
                op: "?".into(),
                reason: "frame is not a JSON object".into(),
                id: None,
            });
        };
        let id = obj.get("id").and_then(Value::as_str).map(str::to_string);
        let op_name = match obj.get("op").and_then(Value::as_str) {
            Some(name) => name.to_string(),
            None => {
                return Err(ProtocolError::Invalid {
                    op: "?".into(),
                    reason: "missing op".into(),
                    id,
                })
            }
        };
        if Op::parse(&op_name).is_none() {
            return Err(ProtocolError::UnknownOp(op_name));
        }
        let frame: BridgeOp =
            serde_json::from_value(value).map_err(|e| ProtocolError::Invalid {
                op: op_name.clone(),
                reason: e.to_string(),
                id: id.clone(),
            })?;
        frame.validate().map_err(|reason| ProtocolError::Invalid {
            op: op_name,
            reason,
            id,
        })?;
        Ok(frame)
    }

    /// Checks the fields each op requires.
    pub fn validate(&self) -> Result<(), String> {
        let need = |present: bool, field: &str| {
            if present {
                Ok(())
            } else {
                Err(format!("missing field {field:?}"))
            }
        };
        match self.op {
            Op::Publish => {
                need(self.topic.is_some(), "topic")?;
                need(self.msg.is_some(), "msg")
            }
            Op::Subscribe | Op::Unsubscribe | Op::Unadvertise => {
                need(self.topic.is_some(), "topic")
            }
            Op::Advertise => {
                need(self.topic.is_some(), "topic")?;
                need(self.type_name.is_some(), "type")
            }
            Op::CallService => need(self.service.is_some(), "service"),
            Op::ServiceResponse => {
                need(self.service.is_some(), "service")?;
                need(self.values.is_some(), "values")?;
                need(self.result.is_some(), "result")?;
                need(self.id.is_some(), "id")
            }
            Op::Status => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("frame serializes")
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("frame serializes")
    }
}

/// Error payload carried in `values` of a failed service response.
pub fn error_values(error: impl fmt::Display) -> Value {
    json!({ "error": error.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_subscribe() {
        let f =
            BridgeOp::parse(r#"{"op":"subscribe","topic":"/alarms","throttle_rate":100}"#).unwrap();
        assert_eq!(f.op, Op::Subscribe);
        assert_eq!(f.topic.as_deref(), Some("/alarms"));
        assert_eq!(f.throttle_rate, Some(100));
    }

    #[test]
    fn malformed_frames() {
        assert_eq!(BridgeOp::parse("not json"), Err(ProtocolError::Parse));
        assert!(matches!(
            BridgeOp::parse(r#"{"op":"dance"}"#),
            Err(ProtocolError::UnknownOp(_))
        ));
        assert!(matches!(
            BridgeOp::parse(r#"[1,2]"#),
            Err(ProtocolError::Invalid { .. })
        ));
        let err = BridgeOp::parse(r#"{"op":"publish","topic":"/x","id":"9"}"#).unwrap_err();
        assert_eq!(err.id(), Some("9"));
        assert!(matches!(
            BridgeOp::parse(r#"{"op":"service_response","service":"/s","id":"1","result":true}"#),
            Err(ProtocolError::Invalid { .. })
        ));
        assert!(matches!(
            BridgeOp::parse(r#"{"op":"subscribe","topic":"/x","throttle_rate":-5}"#),
            Err(ProtocolError::Invalid { .. })
        ));
    }

    #[test]
    fn status_wire_shape() {
        let v = BridgeOp::status(Level::Error, "parse", None).to_value();
        assert_eq!(v, json!({"op": "status", "level": "error", "msg": "parse"}));
    }

    fn arb_json() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<bool>().prop_map(Value::from),
            any::<i32>().prop_map(Value::from),
            "[a-z]{0,6}".prop_map(Value::from),
        ]
        .prop_recursive(2, 8, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 0..3).prop_map(Value::from),
                prop::collection::btree_map("[a-z]{1,4}", inner, 0..3)
                    .prop_map(|m| Value::Object(m.into_iter().collect())),
            ]
        })
    }

    fn arb_frame() -> impl Strategy<Value = BridgeOp> {
        let topic = prop::option::of("/[a-z]{1,8}");
        (
            prop::sample::select(Op::ALL.to_vec()),
            prop::option::of("[0-9a-z:]{1,6}"),
            topic.clone(),
            topic,
            prop::option::of("[A-Za-z/]{1,10}"),
            prop::option::of(arb_json()),
            prop::option::of(arb_json()),
            prop::option::of(arb_json()),
            prop::option::of(any::<bool>()),
            prop::option::of(0u64..10_000),
            prop::option::of(0u64..100),
        )
            .prop_map(
                |(op, id, topic, service, ty, msg, args, values, result, tr, ql)| BridgeOp {
                    op,
                    id,
                    topic,
                    service,
                    type_name: ty,
                    msg,
                    args,
                    values,
                    result,
                    throttle_rate: tr,
                    queue_length: ql,
                    level: None,
                },
            )
            .prop_filter("well-formed", |f| f.validate().is_ok())
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(frame in arb_frame()) {
            let back = BridgeOp::parse(&frame.to_json()).unwrap();
            prop_assert_eq!(back, frame);
        }
    }
}
