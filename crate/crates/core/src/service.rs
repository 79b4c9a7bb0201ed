//! Small helpers shared by bus service handlers.

use serde::de::DeserializeOwned;
use serde_json::Value;

pub fn parse_args<T: DeserializeOwned>(args: Value) -> Result<T, String> {
    serde_json::from_value(args).map_err(|e| format!("InvalidArgs: {e}"))
}

pub fn arg_str<'a>(args: &'a Value, key: &str) -> Result<&'a str, String> {
    args.get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| format!("InvalidArgs: missing string {key:?}"))
}

pub fn opt_str<'a>(args: &'a Value, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

/// Renders an error as `"Kind: detail"` using the enum variant name.
pub fn fault<E: std::fmt::Debug + std::fmt::Display>(e: E) -> String {
    let debug = format!("{e:?}");
    let kind: String = debug
        .chars()
        .take_while(|c| c.is_alphanumeric() || *c == '_')
        .collect();
    format!("{kind}: {e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[derive(Debug, thiserror::Error)]
    enum E {
        #[error("nope {0}")]
        UnknownThing(u8),
    }

    #[test]
    fn fault_names_variant() {
        assert_eq!(fault(E::UnknownThing(3)), "UnknownThing: nope 3");
    }

    #[test]
    fn args() {
        let v = json!({"a": "x"});
        assert_eq!(arg_str(&v, "a").unwrap(), "x");
        assert!(arg_str(&v, "b").is_err());
        assert_eq!(opt_str(&v, "b"), None);
    }
}
