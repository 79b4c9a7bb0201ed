//! Roles and server-side authorization of bridge traffic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// A user role. The two built-in roles are administrator and operator;
/// deployments may declare more in the platform config.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Role(String);

impl Role {
    pub const ADMINISTRATOR: &'static str = "administrator";
    pub const OPERATOR: &'static str = "operator";

    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn administrator() -> Self {
        Self::new(Self::ADMINISTRATOR)
    }

    pub fn operator() -> Self {
        Self::new(Self::OPERATOR)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_administrator(&self) -> bool {
        self.0 == Self::ADMINISTRATOR
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("Forbidden: {0}")]
pub struct Denied(pub String);

/// Decides whether a bridge session may call a service or publish to a topic.
pub trait AccessPolicy: Send + Sync {
    fn authorize_call(
        &self,
        role: Option<&Role>,
        service: &str,
        args: &Value,
    ) -> Result<(), Denied>;
    fn authorize_publish(&self, role: Option<&Role>, topic: &str) -> Result<(), Denied>;
}

/// Lets everything through; used when the security feature is disabled.
#[derive(Debug, Default, Clone, Copy)]
pub struct OpenPolicy;

impl AccessPolicy for OpenPolicy {
    fn authorize_call(&self, _: Option<&Role>, _: &str, _: &Value) -> Result<(), Denied> {
        Ok(())
    }

    fn authorize_publish(&self, _: Option<&Role>, _: &str) -> Result<(), Denied> {
        Ok(())
    }
}

/// Table-driven policy.
///
/// Names absent from both tables are open to any role. With `require_login`
/// set, sessions without a role may only call `public_services`.
/// Launch/stop requests are checked per unit: the role must be allowed by
/// every module containing the unit.
#[derive(Debug, Clone, Default)]
pub struct RolePolicy {
    pub require_login: bool,
    pub public_services: BTreeSet<String>,
    pub services: BTreeMap<String, BTreeSet<Role>>,
    pub topics: BTreeMap<String, BTreeSet<Role>>,
    /// Services whose request carries `{"units": [...]}` gated by `unit_roles`.
    pub unit_services: BTreeSet<String>,
    pub unit_roles: BTreeMap<String, BTreeSet<Role>>,
}

impl RolePolicy {
    fn check(
        allowed: Option<&BTreeSet<Role>>,
        role: Option<&Role>,
        what: &str,
    ) -> Result<(), Denied> {
        match allowed {
            None => Ok(()),
            Some(set) if role.is_some_and(|r| set.contains(r)) => Ok(()),
            Some(_) => Err(Denied(what.to_string())),
        }
    }
}

impl AccessPolicy for RolePolicy {
    fn authorize_call(
        &self,
        role: Option<&Role>,
        service: &str,
        args: &Value,
    ) -> Result<(), Denied> {
        if self.require_login && role.is_none() && !self.public_services.contains(service) {
            return Err(Denied(format!("{service} requires login")));
        }
        Self::check(self.services.get(service), role, service)?;
        if self.unit_services.contains(service) {
            let units = args
                .get("units")
                .and_then(Value::as_array)
                .into_iter()
                .flatten();
            for unit in units.filter_map(Value::as_str) {
                Self::check(
                    self.unit_roles.get(unit),
                    role,
                    &format!("{service} {unit}"),
                )?;
            }
        }
        Ok(())
    }

    fn authorize_publish(&self, role: Option<&Role>, topic: &str) -> Result<(), Denied> {
        if self.require_login && role.is_none() {
            return Err(Denied(format!("{topic} requires login")));
        }
        Self::check(self.topics.get(topic), role, topic)
    }
}
