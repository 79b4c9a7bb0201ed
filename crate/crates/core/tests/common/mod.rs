#![allow(dead_code)]

pub mod features;
pub mod oracles;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use helmsman::app::Platform;
use helmsman::bridge::LocalClient;
use helmsman::clock::SimClock;
use helmsman::config::{Feature, PlatformConfig};
use serde_json::{json, Value};
use tempfile::TempDir;

pub const WAIT: Duration = Duration::from_secs(3);

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture_config() -> PlatformConfig {
    PlatformConfig::load(&fixtures().join("platform.json")).expect("fixture config loads")
}

pub struct Sim {
    pub platform: Platform,
    pub clock: Arc<SimClock>,
    pub dir: TempDir,
}

impl Sim {
    pub fn boot(mut config: PlatformConfig) -> Self {
        let dir = tempfile::tempdir().unwrap();
        config.data_dir = dir.path().to_path_buf();
        let (platform, clock) = Platform::boot_sim(config).expect("boot");
        Sim {
            platform,
            clock,
            dir,
        }
    }

    pub fn full() -> Self {
        Self::boot(fixture_config())
    }

    pub fn with_features(features: &[Feature]) -> Self {
        let mut c = fixture_config();
        c.features = features.to_vec();
        Self::boot(c)
    }

    pub fn run(&self, ms: u64) {
        self.platform.run_sim(&self.clock, ms, 10);
    }

    pub fn client(&self) -> LocalClient {
        let c = self.platform.connect_local();
        let greeting = c.recv(WAIT).expect("greeting");
        assert_eq!(greeting["op"], "status");
        c
    }

    /// Client logged in through the bridge.
    pub fn login(&self, user: &str, password: &str) -> LocalClient {
        let c = self.client();
        let (resp, _) = c.call(
            "/ui/login",
            json!({"username": user, "password": password}),
            "login",
            WAIT,
        );
        let resp = resp.expect("login response");
        assert_eq!(resp["result"], true, "login failed: {resp}");
        c
    }

    pub fn admin(&self) -> LocalClient {
        self.login("admin", "admin-pass")
    }

    pub fn operator(&self) -> LocalClient {
        self.login("operator", "operator-pass")
    }
}

/// Calls a service and returns the response frame.
pub fn call(client: &LocalClient, service: &str, args: Value) -> Value {
    let id = format!("t:{service}");
    client
        .call(service, args, &id, WAIT)
        .0
        .unwrap_or_else(|| panic!("no response from {service}"))
}

pub fn is_forbidden(resp: &Value) -> bool {
    resp["result"] == false
        && resp["values"]["error"]
            .as_str()
            .is_some_and(|e| e.starts_with("Forbidden"))
}
